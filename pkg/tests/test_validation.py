from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cokriging.demos import synthetic_three_level
from cokriging.estimation import FitConfig, fit
from cokriging.validation import compute_metrics, loo_cv


class TestMetrics:
    def test_hand_example(self):
        r = compute_metrics([1.0, 2.0, 4.0], [1.0, 3.0, 2.0], stds=[0.5, 1.0, 3.0])
        np.testing.assert_allclose(r.rmse, np.sqrt(5 / 3))
        # truths have mean 2 and sum of squares 2
        np.testing.assert_allclose(r.q2, 1 - 5 / 2)
        assert r.max_abs_error == 2.0
        assert (r.avg_pred_std, r.median_pred_std, r.max_pred_std) == (1.5, 1.0, 3.0)
        assert r.n_test == 3

    def test_spread_convention(self):
        r = compute_metrics([1.0, 2.0, 4.0], [1.0, 3.0, 2.0], q2_convention="spread")
        np.testing.assert_allclose(r.q2, 1 - 5 / (1 + 0 + 4))

    def test_perfect_prediction(self):
        z = np.linspace(0, 1, 7)
        r = compute_metrics(z, z)
        assert r.rmse == 0.0 and r.q2 == 1.0 and r.avg_pred_std is None

    def test_constant_truth_has_no_q2(self):
        assert compute_metrics([1.0, 2.0], [3.0, 3.0]).q2 is None

    def test_errors(self):
        with pytest.raises(ValueError, match="at least 2"):
            compute_metrics([1.0], [1.0])
        with pytest.raises(ValueError):
            compute_metrics([1.0, 2.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="convention"):
            compute_metrics([1.0, 2.0], [1.0, 3.0], q2_convention="other")

    @given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=30), st.floats(0.1, 10), st.floats(-5, 5))
    def test_affine_invariance_of_q2(self, vals, a, b):
        z = np.array(vals)
        if np.ptp(z) < 1e-3:
            return
        m = z + np.sin(np.arange(z.size))
        r1 = compute_metrics(m, z)
        r2 = compute_metrics(a * m + b, a * z + b)
        np.testing.assert_allclose(r2.q2, r1.q2, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(r2.rmse, a * r1.rmse, rtol=1e-8, atol=1e-12)


def two_level_data(seed=0):
    rng = np.random.default_rng(seed)
    X1 = np.sort(rng.uniform(0, 1, 16))[:, None]
    X2 = X1[::2]
    return [X1, X2], [np.sin(7 * X1[:, 0]), 2 * np.sin(7 * X2[:, 0]) + X2[:, 0]]


class TestLoo:
    def test_single_point_matches_manual_refit(self):
        Xs, zs = two_level_data()
        cfg = FitConfig(theta_fixed=[[0.2], [0.3]])
        res = loo_cv(Xs, zs, cfg, held_out=[3])
        assert res.point_ids.tolist() == [3] and res.errors.size == 1
        x = Xs[1][3]
        keep = [np.any(X != x, axis=1) for X in Xs]
        m = fit([X[k] for X, k in zip(Xs, keep)], [z[k] for z, k in zip(zs, keep)], cfg)
        p = m.predict(x[None, :])
        np.testing.assert_allclose(res.errors[0], p.mean[0] - zs[1][3], rtol=1e-12)
        np.testing.assert_allclose(res.stds[0], p.std[0], rtol=1e-12)

    def test_removal_modes_differ(self):
        Xs, zs = two_level_data()
        cfg = FitConfig(theta_fixed=[[0.2], [0.3]])
        a = loo_cv(Xs, zs, cfg, removal="all")
        b = loo_cv(Xs, zs, cfg, removal="top")
        # with the point still in level 1 the cheap code leaks its value
        assert b.rmse < a.rmse
        with pytest.raises(ValueError, match="removal"):
            loo_cv(Xs, zs, cfg, removal="middle")

    def test_permutation_invariance(self):
        Xs, zs = two_level_data(1)
        cfg = FitConfig(theta_fixed=[[0.2], [0.3]])
        ref = loo_cv(Xs, zs, cfg)
        perm = np.random.default_rng(0).permutation(Xs[0].shape[0])
        perm2 = np.random.default_rng(1).permutation(Xs[1].shape[0])
        res = loo_cv([Xs[0][perm], Xs[1][perm2]], [zs[0][perm], zs[1][perm2]], cfg)
        # row order only changes roundoff, amplified by the conditioning of R
        np.testing.assert_allclose(res.errors, ref.errors[perm2], rtol=1e-6, atol=1e-9)

    def test_absent_point_error(self):
        Xs, zs = two_level_data()
        Xs[0] = Xs[0].copy()
        zs = list(zs)
        with pytest.raises(ValueError, match="not contained|absent"):
            loo_cv([Xs[0][1:], Xs[1]], [zs[0][1:], zs[1]], FitConfig(theta_fixed=[[0.2], [0.3]]))

    def test_bad_ids(self):
        Xs, zs = two_level_data()
        with pytest.raises(ValueError, match="held-out"):
            loo_cv(Xs, zs, FitConfig(theta_fixed=[[0.2], [0.3]]), held_out=[100])

    def test_refit_modes(self):
        Xs, zs = two_level_data()
        cfg = FitConfig()
        fixed = loo_cv(Xs, zs, cfg, held_out=[2, 5], refit_theta="never")
        again = loo_cv(Xs, zs, cfg, held_out=[2, 5], refit_theta="never", model=fit(Xs, zs, cfg))
        np.testing.assert_array_equal(fixed.errors, again.errors)
        with pytest.raises(ValueError, match="refit"):
            loo_cv(Xs, zs, cfg, refit_theta="sometimes")

    def test_coverage_reasonable(self):
        p = synthetic_three_level(0)
        res = loo_cv(p.designs, p.observations, FitConfig(family="matern52"), refit_theta="never")
        assert res.coverage(3.0) >= 0.8
        assert 0.0 <= res.coverage(1.0) <= res.coverage(2.0) <= 1.0

    def test_three_levels_beat_two(self):
        p = synthetic_three_level(3)
        cfg = FitConfig(family="matern52")
        three = loo_cv(p.designs, p.observations, cfg, refit_theta="never")
        two = loo_cv(p.designs[1:], p.observations[1:], cfg, refit_theta="never")
        assert three.rmse < two.rmse
