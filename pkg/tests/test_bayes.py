from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from cokriging import bayes
from cokriging.bayes import (
    BayesConfig,
    BayesError,
    Priors2Level,
    ig_cdf,
    ig_quantile,
    posterior_laws,
    predictive_full,
    predictive_given_sigmas,
)
from cokriging.estimation import FitConfig, fit
from cokriging.kernels import Kernel
from cokriging.model import Basis
from cokriging.prediction import predict, predict_2level_beta1_uncertain


def toy_model(n1=10, n2=8, seed=0):
    rng = np.random.default_rng(seed)
    X1 = (np.linspace(0, 1, n1) + rng.uniform(-0.01, 0.01, n1))[:, None]
    X2 = X1[np.sort(rng.choice(n1, n2, replace=False))]
    z1 = np.sin(5 * X1[:, 0])
    z2 = 1.5 * np.sin(5 * X2[:, 0]) + 0.3 * np.cos(9 * X2[:, 0])
    return fit([X1, X2], [z1, z2], FitConfig(theta_fixed=[[0.12], [0.15]]))


def dense_mu(model, x, lam, beta1):
    """Conditional mean h'^T beta + t^T V^{-1}(z - H beta) with dense matrices, per parameter draw."""
    J = model.structures
    X1, X2 = J.levels[0].X, J.levels[1].X
    k1, k2 = J.levels[0].kernel, J.levels[1].kernel
    R1, R12, R2_1, R2 = k1(X1, X1), k1(X1, X2), k1(X2, X2), k2(X2, X2)
    r1, r12, r2 = k1(x, X1)[0], k1(x, X2)[0], k2(x, X2)[0]
    z = np.concatenate(model.z)
    out = np.empty(lam.shape[0])
    s1, s2 = 1.0, 0.5  # the mean does not depend on them; any positive pair works
    for i, (rho, b2) in enumerate(lam):
        V = np.block([[s1 * R1, rho * s1 * R12], [rho * s1 * R12.T, rho**2 * s1 * R2_1 + s2 * R2]])
        H = np.block([[np.ones((len(X1), 1)), np.zeros((len(X1), 1))], [np.full((len(X2), 1), rho), np.ones((len(X2), 1))]])
        t = np.concatenate([rho * s1 * r1, rho**2 * s1 * r12 + s2 * r2])
        h = np.array([rho, 1.0])
        beta = np.array([beta1, b2])
        out[i] = h @ beta + t @ np.linalg.solve(V, z - H @ beta)
    return out


class TestPosteriorLaws:
    def test_regime_two_example1(self, example1):
        _, m = example1
        laws = posterior_laws(m)
        np.testing.assert_allclose(laws.level2.mean, [2.0, 20.0, -20.0], atol=1e-5)
        np.testing.assert_allclose(laws.level1.mean, m.betas[0], rtol=1e-12)
        np.testing.assert_allclose(laws.level1.Q, m.posteriors[0].Q, rtol=1e-12)
        assert laws.degenerate == (False, True)

    def test_regime_two_equals_level_posteriors(self, example2):
        _, m = example2
        laws = posterior_laws(m)
        for law, post in zip((laws.level1, laws.level2), m.posteriors):
            np.testing.assert_allclose(law.mean, post.lambda_mean, rtol=1e-12)
            np.testing.assert_allclose(law.cov_over_sigma2, post.lambda_cov_over_sigma2, rtol=1e-12)
            assert law.alpha == post.alpha
            np.testing.assert_allclose(law.Q, post.Q, rtol=1e-12)
            np.testing.assert_array_equal(law.cov_over_sigma2, law.cov_over_sigma2.T)
            assert np.linalg.eigvalsh(law.cov_over_sigma2).min() > 0

    def test_point_mass_prior(self, example2):
        _, m = example2
        l2 = posterior_laws(m)
        pri = Priors2Level.informative(
            l2.level1.mean, [1e-12], l2.level2.mean, [1e-12] * 3, 2.0, 1.0, 2.0, 1.0
        )
        laws = posterior_laws(m, pri)
        np.testing.assert_allclose(laws.level1.mean, l2.level1.mean, atol=1e-8)
        np.testing.assert_allclose(laws.level2.mean, l2.level2.mean, atol=1e-8)

    def test_zero_prior_variance_pins_coefficients(self, example2):
        _, m = example2
        l2 = posterior_laws(m)
        b = l2.level2.mean + np.array([0.1, 0.0, 0.0])
        pri = Priors2Level.informative(l2.level1.mean, [1.0], b, [0.0, 5.0, 5.0], 2.0, 1.0, 2.0, 1.0)
        law = posterior_laws(m, pri).level2
        assert law.mean[0] == b[0]
        np.testing.assert_array_equal(law.cov_over_sigma2[0], 0.0)
        assert np.linalg.eigvalsh(law.cov_over_sigma2[1:, 1:]).min() > 0

    def test_vague_informative_prior_converges(self, example2):
        _, m = example2
        l2 = posterior_laws(m)
        pri = Priors2Level(
            "informative", "informative", "noninformative", "noninformative",
            (0.0,), (1e12,), (0.0, 0.0, 0.0), (1e12,) * 3,
        )
        laws = posterior_laws(m, pri)
        np.testing.assert_allclose(laws.level1.mean, l2.level1.mean, atol=1e-6)
        np.testing.assert_allclose(laws.level2.mean, l2.level2.mean, atol=1e-6)

    def test_informative_quadratic_form_three_points(self):
        X = np.array([[0.0], [0.5], [1.0]])
        z1 = np.array([1.0, 2.5, 1.7])
        z2 = np.array([2.1, 5.3, 3.0])
        m = fit([X, X], [z1, z2], FitConfig(theta_fixed=[[0.4], [0.3]]))
        b1, V1, g1, a1 = 0.7, 2.0, 1.3, 1.5
        pri = Priors2Level("informative", "noninformative", "informative", "noninformative",
                           (b1,), (V1,), alpha1=a1, gamma1=g1)
        laws = posterior_laws(m, pri)
        R = Kernel("sqexp", [0.4])(X, X)
        F = np.ones((3, 1))
        # marginal form: gamma + (z - F b)^T (R + F V F^T)^{-1} (z - F b)
        r = z1 - F[:, 0] * b1
        expected = g1 + r @ np.linalg.solve(R + V1 * F @ F.T, r)
        np.testing.assert_allclose(laws.level1.Q, expected, rtol=1e-10)
        assert laws.level1.alpha == 3 / 2 + a1
        Ri = np.linalg.inv(R)
        A = 1.0 / (F.T @ Ri @ F + 1.0 / V1)
        np.testing.assert_allclose(laws.level1.mean, A @ (F.T @ Ri @ z1 + b1 / V1), rtol=1e-10)

    def test_rejects_bad_hyperparameters(self, example2):
        _, m = example2
        with pytest.raises(BayesError):
            posterior_laws(m, Priors2Level(beta1="informative", b1=(0.0,), V1=(-1.0,)))
        with pytest.raises(BayesError):
            posterior_laws(m, Priors2Level(sigma2="informative", alpha2=0.0, gamma2=1.0))

    def test_three_levels_rejected(self):
        rng = np.random.default_rng(0)
        X1 = rng.uniform(size=(8, 1))
        m = fit([X1, X1[:6], X1[:4]], [X1[:, 0], X1[:6, 0] ** 2, X1[:4, 0] ** 3],
                FitConfig(theta_fixed=[[0.3]] * 3))
        with pytest.raises(BayesError, match="2 levels"):
            posterior_laws(m)

    def test_factorized_density_matches_likelihood_times_prior(self, example2):
        _, m = example2
        laws = posterior_laws(m)
        rng = np.random.default_rng(1)
        draws = bayes.sample_posterior(laws, 100, rng)
        J = m.structures
        H2 = m.level_regressors(1)
        F1 = J.bases[0](J.levels[0].X)
        diffs = []
        for i in range(100):
            s1, s2 = draws["sigma1sq"][i], draws["sigma2sq"][i]
            b1, lam = draws["beta1"][i], draws["lam"][i]
            ll = stats.multivariate_normal(F1 @ b1, s1 * J.levels[0].R).logpdf(m.z[0])
            ll += stats.multivariate_normal(H2 @ lam, s2 * J.levels[1].R).logpdf(m.z[1])
            ll -= np.log(s1) + np.log(s2)
            diffs.append(bayes.log_joint_density(laws, b1, lam, s1, s2) - ll)
        assert np.std(diffs) < 1e-6 * max(1.0, abs(np.mean(diffs)))


class TestIGQuantile:
    def test_median_against_numeric_cdf(self):
        a, b = 2.5, 3.0
        q = ig_quantile(a, b, 0.5)
        pdf = lambda x: stats.invgamma.pdf(x, a, scale=b)
        xs = np.linspace(1e-9, q, 200_001)
        np.testing.assert_allclose(integrate.trapezoid(pdf(xs), xs), 0.5, atol=1e-6)

    @given(st.floats(0.2, 20), st.floats(1e-3, 1e3), st.floats(1e-6, 1 - 1e-6))
    def test_round_trip(self, a, b, p):
        q = ig_quantile(a, b, p)
        np.testing.assert_allclose(ig_cdf(q, a, b), p, rtol=1e-8, atol=1e-14)

    @given(st.floats(0.2, 20), st.floats(1e-3, 1e3), st.floats(1e-5, 0.5), st.floats(0.5, 1 - 1e-5))
    def test_monotone(self, a, b, p1, p2):
        if p1 < p2:
            assert ig_quantile(a, b, p1) < ig_quantile(a, b, p2)

    def test_invalid(self):
        for args in ((0.0, 1.0, 0.5), (1.0, -1.0, 0.5), (1.0, 1.0, 1.0)):
            with pytest.raises(ValueError):
                ig_quantile(*args)


class TestPredictiveGivenSigmas:
    def test_degenerate_law_equals_closed_form(self, example1):
        _, m = example1
        laws = posterior_laws(m)
        x = np.linspace(0.05, 0.95, 7)[:, None]
        s1, s2 = 30.0, laws.level2.sigma2_point
        mean, var, mu, _ = predictive_given_sigmas(m, x, s1, s2, laws)
        assert np.ptp(mu, axis=1).max() < 1e-9
        ref = predict_2level_beta1_uncertain(
            m, x, laws.level2.mean[1:], laws.level2.mean[:1], [s1, s2], laws.level1.mean, s1 * laws.level1.cov_over_sigma2
        )
        np.testing.assert_allclose(mean, ref.mean, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(var, ref.variance, rtol=1e-9, atol=1e-12)

    def test_mixture_moments(self, example2):
        _, m = example2
        laws = posterior_laws(m)
        x = np.linspace(0.02, 0.98, 9)[:, None]
        mean, var, mu, var_p = predictive_given_sigmas(m, x, 40.0, 0.5, laws, BayesConfig(n_particles=500))
        np.testing.assert_allclose(mean, mu.mean(axis=1), rtol=1e-12, atol=1e-12)
        # streaming (Welford) law of total variance over the same particles
        for i in range(x.shape[0]):
            n, mbar, m2, ev = 0, 0.0, 0.0, 0.0
            for a, v in zip(mu[i], var_p[i]):
                n += 1
                d = a - mbar
                mbar += d / n
                m2 += d * (a - mbar)
                ev += (v - ev) / n
            np.testing.assert_allclose(var[i], ev + m2 / n, rtol=1e-9)
            assert var[i] >= var_p[i].mean() * (1 - 1e-12)


class TestPredictiveFull:
    def test_collapsed_axes(self, example2):
        _, m = example2
        laws = posterior_laws(m)
        x = np.linspace(0.1, 0.9, 5)[:, None]
        full = predictive_full(m, x, laws, fixed_sigma2=(25.0, 0.4))
        mean, var, _, _ = predictive_given_sigmas(m, x, 25.0, 0.4, laws)
        np.testing.assert_allclose(full.mean, mean, rtol=1e-12)
        np.testing.assert_allclose(full.variance, var, rtol=1e-12)

    def test_wider_than_plugin_example2(self, example2):
        p, m = example2
        X, _ = p.test_set()
        res = predictive_full(m, X)
        plug = m.predict(X)
        assert np.mean(res.std >= plug.std) >= 0.95
        assert np.all(res.variance >= plug.variance - 3 * res.mc_se)
        assert res.diagnostics["nodes"] == 441
        assert res.diagnostics["particles"] == 1000

    def test_reproducible(self, example2):
        _, m = example2
        x = np.linspace(0, 1, 11)[:, None]
        a = predictive_full(m, x, config=BayesConfig(seed=5))
        b = predictive_full(m, x, config=BayesConfig(seed=5))
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.variance, b.variance)

    def test_density_integrates_to_one(self, example2):
        _, m = example2
        res = predictive_full(m, np.array([[0.3]]), density=True)
        y, d = np.array(res.density[0]).T
        np.testing.assert_allclose(integrate.trapezoid(d, y), 1.0, atol=1e-3)

    def test_point_mass_collapse_logged(self, example1, caplog):
        _, m = example1
        caplog.set_level("INFO")
        res = predictive_full(m, np.array([[0.3]]))
        assert res.diagnostics["nodes"] == 21
        assert any("point mass" in r.getMessage() for r in caplog.records)

    def test_peaked_posterior_matches_plugin(self):
        X1 = np.linspace(0, 1, 60)[:, None]
        X2 = X1[::2]
        z1 = np.sin(4 * X1[:, 0])
        z2 = 1.2 * np.sin(4 * X2[:, 0]) + 0.5
        m = fit([X1, X2], [z1, z2], FitConfig(theta_fixed=[[0.3], [0.3]]))
        x = np.array([[0.123], [0.517], [0.871]])
        res = predictive_full(m, x)
        plug = m.predict(x)
        assert np.all(np.abs(res.mean - plug.mean) < np.maximum(3 * res.mc_se, 1e-10))

    def test_lambda_quadrature_dimension_limit(self, example2):
        _, m = example2
        with pytest.raises(BayesError):
            predictive_full(m, np.array([[0.5]]), config=BayesConfig(lambda_quadrature=True))

    def test_lambda_quadrature_matches_monte_carlo(self):
        m = toy_model()
        x = np.array([[0.37]])
        q = predictive_full(m, x, config=BayesConfig(lambda_quadrature=True))
        mc = predictive_full(m, x, config=BayesConfig(n_particles=20000))
        assert abs(q.mean[0] - mc.mean[0]) < 4 * mc.mc_se[0] + 1e-9

    def test_mean_against_nested_monte_carlo(self):
        m = toy_model()
        laws = posterior_laws(m)
        assert laws.level2.alpha > 2
        x = np.array([[0.37]])
        res = predictive_full(m, x, laws)
        rng = np.random.default_rng(123)
        draws = bayes.sample_posterior(laws, 100_000, rng)
        mu = dense_mu(m, x, draws["lam"][:20_000], laws.level1.mean[0])
        mu = np.concatenate([mu, dense_mu(m, x, draws["lam"][20_000:], laws.level1.mean[0])])
        se = np.sqrt(mu.var() / mu.size + res.mc_se[0] ** 2)
        assert abs(mu.mean() - res.mean[0]) < 3 * se
