from __future__ import annotations

import numpy as np
import pytest

from cokriging import demos


class TestDemos:
    def test_forrester_values(self):
        np.testing.assert_allclose(demos.forrester(np.array([0.0, 1.0])), [4 * np.sin(-4), 16 * np.sin(8)])
        x = np.linspace(0, 1, 5)
        np.testing.assert_allclose(demos.forrester_cheap(x), 0.5 * demos.forrester(x) + 10 * (x - 0.5) - 5)

    def test_ishigami_top_level(self):
        X = np.array([[0.3, -1.2, 2.0]])
        z = demos.ishigami_levels(X)[2]
        expected = np.sin(0.3) + 7 * np.sin(-1.2) ** 2 + 0.1 * 2.0**4 * np.sin(0.3)
        np.testing.assert_allclose(z, expected)

    @pytest.mark.parametrize("name", demos.PROBLEMS)
    def test_nested_and_reproducible(self, name):
        a, b = demos.demo_generate(name, 3), demos.demo_generate(name, 3)
        for Xa, Xb in zip(a.designs, b.designs):
            np.testing.assert_array_equal(Xa, Xb)
        for t in range(1, a.s):
            upper, lower = a.designs[t], a.designs[t - 1]
            assert all(np.any(np.all(lower == x, axis=1)) for x in upper)
        for t, (X, z) in enumerate(zip(a.designs, a.observations)):
            np.testing.assert_array_equal(a.functions[t](X), z)

    def test_sizes(self):
        assert [X.shape for X in demos.ishigami3().designs] == [(400, 3), (200, 3), (50, 3)]
        assert [X.shape[0] for X in demos.demo_generate("Forrester1").designs] == [11, 4]
        X, z = demos.demo_generate("Forrester1").test_set()
        assert X.shape == (101, 1)
        X, z = demos.ishigami3().test_set(n=100)
        assert X.shape == (100, 3) and np.all(np.abs(X) <= np.pi)

    def test_synthetic_family(self):
        p = demos.synthetic_three_level(2)
        assert [X.shape for X in p.designs] == [(60, 2), (24, 2), (10, 2)]
        assert not np.array_equal(p.designs[0], demos.synthetic_three_level(3).designs[0])

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown demo"):
            demos.demo_generate("Branin")
