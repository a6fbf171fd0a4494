"""Built-in demo problems: two 1-D Forrester pairs and a 3-level Ishigami hierarchy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FORRESTER1 = "Forrester1"
FORRESTER2 = "Forrester2HighFreq"
ISHIGAMI3 = "Ishigami3"
PROBLEMS = (FORRESTER1, FORRESTER2, ISHIGAMI3)

ISHIGAMI_A = 7.0
ISHIGAMI_B = 0.1


def forrester(x):
    x = np.asarray(x, dtype=float)
    return (6.0 * x - 2.0) ** 2 * np.sin(12.0 * x - 4.0)


def forrester_cheap(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * forrester(x) + 10.0 * (x - 0.5) - 5.0


def forrester_highfreq(x):
    x = np.asarray(x, dtype=float)
    return forrester(x) + np.sin(10.0 * np.cos(5.0 * x))


def ishigami_levels(X):
    """Values of the three codes; the top one is the Ishigami function."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z1 = np.sin(X[:, 0])
    z2 = z1 + ISHIGAMI_A * np.sin(X[:, 1]) ** 2
    z3 = z2 + ISHIGAMI_B * X[:, 2] ** 4 * np.sin(X[:, 0])
    return z1, z2, z3


@dataclass
class DemoProblem:
    name: str
    designs: list
    observations: list
    functions: list

    @property
    def s(self) -> int:
        return len(self.designs)

    def test_set(self, n: int | None = None, seed: int = 0):
        """Test inputs and top-level truths: the 101-point grid in 1-D,
        uniform draws on the cube otherwise."""
        d = self.designs[0].shape[1]
        if d == 1:
            X = np.linspace(0.0, 1.0, 101 if n is None else n)[:, None]
        else:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
            X = rng.uniform(-np.pi, np.pi, (30000 if n is None else n, d))
        return X, self.functions[-1](X)


def _one_d(name, top):
    D1 = np.linspace(0.0, 1.0, 11)[:, None]
    D2 = D1[[0, 4, 6, 10]]
    fs = [lambda X: forrester_cheap(X[:, 0]), lambda X: top(X[:, 0])]
    return DemoProblem(name, [D1, D2], [fs[0](D1), fs[1](D2)], fs)


def ishigami3(sizes=(400, 200, 50), seed: int = 0) -> DemoProblem:
    """Uniform design on [-pi, pi]^3 for level 1, nested subsamples above."""
    rng = np.random.default_rng(seed)
    n1, n2, n3 = sizes
    X1 = rng.uniform(-np.pi, np.pi, (n1, 3))
    X2 = X1[rng.choice(n1, n2, replace=False)]
    X3 = X2[rng.choice(n2, n3, replace=False)]
    fs = [lambda X, k=k: ishigami_levels(X)[k] for k in range(3)]
    return DemoProblem(ISHIGAMI3, [X1, X2, X3], [fs[0](X1), fs[1](X2), fs[2](X3)], fs)


def synthetic_three_level(seed: int = 0, sizes=(60, 24, 10)) -> DemoProblem:
    """Smooth 2-D hierarchy on [0,1]^2 where each level is close to a scaled copy of the one below."""
    from scipy.stats import qmc

    rng = np.random.default_rng(seed)
    n1, n2, n3 = sizes
    X1 = qmc.LatinHypercube(d=2, seed=rng).random(n1)
    X2 = X1[np.sort(rng.choice(n1, n2, replace=False))]
    X3 = X2[np.sort(rng.choice(n2, n3, replace=False))]

    def f1(X):
        return np.sin(6.0 * X[:, 0]) + np.cos(5.0 * X[:, 1]) + X[:, 0] * X[:, 1]

    def f2(X):
        return 1.3 * f1(X) + 0.4 * X[:, 0]

    def f3(X):
        return 0.9 * f2(X) + 0.1 * np.sin(2.0 * X[:, 1])

    fs = [f1, f2, f3]
    return DemoProblem("Synthetic3", [X1, X2, X3], [f1(X1), f2(X2), f3(X3)], fs)


def demo_generate(problem: str, seed: int = 0) -> DemoProblem:
    if problem == FORRESTER1:
        return _one_d(FORRESTER1, forrester)
    if problem == FORRESTER2:
        return _one_d(FORRESTER2, forrester_highfreq)
    if problem == ISHIGAMI3:
        return ishigami3(seed=seed)
    raise ValueError(f"unknown demo problem {problem!r}; choose from {', '.join(PROBLEMS)}")
