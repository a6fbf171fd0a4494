from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from cokriging.demos import demo_generate
from cokriging.estimation import FitConfig, fit
from cokriging.model import Basis

settings.register_profile("ci", max_examples=30, deadline=None)
settings.load_profile("ci")


def forrester_config(theta2):
    return FitConfig(bases=[Basis.constant(), Basis.parse("1,x1")], theta_fixed=[[0.25], [theta2]])


@pytest.fixture(scope="session")
def example1():
    p = demo_generate("Forrester1")
    return p, fit(p.designs, p.observations, forrester_config(0.8))


@pytest.fixture(scope="session")
def example2():
    p = demo_generate("Forrester2HighFreq")
    return p, fit(p.designs, p.observations, forrester_config(0.07))


def random_nested(rng, sizes, d):
    """Nested designs by subsampling a uniform cloud; returned unsorted."""
    X = [rng.uniform(0.0, 1.0, (sizes[0], d))]
    for n in sizes[1:]:
        X.append(X[-1][rng.choice(X[-1].shape[0], n, replace=False)])
    return X


def random_structures(rng, sizes, d=2, basis_rho=False, theta=0.12, family="sqexp"):
    """Sorted nested random instance with random variances and scale factors."""
    from cokriging.designs import sort_nested, validate_nesting
    from cokriging.estimation import build_level_correlation
    from cokriging.kernels import Kernel
    from cokriging.model import Basis, JointStructures, ScaleModel

    X = random_nested(rng, sizes, d)
    nd, _, _ = sort_nested(validate_nesting(X))
    s = len(sizes)
    levels = [build_level_correlation(Kernel(family, [theta * (1 + 0.3 * k)] * d), nd.levels[k]) for k in range(s)]
    sigma2 = rng.uniform(0.3, 3.0, s)
    bases = [Basis.linear(d) if k % 2 else Basis.constant() for k in range(s)]
    if basis_rho:
        rb = [Basis.parse("1,x1") for _ in range(s - 1)]
        scale = ScaleModel.basis(rb, [rng.uniform(0.5, 1.5, 2) for _ in range(s - 1)])
    else:
        scale = ScaleModel.constant(rng.uniform(0.5, 1.5, s - 1))
    return JointStructures(levels, sigma2, scale, bases)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
