"""Stationary correlation kernels and regularized factorization of correlation matrices."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

logger = logging.getLogger(__name__)

SQUARED_EXPONENTIAL = "sqexp"
MATERN52 = "matern52"
FAMILIES = (SQUARED_EXPONENTIAL, MATERN52)

_SQRT5 = np.sqrt(5.0)


class StillSingular(np.linalg.LinAlgError):
    """Raised when a correlation matrix cannot be factored even with the largest nugget."""


@dataclass(frozen=True)
class Kernel:
    """Stationary correlation function with length-scales ``theta``.

    ``theta`` holds either one length-scale (shared by all coordinates) or one
    per input coordinate. For the squared-exponential family a single value
    gives the isotropic form ``exp(-||h||^2 / theta^2)``; the Matern-5/2 family
    is always the tensor product of one-dimensional Matern-5/2 factors.
    """

    family: str
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float)).copy()
        if theta.ndim != 1 or theta.size == 0:
            raise ValueError("theta must be a non-empty vector")
        if not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise ValueError(f"theta components must be positive, got {theta}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def __repr__(self):
        return f"Kernel({self.family!r}, theta={self.theta.tolist()})"

    def __eq__(self, other):
        return (
            isinstance(other, Kernel)
            and self.family == other.family
            and np.array_equal(self.theta, other.theta)
        )

    def __hash__(self):
        return hash((self.family, self.theta.tobytes()))

    def with_theta(self, theta) -> Kernel:
        return Kernel(self.family, theta)

    def _scales(self, d: int) -> np.ndarray:
        if self.theta.size == 1:
            return np.full(d, self.theta[0])
        if self.theta.size != d:
            raise ValueError(f"theta has {self.theta.size} components but points have dimension {d}")
        return self.theta

    def __call__(self, X, Y) -> np.ndarray:
        """Correlation matrix between the rows of ``X`` (n, d) and ``Y`` (m, d)."""
        X = as_points(X)
        Y = as_points(Y)
        if X.shape[1] != Y.shape[1]:
            raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
        scales = self._scales(X.shape[1])
        if self.family == SQUARED_EXPONENTIAL:
            Xs = X / scales
            Ys = Y / scales
            sq = np.zeros((X.shape[0], Y.shape[0]))
            for k in range(X.shape[1]):
                sq += np.subtract.outer(Xs[:, k], Ys[:, k]) ** 2
            return np.exp(-sq)
        out = np.ones((X.shape[0], Y.shape[0]))
        for k in range(X.shape[1]):
            a = np.abs(np.subtract.outer(X[:, k], Y[:, k])) * (_SQRT5 / scales[k])
            out *= (1.0 + a + a * a / 3.0) * np.exp(-a)
        return out


def as_points(X) -> np.ndarray:
    """Coerce a point set to a 2-D float array of shape (n, d)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        return X.reshape(1, 1)
    if X.ndim == 1:
        return X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array of points, got shape {X.shape}")
    return X


def eval_correlation(kernel: Kernel, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(kernel(x[None, :], y[None, :])[0, 0])


def correlation_matrix(kernel: Kernel, Dk, Dl=None) -> np.ndarray:
    """``R(Dk, Dl)``; with ``Dl`` omitted the square matrix ``R(Dk)`` is returned
    exactly symmetric with a unit diagonal."""
    if Dl is None:
        R = kernel(Dk, Dk)
        R = 0.5 * (R + R.T)
        np.fill_diagonal(R, 1.0)
        return R
    return kernel(Dk, Dl)


@dataclass(frozen=True)
class RegularizationPolicy:
    """Nugget ladder tried in order until the factorization is acceptable."""

    nuggets: tuple = (0.0, 1e-10, 1e-8, 1e-6)
    cond_max: float = 1e12


@dataclass(frozen=True)
class FactoredCorrelation:
    """Cholesky factor of ``R + nugget * I``.

    Never forms the inverse unless :meth:`inverse` is called explicitly.
    """

    chol: np.ndarray = field(repr=False)
    nugget: float
    rcond: float

    @property
    def n(self) -> int:
        return self.chol.shape[0]

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def solve(self, b) -> np.ndarray:
        return linalg.cho_solve((self.chol, True), b, check_finite=False)

    def half_solve(self, b) -> np.ndarray:
        """``L^{-1} b`` where ``R = L L^T``."""
        return linalg.solve_triangular(self.chol, b, lower=True, check_finite=False)

    def matrix(self) -> np.ndarray:
        return self.chol @ self.chol.T

    def inverse(self) -> np.ndarray:
        inv = self.solve(np.eye(self.n))
        return 0.5 * (inv + inv.T)


def _try_cholesky(A: np.ndarray):
    try:
        L = linalg.cholesky(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None, 0.0
    if not np.all(np.isfinite(L)):
        return None, 0.0
    anorm = float(np.max(np.sum(np.abs(A), axis=0)))
    rcond, info = lapack.dpocon(L, anorm, uplo="L")
    if info != 0:
        return None, 0.0
    return L, float(rcond)


def factor_with_regularization(
    R: np.ndarray, policy: RegularizationPolicy = RegularizationPolicy()
) -> FactoredCorrelation:
    """Cholesky-factor ``R`` climbing the nugget ladder when needed.

    A rung is accepted when the factorization succeeds and the estimated
    1-norm condition number stays below ``policy.cond_max``.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"correlation matrix must be square, got shape {R.shape}")
    n = R.shape[0]
    for nugget in policy.nuggets:
        A = R + nugget * np.eye(n) if nugget > 0 else R
        L, rcond = _try_cholesky(A)
        if L is None:
            continue
        if rcond > 0 and 1.0 / rcond <= policy.cond_max:
            if nugget > 0:
                logger.debug("correlation matrix regularized with nugget %g (rcond %.3g)", nugget, rcond)
            return FactoredCorrelation(L, float(nugget), rcond)
    raise StillSingular(
        f"correlation matrix of size {n} is singular or ill-conditioned even with nugget "
        f"{policy.nuggets[-1]:g}; check for duplicate design points or extreme length-scales"
    )


def factor_with_nugget(R: np.ndarray, nugget: float) -> FactoredCorrelation:
    """Factor ``R + nugget * I`` with a nugget chosen earlier (no ladder)."""
    n = R.shape[0]
    A = R + nugget * np.eye(n) if nugget > 0 else R
    L, rcond = _try_cholesky(A)
    if L is None:
        raise StillSingular(f"correlation matrix of size {n} not positive definite with nugget {nugget:g}")
    return FactoredCorrelation(L, float(nugget), rcond)
