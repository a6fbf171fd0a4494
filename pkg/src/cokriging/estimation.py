"""Per-level closed-form posteriors and length-scale estimation.

Each level t is fitted on its own: the trend of level 1 is ``F_1 beta_1``;
for t >= 2 the regressors are ``H_t = [rho-part, F_t(D_t)]`` where the
rho-part holds ``z_{t-1}(D_t)`` (constant scale factor) or
``F_rho(D_t) * z_{t-1}(D_t)`` (scale factor expanded on a basis). Under
Jeffreys priors the coefficients are Normal given sigma_t^2 and sigma_t^2 is
Inverse-Gamma, so everything except the length-scales is closed form.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .designs import DEFAULT_TOL, NestedDesigns, sort_nested, validate_nesting
from .kernels import (
    FactoredCorrelation,
    Kernel,
    RegularizationPolicy,
    StillSingular,
    as_points,
    correlation_matrix,
    factor_with_nugget,
    factor_with_regularization,
)
from .model import Basis, JointStructures, LevelCorrelation, ScaleModel

logger = logging.getLogger(__name__)


class EstimationError(ValueError):
    pass


class InsufficientData(EstimationError):
    pass


class CollinearRegressors(EstimationError):
    pass


@dataclass
class LevelPosterior:
    """Normal / Inverse-Gamma posterior of one level at fixed length-scales.

    ``lambda_mean`` stacks the scale coefficients (first ``n_rho`` entries,
    absent for level 1) and the trend coefficients. The covariance of the
    coefficients is ``sigma_t^2 * lambda_cov_over_sigma2`` and
    ``sigma_t^2 ~ IG(alpha, Q / 2)``.
    """

    lambda_mean: np.ndarray
    lambda_cov_over_sigma2: np.ndarray
    alpha: float
    Q: float
    n_rho: int = 0
    theta: np.ndarray | None = None
    nugget: float = 0.0

    @property
    def sigma2_reml(self) -> float:
        return self.Q / (2.0 * self.alpha)

    @property
    def rho_coef(self) -> np.ndarray:
        return self.lambda_mean[: self.n_rho]

    @property
    def beta(self) -> np.ndarray:
        return self.lambda_mean[self.n_rho :]


def level_regressors(X, z_prev_on_D=None, basis: Basis = Basis(), rho_basis: Basis | None = None) -> np.ndarray:
    """Design matrix H_t of one level; ``z_prev_on_D=None`` for the first level."""
    F = basis(X)
    if z_prev_on_D is None:
        return F
    z_prev_on_D = np.asarray(z_prev_on_D, dtype=float).ravel()
    if z_prev_on_D.shape[0] != F.shape[0] or not np.all(np.isfinite(z_prev_on_D)):
        raise EstimationError("previous-level observations are missing on the current design")
    rho_basis = rho_basis or Basis.constant()
    G = rho_basis(X) * z_prev_on_D[:, None]
    return np.hstack([G, F])


def gls_pieces(factor: FactoredCorrelation, H: np.ndarray, z: np.ndarray):
    """Generalized least squares through the Cholesky factor.

    Returns ``(lambda_hat, (H^T R^{-1} H)^{-1}, Q)``.
    """
    Ht = factor.half_solve(H)
    zt = factor.half_solve(z)
    # QR of the whitened regressors keeps the normal equations well conditioned
    Qm, Rm = np.linalg.qr(Ht)
    d = np.abs(np.diag(Rm))
    if d.size and (d.min() <= 1e-12 * max(d.max(), 1e-300)):
        raise CollinearRegressors("the regressors are collinear on this design (H^T R^-1 H is singular)")
    lam = np.linalg.solve(Rm, Qm.T @ zt)
    Rinv = np.linalg.inv(Rm)
    cov = Rinv @ Rinv.T
    resid = zt - Ht @ lam
    return lam, 0.5 * (cov + cov.T), float(resid @ resid)


def posterior_level(z, H, factor: FactoredCorrelation, n_rho: int = 0) -> LevelPosterior:
    """Jeffreys-prior posterior of one level given its correlation factor."""
    z = np.asarray(z, dtype=float).ravel()
    n, m = H.shape
    alpha = 0.5 * (n - m)
    if alpha <= 0:
        raise InsufficientData(f"{n} observations cannot identify {m} regression coefficients (alpha <= 0)")
    lam, cov, Q = gls_pieces(factor, H, z)
    return LevelPosterior(lam, cov, alpha, Q, n_rho, nugget=factor.nugget)


def concentrated_restricted_nll(theta, kernel: Kernel, X, z, H, policy=RegularizationPolicy()) -> float:
    """``log det R(theta) + (n - m) log sigma2_hat(theta)``; +inf when R cannot be factored."""
    try:
        factor = factor_with_regularization(correlation_matrix(kernel.with_theta(theta), X), policy)
        _, _, Q = gls_pieces(factor, H, z)
    except (StillSingular, CollinearRegressors) as exc:
        logger.warning("objective undefined at theta=%s: %s", np.asarray(theta).tolist(), exc)
        return np.inf
    n, m = H.shape
    sigma2 = Q / (n - m)
    return factor.logdet + (n - m) * np.log(max(sigma2, np.finfo(float).tiny))


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 40
    n_local: int = 3
    tol: float = 1e-4
    initial_step: float = 0.5
    max_evals: int = 2000


def optimize_theta(objective, bounds, config: OptimizerConfig = OptimizerConfig(), seed=0) -> np.ndarray:
    """Minimize ``objective(theta)`` over a box in log-space.

    Latin-hypercube multistart followed by a compass (coordinate) search from
    the best few starts. Returns the best point ever probed.
    """
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or np.any(bounds <= 0) or np.any(bounds[:, 0] > bounds[:, 1]):
        raise ValueError("bounds must be an array of positive (low, high) pairs")
    lo, hi = np.log(bounds[:, 0]), np.log(bounds[:, 1])
    d = lo.size
    best = {"f": np.inf, "u": None}
    cache = {}

    def f(u):
        u = np.clip(u, lo, hi)
        key = u.tobytes()
        if key not in cache:
            val = float(objective(np.exp(u)))
            if not np.isfinite(val):
                val = np.inf
            cache[key] = val
            if val < best["f"] or best["u"] is None:
                best["f"], best["u"] = val, u.copy()
        return cache[key]

    sampler = qmc.LatinHypercube(d=d, seed=np.random.default_rng(seed))
    starts = lo + sampler.random(config.n_starts) * (hi - lo)
    values = np.array([f(u) for u in starts])
    order = np.argsort(values, kind="stable")[: config.n_local]
    for i in order:
        u = np.clip(starts[i], lo, hi)
        fu = values[i]
        step = config.initial_step
        while step >= config.tol and len(cache) < config.max_evals:
            improved = False
            for k in range(d):
                for sgn in (1.0, -1.0):
                    cand = u.copy()
                    cand[k] = np.clip(cand[k] + sgn * step, lo[k], hi[k])
                    if cand[k] == u[k]:
                        continue
                    fc = f(cand)
                    if fc < fu:
                        u, fu, improved = np.clip(cand, lo, hi), fc, True
                        break
            if not improved:
                step *= 0.5
    return np.exp(best["u"])


@dataclass
class LevelData:
    X: np.ndarray
    z: np.ndarray


@dataclass
class FitConfig:
    """Everything ``fit`` needs beyond the data.

    ``theta_fixed[t]`` set to a vector skips the optimization of level t.
    ``rho_bases`` lists the basis of each scale factor; ``None`` means constant.
    """

    family: str = "sqexp"
    bases: list | None = None
    rho_bases: list | None = None
    theta_fixed: list | None = None
    theta_bounds_factor: tuple = (1e-3, 10.0)
    isotropic: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    policy: RegularizationPolicy = field(default_factory=RegularizationPolicy)
    seed: int = 0
    tol: float = DEFAULT_TOL


def _level_seed(seed: int, level: int) -> int:
    return int(np.random.SeedSequence([int(seed), level]).generate_state(1)[0])


def theta_bounds(X, factor=(1e-3, 10.0), isotropic=False) -> np.ndarray:
    X = as_points(X)
    rng = np.ptp(X, axis=0)
    rng = np.where(rng > 0, rng, 1.0)
    if isotropic:
        rng = np.array([np.linalg.norm(rng)])
    return np.column_stack([factor[0] * rng, factor[1] * rng])


def build_level_correlation(kernel: Kernel, X, nugget: float | None = None, policy=RegularizationPolicy()):
    R = correlation_matrix(kernel, X)
    factor = factor_with_regularization(R, policy) if nugget is None else factor_with_nugget(R, nugget)
    if factor.nugget > 0:
        R = R + factor.nugget * np.eye(R.shape[0])
    R.setflags(write=False)
    return LevelCorrelation(kernel, np.asarray(X), R, factor)


class FittedModel:
    """Per-level posteriors plus the joint structures at the REML point values.

    Built by :func:`fit` or :func:`FittedModel.from_parts` (deserialization).
    """

    def __init__(self, designs: NestedDesigns, z, levels, posteriors, bases, rho_bases, family, config=None):
        self.designs = designs
        self.z = [np.asarray(v, dtype=float) for v in z]
        self.posteriors = list(posteriors)
        self.bases = list(bases)
        self.rho_bases = list(rho_bases)
        self.family = family
        self.config = config
        s = len(self.posteriors)
        if all(b.is_constant() for b in self.rho_bases):
            scale = ScaleModel.constant([self.posteriors[t].rho_coef[0] for t in range(1, s)])
        else:
            scale = ScaleModel.basis(self.rho_bases, [self.posteriors[t].rho_coef for t in range(1, s)])
        sigma2 = [p.sigma2_reml for p in self.posteriors]
        self.structures = JointStructures(levels, sigma2, scale, self.bases)

    @property
    def s(self) -> int:
        return len(self.posteriors)

    @property
    def dim(self) -> int:
        return self.designs.dim

    @property
    def betas(self) -> list:
        return [p.beta for p in self.posteriors]

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate(self.betas)

    @property
    def rhos(self) -> list:
        return [p.rho_coef for p in self.posteriors[1:]]

    @property
    def sigma2(self) -> np.ndarray:
        return self.structures.sigma2

    @property
    def thetas(self) -> list:
        return [p.theta for p in self.posteriors]

    @property
    def kernels(self) -> list:
        return [lv.kernel for lv in self.structures.levels]

    @property
    def z_all(self) -> np.ndarray:
        return np.concatenate(self.z)

    def level_regressors(self, t: int) -> np.ndarray:
        X = self.designs.levels[t]
        if t == 0:
            return level_regressors(X, None, self.bases[0])
        prev = self.z[t - 1][self.designs.map_between(t, t - 1)]
        return level_regressors(X, prev, self.bases[t], self.rho_bases[t - 1])

    def predict(self, X, **kw):
        from .prediction import predict

        return predict(self, X, **kw)

    def with_sigma2(self, sigma2) -> FittedModel:
        """Copy with the variances overridden (means are unaffected by construction)."""
        other = object.__new__(FittedModel)
        other.__dict__.update(self.__dict__)
        other.structures = self.structures.with_parameters(sigma2=np.asarray(sigma2, dtype=float))
        return other

    def summary(self) -> str:
        lines = ["level  n    theta                          posterior mean                 alpha    Q          sigma2"]
        for t, p in enumerate(self.posteriors):
            th = ",".join(f"{v:.4g}" for v in p.theta)
            lm = ",".join(f"{v:.6g}" for v in p.lambda_mean)
            lines.append(
                f"{t + 1:<6d} {self.designs.sizes[t]:<4d} ({th:<28s}) ({lm:<28s}) {p.alpha:<8.3g} {p.Q:<10.4g} {p.sigma2_reml:.4g}"
            )
        for t, p in enumerate(self.posteriors):
            names = [f"rho{t}[{i}]" for i in range(p.n_rho)] + [f"beta{t + 1}[{i}]" for i in range(p.beta.size)]
            lines.append(f"level {t + 1} posterior covariance / sigma2 ({', '.join(names)}):")
            for row in p.lambda_cov_over_sigma2:
                lines.append("    " + " ".join(f"{v: .4g}" for v in row))
            if p.nugget > 0:
                lines.append(f"    nugget {p.nugget:g}")
        return "\n".join(lines)


def fit_level(t, X, z, z_prev_on_D, basis, rho_basis, family, theta_fixed=None, config: FitConfig = FitConfig()):
    """Fit a single level: estimate theta (unless fixed) then the closed-form posterior."""
    H = level_regressors(X, z_prev_on_D, basis, rho_basis)
    n_rho = 0 if z_prev_on_D is None else (rho_basis or Basis.constant()).size
    if X.shape[0] - H.shape[1] <= 0:
        raise InsufficientData(
            f"level {t + 1} has {X.shape[0]} observations for {H.shape[1]} regression coefficients"
        )
    template = Kernel(family, np.ones(1))
    if theta_fixed is not None:
        theta = np.atleast_1d(np.asarray(theta_fixed, dtype=float))
    else:
        bounds = theta_bounds(X, config.theta_bounds_factor, config.isotropic)

        def objective(theta):
            return concentrated_restricted_nll(theta, template, X, z, H, config.policy)

        theta = optimize_theta(objective, bounds, config.optimizer, _level_seed(config.seed, t))
    kernel = template.with_theta(theta)
    level = build_level_correlation(kernel, X, policy=config.policy)
    post = posterior_level(z, H, level.factor, n_rho)
    post.theta = kernel.theta.copy()
    return level, post


def fit(X_levels, z_levels, config: FitConfig = FitConfig()) -> FittedModel:
    """Fit an s-level co-kriging model; levels are given cheapest first.

    The designs must be nested; they are validated and sorted here, so callers
    may pass them in any row order.
    """
    if len(X_levels) != len(z_levels):
        raise ValueError("one observation vector per design is required")
    for t, z in enumerate(z_levels):
        if np.asarray(z).size == 0:
            raise InsufficientData(f"level {t + 1} has 0 observations")
    designs = validate_nesting(X_levels, config.tol)
    designs, z, _ = sort_nested(designs, z_levels)
    s = designs.s
    d = designs.dim
    bases = list(config.bases) if config.bases is not None else [Basis.constant()] * s
    rho_bases = list(config.rho_bases) if config.rho_bases is not None else [Basis.constant()] * (s - 1)
    theta_fixed = list(config.theta_fixed) if config.theta_fixed is not None else [None] * s
    if len(bases) != s or len(rho_bases) != s - 1 or len(theta_fixed) != s:
        raise ValueError("bases, rho_bases and theta_fixed must match the number of levels")
    for b in bases + rho_bases:
        b(np.zeros((1, d)))  # dimension check
    levels, posts = [], []
    for t in range(s):
        X = designs.levels[t]
        prev = None if t == 0 else z[t - 1][designs.map_between(t, t - 1)]
        lv, post = fit_level(
            t, X, z[t], prev, bases[t], rho_bases[t - 1] if t else None, config.family, theta_fixed[t], config
        )
        levels.append(lv)
        posts.append(post)
    return FittedModel(designs, z, levels, posts, bases, rho_bases, config.family, config)
