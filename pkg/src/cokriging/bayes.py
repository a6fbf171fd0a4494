"""Fully Bayesian predictive distribution of the two-level model.

The posterior factorizes as

    p(beta_1 | sigma_1^2) p(rho, beta_2 | sigma_2^2) p(sigma_1^2) p(sigma_2^2),

with Normal laws for the coefficients and Inverse-Gamma laws for the
variances. beta_1 is integrated analytically; (rho, beta_2) by Monte Carlo
(or a tensor trapezoid rule in low dimension); (sigma_1^2, sigma_2^2) by a
trapezoid rule on a geometric grid. Length-scales stay at their estimates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc, gammaln
from scipy.stats import invgamma

from .estimation import gls_pieces
from .kernels import as_points
from .prediction import design_hits

logger = logging.getLogger(__name__)

NONINFORMATIVE = "noninformative"
INFORMATIVE = "informative"


class BayesError(ValueError):
    pass


@dataclass(frozen=True)
class Priors2Level:
    """Prior regime per parameter group and the informative hyperparameters.

    Informative priors are ``beta_1 | s1 ~ N(b1, s1 * diag(V1))``,
    ``(rho, beta_2) | s2 ~ N(b_lambda, s2 * diag(V_lambda))``,
    ``s1 ~ IG(alpha1, gamma1)`` and ``s2 ~ IG(alpha2, gamma2)``; otherwise
    the Jeffreys priors are used.
    """

    beta1: str = NONINFORMATIVE
    lam: str = NONINFORMATIVE
    sigma1: str = NONINFORMATIVE
    sigma2: str = NONINFORMATIVE
    b1: tuple | None = None
    V1: tuple | None = None
    b_lambda: tuple | None = None
    V_lambda: tuple | None = None
    alpha1: float | None = None
    gamma1: float | None = None
    alpha2: float | None = None
    gamma2: float | None = None

    @classmethod
    def informative(cls, b1, V1, b_lambda, V_lambda, alpha1, gamma1, alpha2, gamma2) -> Priors2Level:
        return cls(INFORMATIVE, INFORMATIVE, INFORMATIVE, INFORMATIVE,
                   tuple(np.atleast_1d(b1)), tuple(np.atleast_1d(V1)),
                   tuple(np.atleast_1d(b_lambda)), tuple(np.atleast_1d(V_lambda)),
                   alpha1, gamma1, alpha2, gamma2)

    def validate(self, p1: int, m2: int):
        for name in ("beta1", "lam", "sigma1", "sigma2"):
            if getattr(self, name) not in (NONINFORMATIVE, INFORMATIVE):
                raise BayesError(f"unknown prior regime {getattr(self, name)!r} for {name}")
        checks = [
            ("beta1", ("b1", "V1"), p1),
            ("lam", ("b_lambda", "V_lambda"), m2),
        ]
        for group, (bname, vname), size in checks:
            if getattr(self, group) != INFORMATIVE:
                continue
            b, V = getattr(self, bname), getattr(self, vname)
            if b is None or V is None or len(b) != size or len(V) != size:
                raise BayesError(f"informative {group} prior needs {bname} and {vname} of length {size}")
            if np.any(np.asarray(V, dtype=float) < 0):
                raise BayesError(f"{vname} must be nonnegative (0 fixes the coefficient at its prior mean)")
        for group, names in (("sigma1", ("alpha1", "gamma1")), ("sigma2", ("alpha2", "gamma2"))):
            if getattr(self, group) != INFORMATIVE:
                continue
            for n in names:
                v = getattr(self, n)
                if v is None or not v > 0:
                    raise BayesError(f"informative {group} prior needs {n} > 0")


@dataclass
class CoefficientLaw:
    """Normal law of coefficients given sigma^2 and Inverse-Gamma law of sigma^2."""

    mean: np.ndarray
    cov_over_sigma2: np.ndarray
    alpha: float
    Q: float

    @property
    def scale(self) -> float:
        return 0.5 * self.Q

    @property
    def sigma2_point(self) -> float:
        return self.Q / (2.0 * self.alpha)

    def cov(self, sigma2: float) -> np.ndarray:
        return sigma2 * self.cov_over_sigma2


@dataclass
class PosteriorLaws2Level:
    level1: CoefficientLaw
    level2: CoefficientLaw
    priors: Priors2Level
    degenerate: tuple = (False, False)


def _level_law(factor, H, z, beta_regime, b, V, sigma_regime, a0, g0) -> CoefficientLaw:
    n, p = H.shape
    lam_hat, cov_hat, Q_ii = gls_pieces(factor, H, z)
    if beta_regime == INFORMATIVE:
        b = np.asarray(b, dtype=float)
        V = np.asarray(V, dtype=float)
        Ht = factor.half_solve(H)
        zt = factor.half_solve(z)
        # (H^T R^-1 H + V^-1)^-1 written without V^-1, so V = 0 pins a coefficient at b
        d = np.sqrt(V)
        A = d[:, None] * np.linalg.inv(np.eye(p) + d[:, None] * (Ht.T @ Ht) * d[None, :]) * d[None, :]
        A = 0.5 * (A + A.T)
        mean = b + A @ (Ht.T @ (zt - Ht @ b))
        diff = b - lam_hat
        M = np.diag(V) + cov_hat
        corr = float(diff @ np.linalg.solve(M, diff))
        alpha = 0.5 * n
    else:
        A, mean, corr = cov_hat, lam_hat, 0.0
        alpha = 0.5 * (n - p)
    Q = Q_ii + corr
    if sigma_regime == INFORMATIVE:
        alpha += a0
        Q += g0
    if alpha <= 0:
        raise BayesError(f"insufficient data: alpha = {alpha} <= 0")
    return CoefficientLaw(mean, A, alpha, Q)


def posterior_laws(model, priors: Priors2Level = Priors2Level(), degenerate_ratio: float = 1e-12) -> PosteriorLaws2Level:
    """Posterior laws of both levels at the model's (fixed) length-scales."""
    if model.s != 2:
        raise BayesError(f"Bayesian prediction is available for 2 levels only (model has {model.s})")
    H1 = model.level_regressors(0)
    H2 = model.level_regressors(1)
    priors.validate(H1.shape[1], H2.shape[1])
    f1 = model.structures.levels[0].factor
    f2 = model.structures.levels[1].factor
    law1 = _level_law(f1, H1, model.z[0], priors.beta1, priors.b1, priors.V1,
                      priors.sigma1, priors.alpha1, priors.gamma1)
    law2 = _level_law(f2, H2, model.z[1], priors.lam, priors.b_lambda, priors.V_lambda,
                      priors.sigma2, priors.alpha2, priors.gamma2)
    degenerate = tuple(
        bool(law.sigma2_point < degenerate_ratio * max(np.var(z), np.finfo(float).tiny))
        for law, z in ((law1, model.z[0]), (law2, model.z[1]))
    )
    return PosteriorLaws2Level(law1, law2, priors, degenerate)


def psd_factor(C) -> np.ndarray:
    """F with F F^T = C; falls back to an eigen-factor when C is only semidefinite."""
    C = np.asarray(C, dtype=float)
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh(0.5 * (C + C.T))
        return U * np.sqrt(np.clip(w, 0.0, None))


def ig_cdf(x, alpha, scale):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, gammaincc(alpha, scale / np.where(x > 0, x, 1.0)), 0.0)


def ig_logpdf(x, alpha, scale):
    x = np.asarray(x, dtype=float)
    return alpha * np.log(scale) - gammaln(alpha) - (alpha + 1.0) * np.log(x) - scale / x


def ig_quantile(alpha: float, scale: float, p: float) -> float:
    """Quantile of IG(alpha, scale)."""
    if not (alpha > 0 and scale > 0 and 0 < p < 1):
        raise ValueError("ig_quantile needs alpha > 0, scale > 0 and 0 < p < 1")
    return float(invgamma.ppf(p, alpha, scale=scale))


def geometric_nodes(low: float, high: float, m: int) -> np.ndarray:
    if m == 1 or high <= low:
        return np.array([low])
    r = (high / low) ** (1.0 / (m - 1))
    return low * r ** np.arange(m)


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    if nodes.size == 1:
        return np.ones(1)
    d = np.diff(nodes)
    w = np.zeros(nodes.size)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


@dataclass
class BayesConfig:
    grid_points: int = 21
    n_particles: int = 1000
    quantile_low: float = 1e-5
    quantile_high: float = 1.0 - 1e-5
    lambda_quadrature: bool = False
    quadrature_points: int = 41
    seed: int = 0


@dataclass
class BayesPredictive:
    mean: np.ndarray
    variance: np.ndarray
    mc_se: np.ndarray
    density: list | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


class _Pieces:
    """Sigma- and particle-independent quantities of the two-level predictor at X.

    For coefficients lam = (beta_rho, beta_2) the conditional mean is
    ``mu0 + g . lam`` and the conditional variance
    ``rho(x)^2 sigma_1^2 c1 + sigma_2^2 c2`` with ``rho(x) = frho . beta_rho``.
    """

    def __init__(self, model, laws: PosteriorLaws2Level, X):
        J = model.structures
        lv1, lv2 = J.levels
        X = as_points(X)
        beta1 = laws.level1.mean
        r1 = lv1.kernel(lv1.X, X)
        u1 = lv1.factor.half_solve(r1)
        gamma1 = lv1.factor.solve(model.z[0] - J.bases[0](lv1.X) @ beta1)
        F1x = J.bases[0](X)
        m1 = F1x @ beta1 + r1.T @ gamma1
        k1 = F1x - (lv1.factor.solve(r1)).T @ J.bases[0](lv1.X)
        hit1 = design_hits(lv1, X)
        k1[hit1] = 0.0
        self.c1 = np.where(hit1, 0.0, 1.0 - np.sum(u1 * u1, axis=0)) + np.einsum(
            "ij,jk,ik->i", k1, laws.level1.cov_over_sigma2, k1
        )
        r2 = lv2.kernel(lv2.X, X)
        w = lv2.factor.solve(r2).T
        self.c2 = np.where(design_hits(lv2, X), 0.0, 1.0 - np.sum(r2.T * w, axis=1))
        H2 = model.level_regressors(1)
        self.frho = model.rho_bases[0](X)
        q = self.frho.shape[1]
        hlam = np.hstack([self.frho * m1[:, None], J.bases[1](X)])
        self.g = hlam - w @ H2
        self.mu0 = w @ model.z[1]
        self.q = q
        self.c1 = np.maximum(self.c1, 0.0)
        self.c2 = np.maximum(self.c2, 0.0)


def _base_draws(dim: int, cfg: BayesConfig):
    if cfg.lambda_quadrature:
        if dim > 2:
            raise BayesError("the trapezoid rule over (rho, beta_2) is limited to dimension <= 2")
        u = np.linspace(-6.0, 6.0, cfg.quadrature_points)
        wu = trapezoid_weights(u) * np.exp(-0.5 * u * u)
        grids = np.meshgrid(*([u] * dim), indexing="ij")
        eps = np.column_stack([g.ravel() for g in grids])
        wts = np.ones(eps.shape[0])
        for k, g in enumerate(np.meshgrid(*([wu] * dim), indexing="ij")):
            wts = wts * g.ravel()
        return eps, wts / wts.sum()
    rng = np.random.default_rng(cfg.seed)
    eps = rng.standard_normal((cfg.n_particles, dim))
    return eps, np.full(cfg.n_particles, 1.0 / cfg.n_particles)


def _particle_terms(pieces: _Pieces, law2: CoefficientLaw, eps, sigma2sq):
    """Conditional means (m, P) and rho(x) values (m, P) for every particle."""
    L = psd_factor(law2.cov_over_sigma2) if law2.mean.size else None
    s = np.sqrt(sigma2sq)
    base_mu = pieces.mu0 + pieces.g @ law2.mean
    gL = pieces.g @ L
    mu = base_mu[:, None] + s * (gL @ eps.T)
    fL = pieces.frho @ L[: pieces.q]
    rho = (pieces.frho @ law2.mean[: pieces.q])[:, None] + s * (fL @ eps.T)
    return mu, rho


def _node_moments(pieces, mu, rho, wts, sigma1sq, sigma2sq):
    var_p = rho * rho * (sigma1sq * pieces.c1[:, None]) + sigma2sq * pieces.c2[:, None]
    mean = mu @ wts
    second = (mu * mu + var_p) @ wts
    return mean, np.maximum(second - mean * mean, 0.0), var_p


def predictive_given_sigmas(model, X, sigma1sq, sigma2sq, laws: PosteriorLaws2Level, config: BayesConfig = BayesConfig()):
    """Mixture mean and variance of Z_2(x) with both variances held fixed.

    Returns ``(mean, variance, particle_means, particle_variances)``.
    """
    pieces = _Pieces(model, laws, X)
    eps, wts = _base_draws(laws.level2.mean.size, config)
    mu, rho = _particle_terms(pieces, laws.level2, eps, sigma2sq)
    mean, var, var_p = _node_moments(pieces, mu, rho, wts, sigma1sq, sigma2sq)
    return mean, var, mu, var_p


def sigma_axis(law: CoefficientLaw, degenerate: bool, cfg: BayesConfig, fixed=None):
    """Quadrature nodes and normalized weights over one variance."""
    if fixed is not None:
        return np.array([float(fixed)]), np.ones(1), (float(fixed), float(fixed))
    if degenerate:
        logger.info("variance %.3g is degenerate; integrating it as a point mass", law.sigma2_point)
        v = law.sigma2_point
        return np.array([v]), np.ones(1), (v, v)
    lo = ig_quantile(law.alpha, law.scale, cfg.quantile_low)
    hi = ig_quantile(law.alpha, law.scale, cfg.quantile_high)
    nodes = geometric_nodes(lo, hi, cfg.grid_points)
    w = trapezoid_weights(nodes) * np.exp(ig_logpdf(nodes, law.alpha, law.scale))
    return nodes, w, (lo, hi)


def predictive_full(model, X, laws: PosteriorLaws2Level | None = None, config: BayesConfig = BayesConfig(),
                    fixed_sigma2=(None, None), density: bool = False, density_points: int = 1000) -> BayesPredictive:
    """Bayesian predictive law of Z_2 at the rows of X.

    ``fixed_sigma2`` collapses either variance axis to a point mass. With
    ``density=True`` the mixture density is evaluated per query point on a
    grid refined around the mean.
    """
    laws = posterior_laws(model) if laws is None else laws
    X = as_points(X)
    pieces = _Pieces(model, laws, X)
    eps, pw = _base_draws(laws.level2.mean.size, config)
    n1, w1, b1 = sigma_axis(laws.level1, laws.degenerate[0], config, fixed_sigma2[0])
    n2, w2, b2 = sigma_axis(laws.level2, laws.degenerate[1], config, fixed_sigma2[1])
    W = np.outer(w1, w2)
    W = W / W.sum()
    m = X.shape[0]
    mean = np.zeros(m)
    second = np.zeros(m)
    particle_avg = np.zeros((m, eps.shape[0]))
    nodes = []
    for j, s2 in enumerate(n2):
        mu, rho = _particle_terms(pieces, laws.level2, eps, s2)
        for i, s1 in enumerate(n1):
            if W[i, j] == 0.0:
                continue
            mk, vk, var_p = _node_moments(pieces, mu, rho, pw, s1, s2)
            mean += W[i, j] * mk
            second += W[i, j] * (vk + mk * mk)
            particle_avg += W[i, j] * mu
            if density:
                nodes.append((W[i, j], mu, var_p))
    variance = np.maximum(second - mean * mean, 0.0)
    centered = particle_avg - (particle_avg @ pw)[:, None]
    mc_se = np.sqrt((centered * centered) @ pw / max(eps.shape[0] - 1, 1))
    if config.lambda_quadrature:
        mc_se = np.zeros(m)
    dens = None
    if density:
        dens = [_density_at(i, nodes, pw, mean[i], variance[i], density_points) for i in range(m)]
    diag = {
        "sigma1_bounds": b1,
        "sigma2_bounds": b2,
        "nodes": int(n1.size * n2.size),
        "particles": int(eps.shape[0]),
        "seed": config.seed,
        "degenerate": laws.degenerate,
    }
    return BayesPredictive(mean, variance, mc_se, dens, diag)


def _density_at(i, nodes, pw, mean, variance, G):
    from scipy.special import ndtr

    comps = [(w, mu[i], var_p[i]) for w, mu, var_p in nodes]
    if variance <= 0:
        return None
    sd = np.concatenate([np.sqrt(v) for _, _, v in comps])
    mus = np.concatenate([mu for _, mu, _ in comps])
    ws = np.concatenate([w * pw for w, _, _ in comps])
    pos = sd > 0
    if not np.all(pos):
        return None
    core = float(np.sqrt(np.sum(ws * sd * sd) / np.sum(ws))) if np.sum(ws) > 0 else 1.0
    core = min(core, float(np.min(sd[ws > 1e-12 * ws.max()]))) * 0.5
    reach = float(np.max(np.abs(mus - mean) + 10.0 * sd))
    U = np.arcsinh(reach / core)
    y = mean + core * np.sinh(np.linspace(-U, U, G))
    dens = np.zeros(G)
    # float32 keeps the (components x grid) pass affordable; accuracy is ample for a density
    yf = y.astype(np.float32)
    step = 8192
    for a in range(0, mus.size, step):
        inv = (1.0 / sd[a : a + step]).astype(np.float32)
        z = (yf[None, :] - mus[a : a + step, None].astype(np.float32)) * inv[:, None]
        np.multiply(z, z, out=z)
        np.multiply(z, np.float32(-0.5), out=z)
        np.exp(z, out=z)
        dens += (ws[a : a + step] * inv).astype(np.float32) @ z
    dens /= np.sqrt(2 * np.pi)
    return list(zip(y.tolist(), dens.tolist()))


def _normal_logpdf(x, mean, cov):
    L = np.linalg.cholesky(cov)
    u = np.linalg.solve(L, x - mean)
    return -0.5 * (u @ u) - np.sum(np.log(np.diag(L))) - 0.5 * x.size * np.log(2 * np.pi)


def log_joint_density(laws: PosteriorLaws2Level, beta1, lam, sigma1sq: float, sigma2sq: float) -> float:
    """Log posterior density as the product of its four factor laws."""
    l1, l2 = laws.level1, laws.level2
    return float(
        _normal_logpdf(np.atleast_1d(beta1), l1.mean, l1.cov(sigma1sq))
        + _normal_logpdf(np.atleast_1d(lam), l2.mean, l2.cov(sigma2sq))
        + ig_logpdf(sigma1sq, l1.alpha, l1.scale)
        + ig_logpdf(sigma2sq, l2.alpha, l2.scale)
    )


def sample_posterior(laws: PosteriorLaws2Level, n: int, rng) -> dict:
    """Independent draws from the factor laws (variances first, then coefficients)."""
    l1, l2 = laws.level1, laws.level2
    s1 = l1.scale / rng.gamma(l1.alpha, 1.0, n)
    s2 = l2.scale / rng.gamma(l2.alpha, 1.0, n)
    L1 = psd_factor(l1.cov_over_sigma2)
    L2 = psd_factor(l2.cov_over_sigma2)
    b1 = l1.mean + np.sqrt(s1)[:, None] * (rng.standard_normal((n, l1.mean.size)) @ L1.T)
    lam = l2.mean + np.sqrt(s2)[:, None] * (rng.standard_normal((n, l2.mean.size)) @ L2.T)
    return {"sigma1sq": s1, "sigma2sq": s2, "beta1": b1, "lam": lam}
