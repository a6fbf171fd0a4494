"""Plug-in predictive distribution of the most accurate level."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .kernels import as_points

logger = logging.getLogger(__name__)

CHUNK = 2048


@dataclass
class PluginPrediction:
    mean: np.ndarray
    variance: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


def _check_dim(model, X):
    X = as_points(X)
    if X.shape[1] != model.dim:
        raise ValueError(f"query points have dimension {X.shape[1]}, model expects {model.dim}")
    return X


def _clamp(var, prior):
    neg = var < 0
    if np.any(neg):
        worst = float(np.max(-var[neg] / np.maximum(prior[neg], np.finfo(float).tiny)))
        if worst > 1e-10:
            logger.warning("negative predictive variance clamped to 0 (relative size %.3g)", worst)
        var = np.where(neg, 0.0, var)
    return var


def design_hits(level, X) -> np.ndarray:
    """Rows of X equal to a design point of an un-regularized level.

    There the level interpolates, so its residual variance is exactly 0; the
    floating-point value of ``1 - r^T R^{-1} r`` would only be roundoff.
    """
    if level.nugget > 0:
        return np.zeros(X.shape[0], dtype=bool)
    return np.any(np.all(X[:, None, :] == level.X[None, :, :], axis=2), axis=1)


def level_residual_solves(model, betas=None, rhos=None) -> list:
    """R_t^{-1} (z_t - rho_{t-1}(D_t) z_{t-1}(D_t) - F_t(D_t) beta_t) for every level."""
    J = model.structures
    betas = model.betas if betas is None else betas
    scale = J.scale if rhos is None else J.scale.with_coefs(rhos)
    out = []
    for t, lv in enumerate(J.levels):
        r = model.z[t] - J.bases[t](lv.X) @ betas[t]
        if t:
            prev = model.z[t - 1][J.levels[t - 1].n - lv.n :]
            r = r - scale.values(t - 1, lv.X) * prev
        out.append(lv.factor.solve(r))
    return out


def _predict_chunk(model, X, gammas, scale, betas, sigma2):
    J = model.structures
    mean = var = None
    for t, lv in enumerate(J.levels):
        r = lv.kernel(lv.X, X)
        u = lv.factor.half_solve(r)
        own_mean = J.bases[t](X) @ betas[t] + r.T @ gammas[t]
        own_var = sigma2[t] * np.where(design_hits(lv, X), 0.0, 1.0 - np.sum(u * u, axis=0))
        if t == 0:
            mean, var = own_mean, own_var
        else:
            rho = scale.values(t - 1, X)
            mean = rho * mean + own_mean
            var = rho * rho * var + own_var
    return mean, var


def predict(model, X, *, betas=None, rhos=None, sigma2=None) -> PluginPrediction:
    """Conditional mean and variance of Z_s(x) given all observations.

    Evaluated level by level, which is the product of t_s(x) with the
    recursive form of V_s^{-1}: the mean never involves the variances and the
    variance recursion ``s_t^2 = rho^2 s_{t-1}^2 + sigma_t^2 (1 - r^T R^{-1} r)``
    avoids cancellation. Parameters default to the fitted point values.
    """
    X = _check_dim(model, X)
    J = model.structures
    betas = model.betas if betas is None else betas
    scale = J.scale if rhos is None else J.scale.with_coefs(rhos)
    sigma2 = J.sigma2 if sigma2 is None else np.asarray(sigma2, dtype=float)
    gammas = level_residual_solves(model, betas, scale.coefs)
    means, varis = [], []
    for a in range(0, X.shape[0], CHUNK):
        m, v = _predict_chunk(model, X[a : a + CHUNK], gammas, scale, betas, sigma2)
        means.append(m)
        varis.append(v)
    mean = np.concatenate(means) if means else np.empty(0)
    var = np.concatenate(varis) if varis else np.empty(0)
    prior = J.with_parameters(sigma2=sigma2, scale=scale).prior_variance(X)
    return PluginPrediction(mean, _clamp(var, prior))


def predict_dense(model, X) -> PluginPrediction:
    """Same quantities through the explicitly assembled V_s^{-1} (for checks and benchmarks)."""
    X = _check_dim(model, X)
    J = model.structures
    Vi = J.Vinv()
    beta = model.beta
    T = J.t(X)
    alpha = Vi @ (model.z_all - J.H() @ beta)
    mean = J.h(X) @ beta + T @ alpha
    prior = J.prior_variance(X)
    var = prior - np.einsum("ij,jk,ik->i", T, Vi, T)
    return PluginPrediction(mean, _clamp(var, prior))


def trend_gap(model, X, scale=None) -> np.ndarray:
    """k(x) = h'(x)^T - t(x)^T V^{-1} H, one row per x."""
    J = model.structures if scale is None else model.structures.with_parameters(scale=scale)
    X = _check_dim(model, X)
    return J.h(X) - J.weights(X) @ J.H()


def predict_2level_beta1_uncertain(model, X, beta2, rho, sigma2, beta1_mean, beta1_cov) -> PluginPrediction:
    """Two-level predictor with beta_2, rho, sigma^2 given and beta_1 integrated out.

    ``beta1_mean`` and ``beta1_cov`` are the mean and covariance of the
    beta_1 law (the covariance already includes the sigma_1^2 factor). The
    variance gains ``k_1 Cov(beta_1) k_1^T`` where k_1 holds the first p_1
    entries of ``h'(x) - t(x)^T V^{-1} H``.
    """
    if model.s != 2:
        raise ValueError(f"this predictor needs exactly 2 levels, the model has {model.s}")
    X = _check_dim(model, X)
    betas = [np.asarray(beta1_mean, dtype=float), np.asarray(beta2, dtype=float)]
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    base = predict(model, X, betas=betas, rhos=[rho], sigma2=sigma2)
    scale = model.structures.scale.with_coefs([rho])
    p1 = model.bases[0].size
    k1 = trend_gap(model, X, scale)[:, :p1]
    extra = np.einsum("ij,jk,ik->i", k1, np.atleast_2d(beta1_cov), k1)
    return PluginPrediction(base.mean, base.variance + extra)
