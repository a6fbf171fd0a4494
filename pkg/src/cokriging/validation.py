"""Accuracy metrics and all-levels leave-one-out cross-validation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .estimation import FitConfig, fit

logger = logging.getLogger(__name__)

Q2_STANDARD = "standard"
Q2_SPREAD = "spread"


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    q2: float | None
    max_abs_error: float
    avg_pred_std: float | None
    median_pred_std: float | None
    max_pred_std: float | None
    n_test: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def compute_metrics(predictions, truths, stds=None, q2_convention: str = Q2_STANDARD) -> MetricsReport:
    """RMSE, predictivity coefficient Q2 and absolute-error summaries.

    ``q2_convention="standard"`` divides by the spread of the truths about their
    mean; ``"spread"`` divides by the spread of the predictions about the mean of
    the truths. Q2 is ``None`` when its denominator vanishes.
    """
    m = np.asarray(predictions, dtype=float).ravel()
    z = np.asarray(truths, dtype=float).ravel()
    if m.shape != z.shape:
        raise ValueError(f"{m.size} predictions for {z.size} truths")
    if m.size < 2:
        raise ValueError("metrics need at least 2 test points")
    err = m - z
    sse = float(err @ err)
    if q2_convention == Q2_STANDARD:
        denom = float(np.sum((z - z.mean()) ** 2))
    elif q2_convention == Q2_SPREAD:
        denom = float(np.sum((m - z.mean()) ** 2))
    else:
        raise ValueError(f"unknown Q2 convention {q2_convention!r}")
    q2 = None if denom == 0.0 else 1.0 - sse / denom
    if q2 is None:
        logger.warning("Q2 is undefined: zero spread in the denominator")
    if stds is not None:
        sd = np.asarray(stds, dtype=float).ravel()
        stats = (float(sd.mean()), float(np.median(sd)), float(sd.max()))
    else:
        stats = (None, None, None)
    return MetricsReport(float(np.sqrt(sse / m.size)), q2, float(np.abs(err).max()), *stats, n_test=int(m.size))


@dataclass
class LooResult:
    point_ids: np.ndarray
    errors: np.ndarray
    stds: np.ndarray

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean(self.errors**2)))

    def coverage(self, k: float = 2.0) -> float:
        return float(np.mean(np.abs(self.errors) <= k * self.stds))


def _drop_point(X, z, x, tol):
    keep = np.max(np.abs(X - x), axis=1) > tol
    return X[keep], z[keep], int((~keep).sum())


def loo_cv(X_levels, z_levels, config: FitConfig = FitConfig(), held_out=None, removal: str = "all",
           refit_theta: str = "auto", model=None) -> LooResult:
    """Leave-one-out over points of the most accurate level.

    Each fold removes the held-out point from every level (``removal="all"``)
    or from the top level only (``removal="top"``), refits and predicts there.
    ``refit_theta="auto"`` re-optimizes the length-scales when there are at
    most 20 folds and otherwise reuses those of the full fit.
    """
    if removal not in ("all", "top"):
        raise ValueError(f"unknown removal mode {removal!r}")
    X_levels = [np.asarray(X, dtype=float).reshape(len(z), -1) for X, z in zip(X_levels, z_levels)]
    z_levels = [np.asarray(z, dtype=float).ravel() for z in z_levels]
    top = len(X_levels) - 1
    ids = np.arange(X_levels[top].shape[0]) if held_out is None else np.asarray(held_out, dtype=int).ravel()
    if np.any(ids < 0) or np.any(ids >= X_levels[top].shape[0]):
        raise ValueError(f"held-out ids must lie in [0, {X_levels[top].shape[0]})")
    if refit_theta == "auto":
        refit = ids.size <= 20
    elif refit_theta in ("always", "never"):
        refit = refit_theta == "always"
    else:
        raise ValueError(f"unknown refit mode {refit_theta!r}")
    fold_config = config
    if not refit:
        if model is None:
            model = fit(X_levels, z_levels, config)
        fold_config = replace(config, theta_fixed=[np.asarray(th) for th in model.thetas])
    errors, stds = [], []
    for i in ids:
        x = X_levels[top][i]
        Xs, zs = [], []
        for t, (X, z) in enumerate(zip(X_levels, z_levels)):
            if removal == "all" or t == top:
                X, z, hit = _drop_point(X, z, x, config.tol)
                if hit == 0:
                    raise ValueError(
                        f"held-out point {i + 1} is absent from level {t + 1}; "
                        "it must be removed from every level"
                    )
            Xs.append(X)
            zs.append(z)
        m = fit(Xs, zs, fold_config)
        p = m.predict(x[None, :])
        errors.append(float(p.mean[0] - z_levels[top][i]))
        stds.append(float(p.std[0]))
    return LooResult(ids, np.array(errors), np.array(stds))
