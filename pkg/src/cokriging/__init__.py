"""Multi-fidelity co-kriging with autoregressive levels."""
from __future__ import annotations

from .bayes import BayesConfig, Priors2Level, posterior_laws, predictive_full
from .designs import NestedDesigns, NotNested, sort_nested, validate_nesting
from .estimation import FitConfig, FittedModel, fit
from .kernels import Kernel, StillSingular, correlation_matrix
from .model import Basis, ScaleModel
from .prediction import predict
from .validation import compute_metrics, loo_cv

__all__ = [
    "BayesConfig",
    "Basis",
    "FitConfig",
    "FittedModel",
    "Kernel",
    "NestedDesigns",
    "NotNested",
    "Priors2Level",
    "ScaleModel",
    "StillSingular",
    "correlation_matrix",
    "compute_metrics",
    "fit",
    "loo_cv",
    "posterior_laws",
    "predict",
    "predictive_full",
    "sort_nested",
    "validate_nesting",
]
