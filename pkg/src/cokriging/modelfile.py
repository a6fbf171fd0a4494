"""Versioned JSON model files.

Floats are written with ``repr`` (shortest exact round-trip), so a reloaded
model reproduces predictions bit for bit.
"""
from __future__ import annotations

import json

import numpy as np

from .designs import validate_nesting
from .estimation import FittedModel, LevelPosterior, build_level_correlation
from .kernels import Kernel
from .model import Basis

FORMAT = "cokriging-model"
SCHEMA_VERSION = 1


class ModelFileError(ValueError):
    pass


def model_to_dict(model: FittedModel, run_config=None, extra: dict | None = None) -> dict:
    levels = []
    for t, (lv, post) in enumerate(zip(model.structures.levels, model.posteriors)):
        levels.append({
            "level": t + 1,
            "X": model.designs.levels[t].tolist(),
            "z": model.z[t].tolist(),
            "theta": np.asarray(post.theta, dtype=float).tolist(),
            "nugget": float(lv.nugget),
            "posterior": {
                "lambda_mean": post.lambda_mean.tolist(),
                "lambda_cov_over_sigma2": post.lambda_cov_over_sigma2.tolist(),
                "alpha": float(post.alpha),
                "Q": float(post.Q),
                "n_rho": int(post.n_rho),
                "sigma2_reml": float(post.sigma2_reml),
            },
        })
    return {
        "format": FORMAT,
        "schema_version": SCHEMA_VERSION,
        "config": None if run_config is None else run_config.as_dict(),
        "family": model.family,
        "bases": [str(b) for b in model.bases],
        "rho_bases": [str(b) for b in model.rho_bases],
        "levels": levels,
        "extra": extra or {},
    }


def dumps(model: FittedModel, run_config=None, extra: dict | None = None) -> str:
    return json.dumps(model_to_dict(model, run_config, extra), indent=1, sort_keys=True) + "\n"


def model_from_dict(doc: dict) -> FittedModel:
    if doc.get("format") != FORMAT:
        raise ModelFileError("not a co-kriging model file")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ModelFileError(f"unsupported schema version {doc.get('schema_version')!r}")
    try:
        family = doc["family"]
        bases = [Basis.parse(b) for b in doc["bases"]]
        rho_bases = [Basis.parse(b) for b in doc["rho_bases"]]
        Xs = [np.asarray(lv["X"], dtype=float) for lv in doc["levels"]]
        zs = [np.asarray(lv["z"], dtype=float) for lv in doc["levels"]]
        designs = validate_nesting(Xs, 0.0)
        if not designs.is_sorted():
            raise ModelFileError("stored designs are not in sorted nested order")
        levels, posts = [], []
        for lv, X in zip(doc["levels"], Xs):
            kernel = Kernel(family, lv["theta"])
            levels.append(build_level_correlation(kernel, X, nugget=float(lv["nugget"])))
            p = lv["posterior"]
            posts.append(LevelPosterior(
                np.asarray(p["lambda_mean"], dtype=float),
                np.asarray(p["lambda_cov_over_sigma2"], dtype=float),
                float(p["alpha"]),
                float(p["Q"]),
                int(p["n_rho"]),
                theta=kernel.theta.copy(),
                nugget=float(lv["nugget"]),
            ))
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc
    return FittedModel(designs, zs, levels, posts, bases, rho_bases, family)


def loads_with_meta(text: str):
    """Model plus the raw document (config echo and extra fields)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc), doc


def loads(text: str) -> FittedModel:
    return loads_with_meta(text)[0]


def save(model: FittedModel, path, run_config=None, extra: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model, run_config, extra))


def load(path) -> FittedModel:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
