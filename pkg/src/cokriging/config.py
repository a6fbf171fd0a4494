"""Run configuration stored as an INI file (``[section]`` then ``key = value``)."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

from .bayes import BayesConfig, Priors2Level, NONINFORMATIVE
from .designs import DEFAULT_TOL
from .estimation import FitConfig, OptimizerConfig
from .kernels import RegularizationPolicy
from .model import Basis


class ConfigError(ValueError):
    pass


def _f(section, kind, doc):
    return field(default=None, metadata={"section": section, "kind": kind, "doc": doc})


@dataclass
class RunConfig:
    """All user-settable constants. Per-level lists use ``;`` between levels.

    Every key is optional; ``None`` selects the documented default.
    """

    family: str = field(default="sqexp", metadata={"section": "kernel", "kind": "str", "doc": "sqexp or matern52"})
    theta_fixed: list | None = _f("kernel", "levels_floats", "fixed length-scales per level, e.g. 0.25; 0.8")
    theta_bounds_factor: tuple = field(default=(1e-3, 10.0), metadata={"section": "kernel", "kind": "floats", "doc": "search box as multiples of the design range"})
    isotropic: bool = field(default=False, metadata={"section": "kernel", "kind": "bool", "doc": "one length-scale for all inputs"})
    bases: list | None = _f("trend", "levels_str", "trend basis per level, e.g. 1; 1,x1 (default constant)")
    rho_bases: list | None = _f("trend", "levels_str", "scale-factor basis per level pair (default constant)")
    n_starts: int = field(default=40, metadata={"section": "optimizer", "kind": "int", "doc": "Latin hypercube starts"})
    n_local: int = field(default=3, metadata={"section": "optimizer", "kind": "int", "doc": "starts refined by local search"})
    opt_tol: float = field(default=1e-4, metadata={"section": "optimizer", "kind": "float", "doc": "final step in log-length-scale"})
    max_evals: int = field(default=2000, metadata={"section": "optimizer", "kind": "int", "doc": "evaluations per local search"})
    seed: int = field(default=0, metadata={"section": "optimizer", "kind": "int", "doc": "root seed of every random stream"})
    nuggets: tuple = field(default=(0.0, 1e-10, 1e-8, 1e-6), metadata={"section": "regularization", "kind": "floats", "doc": "nugget ladder"})
    cond_max: float = field(default=1e12, metadata={"section": "regularization", "kind": "float", "doc": "largest accepted condition number"})
    nesting_tol: float = field(default=DEFAULT_TOL, metadata={"section": "designs", "kind": "float", "doc": "coordinate tolerance for nesting"})
    prior_beta1: str = field(default=NONINFORMATIVE, metadata={"section": "priors", "kind": "str", "doc": "noninformative or informative"})
    prior_lambda: str = field(default=NONINFORMATIVE, metadata={"section": "priors", "kind": "str", "doc": "noninformative or informative"})
    prior_sigma1: str = field(default=NONINFORMATIVE, metadata={"section": "priors", "kind": "str", "doc": "noninformative or informative"})
    prior_sigma2: str = field(default=NONINFORMATIVE, metadata={"section": "priors", "kind": "str", "doc": "noninformative or informative"})
    b1: tuple | None = _f("priors", "floats", "prior mean of beta_1")
    V1: tuple | None = _f("priors", "floats", "prior variance diagonal of beta_1 (times sigma_1^2)")
    b_lambda: tuple | None = _f("priors", "floats", "prior mean of (rho, beta_2)")
    V_lambda: tuple | None = _f("priors", "floats", "prior variance diagonal of (rho, beta_2)")
    alpha1: float | None = _f("priors", "float", "Inverse-Gamma shape of sigma_1^2")
    gamma1: float | None = _f("priors", "float", "Inverse-Gamma scale of sigma_1^2")
    alpha2: float | None = _f("priors", "float", "Inverse-Gamma shape of sigma_2^2")
    gamma2: float | None = _f("priors", "float", "Inverse-Gamma scale of sigma_2^2")
    grid_points: int = field(default=21, metadata={"section": "bayes", "kind": "int", "doc": "quadrature nodes per variance axis"})
    n_particles: int = field(default=1000, metadata={"section": "bayes", "kind": "int", "doc": "Monte Carlo particles"})
    quantile_low: float = field(default=1e-5, metadata={"section": "bayes", "kind": "float", "doc": "lower quadrature bound quantile"})
    quantile_high: float = field(default=1.0 - 1e-5, metadata={"section": "bayes", "kind": "float", "doc": "upper quadrature bound quantile"})
    lambda_quadrature: bool = field(default=False, metadata={"section": "bayes", "kind": "bool", "doc": "trapezoid rule instead of Monte Carlo (dimension <= 2)"})
    q2_convention: str = field(default="standard", metadata={"section": "validation", "kind": "str", "doc": "standard or spread"})
    refit_theta: str = field(default="auto", metadata={"section": "validation", "kind": "str", "doc": "auto, always or never"})
    removal: str = field(default="all", metadata={"section": "validation", "kind": "str", "doc": "all or top"})

    # ----- conversions -----

    def fit_config(self, s: int | None = None) -> FitConfig:
        bases = None if self.bases is None else [Basis.parse(b) for b in self.bases]
        rho_bases = None if self.rho_bases is None else [Basis.parse(b) for b in self.rho_bases]
        if s is not None:
            for name, v, want in (("bases", bases, s), ("rho_bases", rho_bases, s - 1), ("theta_fixed", self.theta_fixed, s)):
                if v is not None and len(v) != want:
                    raise ConfigError(f"{name} lists {len(v)} entries for {s} levels (expected {want})")
        return FitConfig(
            family=self.family,
            bases=bases,
            rho_bases=rho_bases,
            theta_fixed=None if self.theta_fixed is None else [list(t) for t in self.theta_fixed],
            theta_bounds_factor=tuple(self.theta_bounds_factor),
            isotropic=self.isotropic,
            optimizer=OptimizerConfig(self.n_starts, self.n_local, self.opt_tol, 0.5, self.max_evals),
            policy=RegularizationPolicy(tuple(self.nuggets), self.cond_max),
            seed=self.seed,
            tol=self.nesting_tol,
        )

    def priors(self) -> Priors2Level:
        return Priors2Level(
            self.prior_beta1, self.prior_lambda, self.prior_sigma1, self.prior_sigma2,
            self.b1, self.V1, self.b_lambda, self.V_lambda,
            self.alpha1, self.gamma1, self.alpha2, self.gamma2,
        )

    def bayes_config(self) -> BayesConfig:
        return BayesConfig(
            grid_points=self.grid_points,
            n_particles=self.n_particles,
            quantile_low=self.quantile_low,
            quantile_high=self.quantile_high,
            lambda_quadrature=self.lambda_quadrature,
            seed=self.seed,
        )

    # ----- text form -----

    def as_dict(self) -> dict:
        return {f.name: _format(getattr(self, f.name), f.metadata["kind"]) for f in fields(self)}

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for f in fields(self):
            sec = f.metadata["section"]
            if not cp.has_section(sec):
                cp.add_section(sec)
            v = getattr(self, f.name)
            if v is not None:
                cp.set(sec, f.name, _format(v, f.metadata["kind"]))
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp.items(sec))
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_ini(cls, text: str, source: str = "<config>") -> RunConfig:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for sec in cp.sections():
            for key, raw in cp.items(sec):
                f = known.get(key)
                if f is None or f.metadata["section"] != sec:
                    raise ConfigError(f"{source}: unknown key {sec}.{key}")
                try:
                    kw[key] = _parse(raw, f.metadata["kind"])
                except ValueError as exc:
                    raise ConfigError(f"{source}: bad value for {sec}.{key}: {raw!r}") from exc
        return cls(**kw)

    @classmethod
    def load(cls, path) -> RunConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_ini(fh.read(), str(path))


def _format(v, kind) -> str | None:
    if v is None:
        return None
    if kind == "bool":
        return "true" if v else "false"
    if kind in ("int", "str"):
        return str(v)
    if kind == "float":
        return repr(float(v))
    if kind == "floats":
        return ", ".join(repr(float(x)) for x in v)
    if kind == "levels_str":
        return "; ".join(v)
    if kind == "levels_floats":
        return "; ".join(", ".join(repr(float(x)) for x in t) for t in v)
    raise ValueError(kind)


def _parse(raw: str, kind):
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(raw)
        return low in ("true", "yes", "1")
    if kind == "int":
        return int(raw)
    if kind == "str":
        return raw
    if kind == "float":
        return float(raw)
    if kind == "floats":
        return tuple(float(x) for x in raw.split(","))
    if kind == "levels_str":
        return [x.strip() for x in raw.split(";")]
    if kind == "levels_floats":
        return [[float(x) for x in t.split(",")] for t in raw.split(";")]
    raise ValueError(kind)
