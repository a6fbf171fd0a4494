"""Timing of the dense joint inverse against the per-level recursive inverse."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .kernels import Kernel, StillSingular

logger = logging.getLogger(__name__)

# theta = 5/n2 on this grid leaves R near cond 1e12; a fixed nugget keeps the
# two explicit-inverse paths comparable at the 1e-8 level
BENCH_NUGGET = 1e-5


@dataclass(frozen=True)
class BenchRecord:
    n2: int
    n1: int
    t_crude: float
    t_light: float

    @property
    def ratio(self) -> float:
        return self.t_crude / self.t_light

    @property
    def theoretical_ratio(self) -> float:
        return (self.n1 + self.n2) ** 3 / (self.n1**3 + self.n2**3)


@dataclass
class BenchResult:
    records: list
    slope_crude: float
    slope_light: float
    max_disagreement: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n2", "n1", "t_crude_s", "t_light_s", "ratio"])
        for r in self.records:
            w.writerow([r.n2, r.n1, f"{r.t_crude:.6g}", f"{r.t_light:.6g}", f"{r.ratio:.4f}"])
        buf.write(f"# slope crude {self.slope_crude:.3f} light {self.slope_light:.3f}\n")
        return buf.getvalue()


def _inverse(A):
    """Generic dense inverse, the same routine on both timed paths."""
    try:
        return np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise StillSingular(str(exc)) from exc


def bench_problem(n2: int, n1: int | None = None, seed: int = 0):
    """Grid design on [0, 1], expensive design = first n2 points, theta = 5 / n2."""
    n1 = 4 * n2 if n1 is None else n1
    D1 = np.linspace(0.0, 1.0, n1)[:, None]
    # sorted nesting wants D2 as the trailing rows of D1
    D1 = np.vstack([D1[n2:], D1[:n2]])
    D2 = D1[n1 - n2 :]
    rng = np.random.default_rng(seed)
    z1 = np.sin(8.0 * D1[:, 0]) + 0.1 * rng.standard_normal(n1)
    z2 = 1.5 * z1[n1 - n2 :] + np.cos(3.0 * D2[:, 0])
    return D1, D2, z1, z2, 5.0 / n2


RHO, SIGMA2 = 1.5, (1.0, 0.3)


def _level_matrices(D1, D2, theta, nugget):
    k = Kernel("sqexp", [theta])
    R1 = k(D1, D1) + nugget * np.eye(D1.shape[0])
    R2 = k(D2, D2) + nugget * np.eye(D2.shape[0])
    return k, R1, R2


def _t_rows(k, D1, D2, probes):
    r1 = SIGMA2[0] * RHO * k(probes, D1)
    r2 = RHO * r1[:, D1.shape[0] - D2.shape[0] :] + SIGMA2[1] * k(probes, D2)
    return np.hstack([r1, r2])


def _predict_crude(D1, D2, z, theta, probes, nugget):
    """Assemble V and invert it whole."""
    k, R1, R2 = _level_matrices(D1, D2, theta, nugget)
    n1, n2 = R1.shape[0], R2.shape[0]
    s1, s2 = SIGMA2
    V = np.empty((n1 + n2, n1 + n2))
    V[:n1, :n1] = s1 * R1
    V[:n1, n1:] = RHO * s1 * R1[:, n1 - n2 :]
    V[n1:, :n1] = V[:n1, n1:].T
    V[n1:, n1:] = RHO**2 * s1 * R1[n1 - n2 :, n1 - n2 :] + s2 * R2
    Vi = _inverse(V)
    return _t_rows(k, D1, D2, probes) @ (Vi @ z)


def _predict_light(D1, D2, z, theta, probes, nugget):
    """Invert R_1 and R_2 separately and apply the block form of V^{-1} to z."""
    k, R1, R2 = _level_matrices(D1, D2, theta, nugget)
    n1, n2 = R1.shape[0], R2.shape[0]
    s1, s2 = SIGMA2
    A = _inverse(R1) / s1
    B = _inverse(R2) / s2
    z1, z2 = z[:n1], z[n1:]
    y = B @ (z2 - RHO * z1[n1 - n2 :])
    alpha = np.concatenate([A @ z1, y])
    alpha[n1 - n2 : n1] -= RHO * y
    return _t_rows(k, D1, D2, probes) @ alpha


def _median_time(fn, repeats):
    fn()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def loglog_slope(n, t) -> float:
    return float(np.polyfit(np.log(n), np.log(t), 1)[0])


def run_complexity_bench(n2_values=(50, 100, 200, 400), repeats: int = 3, seed: int = 0,
                         nugget: float = BENCH_NUGGET, agreement_tol: float = 1e-8) -> BenchResult:
    """Time the model build with the dense inverse and with the recursive one.

    Both paths build the correlation matrices, invert and predict at 10 probe
    points; their predictions are compared before any timing is kept.
    """
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    if list(n2_values) != sorted(n2_values):
        raise ValueError("n2_values must be ascending")
    records = []
    worst = 0.0
    probes = np.linspace(0.013, 0.987, 10)[:, None]
    with threadpool_limits(limits=1):
        for n2 in n2_values:
            D1, D2, z1, z2, theta = bench_problem(n2, seed=seed)
            z = np.concatenate([z1, z2])
            try:
                a = _predict_crude(D1, D2, z, theta, probes, nugget)
                b = _predict_light(D1, D2, z, theta, probes, nugget)
            except StillSingular as exc:
                logger.warning("skipping n2=%d: %s", n2, exc)
                continue
            gap = float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))
            worst = max(worst, gap)
            if gap > agreement_tol:
                raise AssertionError(f"dense and recursive predictions differ by {gap:.3g} at n2={n2}")
            tc = _median_time(lambda: _predict_crude(D1, D2, z, theta, probes, nugget), repeats)
            tl = _median_time(lambda: _predict_light(D1, D2, z, theta, probes, nugget), repeats)
            records.append(BenchRecord(n2, D1.shape[0], tc, tl))
    if len(records) < 2:
        raise ValueError("not enough sizes to fit a slope")
    n = np.array([r.n1 + r.n2 for r in records], dtype=float)
    return BenchResult(
        records,
        loglog_slope(n, [r.t_crude for r in records]),
        loglog_slope(n, [r.t_light for r in records]),
        worst,
    )
