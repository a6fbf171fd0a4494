"""Command-line interface: fit, predict, bayes-predict, cv, bench, demo.

Exit status is 0 on success, 1 on a user error (bad input, configuration or
request) and 2 on a numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import bayes, modelfile
from .bench import run_complexity_bench
from .config import RunConfig
from .dataio import read_points_csv, write_points_csv, write_table_csv
from .demos import PROBLEMS, demo_generate
from .estimation import CollinearRegressors, InsufficientData, fit
from .validation import compute_metrics, loo_cv

logger = logging.getLogger("cokriging")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2


class UserError(ValueError):
    pass


def parse_ids(specs, s: int) -> dict:
    """``LEVEL:ROWS`` with 1-based rows, e.g. ``3:1,3,8-10``."""
    out = {}
    for spec in specs or []:
        try:
            lvl, rows = spec.split(":", 1)
            lvl = int(lvl)
            ids = []
            for part in rows.split(","):
                if "-" in part:
                    a, b = part.split("-", 1)
                    ids.extend(range(int(a), int(b) + 1))
                else:
                    ids.append(int(part))
        except ValueError:
            raise UserError(f"--ids expects LEVEL:ROWS (e.g. 3:1,3,8-10), got {spec!r}") from None
        if not 1 <= lvl <= s:
            raise UserError(f"--ids level {lvl} outside 1..{s}")
        out[lvl - 1] = np.asarray(ids, dtype=int) - 1
    return out


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def load_levels(paths, ids=None):
    Xs, zs = [], []
    for t, p in enumerate(paths):
        X, z = read_points_csv(p)
        if z.size == 0:
            raise InsufficientData(f"level {t + 1} has 0 observations")
        Xs.append(X)
        zs.append(z)
    dims = {X.shape[1] for X in Xs}
    if len(dims) != 1:
        raise UserError(f"level files disagree on the input dimension: {sorted(dims)}")
    rest = None
    if ids:
        for t, rows in ids.items():
            n = Xs[t].shape[0]
            if np.any(rows < 0) or np.any(rows >= n):
                raise UserError(f"--ids rows for level {t + 1} must lie in 1..{n}")
            if t == len(Xs) - 1:
                mask = np.ones(n, dtype=bool)
                mask[rows] = False
                rest = (Xs[t][mask], zs[t][mask])
            Xs[t], zs[t] = Xs[t][rows], zs[t][rows]
    return Xs, zs, rest


def input_scaling(Xs):
    """Per-coordinate min-max over the union of all level designs."""
    A = np.vstack(Xs)
    lo, hi = A.min(axis=0), A.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return lo, span


def apply_scaling(X, extra):
    sc = extra.get("input_scaling") if extra else None
    if not sc:
        return X
    return (X - np.asarray(sc["low"])) / np.asarray(sc["span"])


# ----- subcommands -----


def cmd_fit(args) -> int:
    cfg = load_config(args)
    Xs, zs, rest = load_levels(args.levels, parse_ids(args.ids, len(args.levels)))
    extra = {}
    if args.scale_inputs:
        lo, span = input_scaling(Xs)
        extra["input_scaling"] = {"low": lo.tolist(), "span": span.tolist()}
        Xs = [apply_scaling(X, extra) for X in Xs]
    model = fit(Xs, zs, cfg.fit_config(len(Xs)))
    modelfile.save(model, args.out, cfg, extra)
    lines = [f"levels: {model.s}   dimension: {model.dim}   sizes: {', '.join(map(str, model.designs.sizes))}",
             f"kernel: {model.family}", model.summary()]
    for t, r in enumerate(model.rhos):
        lines.append(f"rho{t + 1} = " + ", ".join(f"{v:.8f}" for v in r))
    for t, p in enumerate(model.posteriors):
        lines.append(f"sigma{t + 1}^2 = {p.sigma2_reml:.8g}   beta{t + 1} = " + ", ".join(f"{v:.8g}" for v in p.beta))
    if args.validate_rest:
        if rest is None or rest[0].shape[0] < 2:
            raise UserError("--validate-rest needs --ids on the top level leaving at least 2 rows out")
        pred = model.predict(apply_scaling(rest[0], extra))
        rep = compute_metrics(pred.mean, rest[1], pred.std, cfg.q2_convention)
        lines.append("validation on the top-level rows left out by --ids:")
        lines.extend(f"  {k} = {v}" for k, v in rep.as_dict().items())
    report = "\n".join(lines) + "\n"
    if args.report:
        Path(args.report).write_text(report, encoding="utf-8")
    sys.stdout.write(report)
    return EXIT_OK


def _query(model, path, extra):
    X, _ = read_points_csv(path, with_y=False)
    if X.shape[1] != model.dim:
        raise UserError(f"query has {X.shape[1]} inputs but the model has {model.dim}")
    return X, apply_scaling(X, extra)


def cmd_predict(args) -> int:
    model, doc = modelfile.loads_with_meta(Path(args.model).read_text(encoding="utf-8"))
    X, Xs = _query(model, args.query, doc.get("extra"))
    p = model.predict(Xs)
    write_points_csv(args.out, X, {"mean": p.mean, "std": p.std})
    return EXIT_OK


def cmd_bayes_predict(args) -> int:
    model, doc = modelfile.loads_with_meta(Path(args.model).read_text(encoding="utf-8"))
    if model.s != 2:
        raise UserError(f"bayes-predict supports 2-level models only; this model has {model.s} levels")
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    X, Xs = _query(model, args.query, doc.get("extra"))
    laws = bayes.posterior_laws(model, cfg.priors())
    res = bayes.predictive_full(model, Xs, laws, cfg.bayes_config(), density=bool(args.density))
    write_points_csv(args.out, X, {"mean": res.mean, "std": res.std, "mc_se": res.mc_se})
    if args.density:
        out = Path(args.density)
        out.mkdir(parents=True, exist_ok=True)
        for i, dens in enumerate(res.density):
            rows = [] if dens is None else [(f"{y:.17g}", f"{p:.17g}") for y, p in dens]
            write_table_csv(out / f"density_{i + 1}.csv", ["value", "density"], rows)
    logger.info("bayes diagnostics: %s", res.diagnostics)
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = load_config(args)
    Xs, zs, _ = load_levels(args.levels, parse_ids(args.ids, len(args.levels)))
    held = None
    if args.held_out:
        held = np.array([int(v) for v in args.held_out.split(",")]) - 1
    res = _loo(Xs, zs, cfg, held)
    rows = [(int(i) + 1, f"{e:.17g}", f"{s:.17g}") for i, e, s in zip(res.point_ids, res.errors, res.stds)]
    write_table_csv(args.out, ["point_id", "error", "pred_std"], rows)
    print(f"LOO-RMSE ({len(Xs)} levels) = {res.rmse:.6g}")
    if args.compare_top_two:
        if len(Xs) < 3:
            raise UserError("--compare-top-two needs at least 3 levels")
        sub = _loo(Xs[-2:], zs[-2:], _top_two(cfg), held)
        print(f"LOO-RMSE (top 2 levels) = {sub.rmse:.6g}")
        print(f"ratio = {res.rmse / sub.rmse:.6g}")
    return EXIT_OK


def _top_two(cfg: RunConfig) -> RunConfig:
    """Per-level settings of the two most accurate levels."""
    return replace(
        cfg,
        theta_fixed=None if cfg.theta_fixed is None else cfg.theta_fixed[-2:],
        bases=None if cfg.bases is None else cfg.bases[-2:],
        rho_bases=None if cfg.rho_bases is None else cfg.rho_bases[-1:],
    )


def _loo(Xs, zs, cfg, held):
    top = Xs[-1]
    if held is not None:
        if np.any(held < 0) or np.any(held >= top.shape[0]):
            raise UserError(f"held-out ids must lie in 1..{top.shape[0]}")
    try:
        return loo_cv(Xs, zs, cfg.fit_config(len(Xs)), held, cfg.removal, cfg.refit_theta)
    except ValueError as exc:
        if "absent from level" in str(exc):
            raise UserError(f"{exc} (leave-one-out removes the point from all levels)") from exc
        raise


def cmd_bench(args) -> int:
    n2 = [int(v) for v in args.n2.split(",")]
    res = run_complexity_bench(n2, args.repeats, args.seed or 0)
    text = res.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_demo(args) -> int:
    prob = demo_generate(args.problem, args.seed or 0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, (X, z) in enumerate(zip(prob.designs, prob.observations)):
        write_points_csv(out / f"level{t + 1}.csv", X, {"y": z})
    Xt, zt = prob.test_set(seed=args.seed or 0)
    write_points_csv(out / "test.csv", Xt, {"y": zt})
    write_points_csv(out / "query.csv", Xt, {})
    print(f"wrote {prob.s} level files and test.csv to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cokriging", description="Multi-fidelity co-kriging")
    p.add_argument("--threads", type=int, default=None, help="BLAS threads (default: library setting)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model from one CSV per level, cheapest first")
    f.add_argument("levels", nargs="+", help="level CSV files (header x1,...,xd,y)")
    f.add_argument("--config", help="INI run configuration")
    f.add_argument("--out", required=True, help="model file to write")
    f.add_argument("--report", help="also write the fit report here")
    f.add_argument("--seed", type=int)
    f.add_argument("--ids", action="append", metavar="LEVEL:ROWS", help="keep only these 1-based rows of a level (repeatable)")
    f.add_argument("--validate-rest", action="store_true", help="score the top-level rows dropped by --ids")
    f.add_argument("--scale-inputs", action="store_true",
                   help="min-max scale inputs to [0,1] over the union of all designs (stored in the model)")
    f.set_defaults(func=cmd_fit)

    q = sub.add_parser("predict", help="plug-in prediction")
    q.add_argument("model")
    q.add_argument("query", help="CSV with header x1,...,xd")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_predict)

    b = sub.add_parser("bayes-predict", help="Bayesian predictive law (2 levels)")
    b.add_argument("model")
    b.add_argument("query")
    b.add_argument("--out", required=True)
    b.add_argument("--config", help="INI with [priors] and [bayes] settings")
    b.add_argument("--seed", type=int)
    b.add_argument("--density", metavar="DIR", help="write density_<i>.csv per query point into DIR")
    b.set_defaults(func=cmd_bayes_predict)

    c = sub.add_parser("cv", help="leave-one-out over top-level points, removed from all levels")
    c.add_argument("levels", nargs="+")
    c.add_argument("--config")
    c.add_argument("--seed", type=int)
    c.add_argument("--ids", action="append", metavar="LEVEL:ROWS")
    c.add_argument("--held-out", help="1-based top-level rows to hold out (default: all)")
    c.add_argument("--compare-top-two", action="store_true", help="also run with the two most accurate levels only")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_cv)

    k = sub.add_parser("bench", help="dense against recursive inversion timings")
    k.add_argument("--n2", default="50,100,200,400")
    k.add_argument("--repeats", type=int, default=3)
    k.add_argument("--seed", type=int)
    k.add_argument("--out")
    k.set_defaults(func=cmd_bench)

    d = sub.add_parser("demo", help="write a built-in demo problem as CSV files")
    d.add_argument("problem", choices=PROBLEMS)
    d.add_argument("--seed", type=int)
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except (np.linalg.LinAlgError, CollinearRegressors, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
