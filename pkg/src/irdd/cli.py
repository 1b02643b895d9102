"""Command-line interface: ``irdd {fit,rdd,ci,mc,limit,cstar}``.

Outputs are deterministic functions of the input bytes, flags and seed.
JSON reports carry a ``schema_version`` and echo the effective settings;
``--output`` also writes a ``<output>.meta.json`` sidecar.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import sharp_baseline_estimate
from .bootstrap import MultiplierKind, sharp_wild_ci
from .errors import ConfigError, EstimationError, InvalidInputError, IrddError
from .isotonic import Sample, pava_fit
from .limits import REGIMES, LimitDrawSpec, chernoff_draws, estimate_cstar, limit_draws
from .mc import DGPS, ESTIMATORS, SIGMA_FUNCTIONS, coverage_table, mc_table
from .rdd import N_RULES, RddConfig, fuzzy_estimate, sharp_estimate

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_ESTIMATION = 4

__all__ = ["ingest_csv", "build_parser", "main", "SCHEMA_VERSION"]


def ingest_csv(path, x: str = "x", y: str = "y", d: str | None = None, *,
               drop_invalid: bool = False) -> tuple[Sample, dict]:
    """Read a comma-separated file with a header row into a :class:`Sample`.

    Rows with an empty or non-finite value in a used column raise
    :class:`InvalidInputError` naming their line numbers, unless
    ``drop_invalid`` is set, in which case they are skipped and reported.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror or exc}") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise InvalidInputError(f"{path} is empty")
    header = [h.strip() for h in header]
    wanted = [x, y] + ([d] if d else [])
    missing = [c for c in wanted if c not in header]
    if missing:
        raise InvalidInputError(f"{path}: missing column(s) {missing}; header has {header}")
    cols = [header.index(c) for c in wanted]
    rows, bad = [], []
    for line_no, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        try:
            vals = [float(rec[i]) for i in cols]
        except (ValueError, IndexError):
            bad.append(line_no)
            continue
        if not all(math.isfinite(v) for v in vals):
            bad.append(line_no)
            continue
        rows.append(vals)
    if bad and not drop_invalid:
        shown = ", ".join(map(str, bad[:20])) + (" ..." if len(bad) > 20 else "")
        raise InvalidInputError(f"{path}: {len(bad)} row(s) with missing or non-numeric values at line(s) {shown}")
    if not rows:
        raise InvalidInputError(f"{path}: no valid rows")
    arr = np.asarray(rows)
    sample = Sample(arr[:, 0], arr[:, 1], arr[:, 2] if d else None)
    diagnostics = {
        "rows": sample.n,
        "dropped_lines": bad,
        "tied_x": sample.n_ties(),
        "distinct_x": sample.n - sample.n_ties(),
    }
    return sample, diagnostics


def _cutoff_counts(sample: Sample, cutoff: float) -> dict:
    below = int((sample.x < cutoff).sum())
    return {"below": below, "at_or_above": sample.n - below}


def _emit(args, payload: dict, table: list[dict] | None = None) -> None:
    payload = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": args.command, **payload}
    if args.format == "csv" and table is not None:
        buf = io.StringIO()
        if table:
            w = csv.DictWriter(buf, fieldnames=list(table[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(table)
        text = buf.getvalue()
    else:
        text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    if args.output:
        out = Path(args.output)
        out.write_text(text)
        meta = {k: v for k, v in payload.items() if k not in ("rows", "draws", "replicates")}
        Path(f"{out}.meta.json").write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _settings(args) -> dict:
    skip = {"func", "output", "format"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _load(args) -> tuple[Sample, dict]:
    return ingest_csv(args.input, args.x, args.y, args.d, drop_invalid=args.drop_invalid)


def _cmd_fit(args) -> None:
    sample, diag = _load(args)
    fit = pava_fit(sample, args.channel, increasing=not args.decreasing)
    rows = [{"x": float(k), "fit": float(v), "weight": int(w)}
            for k, v, w in zip(fit.knots, fit.values, fit.weights)]
    _emit(args, {"settings": _settings(args), "input": diag, "blocks": len(fit.blocks), "rows": rows}, rows)


def _cmd_rdd(args) -> None:
    sample, diag = _load(args)
    diag.update(_cutoff_counts(sample, args.cutoff))
    if args.method != "irdd":
        if args.fuzzy:
            raise ConfigError("fuzzy estimation is available for --method irdd only")
        est = sharp_baseline_estimate(sample, args.cutoff, args.method, k=args.k, bandwidth=args.bandwidth)
    else:
        cfg = RddConfig(cutoff=args.cutoff, c=args.c, a=args.a, n_rule=args.n_rule,
                        treated_above=not args.treated_below)
        if args.fuzzy:
            if args.d is None:
                raise InvalidInputError("--fuzzy needs a treatment column (--d)")
            est = fuzzy_estimate(sample, cfg)
        else:
            est = sharp_estimate(sample, cfg)
    record = est.to_dict()
    row = {k: record[k] for k in ("theta", "naive_theta", "m_minus", "m_plus")}
    row.update(eval_minus=est.eval_points[0], eval_plus=est.eval_points[1],
               n_minus=est.side_n[0], n_plus=est.side_n[1])
    _emit(args, {"settings": _settings(args), "input": diag, "estimate": record}, [row])


def _cmd_ci(args) -> None:
    if args.fuzzy:
        raise ConfigError(
            "confidence intervals are available for sharp designs only; "
            "no bootstrap is provided for the fuzzy estimator"
        )
    sample, diag = _load(args)
    diag.update(_cutoff_counts(sample, args.cutoff))
    c_values = args.c_grid if args.c_grid else [args.c]
    reports, rows = [], []
    for c in c_values:
        rep = sharp_wild_ci(sample, args.cutoff, c, args.reps, args.level, args.multiplier, args.seed,
                            a=args.a, n_rule=args.n_rule, interval=args.interval, workers=args.workers)
        reports.append(rep.to_dict())
        rows.append({"c": c, "estimate": rep.estimate, "lower": rep.ci[0], "upper": rep.ci[1],
                     "length": rep.length, "level": rep.level, "reps": rep.reps})
    _emit(args, {"settings": _settings(args), "input": diag, "intervals": reports}, rows)


def _cmd_mc(args) -> None:
    if args.coverage:
        report = coverage_table(args.dgp, args.n, args.c_grid or [1.0], args.reps, args.boot_reps, args.level,
                                args.seed, multiplier=args.multiplier, sigma_fn=args.sigma, workers=args.workers)
    else:
        report = mc_table(args.dgp, args.n, args.estimators, args.reps, args.seed,
                          sigma_fn=args.sigma, workers=args.workers)
    rows = report.to_records()
    _emit(args, {"settings": _settings(args), "table_settings": report.settings, "rows": rows}, rows)


def _cmd_limit(args) -> None:
    if args.regime == "chernoff":
        draws = chernoff_draws(args.seed, args.reps, workers=args.workers)
    else:
        spec = LimitDrawSpec(args.sigma2, args.density, args.slope, args.c, args.regime)
        draws = limit_draws(spec, args.seed, args.reps, workers=args.workers)
    qs = [0.01, 0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975, 0.99]
    summary = {"mean": float(draws.mean()), "sd": float(draws.std(ddof=1)) if draws.size > 1 else 0.0,
               "quantiles": dict(zip(map(str, qs), np.quantile(draws, qs).tolist()))}
    rows = [{"draw": i, "value": float(v)} for i, v in enumerate(draws)]
    _emit(args, {"settings": _settings(args), "summary": summary, "rows": rows}, rows)


def _cmd_cstar(args) -> None:
    rep = estimate_cstar(args.seed, args.reps, args.step, args.horizon, workers=args.workers)
    d = rep.to_dict()
    rows = [{"c": c, "objective": o, "std_error": s} for c, o, s in zip(d["c_grid"], d["objective"], d["std_error"])]
    _emit(args, {"settings": _settings(args), "cstar": rep.cstar, "report": d}, rows)


def _add_io(p, input_required: bool = True) -> None:
    if input_required:
        p.add_argument("input", help="CSV file with a header row")
        p.add_argument("--x", default="x", help="running-variable column (default: x)")
        p.add_argument("--y", default="y", help="outcome column (default: y)")
        p.add_argument("--d", default=None, help="treatment column, if any")
        p.add_argument("--drop-invalid", action="store_true",
                       help="skip rows with missing or non-numeric values instead of failing")
    p.add_argument("--output", "-o", help="write here instead of stdout (adds a .meta.json sidecar)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def _add_rdd_tuning(p, default_a: float) -> None:
    p.add_argument("--cutoff", type=float, default=0.0)
    p.add_argument("--c", type=float, default=1.0, help="offset constant in c * n**(-a), in x units")
    p.add_argument("--a", type=float, default=default_a, help="offset exponent")
    p.add_argument("--n-rule", choices=N_RULES, default="total",
                   help="sample size in the offset: full sample or each side's own count")


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irdd", description="Isotonic regression discontinuity designs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="isotonic fit of one channel on x")
    _add_io(p)
    p.add_argument("--channel", choices=("y", "d"), default="y")
    p.add_argument("--decreasing", action="store_true")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("rdd", help="point estimate of the effect at the cutoff")
    _add_io(p)
    _add_rdd_tuning(p, 1.0 / 3.0)
    p.add_argument("--fuzzy", action="store_true", help="fuzzy design (needs --d)")
    p.add_argument("--method", choices=("irdd", "knn", "ll"), default="irdd")
    p.add_argument("--k", type=_positive_int, default=None, help="neighbours for --method knn")
    p.add_argument("--bandwidth", type=float, default=None, help="bandwidth for --method ll")
    p.add_argument("--treated-below", action="store_true", help="treatment applies below the cutoff")
    p.set_defaults(func=_cmd_rdd)

    p = sub.add_parser("ci", help="trimmed wild bootstrap interval for a sharp design")
    _add_io(p)
    _add_rdd_tuning(p, 0.5)
    p.add_argument("--c-grid", type=float, nargs="+", help="sweep several c values")
    p.add_argument("--reps", type=_positive_int, default=999)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--multiplier", choices=[m.value for m in MultiplierKind], default="rademacher")
    p.add_argument("--interval", choices=("basic", "percentile"), default="basic")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--fuzzy", action="store_true", help="refused: fuzzy designs have no bootstrap here")
    p.set_defaults(func=_cmd_ci)

    p = sub.add_parser("mc", help="Monte Carlo bias/variance/MSE or coverage tables")
    _add_io(p, input_required=False)
    p.add_argument("--dgp", type=int, nargs="+", choices=sorted(DGPS), required=True)
    p.add_argument("--n", type=_positive_int, nargs="+", required=True)
    p.add_argument("--estimators", nargs="+", choices=sorted(ESTIMATORS), default=["irdd", "knn", "ll"])
    p.add_argument("--reps", type=_positive_int, default=1000)
    p.add_argument("--sigma", choices=SIGMA_FUNCTIONS, default=None)
    p.add_argument("--coverage", action="store_true", help="bootstrap coverage and length instead")
    p.add_argument("--c-grid", type=float, nargs="+")
    p.add_argument("--boot-reps", type=_positive_int, default=499)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--multiplier", choices=[m.value for m in MultiplierKind], default="rademacher")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_mc)

    p = sub.add_parser("limit", help="draws from a limit law")
    _add_io(p, input_required=False)
    p.add_argument("--regime", choices=("chernoff",) + REGIMES, default="chernoff")
    p.add_argument("--reps", type=_positive_int, default=10_000)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--slope", type=float, default=1.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_limit)

    p = sub.add_parser("cstar", help="simulate the MSE-optimal offset constant")
    _add_io(p, input_required=False)
    p.add_argument("--reps", type=_positive_int, default=100_000)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_cstar)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except EstimationError as exc:
        print(f"irdd {args.command}: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (IrddError, OSError) as exc:
        print(f"irdd {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
