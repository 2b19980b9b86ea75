"""Command-line interface: ``lsrk fit | simulate | evaluate | replay``.

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .coefficients import EvaluationGrid, estimate_coefficients, read_coefficient_csv
from .covariance import ProcessKernels
from .data import ColumnSchema, load_longitudinal_csv
from .exceptions import InputError, NumericalError
from .kernels import Gaussian
from .metrics import SampledFunction, integrated_errors
from .selection import SmoothingConfig
from .simulation import SimulationConfig, TrueCoefficients, run_monte_carlo

logger = logging.getLogger("lsrk")

EXIT_INPUT, EXIT_NUMERIC, EXIT_INTERNAL = 1, 2, 3

CSV_SCHEMA_HELP = """\
CSV schema (UTF-8, header row, comma-separated): subject_id (string), time (real), y (real), x1..x{d1} (real), z1..z{d2} (real). A sidecar JSON schema file may rename columns: {"subject":"id","time":"day","response":"protime","predictors":["bili","albumin"],"covariates":["age"]}.
"""

FAMILY_FLAGS = ("mean_y", "mean_x", "xx", "xz", "yx", "yz")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _lambda_arg(text: str):
    if text.lower() == "cv":
        return "cv"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'cv', got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError("lambda must be positive")
    return value


def _stn_arg(text: str) -> float:
    value = float(text)  # accepts "inf"
    if not value > 0:
        raise argparse.ArgumentTypeError("stn must be positive")
    return value


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise argparse.ArgumentTypeError(str(exc))

    return parse


def _add_smoothing_args(p):
    g = p.add_argument_group("smoothing")
    g.add_argument("--lambda", dest="lambda_all", type=_lambda_arg, default="cv",
                   help="default for every family: a number or 'cv' (default: cv)")
    for fam in FAMILY_FLAGS:
        g.add_argument(f"--lambda-{fam.replace('_', '-')}", dest=f"lambda_{fam}", type=_lambda_arg, default=None,
                       help=f"smoothing parameter for the {fam} family (number or 'cv')")
    g.add_argument("--theta", type=float, default=0.1, help="Gaussian bandwidth for every process (default 0.1)")
    g.add_argument("--theta-y", type=float, default=None, help="bandwidth of the response kernel")
    g.add_argument("--theta-x", type=_csv_list(float), default=None,
                   help="comma-separated bandwidths, one per functional predictor")
    g.add_argument("--cv-folds", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1, help="parallelism hint; never changes results")


def _smoothing(args) -> SmoothingConfig:
    values = {f"lambda_{fam}": getattr(args, f"lambda_{fam}") or args.lambda_all for fam in FAMILY_FLAGS}
    return SmoothingConfig(**values, cv_folds=args.cv_folds, seed=args.seed)


def _kernels(args, d1: int) -> ProcessKernels:
    ty = args.theta_y if args.theta_y is not None else args.theta
    tx = args.theta_x if args.theta_x is not None else [args.theta] * d1
    if len(tx) != d1:
        raise InputError(f"--theta-x needs {d1} values, got {len(tx)}")
    return ProcessKernels(Gaussian(ty), tuple(Gaussian(t) for t in tx))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="lsrk",
        description="Least-squares RKHS estimation of varying coefficient models from sparse functional data.",
        epilog=CSV_SCHEMA_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="estimate coefficient functions from a CSV file",
                         epilog=CSV_SCHEMA_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    fit.add_argument("data_csv")
    fit.add_argument("--schema", help="sidecar JSON renaming columns")
    fit.add_argument("--time-range", nargs=2, type=float, metavar=("LO", "HI"),
                     help="original-scale interval mapped onto [0, 1] (default: observed range)")
    fit.add_argument("--max-time", type=float, default=None, help="drop rows with time above this value")
    fit.add_argument("--where", action="append", default=[], metavar="COL=VALUE",
                     help="keep only rows whose column equals VALUE (repeatable)")
    fit.add_argument("--grid-size", type=int, default=100)
    fit.add_argument("--original-time", action="store_true", help="write t on the original time scale")
    fit.add_argument("--out", default="lsrk-fit", help="output directory")
    _add_smoothing_args(fit)

    sim = sub.add_parser("simulate", help="Monte Carlo study of the estimator")
    sim.add_argument("--study", type=int, required=True)
    sim.add_argument("--n", type=_csv_list(int), default=[100], help="sample size(s), comma-separated")
    sim.add_argument("--stn", type=_csv_list(_stn_arg), default=[math.inf],
                     help="signal-to-noise ratio(s), comma-separated; 'inf' for noiseless")
    sim.add_argument("--reps", type=int, default=1)
    sim.add_argument("--design", choices=("sparse", "dense"), default="sparse")
    sim.add_argument("--exclude-intercept", action="store_true", help="score slopes only in MADE/WASE")
    sim.add_argument("--out", default="lsrk-sim", help="output directory")
    _add_smoothing_args(sim)

    ev = sub.add_parser("evaluate", help="MADE/WASE of a coefficient table against a known truth")
    ev.add_argument("fit_csv")
    ev.add_argument("--truth", required=True, help="'study1', 'study2', or a CSV sampled on the same grid")
    ev.add_argument("--exclude-intercept", action="store_true")
    ev.add_argument("--out", default=None, help="write metrics JSON here (default: stdout only)")

    rp = sub.add_parser("replay", help="re-run a command from its manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", default=None, help="override the output directory")
    return parser


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _jsonable(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _manifest(args, resolved: dict, started: float) -> dict:
    return {
        "command": args.command,
        "arguments": _jsonable({k: v for k, v in vars(args).items() if k != "func"}),
        "resolved": resolved,
        "version": __version__,
        "kernel_backend": BACKEND,
        "wall_clock_seconds": time.perf_counter() - started,
    }


def cmd_fit(args) -> int:
    started = time.perf_counter()
    schema = ColumnSchema.from_json(args.schema) if args.schema else None
    time_col = (schema or ColumnSchema()).time
    conditions = []
    for item in args.where:
        col, sep, value = item.partition("=")
        if not sep or not col:
            raise InputError(f"--where expects COL=VALUE, got {item!r}")
        conditions.append((col.strip(), value.strip()))

    def row_filter(row):
        for col, value in conditions:
            if col not in row:
                raise InputError(f"--where column {col!r} is not in the file")
            if (row[col] or "").strip() != value:
                return False
        if args.max_time is not None:
            try:
                return float(row[time_col]) <= args.max_time
            except (KeyError, TypeError, ValueError):
                return True
        return True

    dataset = load_longitudinal_csv(args.data_csv, schema, tuple(args.time_range) if args.time_range else None, row_filter)
    kernels = _kernels(args, dataset.d1)
    if args.grid_size < 1:
        raise InputError("--grid-size must be at least 1")
    grid = EvaluationGrid.default(args.grid_size)
    est = estimate_coefficients(dataset, kernels, _smoothing(args), grid)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    est.write_csv(out / "coefficients.csv", dataset.to_original_time if args.original_time else None)
    bundle = est.covset.to_dict()
    bundle["kernels"] = kernels.to_dict()
    bundle["time_range"] = list(dataset.time_range)
    bundle["names"] = {
        "response": dataset.response_name,
        "predictors": list(dataset.predictor_names),
        "covariates": list(dataset.covariate_names),
    }
    _write_json(out / "covariance.json", bundle)
    resolved = {
        "smoothing": est.config.to_dict(),
        "kernels": kernels.to_dict(),
        "grid": {"size": args.grid_size, "lo": 0.005, "hi": 0.995},
        "time_range": list(dataset.time_range),
        "n": dataset.n,
        "n_total": dataset.n_total,
        "columns": dict(
            zip(est.columns()[2:-1], list(dataset.predictor_names) + list(dataset.covariate_names))
        ),
    }
    _write_json(out / "manifest.json", _manifest(args, resolved, started))
    print(f"fitted n={dataset.n} subjects, {dataset.n_total} observations; wrote {out}/coefficients.csv")
    ridged = int(np.count_nonzero(est.ridge_used))
    if ridged:
        print(f"warning: {ridged} grid point(s) needed a ridge on the coefficient system")
    return 0


def _format_table(rows) -> str:
    header = f"{'study':>5} {'n':>5} {'StN':>6} {'reps':>5} {'fail':>4} {'MADE':>8} {'(sd)':>8} {'WASE':>8} {'(sd)':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        stn = r["config"]["stn"]
        lines.append(
            f"{r['config']['study']:>5} {r['config']['n']:>5} {str(stn):>6} {r['replications_ok']:>5} "
            f"{r['failures']:>4} {r['made_mean']:>8.4f} {r['made_sd']:>8.4f} {r['wase_mean']:>8.4f} {r['wase_sd']:>8.4f}"
        )
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    if args.study not in (1, 2):
        raise InputError(f"--study must be 1 or 2, got {args.study}")
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    d1 = 1 if args.study == 1 else 2
    kernels = _kernels(args, d1)
    smoothing = _smoothing(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries, rows = [], []
    for n in args.n:
        for stn in args.stn:
            config = SimulationConfig(
                study=args.study, n=n, stn=stn, replications=args.reps, seed=args.seed,
                design=args.design, include_intercept=not args.exclude_intercept,
            )
            res = run_monte_carlo(config, kernels, smoothing, threads=args.threads)
            summaries.append(res.summary())
            for r in res.replications:
                rows.append((args.study, n, "inf" if math.isinf(stn) else repr(stn), r))
    _write_json(out / "metrics.json", {"cells": summaries})
    names = list(TrueCoefficients.for_study(args.study).functions)
    with open(out / "replications.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["study", "n", "stn", "replication", "made", "wase"] + [f"ise_{k}" for k in names] + ["error"])
        for study, n, stn, r in rows:
            writer.writerow(
                [study, n, stn, r.index, repr(r.made), repr(r.wase)]
                + [repr(r.ise.get(k, float("nan"))) for k in names]
                + [r.error or ""]
            )
    table = _format_table(summaries)
    (out / "summary.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    resolved = {"kernels": kernels.to_dict(), "smoothing": smoothing.to_dict(),
                "cells": [s["config"] for s in summaries]}
    _write_json(out / "manifest.json", _manifest(args, resolved, started))
    return 0


def _builtin_truth(name: str):
    key = name.lower().replace("-", "").replace("_", "")
    if key in ("study1", "1"):
        return TrueCoefficients.for_study(1).functions
    if key in ("study2", "2"):
        return TrueCoefficients.for_study(2).functions
    return None


def cmd_evaluate(args) -> int:
    fit = read_coefficient_csv(args.fit_csv)
    if "t" not in fit:
        raise InputError(f"{args.fit_csv} has no 't' column")
    t = fit["t"]
    truth = _builtin_truth(args.truth)
    if truth is None:
        sampled = read_coefficient_csv(args.truth)
        if "t" not in sampled or sampled["t"].shape != t.shape or not np.allclose(sampled["t"], t, rtol=0, atol=1e-12):
            raise InputError("truth CSV is not sampled on the fitted grid")
        truth = {k: SampledFunction(t, v) for k, v in sampled.items() if k not in ("t", "ridge_used")}
    names = [k for k in truth if k in fit and not (args.exclude_intercept and k == "beta0")]
    missing = [k for k in truth if k not in fit and not (args.exclude_intercept and k == "beta0")]
    if missing:
        raise InputError(f"fit table lacks column(s) {missing}")
    if not names:
        raise InputError("no coefficient columns in common between fit and truth")
    errs = integrated_errors([truth[k] for k in names], [SampledFunction(t, fit[k]) for k in names], names)
    result = {
        "made": sum(a / r for a, _, r in errs) / len(errs),
        "wase": sum(s / (r * r) for _, s, r in errs) / len(errs),
        "per_function_ise": {k: e[1] for k, e in zip(names, errs)},
        "functions": names,
    }
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    if not isinstance(manifest, dict) or not isinstance(manifest.get("arguments"), dict):
        raise InputError(f"{args.manifest} is not a run manifest")
    stored = dict(manifest["arguments"])
    if args.out:
        stored["out"] = args.out
    if stored.get("command") not in ("fit", "simulate", "evaluate"):
        raise InputError(f"{args.manifest} does not record a replayable command")
    if stored["command"] == "simulate":
        stored["stn"] = [float(x) for x in stored["stn"]]
    ns = argparse.Namespace(**stored)
    ns.func = COMMANDS[ns.command]
    return ns.func(ns)


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "evaluate": cmd_evaluate, "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
