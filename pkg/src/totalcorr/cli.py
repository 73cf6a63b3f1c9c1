"""Command-line front end: run experiments, report metrics, plot traces,
and self-check the numerical identities.

Exit codes: 0 on success, 1 on usage/config errors, 2 when some (estimator,
path) runs failed while others completed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import diagnostics
from .decomposition import PathKind
from .errors import ConfigError, ParameterError, TotalCorrError, TraceParseError
from .estimators import MiEstimatorKind
from .harness import (
    ExperimentConfig,
    load_metrics,
    load_trace,
    persist_metrics,
    persist_trace,
    run_experiment,
)
from .svgplot import write_svg

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with the exit-code contract (1 for usage errors)."""

    def error(self, message):
        raise _UsageExit(message)


# ---------------------------------------------------------------- config file

_LIST_KEYS = {"tc_targets", "estimators", "paths"}
_INT_KEYS = {"dim", "steps_per_target", "batch_size", "hidden", "smoothing_bandwidth", "eval_batches", "seed"}
_FLOAT_KEYS = {"lr"}
_BOOL_KEYS = {"fresh_networks_per_target"}


def _coerce(key: str, value: str):
    try:
        if key == "tc_targets":
            return tuple(float(v) for v in value.split(",") if v.strip())
        if key == "estimators":
            return tuple(MiEstimatorKind(v.strip().upper()) for v in value.split(","))
        if key == "paths":
            return tuple(PathKind(v.strip().upper()) for v in value.split(","))
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            lowered = value.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key!r}: {exc}") from exc
    raise ConfigError(f"unknown config key {key!r}")


def parse_config_file(path: str | Path) -> ExperimentConfig:
    """Flat `key = value` text; every key optional, defaults are the paper
    protocol. Lines starting with '#' are comments."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    fields = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _LIST_KEYS | _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS:
            raise ConfigError(f"{path}: line {lineno}: unknown config key {key!r}")
        fields[key] = _coerce(key, value)
    try:
        return ExperimentConfig(**fields)
    except ParameterError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ------------------------------------------------------------------- commands

def _cmd_run(args) -> int:
    try:
        config = parse_config_file(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config, jobs=args.jobs)
    for (est, path_kind), trace in result.traces.items():
        persist_trace(trace, out / f"trace_{est.value}_{path_kind.value}.csv")
    persist_metrics(result.metrics, out / "metrics.csv")
    for (est, path_kind), message in result.failures.items():
        print(f"run failed for {est.value}/{path_kind.value}: {message}", file=sys.stderr)
    print(f"wrote {len(result.traces)} trace file(s) and metrics.csv to {out}")
    return EXIT_PARTIAL if result.failures else EXIT_OK


def _cmd_plot(args) -> int:
    labelled = []
    for trace_path in args.traces:
        try:
            labelled.append((Path(trace_path).stem, load_trace(trace_path)))
        except (TraceParseError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    write_svg(labelled, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        rows = load_metrics(args.metrics)
    except (TraceParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    header = ("estimator", "path", "target_tc", "bias", "variance", "mse", "eval_batches", "seed")
    table = [header]
    for r in rows:
        table.append(
            (
                r.estimator.value,
                r.path.value,
                f"{r.target_tc:g}",
                f"{r.bias:.6g}",
                f"{r.variance:.6g}",
                f"{r.mse:.6g}",
                str(r.eval_batches),
                str(r.seed),
            )
        )
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    for i, row in enumerate(table):
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            print("  ".join("-" * w for w in widths))
    return EXIT_OK


# ------------------------------------------------------------------- selftest

def _selftest_checks(quick: bool):
    return [
        (
            "decomposition-identity",
            lambda: diagnostics.check_decomposition_identity(20 if quick else 100),
        ),
        ("target-calibration", diagnostics.check_target_calibration),
        (
            "mc-oracle-convergence",
            lambda: diagnostics.check_mc_oracle(
                num_samples=20_000 if quick else 100_000, seeds=5 if quick else 20
            ),
        ),
        (
            "gradient-integrity",
            lambda: diagnostics.check_gradient_integrity(points=2 if quick else 10),
        ),
        (
            "infonce-cap",
            lambda: diagnostics.check_infonce_cap(50 if quick else 200),
        ),
    ]


def _cmd_selftest(args) -> int:
    failures = 0
    for name, check in _selftest_checks(args.quick):
        ok, detail = check()
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += not ok
    return EXIT_OK if failures == 0 else EXIT_PARTIAL


# ----------------------------------------------------------------------- main

def build_parser() -> _Parser:
    parser = _Parser(prog="totalcorr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the tracking experiment from a config file")
    run.add_argument("--config", required=True, help="key = value config file")
    run.add_argument("--out", required=True, help="output directory for CSVs")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--jobs", type=int, default=1, help="parallel (estimator, path) runs")
    run.set_defaults(fn=_cmd_run)

    plot = sub.add_parser("plot", help="render trace CSVs into a standalone SVG")
    plot.add_argument("traces", nargs="+", help="trace CSV file(s)")
    plot.add_argument("--out", required=True, help="output SVG path")
    plot.set_defaults(fn=_cmd_plot)

    report = sub.add_parser("report", help="pretty-print a metrics CSV")
    report.add_argument("--metrics", required=True, help="metrics CSV path")
    report.set_defaults(fn=_cmd_report)

    selftest = sub.add_parser("selftest", help="run the numerical identity suite")
    selftest.add_argument("--quick", action="store_true", help="reduced sample counts")
    selftest.set_defaults(fn=_cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TotalCorrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
