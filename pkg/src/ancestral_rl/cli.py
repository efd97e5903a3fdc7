"""Command-line interface: ``run``, ``verify`` and ``aggregate``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .exceptions import ConfigurationError
from .verify import SUITES, run_suite


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ancestral-rl",
        description="Population-based RL experiments (ZOO, POGA, ARL) and exact identity checks.",
        epilog="config keys (file lines 'key = value' or --set key=value):\n" + harness.config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser(
        "run",
        help="run a multi-trial experiment and write learning curves as CSV",
        epilog="config keys:\n" + harness.config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    run.add_argument("--config", help="key = value config file, or the name of a shipped config")
    run.add_argument("--algo", choices=("zoo", "poga", "arl"))
    run.add_argument("--env", choices=("two_state", "cartpole", "quadratic"))
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=int)
    run.add_argument("--out", help="CSV output path (default: stdout)")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")

    ver = sub.add_parser("verify", help="run the exact-enumeration identity suite")
    ver.add_argument("--suite", default="all", choices=("all",) + tuple(SUITES))
    ver.add_argument("--json", help="also write the JSON report to this path")

    agg = sub.add_parser("aggregate", help="mean/std of smoothed best return across trials")
    agg.add_argument("--in", dest="inp", required=True, help="CSV written by run")
    agg.add_argument("--window", type=int, default=1, help="trailing moving-average window")
    agg.add_argument("--include-trials", help="comma-separated trial indices to keep, e.g. 0,1,2,3")
    agg.add_argument("--out", help="output CSV path (default: stdout)")
    return parser


def _cmd_run(args):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    for key, value in (("algorithm", args.algo), ("env", args.env), ("seed", args.seed),
                       ("jobs", args.jobs), ("out", args.out)):
        if value is not None:
            overrides[key] = value
    config = harness.load_config(args.config, overrides)
    records = harness.run_experiment(config)
    if not config.output:
        sys.stdout.write(harness.records_to_csv(records))
    return 0


def _cmd_verify(args):
    report = run_suite(args.suite)
    text = json.dumps(report, indent=2)
    print(text)
    if args.json:
        Path(args.json).write_text(text + "\n")
    return 0 if all(r["pass"] for r in report) else 1


def _cmd_aggregate(args):
    include = None
    if args.include_trials:
        include = [int(t) for t in args.include_trials.split(",") if t.strip()]
    agg = harness.aggregate_trials(harness.read_records(args.inp), args.window, include)
    text = harness.aggregate_to_csv(agg)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "verify": _cmd_verify, "aggregate": _cmd_aggregate}[args.command]
    try:
        return handler(args)
    except ConfigurationError as exc:
        where = f" (key: {exc.key})" if getattr(exc, "key", None) else ""
        print(f"configuration error{where}: {exc}", file=sys.stderr)
        return 2
