"""Command-line entry point: `uncaps run <config> [options]`."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiment import (CellFailure, ConfigError, _csv_ints, _csv_strs,
                         export_results, load_config, run_experiment)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uncaps",
        description="Seeded policy-search experiments on the toy sim2real "
                    "testbed: search variants plus the DR baseline, with "
                    "trace and summary export.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a config file "
                                     "or a previously emitted manifest")
    run.add_argument("config", help="path to a key/value config file or a "
                                    "manifest.json from an earlier run")
    run.add_argument("--out", help="output directory (overrides run.output)")
    run.add_argument("--seeds", help="comma-separated trial seeds "
                                     "(overrides run.seeds)")
    run.add_argument("--variants", help="comma-separated variant names "
                                        "(overrides run.variants)")
    run.add_argument("--jobs", type=int, default=1,
                     help="number of (variant, seed) cells to run in parallel")
    return parser


def _run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.out is not None:
            overrides["output"] = args.out
        if args.seeds is not None:
            overrides["seeds"] = _csv_ints(args.seeds)
        if args.variants is not None:
            overrides["variants"] = _csv_strs(args.variants)
        if overrides:
            cfg = replace(cfg, **overrides)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        table, traces = run_experiment(cfg, jobs=args.jobs)
        written = export_results(table, traces, cfg.output, cfg)
    except CellFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"write failure: {exc}", file=sys.stderr)
        return 2

    for row in table.rows:
        best = "" if row.best_y is None else f" best_y={row.best_y:.6g}"
        print(f"{row.variant} seed={row.seed}: jumpstart "
              f"{row.jumpstart_mean:.6g} +/- {row.jumpstart_stderr:.6g}"
              f"{best} ({row.wall_time:.1f}s)")
    for variant, mean, stderr in table.aggregates():
        print(f"{variant} aggregate: {mean:.6g} +/- {stderr:.6g}")
    print(f"wrote {len(written)} files to {cfg.output}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    return 1  # pragma: no cover - argparse enforces the subcommand


if __name__ == "__main__":
    sys.exit(main())
