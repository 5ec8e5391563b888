"""Command line front end: run one suite, sweep a parameter, or audit.

Exit status is 0 on success and 2 when an audit fails, so audits can gate
scripts.  ``run`` and ``sweep`` print CSV to stdout unless --out is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .harness import ExperimentConfig, rows_to_csv, run_audit, run_suite, run_sweep


def _load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if args.seed is not None:
        updates["seeds"] = tuple(int(s) for s in args.seed.split(","))
    if args.eps is not None:
        from .harness import _parse_eps

        updates["epsilon"] = _parse_eps(args.eps)
    if args.K is not None:
        updates["K"] = args.K
    if args.out is not None:
        updates["out"] = args.out
    if args.no_timing:
        updates["record_timing"] = False
    return replace(config, **updates) if updates else config


def _emit(rows, config: ExperimentConfig):
    if config.out:
        print(f"wrote {len(rows)} rows to {config.out}")
    else:
        sys.stdout.write(rows_to_csv(rows))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wgdp",
        description="Private worst-group risk minimization experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment suite from a JSON config")
    run_p.add_argument("--config", required=True, help="path to the JSON config")
    run_p.add_argument("--seed", help="comma-separated seed list override")
    run_p.add_argument("--eps", help="privacy budget override (a float or 'inf')")
    run_p.add_argument("--K", type=int, help="sample budget override")
    run_p.add_argument("--out", help="CSV output path override")
    run_p.add_argument(
        "--no-timing", action="store_true", help="force wall_ms to 0 for replayable output"
    )

    sweep_p = sub.add_parser("sweep", help="repeat the suite across parameter values")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--param", required=True, choices=["K", "epsilon"])
    sweep_p.add_argument("--values", required=True, help="comma-separated values")
    sweep_p.add_argument("--seed", help="comma-separated seed list override")
    sweep_p.add_argument("--eps", help="privacy budget override (a float or 'inf')")
    sweep_p.add_argument("--K", type=int, help="sample budget override")
    sweep_p.add_argument("--out", help="CSV output path override")
    sweep_p.add_argument("--no-timing", action="store_true")

    audit_p = sub.add_parser("audit", help="run a self-check suite")
    audit_p.add_argument(
        "--kind",
        required=True,
        choices=["stability", "mechanisms", "regret", "reduction"],
    )
    audit_p.add_argument("--trials", type=int, default=100)
    audit_p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)

    if args.command == "audit":
        report = run_audit(args.kind, trials=args.trials, seed=args.seed)
        print(report.text())
        return 0 if report.ok else 2

    config = _apply_overrides(_load_config(args.config), args)
    if args.command == "run":
        rows = run_suite(config)
        _emit(rows, config)
        return 0
    values = args.values.split(",")
    rows = run_sweep(config, args.param, values)
    _emit(rows, config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
