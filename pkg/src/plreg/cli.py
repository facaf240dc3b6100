"""Command line interface: run, sweep, gradcheck, export-masks."""

from __future__ import annotations

import argparse
import sys

from .checks import TOLERANCE, gradient_check_suite
from .config import SWEEP_AXES, parse_config
from .errors import ConfigError
from .runner import execute, export_masks, sweep


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plreg",
        description="Partial-logic regularization experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured experiment")
    p_run.add_argument("--config", required=True, help="path to a JSON config")

    p_sweep = sub.add_parser("sweep", help="re-run a config along one weight axis")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated numeric values")

    sub.add_parser("gradcheck",
                   help="verify every loss gradient against finite differences")

    p_export = sub.add_parser("export-masks",
                              help="re-shape a run's masks.csv into text blocks")
    p_export.add_argument("--run", required=True, help="run output directory")
    return parser


def gradcheck_cmd() -> int:
    failures = 0
    for name, err in gradient_check_suite():
        ok = err < TOLERANCE
        print(f"{name}: max_rel_err={err:.3e} {'PASS' if ok else 'FAIL'}")
        if not ok:
            failures += 1
    if failures:
        print(f"{failures} gradient check(s) exceeded {TOLERANCE}")
        return 1
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return execute(parse_config(args.config))
        if args.command == "sweep":
            values = [float(v) for v in args.values.split(",") if v.strip()]
            return sweep(parse_config(args.config), args.axis, values)
        if args.command == "gradcheck":
            return gradcheck_cmd()
        if args.command == "export-masks":
            return export_masks(args.run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
