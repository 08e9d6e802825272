"""Command line entry point: ``sminimal run <cfg>`` and ``sminimal sweep <cfg> --axis s``."""

from __future__ import annotations

import argparse
import sys

from .scenario import ConfigError, run_scenario, sweep


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sminimal", description="Run s-minimal function scenarios.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--seed", type=int, default=0, help="seed for random batteries and verification")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run scenario files and evaluate their checks")
    run.add_argument("configs", nargs="+")
    sw = sub.add_parser("sweep", parents=[common], help="tabulate a scenario over s or resolution")
    sw.add_argument("config")
    sw.add_argument("--axis", choices=("s", "resolution"), default="s")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            status = 0
            for cfg in args.configs:
                code, checks = run_scenario(cfg, out=args.out, seed=args.seed, jobs=args.jobs)
                for c in checks:
                    print(f"[{cfg}] {c.line()}")
                status |= code
            return status
        path = sweep(args.config, args.axis, out=args.out, seed=args.seed, jobs=args.jobs)
        print(path)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
