"""Command line entry point: ``polo run <config.json> [--seed-override S] [--out DIR] [--jobs K]``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiments import ConfigError, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polo", description="Run planning/value-learning experiments from a JSON config.")
    sub = p.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="execute one experiment config")
    run.add_argument("config", help="path to the JSON experiment config")
    run.add_argument("--seed-override", type=int, default=None, metavar="S",
                     help="replace the config's seed list with the single seed S")
    run.add_argument("--out", default=None, metavar="DIR", help="output directory (overrides the config's 'out')")
    run.add_argument("--jobs", type=int, default=1, metavar="K", help="run up to K seed/agent jobs in parallel")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"{args.config}: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    if args.seed_override is not None:
        cfg = replace(cfg, seeds=[args.seed_override])
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return run_experiment(cfg, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
