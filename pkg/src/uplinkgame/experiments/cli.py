"""Command line entry point: ``uplinkgame-experiments <kind> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

from .config import KINDS, ExperimentConfig, load_config
from .runner import ReplicateError, run_experiment


def default_config(kind: str, scale: str = "desk") -> ExperimentConfig:
    """Shipped config for ``kind``; ``scale="full"`` gives the large variant
    where one exists."""
    name = f"{kind}_full.json" if scale == "full" else f"{kind}.json"
    text = resources.files(__package__).joinpath("configs", name).read_text()
    return ExperimentConfig.from_dict(json.loads(text))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uplinkgame-experiments",
        description="Seeded Monte Carlo studies of distributed uplink power allocation.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS + ("run",):
        help_ = ("run the experiment described by --config" if kind == "run"
                 else f"{kind} study (shipped config unless --config is given)")
        p = sub.add_parser(kind, help=help_)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--replicates", type=int, help="override the replicate count")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for replicates (output is identical for any value)")
        p.add_argument("--check", action="store_true",
                       help="exit nonzero if any trend assertion fails")
        if kind != "run":
            p.add_argument("--scale", choices=("desk", "full"), default="desk",
                           help="shipped config size when --config is not given")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            config = load_config(args.config)
        elif args.kind == "run":
            print("error: the run subcommand needs --config", file=sys.stderr)
            return 2
        else:
            config = default_config(args.kind, args.scale)
        if args.kind != "run" and config.kind != args.kind:
            print(f"error: config is a {config.kind!r} experiment, not {args.kind!r}",
                  file=sys.stderr)
            return 2
        config = config.with_overrides(args.replicates, args.seed)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2

    try:
        result = run_experiment(config, out_dir=args.out, threads=args.threads)
    except ReplicateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: could not write results: {exc}", file=sys.stderr)
        return 1

    print(f"{config.kind}: {config.replicates} replicate(s) written to {args.out}/{config.output}.csv")
    for c in result.checks:
        print(f"  [{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['detail']}")
    if args.check and not result.passed:
        failed = sum(not c["passed"] for c in result.checks)
        print(f"error: {failed} check(s) failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
