"""Command-line entry point.

    gridshaper run    --config scenario.json          # all five stages
    gridshaper gen    --config scenario.json
    gridshaper shape  --config scenario.json
    gridshaper alter  --config scenario.json [--t0 9] [--lambda 0.5]
    gridshaper settle --config scenario.json
    gridshaper report --config scenario.json

Common overrides: --seed, --lambda, --t0, --out.  Set GRIDSHAPER_LOG to a
logging level name (DEBUG, INFO, ...) for progress output on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, load_config
from .core import InfeasibleInstanceError
from .dataio import DataFormatError
from .pipeline import (
    ArtifactMissingError,
    cmd_alter,
    cmd_gen,
    cmd_report,
    cmd_run,
    cmd_settle,
    cmd_shape,
)

log = logging.getLogger("gridshaper")

_COMMANDS = {
    "run": cmd_run,
    "gen": cmd_gen,
    "shape": cmd_shape,
    "alter": cmd_alter,
    "settle": cmd_settle,
    "report": cmd_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridshaper",
        description="PEV fleet demand shaping and altering pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("run", "all five stages in order"),
        ("gen", "sample the fleet and build the purchase target"),
        ("shape", "run the day-ahead shaping sweeps"),
        ("alter", "detect the price event and re-optimize the tail"),
        ("settle", "price all three aggregates and write the cost report"),
        ("report", "emit plot-ready series and render figures"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="scenario JSON path")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the scenario seed")
        cmd.add_argument("--lambda", dest="lam", type=float, default=None,
                         help="override the altering blend weight")
        cmd.add_argument("--t0", type=int, default=None,
                         help="force a manual altering slot")
        cmd.add_argument("--out", default=None,
                         help="override the output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("GRIDSHAPER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, lam=args.lam,
                             t0=args.t0, out=args.out)
        log.info("command %s -> %s", args.command, config.output_dir)
        result = _COMMANDS[args.command](config)
    except (ConfigError, DataFormatError, ArtifactMissingError,
            InfeasibleInstanceError) as exc:
        print(f"gridshaper {args.command}: {exc}", file=sys.stderr)
        return 1
    if args.command in ("settle", "run"):
        print(result.to_text(), end="")
    else:
        log.info("wrote %s", result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
