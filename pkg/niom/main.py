# niom/main.py

import argparse
import logging
from typing import Optional, Sequence

from . import __version__
from .config import NIOM_LOG_LEVEL
from .commands import corrupt, detect, evalpose, match, pipeline, report, synth, viz, weight

# Register all commands
COMMANDS = [detect, corrupt, weight, match, evalpose, pipeline, report, viz, synth]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="niom",
        description="Sparse matching of non-identical objects: detection, semantic weighting, "
                    "matching, corruptions and relative-pose evaluation",
    )
    parser.add_argument("--version", action="version", version=f"niom {__version__}")
    parser.add_argument("--log-level", default=NIOM_LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        type=str.upper)
    subparsers = parser.add_subparsers(dest="command", metavar="<command>")
    subparsers.required = True
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return args.handler(args)


if __name__ == "__main__":
    raise SystemExit(main())
