import argparse
import logging
import sys
from typing import Optional, Sequence

from config import settings
from src.commands import evaluate, inspect_model, predict, preprocess, train

logger = logging.getLogger(__name__)

COMMANDS = (preprocess, train, evaluate, predict, inspect_model)


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser with every subcommand registered"""
    parser = argparse.ArgumentParser(
        prog='dcnn',
        description=f"{settings.project_name} {settings.version}: train and run a LeNet-style character classifier",
    )
    parser.add_argument('--log-level', default=None, help=f"Logging level (default {settings.log_level})")
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)

    # Configure logging
    level = (args.log_level or settings.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logger.debug(f"Running {args.command}")
    return args.handler(args)


if __name__ == '__main__':
    sys.exit(main())
