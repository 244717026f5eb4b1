"""
Command-line entry point of the clearing engine.

Commands: ``clear``, ``compare``, ``verify`` and ``casegen``. Exit codes:
0 success, 1 invalid input or usage, 2 solver failure, 3 equilibrium property
failure under ``--strict``. Diagnostics go to standard error.
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from engine.src.config import settings
from engine.src.controllers import case_generation, clearing, comparison, verification
from engine.src.controllers.common import EXIT_INVALID, EXIT_SOLVER
from engine.src.errors import CaseError, MarketError, SolverFailure
from engine.src.logging_config import configure_logging

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; usage errors here are exit 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="risk-market", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--log-level", default=settings.log_level, help="Log level (default from settings)")
    parser.add_argument("--log-format", choices=("json", "text"), default=settings.log_format)
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    for module in (clearing, comparison, verification, case_generation):
        module.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one CLI command.

    Args:
        argv (Optional[Sequence[str]]): Arguments without the program name;
            defaults to ``sys.argv[1:]``.

    Returns:
        int: The process exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID

    configure_logging(args.log_level, args.log_format)
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverFailure as exc:
        print(f"error: {exc.formulation} failed with status {exc.status}", file=sys.stderr)
        return EXIT_SOLVER
    except MarketError as exc:
        logger.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
