"""
``casegen`` command: write the builtin case study for a seed as a case file.
"""
import argparse
import logging
from pathlib import Path

from engine.src.controllers.common import EXIT_OK, run_config_from_args
from engine.src.ingestion.case_loader import dump_case
from engine.src.ingestion.case_study import builtin_case_study

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("casegen", help="Write the builtin case study as a JSON case file")
    parser.add_argument("--seed", type=int, required=True, help="Seed of the belief generator")
    parser.add_argument("--eps-g", type=float, help="Capacity chance-constraint violation probability")
    parser.add_argument("--eps-f", type=float, help="Flow chance-constraint violation probability")
    parser.add_argument("--out", type=Path, required=True, help="Case file to write")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = run_config_from_args(args)
    case = builtin_case_study(config.builtin_seed, eps_g=config.eps_g, eps_f=config.eps_f)
    path = dump_case(case, config.out)
    logger.info("case written", extra={"path": str(path), "seed": config.builtin_seed})
    return EXIT_OK
