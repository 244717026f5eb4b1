"""
``compare`` command: NO-RT vs RT clearing with a cost comparison report.
"""
import argparse
import logging

from engine.src.controllers.common import (
    EXIT_OK,
    EXIT_PROPOSITION,
    add_case_arguments,
    add_output_arguments,
    resolve_case,
    run_config_from_args,
)
from engine.src.ingestion.artifacts import write_comparison_artifacts
from engine.src.services.analysis_service import run_comparison

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("compare", help="Compare clearing without and with risk trading")
    add_case_arguments(parser)
    add_output_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = run_config_from_args(args)
    case = resolve_case(config)
    report = run_comparison(case)
    write_comparison_artifacts(config.out, config.formats, report)
    logger.info(
        "compare finished",
        extra={
            "no_rt_objective": report.no_rt.summary.objective,
            "rt_objective": report.rt.summary.objective,
            "propositions_passed": report.propositions.passed,
        },
    )
    if config.strict and not report.propositions.passed:
        return EXIT_PROPOSITION
    return EXIT_OK
