"""
``verify`` command: risk-trading clearing followed by the equilibrium property checks.

The report is written even when the risk-trading program is unbounded or
infeasible; it then carries the risk-set diagnostics and the command exits 2.
"""
import argparse
import logging

from engine.src.controllers.common import (
    EXIT_OK,
    EXIT_PROPOSITION,
    EXIT_SOLVER,
    add_case_arguments,
    add_output_arguments,
    resolve_case,
    run_config_from_args,
)
from engine.src.ingestion.artifacts import JSON_REPORT, write_json_report
from engine.src.models.program import FormulationKind
from engine.src.services.analysis_service import clear_market, verify_propositions

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="Check the equilibrium properties of risk trading")
    add_case_arguments(parser)
    add_output_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = run_config_from_args(args)
    case = resolve_case(config)
    result = clear_market(case, FormulationKind.RISK_TRADING)
    report = verify_propositions(case, result)
    config.out.mkdir(parents=True, exist_ok=True)
    if JSON_REPORT in config.formats:
        write_json_report(report, config.out)
    if not result.is_optimal:
        logger.error(
            "risk-trading clearing failed",
            extra={"status": result.solution.status.value, "flagged": report.flagged_producers},
        )
        return EXIT_SOLVER
    if not report.passed:
        logger.warning("equilibrium property check failed", extra={"flagged": report.flagged_producers})
        if config.strict:
            return EXIT_PROPOSITION
    return EXIT_OK
