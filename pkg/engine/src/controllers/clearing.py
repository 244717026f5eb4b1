"""
``clear`` command: solve one formulation and write its artifacts.
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
from engine.src.ingestion.artifacts import write_artifacts
from engine.src.models.program import FormulationKind
from engine.src.services import program_builder
from engine.src.services.analysis_service import clear_market, event_table, summarize, verify_propositions

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("clear", help="Clear the market with one formulation")
    add_case_arguments(parser)
    parser.add_argument("--kind", choices=("rn", "ra", "rt"), default="rt", help="Formulation to solve")
    parser.add_argument("--dump-program", action="store_true", help="Also write the conic program as program.txt")
    add_output_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    """Clear the case and write the requested artifacts.

    Args:
        args (argparse.Namespace): Parsed ``clear`` arguments.

    Returns:
        int: Exit code; 3 if ``--strict`` and a property check failed.

    Raises:
        SolverFailure: If the formulation does not solve to optimality.
    """
    config = run_config_from_args(args)
    case = resolve_case(config)
    result = clear_market(case, config.kind)
    config.out.mkdir(parents=True, exist_ok=True)
    if config.dump_program:
        with open(config.out / "program.txt", "w", encoding="utf-8") as stream:
            program_builder.dump_program(result.program, stream)
    result.require_optimal()

    report = summarize(result)
    if config.kind == FormulationKind.RISK_TRADING:
        report.propositions = verify_propositions(case, result)
    events = event_table(case, result.program, report.prices.mu)
    write_artifacts(
        config.out,
        config.formats,
        report,
        [(config.kind.short_name, report)],
        events=events,
        trades_from=report if config.kind == FormulationKind.RISK_TRADING else None,
    )
    logger.info("clear finished", extra={"formulation": config.kind.value, "objective": report.summary.objective})

    checks_passed = report.kkt.passed and report.formulas.passed
    if report.propositions is not None:
        checks_passed = checks_passed and report.propositions.passed
    if config.strict and not checks_passed:
        logger.warning("strict mode: equilibrium checks failed")
        return EXIT_PROPOSITION
    return EXIT_OK
