"""Argument wiring and case resolution shared by the CLI commands."""
import argparse
import logging
from pathlib import Path

from engine.src.config import settings
from engine.src.ingestion.artifacts import ALL_FORMATS
from engine.src.ingestion.case_loader import case_from_dict, case_to_dict, load_case
from engine.src.ingestion.case_study import builtin_case_study
from engine.src.models.case import Case
from engine.src.models.program import FormulationKind
from engine.src.models.run_config import RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2
EXIT_PROPOSITION = 3


def add_case_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--case", type=Path, help="Path to a JSON case file")
    source.add_argument("--builtin-seed", type=int, help="Use the builtin five-producer case study with this seed")
    parser.add_argument("--eps-g", type=float, help="Capacity chance-constraint violation probability")
    parser.add_argument("--eps-f", type=float, help="Flow chance-constraint violation probability")


def add_output_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--out",
        type=Path,
        default=Path(settings.output_dir),
        help="Output directory (default from RISKMARKET_OUTPUT_DIR)",
    )
    parser.add_argument(
        "--formats",
        nargs="+",
        choices=ALL_FORMATS,
        default=list(ALL_FORMATS),
        help="Artifacts to write",
    )
    parser.add_argument("--strict", action="store_true", help="Exit 3 when an equilibrium property check fails")


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    """Validate parsed arguments into a RunConfig; pydantic errors surface as exit code 1."""
    kind = getattr(args, "kind", None)
    return RunConfig(
        command=args.command,
        case_path=getattr(args, "case", None),
        builtin_seed=getattr(args, "builtin_seed", None) if args.command != "casegen" else args.seed,
        kind=FormulationKind.from_cli(kind) if kind else FormulationKind.RISK_TRADING,
        eps_g=args.eps_g,
        eps_f=args.eps_f,
        out=args.out,
        formats=frozenset(getattr(args, "formats", ALL_FORMATS)),
        dump_program=getattr(args, "dump_program", False),
        strict=getattr(args, "strict", False),
    )


def resolve_case(config: RunConfig) -> Case:
    """Load the case named by a RunConfig and apply its eps overrides."""
    if config.builtin_seed is not None:
        return builtin_case_study(config.builtin_seed, eps_g=config.eps_g, eps_f=config.eps_f)
    case = load_case(config.case_path)
    overrides = {k: v for k, v in (("eps_g", config.eps_g), ("eps_f", config.eps_f)) if v is not None}
    if overrides:
        case = case_from_dict({**case_to_dict(case), **overrides})
    return case
