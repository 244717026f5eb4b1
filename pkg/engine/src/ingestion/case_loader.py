"""Read and write case files (JSON documents, schema in docs/case_schema.json)."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import ValidationError

from engine.src.config import settings
from engine.src.errors import CaseParseError, CaseValidationError
from engine.src.models.case import Case

logger = logging.getLogger(__name__)


def _format_validation_error(exc: ValidationError) -> str:
    messages = []
    for err in exc.errors():
        location = ".".join(str(part) for part in err.get("loc", ()))
        msg = err.get("msg", "").removeprefix("Value error, ")
        messages.append(f"{location}: {msg}" if location else msg)
    return "; ".join(messages)


def case_from_dict(data: Dict[str, Any], require_common_belief: Optional[bool] = None) -> Case:
    """
    Validate a JSON-compatible tree into a Case.

    Raises:
        CaseValidationError: If any invariant is violated; the message names
            the offending entity.
    """
    if require_common_belief is None:
        require_common_belief = settings.require_common_belief
    try:
        return Case.model_validate(data, context={"require_common_belief": require_common_belief})
    except ValidationError as exc:
        raise CaseValidationError(_format_validation_error(exc)) from exc


def case_to_dict(case: Case) -> Dict[str, Any]:
    return case.model_dump(mode="json", by_alias=True)


def load_case(path: Union[str, Path], require_common_belief: Optional[bool] = None) -> Case:
    """
    Load and validate a case file.

    Args:
        path (Union[str, Path]): Path to the JSON case document.
        require_common_belief (Optional[bool]): Override of the setting that
            requires sigma_common in every risk set.

    Returns:
        Case: The validated market instance.

    Raises:
        CaseParseError: If the file is missing, unreadable or malformed.
        CaseValidationError: If the document violates a case invariant.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise CaseParseError(f"case file not found: {path}") from exc
    except OSError as exc:
        raise CaseParseError(f"cannot read case file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"malformed case file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CaseParseError(f"malformed case file {path}: top level must be an object")
    case = case_from_dict(data, require_common_belief)
    logger.info(
        "case loaded",
        extra={"path": str(path), "generators": case.num_generators, "res_units": case.num_res, "beliefs": case.num_beliefs},
    )
    return case


def dumps_case(case: Case) -> str:
    return json.dumps(case_to_dict(case), indent=2, sort_keys=True) + "\n"


def dump_case(case: Case, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_case(case), encoding="utf-8")
    return path
