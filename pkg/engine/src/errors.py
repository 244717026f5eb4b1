"""Exception hierarchy for the clearing engine."""
from typing import Any, Dict, Optional


class MarketError(Exception):
    """Base class for every error raised by the engine."""


class CaseError(MarketError):
    """A case file or case object could not be turned into a valid market instance."""


class CaseParseError(CaseError):
    """The case file is missing, unreadable or not a JSON document."""


class CaseValidationError(CaseError):
    """A case violates a model invariant; the message names the offending entity."""


class StochasticDomainError(MarketError, ValueError):
    """Argument outside the domain of a Gaussian helper."""


class ProgramBuildError(MarketError):
    """Program assembly hit a dimension mismatch or an unknown formulation."""


class LabelError(MarketError, KeyError):
    """A label was requested that the program does not define."""


class SolverFailure(MarketError):
    """A formulation did not solve to a certified optimum."""

    def __init__(
        self,
        formulation: str,
        status: str,
        diagnostics: Optional[Dict[str, Any]] = None,
    ):
        self.formulation = formulation
        self.status = status
        self.diagnostics = diagnostics or {}
        super().__init__(f"{formulation} solve ended with status {status}")


class OracleResourceError(MarketError):
    """The brute-force grid would exceed its size cap or the case is not desk scale."""
