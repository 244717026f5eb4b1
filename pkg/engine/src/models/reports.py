"""Serializable reports produced by the solver, pricing and analysis layers."""
from typing import Dict, List, Optional

from pydantic import BaseModel, computed_field


class Residual(BaseModel):
    """One scalar residual compared against its threshold."""

    value: float
    threshold: float
    passed: bool

    @classmethod
    def of(cls, value: float, tol: float, scale: float = 0.0) -> "Residual":
        threshold = tol * (1.0 + abs(scale))
        return cls(value=float(value), threshold=float(threshold), passed=bool(value <= threshold))


class KktReport(BaseModel):
    stationarity: Residual
    complementarity: Residual
    primal_feasibility: Residual
    dual_feasibility: Residual
    lagrangian_gap: Residual

    @computed_field
    @property
    def passed(self) -> bool:
        return all(
            r.passed
            for r in (
                self.stationarity,
                self.complementarity,
                self.primal_feasibility,
                self.dual_feasibility,
                self.lagrangian_gap,
            )
        )


class ResidualCheck(BaseModel):
    """A family of residuals keyed by entity, e.g. one per producer or per (producer, event)."""

    name: str
    residuals: Dict[str, float]
    max_residual: float
    threshold: float
    passed: bool
    notes: List[str] = []

    @classmethod
    def build(cls, name: str, residuals: Dict[str, float], tol: float, scale: float, notes: Optional[List[str]] = None) -> "ResidualCheck":
        abs_res = {k: abs(float(v)) for k, v in residuals.items()}
        worst = max(abs_res.values(), default=0.0)
        threshold = tol * (1.0 + abs(scale))
        return cls(
            name=name,
            residuals={k: float(v) for k, v in residuals.items()},
            max_residual=worst,
            threshold=threshold,
            passed=bool(worst <= threshold),
            notes=notes or [],
        )

    def failing(self) -> List[str]:
        return [k for k, v in self.residuals.items() if abs(v) > self.threshold]


class Prices(BaseModel):
    """Market prices read from the duals of one clearing program."""

    lambda_system: float
    lambda_nodal: Dict[str, float]
    chi: Dict[str, float]
    mu: Optional[List[float]] = None
    delta_hi: Dict[str, float]
    delta_lo: Dict[str, float]
    zeta: Dict[str, float]
    eta: Optional[Dict[str, List[float]]] = None
    theta_hi: Dict[str, float] = {}
    theta_lo: Dict[str, float] = {}
    rho_hi: Dict[str, List[float]] = {}
    rho_lo: Dict[str, List[float]] = {}


class FormulaReport(BaseModel):
    """Residuals of the closed-form price expressions against the certified duals."""

    energy_price: ResidualCheck
    energy_price_terms: Dict[str, Dict[str, float]]
    reserve_price_printed: Optional[ResidualCheck] = None
    reserve_price: Optional[ResidualCheck] = None
    reserve_stationarity: Optional[ResidualCheck] = None
    risk_price: Optional[ResidualCheck] = None
    eta_normalization: Optional[ResidualCheck] = None
    degenerate_cone_producers: List[str] = []
    notes: List[str] = []

    @computed_field
    @property
    def passed(self) -> bool:
        checks = [self.energy_price, self.reserve_price, self.reserve_stationarity, self.risk_price, self.eta_normalization]
        return all(c.passed for c in checks if c is not None)


class HypothesisDiagnostics(BaseModel):
    """Whether producers' risk sets share a common measure."""

    covariance_hulls_intersect: bool
    event_hulls_intersect: bool
    disjoint_pairs: List[List[str]]
    note: str


class PropositionReport(BaseModel):
    """Equilibrium property checks of a risk-trading clearing."""

    status: str
    measure_sum: Optional[Residual] = None
    measure_nonnegative: Optional[Residual] = None
    shared_measure: Optional[ResidualCheck] = None
    eta_normalization: Optional[ResidualCheck] = None
    worst_case_identity: Optional[Residual] = None
    event_clearing: Optional[Residual] = None
    budget_balance: Optional[Residual] = None
    hypothesis: HypothesisDiagnostics
    flagged_producers: List[str] = []
    notes: List[str] = []
    common_measure_passed: bool = False
    worst_case_passed: bool = False

    @computed_field
    @property
    def passed(self) -> bool:
        return self.common_measure_passed and self.worst_case_passed


class Settlement(BaseModel):
    energy_revenue: float
    reserve_revenue: float
    production_cost: float
    risk_cost: float
    premium: float
    profit: float


class ProducerOutcome(BaseModel):
    producer: str
    p_g: float
    reserve_mw: float
    alpha: Dict[str, float]
    s: float
    t: Optional[float] = None
    trades: Optional[List[float]] = None
    premium: float = 0.0
    mixture_sigma: Optional[float] = None
    settlement: Settlement


class FormulationSummary(BaseModel):
    kind: str
    status: str
    objective: float
    energy_cost: float
    reserve_cost: float
    reserve_cost_common: float
    risk_adjusted_total: float
    event_clearing_residual: Optional[float] = None
    budget_balance_residual: Optional[float] = None
    trades_min_norm: bool = False


class ClearingReport(BaseModel):
    """Outcome of one formulation: summary, producers, prices and certificates."""

    summary: FormulationSummary
    producers: List[ProducerOutcome]
    prices: Prices
    kkt: KktReport
    formulas: FormulaReport
    propositions: Optional[PropositionReport] = None


class EventTable(BaseModel):
    labels: List[str]
    breakpoints_mw: List[float]
    common: List[float]
    beliefs: Dict[str, List[List[float]]]
    mu: Optional[List[float]] = None


class ComparisonReport(BaseModel):
    header: str
    case_name: Optional[str] = None
    seed: Optional[int] = None
    no_rt: ClearingReport
    rt: ClearingReport
    cost_reduction_pct: float
    events: EventTable
    propositions: PropositionReport


class OracleResult(BaseModel):
    kind: str
    objective: float
    p_g: List[float]
    alpha: List[float]
    trades: Optional[List[float]] = None
    grid_points: int
    grid_step: float
    feasible_points: int
