"""Clearing driver, NO-RT vs RT comparison and equilibrium property checks."""
import asyncio
import dataclasses
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import numpy as np

from engine.src.config import Settings, settings as default_settings
from engine.src.errors import SolverFailure
from engine.src.models.case import Case
from engine.src.models.program import ConicProgram, FormulationKind, ProgramMeta
from engine.src.models.reports import (
    ClearingReport,
    ComparisonReport,
    EventTable,
    FormulaReport,
    FormulationSummary,
    HypothesisDiagnostics,
    KktReport,
    Prices,
    ProducerOutcome,
    PropositionReport,
    Residual,
    ResidualCheck,
    Settlement,
)
from engine.src.models.solution import Solution, SolveStatus
from engine.src.services import conic_solver, program_builder
from engine.src.services.pricing_service import check_price_formulas, extract_prices, mixture_covariances
from engine.src.services.stochastic_kernel import aggregate_sigma

logger = logging.getLogger(__name__)

COST_DECOMPOSITION_HEADER = (
    "energy_cost = sum_i c_i(p_G,i). "
    "reserve_cost = sum_i sum_k eta_ik c2_i ||alpha_i' Sigma_k^(1/2)||^2, the worst-case variance cost; "
    "it equals sum_i (t_i + pi_i) where pi_i = sum_w mu_w a_iw is the security premium, and sum_i pi_i = 0. "
    "For the risk-neutral formulation reserve_cost uses the common belief only. "
    "reserve_cost_common = sum_i c2_i ||alpha_i' Sigma_common^(1/2)||^2 for comparison. "
    "risk_adjusted_total = energy_cost + sum_i t_i (the objective). "
    "Reported security positions are the minimum-norm positions on the optimal face."
)


@dataclass(frozen=True)
class ClearingResult:
    """One solved formulation with its prices and certificates."""

    case: Case
    kind: FormulationKind
    program: ConicProgram
    solution: Solution
    prices: Optional[Prices] = None
    formulas: Optional[FormulaReport] = None
    kkt: Optional[KktReport] = None
    selected_trades: Optional[np.ndarray] = None
    selected_t: Optional[np.ndarray] = None

    @property
    def is_optimal(self) -> bool:
        return self.solution.is_optimal

    def require_optimal(self) -> "ClearingResult":
        if not self.is_optimal:
            raise SolverFailure(self.kind.value, self.solution.status.value, dict(self.solution.diagnostics))
        return self

    def values(self, prefix: str) -> np.ndarray:
        """Primal values of one variable family in generator order."""
        meta = self.program.meta
        x = self.solution.primal
        if prefix == "alpha":
            return np.array(
                [[x[self.program.var(f"alpha[{g}][{u}]")] for u in meta.res_ids] for g in meta.generator_ids]
            ).reshape(len(meta.generator_ids), len(meta.res_ids))
        if prefix == "a":
            return np.array(
                [[x[self.program.var(f"a[{g}][{w}]")] for w in range(meta.num_events)] for g in meta.generator_ids]
            ).reshape(len(meta.generator_ids), meta.num_events)
        return np.array([x[self.program.var(f"{prefix}[{g}]")] for g in meta.generator_ids])

    @property
    def trades(self) -> Optional[np.ndarray]:
        if self.kind != FormulationKind.RISK_TRADING:
            return None
        return self.selected_trades if self.selected_trades is not None else self.values("a")

    @property
    def t(self) -> Optional[np.ndarray]:
        if self.kind == FormulationKind.RISK_NEUTRAL:
            return None
        return self.selected_t if self.selected_t is not None else self.values("t")


def select_min_norm_trades(result: ClearingResult, cfg: Optional[Settings] = None):
    """
    Minimum-Euclidean-norm security positions with dispatch and alpha fixed.

    Returns:
        tuple | None: ``(trades (G, W), t (G,))`` or None when the selection
        program does not solve; callers then keep the raw positions.
    """
    cfg = cfg or default_settings
    t_star = float(result.values("t").sum())
    budget = t_star + cfg.trade_pin_tol * (1.0 + abs(t_star))
    program = program_builder.build_trade_selection(result.case, result.program, result.values("alpha"), budget)
    solution = conic_solver.solve(program, cfg)
    if not solution.is_optimal:
        logger.warning("trade selection failed, reporting raw positions", extra={"status": solution.status.value})
        return None
    meta = program.meta
    x = solution.primal
    trades = np.array([[x[program.var(f"a[{g}][{w}]")] for w in range(meta.num_events)] for g in meta.generator_ids])
    t = np.array([x[program.var(f"t[{g}]")] for g in meta.generator_ids])
    return trades, t


def clear_market(
    case: Case,
    kind: FormulationKind,
    *,
    zero_trades: bool = False,
    select_trades: bool = True,
    cfg: Optional[Settings] = None,
) -> ClearingResult:
    """
    Build, solve and price one formulation.

    The result carries the solver status; prices and certificates are filled
    only for OPTIMAL solves. Call ``require_optimal`` to turn other outcomes
    into ``SolverFailure``.
    """
    cfg = cfg or default_settings
    program = program_builder.build(case, kind, zero_trades=zero_trades)
    solution = conic_solver.solve(program, cfg)
    if not solution.is_optimal:
        logger.warning("clearing not optimal", extra={"formulation": kind.value, "status": solution.status.value})
        return ClearingResult(case=case, kind=kind, program=program, solution=solution)
    prices = extract_prices(program, solution)
    formulas = check_price_formulas(case, program, solution, prices, cfg)
    kkt = conic_solver.kkt_residuals(program, solution, cfg)
    result = ClearingResult(case=case, kind=kind, program=program, solution=solution, prices=prices, formulas=formulas, kkt=kkt)
    if kind == FormulationKind.RISK_TRADING and select_trades and not zero_trades:
        selected = select_min_norm_trades(result, cfg)
        if selected is not None:
            result = dataclasses.replace(result, selected_trades=selected[0], selected_t=selected[1])
    return result


def _settlement(lam: float, chi: np.ndarray, alpha: np.ndarray, cost: float, risk: float, premium: float, p: float) -> Settlement:
    energy = lam * p
    reserve = float(chi @ alpha) if alpha.size else 0.0
    return Settlement(
        energy_revenue=float(energy),
        reserve_revenue=reserve,
        production_cost=float(cost),
        risk_cost=float(risk),
        premium=float(premium),
        profit=float(energy + reserve - cost - risk - premium),
    )


def summarize(result: ClearingResult) -> ClearingReport:
    """Cost decomposition, per-producer outcomes and settlements of an OPTIMAL clearing."""
    result.require_optimal()
    case, program, prices = result.case, result.program, result.prices
    meta = program.meta
    p, s, alpha = result.values("p_G"), result.values("s"), result.values("alpha")
    t = result.t
    trades = result.trades
    mu = np.asarray(prices.mu) if prices.mu is not None else None
    mixtures = mixture_covariances(program, prices)
    chi = np.array([prices.chi[u] for u in meta.res_ids])

    common_var = np.array([g.c2 * float(alpha[i] @ meta.sigma_common @ alpha[i]) for i, g in enumerate(case.generators)])
    mixture_var = np.array([g.c2 * float(alpha[i] @ mixtures[i] @ alpha[i]) for i, g in enumerate(case.generators)])
    costs = np.array([g.cost(p[i]) for i, g in enumerate(case.generators)])

    producers: List[ProducerOutcome] = []
    for i, gen in enumerate(case.generators):
        premium = float(mu @ trades[i]) if trades is not None and mu is not None else 0.0
        risk = float(t[i]) if t is not None else float(common_var[i])
        lam_node = prices.lambda_nodal[meta.node_ids[meta.generator_nodes[i]]]
        producers.append(
            ProducerOutcome(
                producer=gen.id,
                p_g=float(p[i]),
                reserve_mw=float(meta.z_g * s[i]),
                alpha={u: float(alpha[i, j]) for j, u in enumerate(meta.res_ids)},
                s=float(s[i]),
                t=None if t is None else float(t[i]),
                trades=None if trades is None else [float(v) for v in trades[i]],
                premium=premium,
                mixture_sigma=aggregate_sigma(mixtures[i]),
                settlement=_settlement(lam_node, chi, alpha[i], costs[i], risk, premium, p[i]),
            )
        )

    clearing_res = budget_res = None
    if trades is not None:
        clearing_res = float(np.abs(trades.sum(axis=0)).max(initial=0.0))
        budget_res = float(abs(sum(o.premium for o in producers)))
    reserve_cost = float(common_var.sum()) if result.kind == FormulationKind.RISK_NEUTRAL else float(mixture_var.sum())
    summary = FormulationSummary(
        kind=result.kind.value,
        status=result.solution.status.value,
        objective=result.solution.objective_value,
        energy_cost=float(costs.sum()),
        reserve_cost=reserve_cost,
        reserve_cost_common=float(common_var.sum()),
        risk_adjusted_total=float(costs.sum() + (t.sum() if t is not None else common_var.sum())),
        event_clearing_residual=clearing_res,
        budget_balance_residual=budget_res,
        trades_min_norm=result.selected_trades is not None,
    )
    return ClearingReport(
        summary=summary,
        producers=producers,
        prices=prices,
        kkt=result.kkt,
        formulas=result.formulas,
    )


def _hulls_intersect(point_sets: Sequence[np.ndarray], owners: Sequence[str], cfg: Settings) -> bool:
    program = program_builder.build_hull_intersection(point_sets, owners)
    solution = conic_solver.solve(program, cfg)
    if solution.status == SolveStatus.NUMERICAL_TROUBLE:
        logger.warning("hull intersection test inconclusive", extra={"owners": list(owners)})
    return solution.is_optimal


def risk_set_diagnostics(case: Case, meta: Optional[ProgramMeta] = None, cfg: Optional[Settings] = None) -> HypothesisDiagnostics:
    """
    Test whether producers' risk sets share a common member.

    Checks the convex hulls of the covariance beliefs and of the event
    probability vectors those beliefs induce. Disjoint event-level hulls
    let security positions lower every producer's worst-case cost at once,
    which makes the risk-trading program unbounded.
    """
    cfg = cfg or default_settings
    if meta is None:
        stats = program_builder.case_statistics(case)
        beliefs, event_probs = stats["beliefs"], stats["event_probs"]
    else:
        beliefs, event_probs = meta.beliefs, meta.event_probs
    owners = [g.id for g in case.generators]
    n_res = case.num_res
    upper = np.triu_indices(n_res)
    cov_points = [np.array([b[upper] for b in beliefs[i]]) for i in range(len(owners))]
    event_points = [np.asarray(event_probs[i]) for i in range(len(owners))]

    if len(owners) == 1:
        return HypothesisDiagnostics(
            covariance_hulls_intersect=True, event_hulls_intersect=True, disjoint_pairs=[], note="single producer"
        )
    cov_ok = _hulls_intersect(cov_points, owners, cfg)
    event_ok = _hulls_intersect(event_points, owners, cfg)
    pairs: List[List[str]] = []
    if not event_ok:
        for i, j in combinations(range(len(owners)), 2):
            if not _hulls_intersect([event_points[i], event_points[j]], [owners[i], owners[j]], cfg):
                pairs.append([owners[i], owners[j]])
    if event_ok:
        note = "event probability hulls of all producers share a common measure"
    else:
        note = (
            "no common measure: the shared worst-case measure requires non-disjoint risk sets; "
            f"disjoint producer pairs: {pairs if pairs else 'none pairwise, only jointly'}"
        )
    return HypothesisDiagnostics(
        covariance_hulls_intersect=cov_ok, event_hulls_intersect=event_ok, disjoint_pairs=pairs, note=note
    )


def verify_propositions(case: Case, rt_result: ClearingResult, cfg: Optional[Settings] = None) -> PropositionReport:
    """
    Check the equilibrium properties of a risk-trading clearing.

    Measure property: ``mu`` is a probability vector and equals
    ``sum_k eta_ik P_w(sigma_ik)`` for every producer. Worst-case property:
    ``sum_i (c_i + t_i) = sum_i sum_k eta_ik (E_k[c_i] - E_k[a_i])``, with every
    event cleared and premiums summing to zero. The risk-set intersection
    hypothesis is diagnosed in every case, so a failed or unbounded solve still
    yields a report naming the producers involved.

    Args:
        case (Case): The cleared case.
        rt_result (ClearingResult): RISK_TRADING clearing result.
        cfg (Optional[Settings]): Tolerance settings.

    Returns:
        PropositionReport: Pass/fail per property with residuals.
    """
    cfg = cfg or default_settings
    if rt_result.kind != FormulationKind.RISK_TRADING:
        raise ValueError("verify_propositions needs a RISK_TRADING clearing")
    hypothesis = risk_set_diagnostics(case, rt_result.program.meta, cfg)
    pair_producers = sorted({g for pair in hypothesis.disjoint_pairs for g in pair})

    if not rt_result.is_optimal:
        notes = [f"risk-trading solve ended with status {rt_result.solution.status.value}; properties not evaluated"]
        if not hypothesis.event_hulls_intersect:
            notes.append(hypothesis.note)
        return PropositionReport(
            status=rt_result.solution.status.value,
            hypothesis=hypothesis,
            flagged_producers=pair_producers,
            notes=notes,
        )

    meta = rt_result.program.meta
    prices = rt_result.prices
    mu = np.asarray(prices.mu)
    eta = np.array([prices.eta[g] for g in meta.generator_ids])
    p, alpha = rt_result.values("p_G"), rt_result.values("alpha")
    t, a = rt_result.values("t"), rt_result.values("a")

    scale = conic_solver.stationarity_scale(rt_result.program, rt_result.solution)
    rhs = conic_solver.rhs_scale(rt_result.program)
    measure_sum = Residual.of(abs(float(mu.sum()) - 1.0), cfg.formula_tol, scale)
    measure_nonneg = Residual.of(max(-float(mu.min()), 0.0), cfg.dual_sign_tol)
    shared: Dict[str, float] = {}
    for i, gid in enumerate(meta.generator_ids):
        implied = eta[i] @ meta.event_probs[i]
        for w in range(meta.num_events):
            shared[f"{gid}[{w}]"] = float(mu[w] - implied[w])
    shared_check = ResidualCheck.build("shared_measure", shared, cfg.formula_tol, scale)
    eta_check = ResidualCheck.build(
        "eta_normalization", {g: float(eta[i].sum() - 1.0) for i, g in enumerate(meta.generator_ids)}, cfg.formula_tol, scale
    )

    lhs, expected = 0.0, 0.0
    for i, gen in enumerate(case.generators):
        cost = gen.cost(p[i])
        lhs += cost + t[i]
        for k in range(meta.num_beliefs):
            expected_cost = cost + gen.c2 * float(alpha[i] @ meta.beliefs[i, k] @ alpha[i])
            expected_payoff = float(a[i] @ meta.event_probs[i, k])
            expected += eta[i, k] * (expected_cost - expected_payoff)
    identity = Residual.of(abs(lhs - expected), cfg.formula_tol, lhs)
    clearing = Residual.of(float(np.abs(a.sum(axis=0)).max(initial=0.0)), cfg.feasibility_tol, rhs)
    budget = Residual.of(abs(float(mu @ a.sum(axis=0))), cfg.feasibility_tol, rhs)

    flagged = sorted(set(pair_producers) | {key.split("[")[0] for key in shared_check.failing()})
    notes: List[str] = []
    if flagged:
        notes.append(
            "risk prices do not form a common worst-case measure for producers "
            f"{', '.join(flagged)}; the property requires non-disjoint risk sets. {hypothesis.note}"
        )
    measure_ok = measure_sum.passed and measure_nonneg.passed and shared_check.passed and eta_check.passed
    worst_case_ok = identity.passed and clearing.passed and budget.passed
    if not (measure_ok and worst_case_ok):
        logger.warning("equilibrium property check failed", extra={"measure": measure_ok, "worst_case": worst_case_ok})
    return PropositionReport(
        status=rt_result.solution.status.value,
        measure_sum=measure_sum,
        measure_nonnegative=measure_nonneg,
        shared_measure=shared_check,
        eta_normalization=eta_check,
        worst_case_identity=identity,
        event_clearing=clearing,
        budget_balance=budget,
        hypothesis=hypothesis,
        flagged_producers=flagged,
        notes=notes,
        common_measure_passed=measure_ok,
        worst_case_passed=worst_case_ok,
    )


def event_table(case: Case, program: ConicProgram, mu: Optional[Sequence[float]] = None) -> EventTable:
    meta = program.meta
    common_sigma = aggregate_sigma(meta.sigma_common)
    return EventTable(
        labels=case.partition.labels(case.total_forecast, common_sigma),
        breakpoints_mw=[float(b) for b in case.partition.breakpoints_mw(case.total_forecast, common_sigma)],
        common=[float(v) for v in meta.common_event_probs],
        beliefs={g: meta.event_probs[i].tolist() for i, g in enumerate(meta.generator_ids)},
        mu=None if mu is None else [float(v) for v in mu],
    )


async def run_comparison_async(case: Case, cfg: Optional[Settings] = None) -> ComparisonReport:
    """
    Clear the case without (NO-RT) and with (RT) risk trading and compare.

    The two solves run concurrently in worker threads when ``parallel_solves``
    is enabled; the report is assembled afterwards.

    Raises:
        SolverFailure: If either formulation does not solve to optimality; the
            exception names the failing formulation.
    """
    cfg = cfg or default_settings
    if cfg.parallel_solves:
        no_rt, rt = await asyncio.gather(
            asyncio.to_thread(clear_market, case, FormulationKind.RISK_AVERSE, cfg=cfg),
            asyncio.to_thread(clear_market, case, FormulationKind.RISK_TRADING, cfg=cfg),
        )
    else:
        no_rt = clear_market(case, FormulationKind.RISK_AVERSE, cfg=cfg)
        rt = clear_market(case, FormulationKind.RISK_TRADING, cfg=cfg)
    no_rt.require_optimal()
    rt.require_optimal()

    propositions = verify_propositions(case, rt, cfg)
    no_rt_report = summarize(no_rt)
    rt_report = summarize(rt)
    rt_report.propositions = propositions
    base = no_rt_report.summary.objective
    reduction = 100.0 * (base - rt_report.summary.objective) / abs(base) if base else 0.0
    logger.info(
        "comparison finished",
        extra={"no_rt_objective": base, "rt_objective": rt_report.summary.objective, "reduction_pct": reduction},
    )
    return ComparisonReport(
        header=COST_DECOMPOSITION_HEADER,
        case_name=case.meta.name,
        seed=case.meta.seed,
        no_rt=no_rt_report,
        rt=rt_report,
        cost_reduction_pct=reduction,
        events=event_table(case, rt.program, rt.prices.mu),
        propositions=propositions,
    )


def run_comparison(case: Case, cfg: Optional[Settings] = None) -> ComparisonReport:
    """Synchronous wrapper around ``run_comparison_async``."""
    return asyncio.run(run_comparison_async(case, cfg))
