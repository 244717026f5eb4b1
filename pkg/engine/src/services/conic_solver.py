"""Solve ConicPrograms with cvxpy and certify the result independently.

The embedded solver is Clarabel (interior point, conic). Its duals are mapped
onto the sign convention of ``engine.src.models.program``; cvxpy already
writes its Lagrangian as ``f + y'(lhs - rhs)`` for equality and ``<=`` rows and
``f - <(u, v), (t, X)>`` for second-order cones, so no sign flips are needed.

``kkt_residuals`` recomputes stationarity, complementarity, feasibility and
the Lagrangian gap from the program data alone.
"""
import dataclasses
import logging
import time
from typing import Dict, Optional

import cvxpy as cp
import numpy as np

from engine.src.config import Settings, settings as default_settings
from engine.src.models.program import ConicProgram
from engine.src.models.reports import KktReport, Residual
from engine.src.models.solution import Solution, SolveStatus

logger = logging.getLogger(__name__)

_STATUS_MAP = {
    cp.INFEASIBLE: SolveStatus.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: SolveStatus.INFEASIBLE,
    cp.UNBOUNDED: SolveStatus.UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: SolveStatus.UNBOUNDED,
}


def _solver_options(cfg: Settings, retry: bool = False) -> Dict[str, float]:
    if cfg.solver.upper() != "CLARABEL":
        return {}
    options = {
        "max_iter": cfg.solver_max_iter,
        "tol_gap_abs": cfg.solver_tol_gap_abs,
        "tol_gap_rel": cfg.solver_tol_gap_rel,
        "tol_feas": cfg.solver_tol_feas,
    }
    if retry:
        # internal stopping rules only; certification below is unchanged
        options.update({key: max(value, cfg.solver_retry_tol) for key, value in options.items() if key.startswith("tol_")})
    return options


def objective_value(program: ConicProgram, x: np.ndarray) -> float:
    return float(0.5 * x @ (program.Q @ x) + program.c @ x + program.c0)


def primal_violations(program: ConicProgram, x: np.ndarray) -> Dict[str, float]:
    """Largest violation per constraint family at a primal point."""
    eq = np.abs(program.A @ x - program.b)
    ineq = np.clip(program.G @ x - program.h, 0.0, None)
    quad = [max(float(np.sum((row.F @ x) ** 2) + row.q @ x - row.r), 0.0) for row in program.quad_rows]
    soc = [
        max(float(np.linalg.norm(block.F @ x + block.g) - (block.d @ x + block.e)), 0.0)
        for block in program.soc_blocks
    ]
    return {
        "eq": float(eq.max(initial=0.0)),
        "ineq": float(ineq.max(initial=0.0)),
        "quad": float(max(quad, default=0.0)),
        "soc": float(max(soc, default=0.0)),
    }


def rhs_scale(program: ConicProgram) -> float:
    return float(max(np.abs(program.b).max(initial=0.0), np.abs(program.h).max(initial=0.0)))


def _empty_solution(program: ConicProgram, status: SolveStatus, solver_name: str, diagnostics: Dict) -> Solution:
    return Solution(
        status=status,
        primal=np.full(program.num_vars, np.nan),
        eq_duals=np.full(program.num_eq, np.nan),
        ineq_duals=np.full(program.num_ineq, np.nan),
        quad_duals=np.full(len(program.quad_rows), np.nan),
        soc_duals=tuple((np.nan, np.full(b.F.shape[0], np.nan)) for b in program.soc_blocks),
        objective_value=float("nan"),
        solver_name=solver_name,
        diagnostics=diagnostics,
    )


def _soc_dual(dual_value, size: int):
    if dual_value is None:
        return 0.0, np.zeros(size)
    if isinstance(dual_value, (list, tuple)):
        return float(np.ravel(dual_value[0])[0]), np.ravel(dual_value[1]).astype(float)
    flat = np.ravel(dual_value)
    return float(flat[0]), flat[1:].astype(float)


def solve(program: ConicProgram, cfg: Optional[Settings] = None) -> Solution:
    """
    Solve a conic program and return a status-tagged, certified solution.

    OPTIMAL is returned only when the primal point satisfies every constraint
    within ``feasibility_tol * (1 + max|rhs|)`` and the Lagrangian gap is within
    ``gap_tol * (1 + |objective|)``. Inaccurate solver outcomes that pass the
    same checks are accepted; anything else becomes NUMERICAL_TROUBLE.

    Args:
        program (ConicProgram): The program to solve.
        cfg (Optional[Settings]): Solver and tolerance settings.

    Returns:
        Solution: Primal values, duals and status.
    """
    cfg = cfg or default_settings
    n = program.num_vars
    x = cp.Variable(n)

    objective = program.c @ x + program.c0
    if program.Q.nnz:
        objective = objective + 0.5 * cp.quad_form(x, cp.psd_wrap(program.Q.toarray()))

    eq_con = program.A @ x == program.b if program.num_eq else None
    ineq_con = program.G @ x <= program.h if program.num_ineq else None
    quad_cons = [cp.sum_squares(row.F @ x) + row.q @ x <= row.r for row in program.quad_rows]
    soc_cons = [cp.SOC(block.d @ x + block.e, block.F @ x + block.g) for block in program.soc_blocks]
    constraints = [c for c in (eq_con, ineq_con) if c is not None] + quad_cons + soc_cons

    problem = cp.Problem(cp.Minimize(objective), constraints)
    started = time.perf_counter()
    retried = False
    try:
        problem.solve(solver=cfg.solver, **_solver_options(cfg))
    except cp.SolverError as exc:
        logger.warning(
            "solver error, retrying with looser stopping tolerances",
            extra={"formulation": program.kind.value, "error": str(exc), "retry_tol": cfg.solver_retry_tol},
        )
        retried = True
        try:
            problem.solve(solver=cfg.solver, **_solver_options(cfg, retry=True))
        except cp.SolverError as retry_exc:
            logger.warning("solver error on retry", extra={"formulation": program.kind.value, "error": str(retry_exc)})
            return _empty_solution(
                program, SolveStatus.NUMERICAL_TROUBLE, cfg.solver, {"error": str(retry_exc), "retried": True}
            )
    elapsed = time.perf_counter() - started

    raw_status = problem.status
    diagnostics = {"solver_status": raw_status, "solve_seconds": elapsed, "retried": retried}
    stats = getattr(problem, "solver_stats", None)
    if stats is not None and stats.num_iters is not None:
        diagnostics["iterations"] = stats.num_iters

    if raw_status in _STATUS_MAP:
        status = _STATUS_MAP[raw_status]
        logger.info("solve finished", extra={"formulation": program.kind.value, "status": status.value})
        return _empty_solution(program, status, cfg.solver, diagnostics)
    if raw_status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or x.value is None:
        logger.warning("solver returned no usable point", extra={"formulation": program.kind.value, "status": raw_status})
        return _empty_solution(program, SolveStatus.NUMERICAL_TROUBLE, cfg.solver, diagnostics)

    primal = np.asarray(x.value, dtype=float).ravel()
    solution = Solution(
        status=SolveStatus.OPTIMAL,
        primal=primal,
        eq_duals=np.ravel(eq_con.dual_value).astype(float) if eq_con is not None else np.zeros(0),
        ineq_duals=np.ravel(ineq_con.dual_value).astype(float) if ineq_con is not None else np.zeros(0),
        quad_duals=np.array([float(np.ravel(c.dual_value)[0]) for c in quad_cons], dtype=float),
        soc_duals=tuple(_soc_dual(c.dual_value, b.F.shape[0]) for c, b in zip(soc_cons, program.soc_blocks)),
        objective_value=objective_value(program, primal),
        solver_name=cfg.solver,
        diagnostics=diagnostics,
    )

    violations = primal_violations(program, primal)
    worst = max(violations.values())
    feasible = worst <= cfg.feasibility_tol * (1.0 + rhs_scale(program))
    gap = abs(lagrangian_gap(program, solution))
    gap_ok = gap <= cfg.gap_tol * (1.0 + abs(solution.objective_value))
    diagnostics.update({"max_violation": worst, "lagrangian_gap": gap})
    accepted = feasible and gap_ok
    if raw_status == cp.OPTIMAL_INACCURATE and accepted:
        accepted = kkt_residuals(program, solution, cfg).passed
    if not accepted:
        logger.warning(
            "solution failed certification",
            extra={"formulation": program.kind.value, "max_violation": worst, "lagrangian_gap": gap},
        )
        return dataclasses.replace(solution, status=SolveStatus.NUMERICAL_TROUBLE)

    logger.info(
        "solve finished",
        extra={
            "formulation": program.kind.value,
            "status": SolveStatus.OPTIMAL.value,
            "objective": solution.objective_value,
            **program.size_summary(),
        },
    )
    return solution


def _slacks(program: ConicProgram, x: np.ndarray):
    eq = program.A @ x - program.b
    ineq = program.G @ x - program.h
    quad = np.array([float(np.sum((row.F @ x) ** 2) + row.q @ x - row.r) for row in program.quad_rows])
    soc = [(float(block.d @ x + block.e), block.F @ x + block.g) for block in program.soc_blocks]
    return eq, ineq, quad, soc


def lagrangian_gap(program: ConicProgram, solution: Solution) -> float:
    """
    Primal objective minus the Lagrangian at the returned point and duals.

    This is the complementarity sum ``-(y'(Ax - b) + z'(Gx - h) + ...)``. It equals
    the primal-dual gap only where x minimizes the Lagrangian, which the
    stationarity residual of ``kkt_residuals`` certifies separately.
    """
    x = solution.primal
    eq, ineq, quad, soc = _slacks(program, x)
    lagrangian_terms = solution.eq_duals @ eq + solution.ineq_duals @ ineq + solution.quad_duals @ quad
    for (u, v), (cone_t, cone_x) in zip(solution.soc_duals, soc):
        lagrangian_terms -= u * cone_t + v @ cone_x
    return float(-lagrangian_terms)


def lagrangian_gradient(program: ConicProgram, solution: Solution) -> np.ndarray:
    """Gradient of the Lagrangian with respect to x."""
    x = solution.primal
    grad = program.Q @ x + program.c
    grad = grad + program.A.T @ solution.eq_duals + program.G.T @ solution.ineq_duals
    for nu, row in zip(solution.quad_duals, program.quad_rows):
        grad = grad + nu * (2.0 * (row.F.T @ (row.F @ x)) + row.q)
    for (u, v), block in zip(solution.soc_duals, program.soc_blocks):
        grad = grad - (u * block.d + block.F.T @ v)
    return np.asarray(grad, dtype=float).ravel()


def stationarity_scale(program: ConicProgram, solution: Solution) -> float:
    """Largest magnitude among the terms of the Lagrangian gradient; scales every stationarity residual."""
    x = solution.primal
    return float(max(
        np.abs(program.Q @ x).max(initial=0.0),
        np.abs(program.c).max(initial=0.0),
        np.abs(solution.eq_duals).max(initial=0.0),
        np.abs(solution.ineq_duals).max(initial=0.0),
        np.abs(solution.quad_duals).max(initial=0.0),
        max((u for u, _ in solution.soc_duals), default=0.0),
    ))


def kkt_residuals(program: ConicProgram, solution: Solution, cfg: Optional[Settings] = None) -> KktReport:
    """
    Certify a solution from program data alone.

    Every residual passes when it is at most ``kkt_tol * (1 + scale)``, where the
    scale is the magnitude of the quantities entering it.

    Args:
        program (ConicProgram): The solved program.
        solution (Solution): Primal point and multipliers to certify.
        cfg (Optional[Settings]): Tolerance settings.

    Returns:
        KktReport: Stationarity, complementarity, primal and dual feasibility
        and Lagrangian gap residuals.
    """
    cfg = cfg or default_settings
    tol = cfg.kkt_tol
    x = solution.primal
    eq, ineq, quad, soc = _slacks(program, x)

    grad = lagrangian_gradient(program, solution)
    term_scale = stationarity_scale(program, solution)
    stationarity = Residual.of(float(np.abs(grad).max(initial=0.0)), tol, term_scale)

    comp = [np.abs(solution.ineq_duals * ineq).max(initial=0.0), np.abs(solution.quad_duals * quad).max(initial=0.0)]
    comp += [abs(u * t + v @ cx) for (u, v), (t, cx) in zip(solution.soc_duals, soc)]
    complementarity = Residual.of(float(max(comp)), tol, term_scale)

    violations = primal_violations(program, x)
    primal_feas = Residual.of(max(violations.values()), tol, rhs_scale(program))

    dual_viol = [
        max(-float(solution.ineq_duals.min(initial=0.0)), 0.0),
        max(-float(solution.quad_duals.min(initial=0.0)), 0.0),
    ]
    dual_viol += [max(float(np.linalg.norm(v)) - u, 0.0) for u, v in solution.soc_duals]
    dual_feas = Residual.of(float(max(dual_viol)), tol, term_scale)

    gap = Residual.of(abs(lagrangian_gap(program, solution)), tol, solution.objective_value)
    return KktReport(
        stationarity=stationarity,
        complementarity=complementarity,
        primal_feasibility=primal_feas,
        dual_feasibility=dual_feas,
        lagrangian_gap=gap,
    )
