"""Brute-force reference optimizer for desk-sized cases.

Enumerates dispatch, participation factors and (for risk trading) security
positions on a grid and keeps the cheapest feasible point. Only meant for
cases with at most two producers, one renewable unit, two beliefs, three
events and no lines, where the grid stays small enough to evaluate in full.
"""
import logging
import math
from typing import Optional, Sequence

import numpy as np

from engine.src.config import Settings, settings as default_settings
from engine.src.config_loader import ConfigLoader
from engine.src.errors import OracleResourceError
from engine.src.models.case import Case
from engine.src.models.program import MARKET_KINDS, FormulationKind
from engine.src.models.reports import OracleResult
from engine.src.services.program_builder import case_statistics, ptdf_matrix
from engine.src.services.stochastic_kernel import matrix_sqrt, std_normal_quantile

logger = logging.getLogger(__name__)

MAX_PRODUCERS = 2
MAX_RES_UNITS = 1
MAX_BELIEFS = 2
MAX_EVENTS = 3
_GRID_TOL = 1e-9


def _check_size(case: Case) -> None:
    problems = []
    if case.num_generators > MAX_PRODUCERS:
        problems.append(f"{case.num_generators} producers (max {MAX_PRODUCERS})")
    if case.num_res != MAX_RES_UNITS:
        problems.append(f"{case.num_res} renewable units (need exactly {MAX_RES_UNITS})")
    if case.num_beliefs > MAX_BELIEFS:
        problems.append(f"{case.num_beliefs} beliefs (max {MAX_BELIEFS})")
    if case.partition.num_events > MAX_EVENTS:
        problems.append(f"{case.partition.num_events} events (max {MAX_EVENTS})")
    if case.network.lines:
        problems.append("network lines are not supported")
    if problems:
        raise OracleResourceError("case too large for the brute-force oracle: " + "; ".join(problems))


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    if hi < lo - _GRID_TOL:
        return np.zeros(0)
    if hi - lo <= _GRID_TOL:
        return np.array([lo])
    return np.linspace(lo, hi, int(math.ceil((hi - lo) / step - _GRID_TOL)) + 1)


def _trade_grid(case: Case, variances: np.ndarray, levels: int) -> np.ndarray:
    """Producer 1 positions with a zero first entry; producer 2 holds the negation."""
    W = case.partition.num_events
    if case.num_generators < 2 or W < 2:
        return np.zeros((1, W))
    bound = 2.0 * float(variances.max(initial=0.0))
    if levels % 2 == 0:
        levels += 1
    axis = np.linspace(-bound, bound, levels) if bound > 0 else np.zeros(1)
    mesh = np.meshgrid(*([axis] * (W - 1)), indexing="ij")
    rest = np.stack([m.ravel() for m in mesh], axis=1)
    return np.hstack([np.zeros((rest.shape[0], 1)), rest])


def brute_force_oracle(
    case: Case,
    kind: FormulationKind,
    grid_step: float,
    *,
    alpha_step: Optional[float] = None,
    trade_levels: Optional[int] = None,
    cfg: Optional[Settings] = None,
) -> OracleResult:
    """
    Grid-search one formulation of a desk-sized case.

    Dispatch is gridded in ``grid_step`` MW on the first producer (the second
    takes the balance), participation factors in ``alpha_step`` on the first
    producer, and risk-trading positions on a symmetric grid of
    ``trade_levels`` values per event with the first event pinned at zero.
    Pinning one entry loses nothing since every producer's payoff can be
    shifted by a constant that the other producer absorbs.

    Args:
        case (Case): A validated case within the oracle's size limits.
        kind (FormulationKind): RISK_NEUTRAL, RISK_AVERSE or RISK_TRADING.
        grid_step (float): Dispatch step in MW.
        alpha_step (Optional[float]): Participation step, default from market.yaml.
        trade_levels (Optional[int]): Security grid size per event, default from market.yaml.
        cfg (Optional[Settings]): Provides ``oracle_max_points``.

    Returns:
        OracleResult: Best grid point; ``objective`` is ``inf`` if no grid point is feasible.

    Raises:
        OracleResourceError: If the case exceeds the size limits or the grid
            would exceed ``oracle_max_points``.
    """
    cfg = cfg or default_settings
    if kind not in MARKET_KINDS:
        raise ValueError(f"unsupported formulation {kind!r}")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    _check_size(case)
    oracle_cfg = ConfigLoader.get_config_value("oracle", {})
    alpha_step = alpha_step or float(oracle_cfg.get("alpha_step", 0.01))
    trade_levels = trade_levels or int(oracle_cfg.get("trade_levels", 41))

    stats = case_statistics(case)
    gens = case.generators
    z = float(std_normal_quantile(1.0 - case.eps_g))
    sigma_c = math.sqrt(max(float(stats["sigma_common"][0, 0]), 0.0))
    belief_var = stats["beliefs"][:, :, 0, 0]
    c2 = np.array([g.c2 for g in gens])
    probs = stats["event_probs"]
    net = case.total_demand - case.total_forecast

    if len(gens) == 1:
        p_grid = np.array([[net]]) if gens[0].p_min - _GRID_TOL <= net <= gens[0].p_max + _GRID_TOL else np.zeros((0, 1))
        alpha_grid = np.ones((1, 1))
    else:
        lo = max(gens[0].p_min, net - gens[1].p_max)
        hi = min(gens[0].p_max, net - gens[1].p_min)
        p1 = _grid(lo, hi, grid_step)
        p_grid = np.stack([p1, net - p1], axis=1)
        a1 = _grid(0.0, 1.0, alpha_step)
        alpha_grid = np.stack([a1, 1.0 - a1], axis=1)

    trades = _trade_grid(case, c2[:, None] * belief_var, trade_levels) if kind == FormulationKind.RISK_TRADING else None
    n_trades = 1 if trades is None else trades.shape[0]
    total_points = p_grid.shape[0] * alpha_grid.shape[0] * n_trades
    if total_points > cfg.oracle_max_points:
        raise OracleResourceError(
            f"oracle grid has {total_points} points, above the limit of {cfg.oracle_max_points}"
        )

    energy = sum(np.array([g.cost(v) for v in p_grid[:, i]]) for i, g in enumerate(gens)) if p_grid.size else np.zeros(0)

    # (n_alpha, G) worst-case or common variance cost, optionally minimized over trades
    sq = alpha_grid ** 2
    if kind == FormulationKind.RISK_NEUTRAL:
        risk = (c2[None, :] * sq * sigma_c ** 2).sum(axis=1)
        best_trade = None
    elif kind == FormulationKind.RISK_AVERSE:
        risk = (c2[None, :, None] * sq[:, :, None] * belief_var[None, :, :]).max(axis=2).sum(axis=1)
        best_trade = None
    else:
        positions = np.stack([trades] + ([-trades] if len(gens) > 1 else []), axis=1)  # (T, G, W)
        expected = np.einsum("tgw,gkw->tgk", positions, probs)
        variance = c2[None, :, None] * sq[:, :, None] * belief_var[None, :, :]  # (A, G, K)
        per_trade = (variance[:, None, :, :] - expected[None, :, :, :]).max(axis=3).sum(axis=2)  # (A, T)
        best_trade = per_trade.argmin(axis=1)
        risk = per_trade[np.arange(per_trade.shape[0]), best_trade]

    s = alpha_grid * sigma_c  # (A, G)
    p_max = np.array([g.p_max for g in gens])
    p_min = np.array([g.p_min for g in gens])
    feasible = (
        (p_grid[:, None, :] + z * s[None, :, :] <= p_max + _GRID_TOL)
        & (p_grid[:, None, :] - z * s[None, :, :] >= p_min - _GRID_TOL)
    ).all(axis=2)
    total = np.where(feasible, energy[:, None] + risk[None, :], np.inf)

    n_feasible = int(feasible.sum())
    if n_feasible == 0:
        logger.warning("oracle found no feasible grid point", extra={"formulation": kind.value})
        return OracleResult(
            kind=kind.value,
            objective=float("inf"),
            p_g=[],
            alpha=[],
            grid_points=int(total_points),
            grid_step=float(grid_step),
            feasible_points=0,
        )
    ip, ia = np.unravel_index(int(np.argmin(total)), total.shape)
    best_trades = None
    if best_trade is not None:
        best_trades = trades[best_trade[ia]].tolist()
    logger.info(
        "oracle finished",
        extra={"formulation": kind.value, "grid_points": int(total_points), "objective": float(total[ip, ia])},
    )
    return OracleResult(
        kind=kind.value,
        objective=float(total[ip, ia]),
        p_g=p_grid[ip].tolist(),
        alpha=alpha_grid[ia].tolist(),
        trades=best_trades,
        grid_points=int(total_points),
        grid_step=float(grid_step),
        feasible_points=n_feasible,
    )


def is_feasible_point(
    case: Case,
    p_g: Sequence[float],
    alpha: Sequence[Sequence[float]],
    tol: float = 1e-6,
) -> bool:
    """
    Check a dispatch and participation point against the chance-constrained market rules.

    Args:
        case (Case): Any validated case.
        p_g (Sequence[float]): Dispatch per producer in case order.
        alpha (Sequence[Sequence[float]]): Participation factors, shape (G, U).
        tol (float): Absolute tolerance on every constraint.

    Returns:
        bool: True if balance, reserve sufficiency, bounds, capacity and flow
        chance constraints all hold.
    """
    p = np.asarray(p_g, dtype=float)
    a = np.asarray(alpha, dtype=float).reshape(case.num_generators, case.num_res)
    if abs(p.sum() - (case.total_demand - case.total_forecast)) > tol:
        return False
    if case.num_res and np.abs(a.sum(axis=0) - 1.0).max() > tol:
        return False
    if (a < -tol).any() or (a > 1.0 + tol).any():
        return False
    stats = case_statistics(case)
    root = matrix_sqrt(stats["sigma_common"])
    z_g = float(std_normal_quantile(1.0 - case.eps_g))
    for i, gen in enumerate(case.generators):
        s = float(np.linalg.norm(root @ a[i])) if case.num_res else 0.0
        if p[i] + z_g * s > gen.p_max + tol or p[i] - z_g * s < gen.p_min - tol:
            return False
    if case.network.lines:
        z_f = float(std_normal_quantile(1.0 - case.eps_f))
        ptdf = ptdf_matrix(case.network)
        index = case.network.node_index()
        injection = np.array([-n.demand_mw for n in case.network.nodes])
        exposure = np.zeros((len(case.network.nodes), case.num_res))
        for i, gen in enumerate(case.generators):
            injection[index[gen.node]] += p[i]
            exposure[index[gen.node]] -= a[i]
        for u, res in enumerate(case.res_units):
            injection[index[res.node]] += res.forecast_mw
            exposure[index[res.node], u] += 1.0
        for l, line in enumerate(case.network.lines):
            flow = float(ptdf[l] @ injection)
            std = float(np.linalg.norm(root @ (exposure.T @ ptdf[l]))) if case.num_res else 0.0
            if abs(flow) + z_f * std > line.flow_limit_mw + tol:
                return False
    return True
