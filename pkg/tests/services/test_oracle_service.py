import pytest

from engine.src.config import Settings
from engine.src.errors import OracleResourceError
from engine.src.models.program import FormulationKind
from engine.src.services.analysis_service import clear_market
from engine.src.services.oracle_service import brute_force_oracle, is_feasible_point

GRID_STEP = 0.5
ALPHA_STEP = 0.01


def _oracle_slack(case):
    """Grid error bound: quadratic in the step for dispatch, linear in the step for participation."""
    c2 = [g.c2 for g in case.generators]
    max_var = max(cov[0][0] for rs in case.risk_sets for cov in rs.covariances)
    return sum(c2) * GRID_STEP**2 + 2.0 * sum(c2) * max_var * ALPHA_STEP + 1e-6


def test_merit_order_oracle(merit_order_case):
    result = brute_force_oracle(merit_order_case, FormulationKind.RISK_NEUTRAL, GRID_STEP)
    assert result.objective == pytest.approx(1400.0)
    assert result.p_g == pytest.approx([60.0, 40.0])


@pytest.mark.parametrize("kind", [FormulationKind.RISK_NEUTRAL, FormulationKind.RISK_AVERSE])
def test_conic_solution_matches_oracle(two_producer_case, kind):
    solved = clear_market(two_producer_case, kind).require_optimal().solution.objective_value
    oracle = brute_force_oracle(two_producer_case, kind, GRID_STEP, alpha_step=ALPHA_STEP)
    assert solved <= oracle.objective + 1e-6
    assert oracle.objective - solved <= _oracle_slack(two_producer_case)


def test_risk_trading_oracle(two_producer_case):
    solved = clear_market(two_producer_case, FormulationKind.RISK_TRADING).require_optimal().solution.objective_value
    rt = brute_force_oracle(two_producer_case, FormulationKind.RISK_TRADING, GRID_STEP, alpha_step=ALPHA_STEP)
    ra = brute_force_oracle(two_producer_case, FormulationKind.RISK_AVERSE, GRID_STEP, alpha_step=ALPHA_STEP)
    assert solved <= rt.objective + 1e-6
    assert rt.objective <= ra.objective + 1e-9
    assert rt.trades is not None and rt.trades[0] == 0.0


def test_oracle_point_is_feasible(two_producer_case):
    result = brute_force_oracle(two_producer_case, FormulationKind.RISK_AVERSE, GRID_STEP, alpha_step=ALPHA_STEP)
    alpha = [[a] for a in result.alpha]
    assert is_feasible_point(two_producer_case, result.p_g, alpha)


def test_infeasible_points_are_rejected(two_producer_case):
    assert not is_feasible_point(two_producer_case, [50.0, 20.0], [[0.5], [0.5]])
    assert not is_feasible_point(two_producer_case, [40.0, 40.0], [[0.7], [0.7]])
    assert not is_feasible_point(two_producer_case, [0.0, 80.0], [[0.0], [1.0]])


def test_network_feasibility(three_bus_case):
    # all energy from n1 overloads line l13
    assert not is_feasible_point(three_bus_case, [90.0, 0.0], [[0.5], [0.5]])
    assert is_feasible_point(three_bus_case, [20.0, 70.0], [[0.5], [0.5]])


def test_oracle_rejects_large_cases(builtin_case):
    with pytest.raises(OracleResourceError):
        brute_force_oracle(builtin_case, FormulationKind.RISK_NEUTRAL, GRID_STEP)


def test_oracle_enforces_grid_cap(two_producer_case):
    with pytest.raises(OracleResourceError):
        brute_force_oracle(
            two_producer_case, FormulationKind.RISK_TRADING, GRID_STEP, cfg=Settings(oracle_max_points=1000)
        )


def test_oracle_rejects_bad_step(two_producer_case):
    with pytest.raises(ValueError):
        brute_force_oracle(two_producer_case, FormulationKind.RISK_NEUTRAL, 0.0)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("kind", [FormulationKind.RISK_NEUTRAL, FormulationKind.RISK_AVERSE])
def test_seeded_desk_cases_match_oracle(desk_case_factory, seed, kind):
    case = desk_case_factory(seed)
    result = clear_market(case, kind).require_optimal()
    assert is_feasible_point(case, result.values("p_G"), result.values("alpha"))
    solved = result.solution.objective_value
    oracle = brute_force_oracle(case, kind, GRID_STEP, alpha_step=ALPHA_STEP)
    assert solved <= oracle.objective + 1e-6
    assert oracle.objective - solved <= _oracle_slack(case)


@pytest.mark.parametrize("seed", range(10))
def test_seeded_risk_trading_points_are_feasible(desk_case_factory, seed):
    case = desk_case_factory(seed)
    result = clear_market(case, FormulationKind.RISK_TRADING).require_optimal()
    assert is_feasible_point(case, result.values("p_G"), result.values("alpha"))
