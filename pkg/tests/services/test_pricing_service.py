import numpy as np
import pytest

from engine.src.models.program import FormulationKind
from engine.src.services.conic_solver import solve
from engine.src.services.pricing_service import (
    check_price_formulas,
    dual_by_label,
    extract_prices,
    mixture_covariances,
    primal_by_label,
)
from engine.src.services.program_builder import build

BUILTIN_LAMBDA = 62.087


def _priced(case, kind):
    program = build(case, kind)
    solution = solve(program)
    assert solution.is_optimal
    return program, solution, extract_prices(program, solution)


@pytest.mark.parametrize("kind", [FormulationKind.RISK_AVERSE, FormulationKind.RISK_TRADING])
def test_builtin_energy_price_is_uniform(builtin_case, kind):
    _, _, prices = _priced(builtin_case, kind)
    assert prices.lambda_system == pytest.approx(BUILTIN_LAMBDA, abs=0.05)
    assert set(prices.lambda_nodal.values()) == {prices.lambda_system}


def test_builtin_dispatch(builtin_case):
    program, solution, _ = _priced(builtin_case, FormulationKind.RISK_AVERSE)
    dispatch = [primal_by_label(program, solution, f"p_G[g{i}]") for i in range(1, 6)]
    np.testing.assert_allclose(dispatch, [26.04, 10.0, 10.0, 15.70, 13.26], atol=0.02)
    for u in range(1, 6):
        assert primal_by_label(program, solution, f"alpha[g2][u{u}]") == pytest.approx(0.0, abs=1e-5)


def test_risk_neutral_has_no_risk_prices(two_producer_case):
    _, _, prices = _priced(two_producer_case, FormulationKind.RISK_NEUTRAL)
    assert prices.eta is None
    assert prices.mu is None
    assert set(prices.chi) == {"u1"}


@pytest.mark.parametrize(
    "kind", [FormulationKind.RISK_NEUTRAL, FormulationKind.RISK_AVERSE, FormulationKind.RISK_TRADING]
)
def test_price_formulas_hold(builtin_case, kind):
    program, solution, prices = _priced(builtin_case, kind)
    report = check_price_formulas(builtin_case, program, solution, prices)
    assert report.energy_price.passed, report.energy_price.model_dump()
    assert report.reserve_price.passed, report.reserve_price.model_dump()
    assert report.passed


def test_energy_price_terms_reconstruct_lambda(builtin_case):
    program, solution, prices = _priced(builtin_case, FormulationKind.RISK_TRADING)
    report = check_price_formulas(builtin_case, program, solution, prices)
    for terms in report.energy_price_terms.values():
        assert set(terms) == {"marginal_cost", "capacity", "congestion"}
        assert sum(terms.values()) == pytest.approx(prices.lambda_system, abs=1e-4)


def test_risk_price_is_eta_weighted_event_probability(builtin_case):
    program, solution, prices = _priced(builtin_case, FormulationKind.RISK_TRADING)
    report = check_price_formulas(builtin_case, program, solution, prices)
    assert report.risk_price.passed
    assert report.eta_normalization.passed
    mu = np.asarray(prices.mu)
    assert mu.sum() == pytest.approx(1.0, abs=1e-6)
    eta = np.array([prices.eta[g] for g in program.meta.generator_ids])
    np.testing.assert_allclose(eta.sum(axis=1), 1.0, atol=1e-5)


def test_nodal_prices_separate_under_congestion(three_bus_case):
    program, solution, prices = _priced(three_bus_case, FormulationKind.RISK_AVERSE)
    report = check_price_formulas(three_bus_case, program, solution, prices)
    assert report.energy_price.passed
    assert prices.theta_hi["l13"] > 1e-6
    assert prices.lambda_nodal["n1"] < prices.lambda_nodal["n2"]
    assert prices.lambda_nodal["n3"] == pytest.approx(prices.lambda_system)


def test_mixture_covariance_of_risk_averse_solution(two_producer_case):
    program, _, prices = _priced(two_producer_case, FormulationKind.RISK_AVERSE)
    mixtures = mixture_covariances(program, prices)
    assert mixtures.shape == (2, 1, 1)
    # each mixture lies between the producer's extreme beliefs
    assert 4.0 - 1e-6 <= mixtures[0, 0, 0] <= 9.0 + 1e-6
    assert 1.0 - 1e-6 <= mixtures[1, 0, 0] <= 4.0 + 1e-6


def test_dual_by_label_reads_balance_row(single_generator_case):
    program = build(single_generator_case, FormulationKind.RISK_NEUTRAL)
    solution = solve(program)
    assert dual_by_label(program, solution, "balance[system]") == pytest.approx(20.0, abs=1e-5)


@pytest.mark.parametrize("kind", [FormulationKind.RISK_AVERSE, FormulationKind.RISK_TRADING])
def test_builtin_reserve_checks_pass_with_idle_producers(builtin_case, kind):
    program, solution, prices = _priced(builtin_case, kind)
    report = check_price_formulas(builtin_case, program, solution, prices)
    assert report.reserve_price.passed, report.reserve_price.model_dump()
    assert report.reserve_stationarity.passed, report.reserve_stationarity.model_dump()
    # g2 carries no reserve, so its risk cone sits at the apex and is still checked
    assert "g2" in report.degenerate_cone_producers
    assert any(key.startswith("g2[") for key in report.reserve_stationarity.residuals)


def test_two_producer_risk_trading_formulas_hold(two_producer_case):
    program, solution, prices = _priced(two_producer_case, FormulationKind.RISK_TRADING)
    report = check_price_formulas(two_producer_case, program, solution, prices)
    assert report.passed, report.model_dump()
    assert set(report.reserve_stationarity.residuals) == {"g1[u1]", "g2[u1]"}


def test_reserve_price_averages_over_every_producer(two_producer_case):
    program, solution, prices = _priced(two_producer_case, FormulationKind.RISK_AVERSE)
    report = check_price_formulas(two_producer_case, program, solution, prices)
    per_producer = report.reserve_stationarity.residuals
    mean_residual = (per_producer["g1[u1]"] + per_producer["g2[u1]"]) / 2.0
    assert report.reserve_price.residuals["u1"] == pytest.approx(mean_residual, abs=1e-9)


@pytest.mark.parametrize("kind", [FormulationKind.RISK_AVERSE, FormulationKind.RISK_TRADING])
def test_zero_covariance_reduces_to_merit_order(merit_order_case, kind):
    program, solution, prices = _priced(merit_order_case, kind)
    assert primal_by_label(program, solution, "p_G[g1]") == pytest.approx(60.0, abs=1e-4)
    assert primal_by_label(program, solution, "p_G[g2]") == pytest.approx(40.0, abs=1e-4)
    assert prices.lambda_system == pytest.approx(20.0, abs=1e-4)
    report = check_price_formulas(merit_order_case, program, solution, prices)
    assert report.passed, report.model_dump()


def test_dual_by_label_matches_raw_index(two_producer_case):
    program, solution, _ = _priced(two_producer_case, FormulationKind.RISK_TRADING)
    space, idx = program.index("balance[system]")
    assert space == "eq"
    assert dual_by_label(program, solution, "balance[system]") == solution.eq_duals[idx]
    space, idx = program.index("soc_s[g1]")
    assert space == "soc"
    assert dual_by_label(program, solution, "soc_s[g1]") == solution.soc_duals[idx][0]
    with pytest.raises(ValueError, match="is a variable"):
        dual_by_label(program, solution, "p_G[g1]")
