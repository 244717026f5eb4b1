from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from engine.src.errors import StochasticDomainError
from engine.src.models.case import EventPartition
from engine.src.services.stochastic_kernel import (
    aggregate_sigma,
    event_probabilities,
    matrix_sqrt,
    monte_carlo_event_probs,
    psd_clip,
    std_normal_cdf,
    std_normal_quantile,
    std_normal_sf,
)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

BUILTIN_BREAKPOINTS = [-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2]
MC_SAMPLES = 1_000_000


@pytest.fixture
def cdf_reference():
    return pd.read_csv(DATA_DIR / "normal_cdf_reference.csv")


def test_cdf_matches_reference_table(cdf_reference):
    values = std_normal_cdf(cdf_reference["x"].to_numpy())
    np.testing.assert_allclose(values, cdf_reference["cdf"].to_numpy(), rtol=1e-12, atol=0.0)


def test_cdf_scalar_returns_float():
    assert isinstance(std_normal_cdf(0.3), float)
    assert std_normal_cdf(0.0) == 0.5


def test_sf_is_mirror_of_cdf(cdf_reference):
    x = cdf_reference["x"].to_numpy()
    np.testing.assert_allclose(std_normal_sf(x), std_normal_cdf(-x), rtol=0.0, atol=0.0)


def test_quantile_reference_value():
    assert std_normal_quantile(0.95) == pytest.approx(1.6448536269514722, abs=1e-12)


@pytest.mark.parametrize("p", [1e-9, 0.001, 0.05, 0.3, 0.5, 0.8, 0.999, 1 - 1e-9])
def test_quantile_inverts_cdf(p):
    assert std_normal_cdf(std_normal_quantile(p)) == pytest.approx(p, rel=1e-10)


def test_quantile_inverts_cdf_on_grid():
    x = np.linspace(-6.0, 6.0, 241)
    np.testing.assert_allclose(std_normal_quantile(std_normal_cdf(x)), x, rtol=0.0, atol=1e-6)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_quantile_rejects_outside_open_interval(p):
    with pytest.raises(StochasticDomainError):
        std_normal_quantile(p)


def test_quantile_domain_error_is_value_error():
    with pytest.raises(ValueError):
        std_normal_quantile(2.0)


def test_matrix_sqrt_squares_back():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(5, 5))
    sigma = m @ m.T
    root = matrix_sqrt(sigma)
    np.testing.assert_allclose(root, root.T, atol=1e-12)
    np.testing.assert_allclose(root @ root, sigma, atol=1e-9)


def test_matrix_sqrt_handles_rank_deficient():
    v = np.array([1.0, 2.0, -1.0])
    sigma = np.outer(v, v)
    root = matrix_sqrt(sigma)
    np.testing.assert_allclose(root @ root, sigma, atol=1e-9)


def test_matrix_sqrt_rejects_indefinite():
    with pytest.raises(StochasticDomainError):
        matrix_sqrt(np.diag([1.0, -1e-3]))


def test_psd_clip_zeroes_tiny_negative_eigenvalue():
    sigma = np.diag([1.0, -5e-10])
    clipped = psd_clip(sigma)
    assert np.linalg.eigvalsh(clipped)[0] >= 0.0
    np.testing.assert_allclose(clipped, np.diag([1.0, 0.0]), atol=1e-12)


def test_psd_clip_leaves_psd_matrix_unchanged():
    sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_array_equal(psd_clip(sigma), sigma)


def test_aggregate_sigma_sums_all_entries():
    sigma = np.array([[4.0, 1.0], [1.0, 2.0]])
    assert aggregate_sigma(sigma) == pytest.approx(np.sqrt(8.0))
    assert aggregate_sigma(np.zeros((0, 0))) == 0.0


@pytest.mark.parametrize("seed", range(100))
def test_aggregate_sigma_is_norm_of_summed_root(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    m = rng.normal(size=(n, int(rng.integers(1, n + 1))))
    sigma = m @ m.T
    expected = np.linalg.norm(np.ones(n) @ matrix_sqrt(sigma))
    assert aggregate_sigma(sigma) == pytest.approx(expected, rel=1e-7, abs=1e-9)


def test_event_probabilities_sum_to_one_and_are_symmetric():
    partition = EventPartition(breakpoints=BUILTIN_BREAKPOINTS)
    probs = event_probabilities(partition, 2.236, total_forecast=25.0)
    assert probs.shape == (8,)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert (probs >= 0).all()
    np.testing.assert_array_equal(probs, probs[::-1])


def test_event_probabilities_match_cdf_differences():
    partition = EventPartition(breakpoints=[-1.0, 1.0], unit="mw")
    probs = event_probabilities(partition, 1.0, total_forecast=0.0)
    phi1 = 0.8413447460685429
    np.testing.assert_allclose(probs, [1 - phi1, 2 * phi1 - 1, 1 - phi1], rtol=1e-12)


def test_zero_sigma_puts_mass_on_interval_starting_at_zero():
    partition = EventPartition(breakpoints=[-1.0, 0.0, 1.0], unit="mw")
    probs = event_probabilities(partition, 0.0, total_forecast=0.0)
    np.testing.assert_array_equal(probs, [0.0, 0.0, 1.0, 0.0])


def test_sigma_common_unit_scales_breakpoints():
    partition = EventPartition(breakpoints=[-1.0, 1.0], unit="sigma_common")
    probs = event_probabilities(partition, 3.0, total_forecast=10.0, sigma_common=3.0)
    assert probs[1] == pytest.approx(0.6826894921370859, rel=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_monte_carlo_agrees_with_closed_form(seed):
    rng = np.random.default_rng(seed)
    sigma = float(rng.uniform(0.5, 5.0))
    breakpoints = np.unique(np.round(rng.uniform(-3.0 * sigma, 3.0 * sigma, size=int(rng.integers(1, 8))), 6))
    partition = EventPartition(breakpoints=breakpoints.tolist(), unit="mw")
    exact = event_probabilities(partition, sigma, total_forecast=0.0)
    sampled = monte_carlo_event_probs(partition, sigma, total_forecast=0.0, n=MC_SAMPLES, seed=100 + seed)
    standard_error = np.sqrt(exact * (1.0 - exact) / MC_SAMPLES)
    assert (np.abs(sampled - exact) <= 4.0 * standard_error).all(), (sampled, exact)


def test_monte_carlo_matches_builtin_partition():
    partition = EventPartition(breakpoints=BUILTIN_BREAKPOINTS)
    exact = event_probabilities(partition, 2.0, total_forecast=25.0)
    sampled = monte_carlo_event_probs(partition, 2.0, total_forecast=25.0, n=MC_SAMPLES, seed=11)
    np.testing.assert_allclose(sampled, exact, atol=4.0 * np.sqrt(0.25 / MC_SAMPLES))


def test_monte_carlo_is_seeded():
    partition = EventPartition(breakpoints=[0.0], unit="mw")
    a = monte_carlo_event_probs(partition, 1.0, 0.0, n=1000, seed=5)
    b = monte_carlo_event_probs(partition, 1.0, 0.0, n=1000, seed=5)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("n, sigma", [(0, 1.0), (10, -1.0)])
def test_monte_carlo_rejects_bad_arguments(n, sigma):
    partition = EventPartition(breakpoints=[0.0], unit="mw")
    with pytest.raises(StochasticDomainError):
        monte_carlo_event_probs(partition, sigma, 0.0, n=n, seed=1)


def test_partition_labels_use_half_open_intervals():
    partition = EventPartition(breakpoints=[-0.2, 0.0, 0.2])
    assert partition.labels(25.0) == ["[-inf,-5)", "[-5,0)", "[0,5)", "[5,inf)"]
