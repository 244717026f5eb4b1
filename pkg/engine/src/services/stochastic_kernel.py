"""Gaussian helpers: normal cdf and quantile, covariance square roots, aggregate
forecast-error deviation and the probabilities of discrete error events.

The cdf uses ``scipy.special.ndtr`` (Cephes erf/erfc rational approximations,
relative accuracy near machine precision). Upper tails are evaluated as
``ndtr(-x)`` rather than ``1 - ndtr(x)`` so that interval probabilities keep
full accuracy in both tails.
"""
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import ndtr, ndtri

from engine.src.errors import StochasticDomainError
from engine.src.models.case import PSD_TOL, EventPartition

Number = Union[float, np.ndarray]


def std_normal_cdf(x: ArrayLike) -> Number:
    """
    Standard normal cumulative distribution function.

    Args:
        x (ArrayLike): Scalar or array of finite reals.

    Returns:
        float | np.ndarray: Phi(x), with the same shape as the input.
    """
    out = ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def std_normal_sf(x: ArrayLike) -> Number:
    """Upper tail 1 - Phi(x), computed without cancellation."""
    return std_normal_cdf(-np.asarray(x, dtype=float))


def std_normal_quantile(p: ArrayLike) -> Number:
    """
    Inverse of the standard normal cdf.

    Args:
        p (ArrayLike): Probability or array of probabilities in the open interval (0, 1).

    Returns:
        float | np.ndarray: z with Phi(z) = p.

    Raises:
        StochasticDomainError: If any p lies outside (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise StochasticDomainError(f"quantile requires 0 < p < 1, got {p!r}")
    out = ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


def psd_clip(sigma: ArrayLike, tol: float = PSD_TOL) -> np.ndarray:
    """
    Symmetrize a covariance and clip eigenvalues in [-tol, 0) to zero.

    Raises:
        StochasticDomainError: If an eigenvalue is below -tol.
    """
    arr = np.asarray(sigma, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 0)
    sym = 0.5 * (arr + arr.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] < -tol:
        raise StochasticDomainError(f"matrix is not positive semidefinite (min eigenvalue {eigvals[0]:.6g})")
    if eigvals[0] >= 0.0:
        return sym
    clipped = np.clip(eigvals, 0.0, None)
    out = (eigvecs * clipped) @ eigvecs.T
    return 0.5 * (out + out.T)


def matrix_sqrt(sigma: ArrayLike) -> np.ndarray:
    """
    Symmetric square root of a PSD matrix via eigendecomposition.

    Handles rank-deficient covariances; eigenvalues in [-1e-9, 0) are treated as zero.

    Args:
        sigma (ArrayLike): Symmetric positive semidefinite matrix.

    Returns:
        np.ndarray: Symmetric S with S @ S == sigma.

    Raises:
        StochasticDomainError: If sigma has an eigenvalue below -1e-9.
    """
    arr = np.asarray(sigma, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 0)
    sym = 0.5 * (arr + arr.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] < -PSD_TOL:
        raise StochasticDomainError(f"matrix is not positive semidefinite (min eigenvalue {eigvals[0]:.6g})")
    root = (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
    return 0.5 * (root + root.T)


def aggregate_sigma(sigma: ArrayLike) -> float:
    """Standard deviation of the total forecast error, sqrt(e' Sigma e)."""
    arr = np.asarray(sigma, dtype=float)
    if arr.size == 0:
        return 0.0
    return float(np.sqrt(max(float(arr.sum()), 0.0)))


def _event_probabilities_mw(breakpoints_mw: np.ndarray, sigma: float) -> np.ndarray:
    bp = np.asarray(breakpoints_mw, dtype=float)
    n_events = bp.size + 1
    if sigma <= 0.0:
        probs = np.zeros(n_events)
        probs[int(np.searchsorted(bp, 0.0, side="right"))] = 1.0
        return probs
    z = bp / sigma
    # Mass of each interval measured from the nearer tail: for an interval left of
    # zero use cdf differences, right of zero use survival differences. This keeps
    # mirrored intervals bit-for-bit equal for symmetric breakpoints.
    lower = np.concatenate(([-np.inf], z))
    upper = np.concatenate((z, [np.inf]))
    probs = np.empty(n_events)
    for w in range(n_events):
        lo, hi = lower[w], upper[w]
        if hi <= 0.0:
            probs[w] = std_normal_cdf(hi) - std_normal_cdf(lo)
        elif lo >= 0.0:
            probs[w] = std_normal_sf(lo) - std_normal_sf(hi)
        else:
            probs[w] = 1.0 - std_normal_cdf(lo) - std_normal_sf(hi)
    return np.clip(probs, 0.0, 1.0)


def event_probabilities(
    partition: EventPartition,
    sigma: float,
    total_forecast: float,
    sigma_common: Optional[float] = None,
) -> np.ndarray:
    """
    Probability of each discrete forecast-error event under N(0, sigma^2).

    Args:
        partition (EventPartition): Breakpoints and their unit.
        sigma (float): Aggregate error standard deviation in MW, >= 0.
        total_forecast (float): Total RES forecast in MW, used by the
            ``fraction_of_total_forecast`` unit.
        sigma_common (Optional[float]): Common-belief aggregate deviation,
            used by the ``sigma_common`` unit.

    Returns:
        np.ndarray: W probabilities summing to one. With sigma == 0 all mass
        goes to the interval containing zero, ties to the interval whose lower
        bound is zero.
    """
    scale = 1.0 if sigma_common is None else sigma_common
    return _event_probabilities_mw(partition.breakpoints_mw(total_forecast, scale), float(sigma))


def monte_carlo_event_probs(
    partition: EventPartition,
    sigma: float,
    total_forecast: float,
    n: int,
    seed: int,
    sigma_common: Optional[float] = None,
) -> np.ndarray:
    """
    Empirical event frequencies of n zero-mean Gaussian draws with std sigma.

    Raises:
        StochasticDomainError: If n < 1 or sigma < 0.
    """
    if n < 1:
        raise StochasticDomainError(f"sample count must be positive, got {n}")
    if sigma < 0:
        raise StochasticDomainError(f"sigma must be non-negative, got {sigma}")
    scale = 1.0 if sigma_common is None else sigma_common
    bp = partition.breakpoints_mw(total_forecast, scale)
    draws = np.random.default_rng(seed).normal(0.0, sigma, size=n)
    # intervals are [l, u), so a draw on a breakpoint belongs to the upper event
    idx = np.searchsorted(bp, draws, side="right")
    return np.bincount(idx, minlength=bp.size + 1) / n
