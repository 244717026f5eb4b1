"""Builtin five-producer case study.

Five conventional producers and five renewable units on one bus, 100 MW of
demand. Every producer holds K covariance beliefs: the common belief (std
``common_std_ratio * forecast``, no correlation) plus K - 1 seeded random
matrices. A random belief draws each unit's std uniformly in
``[0, random_std_ratio_max * forecast]`` and one correlation ``rho`` uniformly
in ``[0, random_correlation_max]`` shared by all pairs, then is projected onto
the PSD cone. Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64).
"""
from typing import Any, Dict, Optional

import numpy as np

from engine.src.config_loader import ConfigLoader
from engine.src.ingestion.case_loader import case_from_dict
from engine.src.models.case import Case
from engine.src.services.stochastic_kernel import psd_clip

RNG_NAME = "numpy.default_rng/PCG64"


def random_belief(rng: np.random.Generator, forecast: np.ndarray, std_ratio_max: float, rho_max: float) -> np.ndarray:
    std = rng.uniform(0.0, std_ratio_max * forecast)
    rho = rng.uniform(0.0, rho_max)
    n = forecast.size
    corr = rho * np.ones((n, n)) + (1.0 - rho) * np.eye(n)
    cov = psd_clip(std[:, None] * corr * std[None, :])
    return 0.5 * (cov + cov.T)


def builtin_case_study(seed: int, eps_g: Optional[float] = None, eps_f: Optional[float] = None) -> Case:
    """
    Build the five-producer case study for a seed.

    Args:
        seed (int): Seed of the belief generator.
        eps_g (Optional[float]): Capacity violation probability, default from market.yaml.
        eps_f (Optional[float]): Flow violation probability, default from market.yaml.

    Returns:
        Case: A validated case; equal seeds give identical cases.
    """
    cfg: Dict[str, Any] = ConfigLoader.load_config("market")["case_study"]
    gens = cfg["generators"]
    node = cfg["node"]
    n_res = int(cfg["res"]["count"])
    forecast = np.full(n_res, float(cfg["res"]["forecast_mw"]))
    n_beliefs = int(cfg["beliefs_per_producer"])

    common_std = cfg["common_std_ratio"] * forecast
    common = np.diag(common_std ** 2)

    rng = np.random.default_rng(seed)
    risk_sets = []
    for gid in gens["ids"]:
        covariances = [common.tolist()]
        for _ in range(n_beliefs - 1):
            belief = random_belief(rng, forecast, cfg["random_std_ratio_max"], cfg["random_correlation_max"])
            covariances.append(belief.tolist())
        risk_sets.append({"producer": gid, "covariances": covariances})

    data = {
        "generators": [
            {
                "id": gid,
                "c2": cfg["generators"]["c2_ratio"] * c1,
                "c1": c1,
                "c0": 0.0,
                "p_max": p_max,
                "p_min": gens["p_min"],
                "node": node,
            }
            for gid, c1, p_max in zip(gens["ids"], gens["c1"], gens["p_max"])
        ],
        "res_units": [{"id": f"u{j + 1}", "forecast_mw": float(forecast[j]), "node": node} for j in range(n_res)],
        "network": {"nodes": [{"id": node, "demand_mw": cfg["demand_mw"]}], "lines": [], "slack_node": node},
        "sigma_common": common.tolist(),
        "risk_sets": risk_sets,
        "eps_g": cfg["eps_g"] if eps_g is None else eps_g,
        "eps_f": cfg["eps_f"] if eps_f is None else eps_f,
        "partition": dict(cfg["partition"]),
        "meta": {
            "seed": seed,
            "name": f"case_study_seed{seed}",
            "rng": RNG_NAME,
            "random_beliefs": {
                "std_ratio_range": [0.0, cfg["random_std_ratio_max"]],
                "correlation_range": [0.0, cfg["random_correlation_max"]],
                "construction": "diag(std) (rho 11' + (1 - rho) I) diag(std), PSD projected",
            },
        },
    }
    return case_from_dict(data, require_common_belief=True)
