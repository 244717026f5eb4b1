import copy
import os
import sys

import numpy as np
import pytest

# Add the project root to the Python path
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.insert(0, project_root)

from engine.src.config import Settings  # noqa: E402
from engine.src.ingestion.case_loader import case_from_dict  # noqa: E402
from engine.src.ingestion.case_study import builtin_case_study  # noqa: E402


def generator(gid, c2, c1, p_max, node="n1", p_min=0.0):
    return {"id": gid, "c2": c2, "c1": c1, "c0": 0.0, "p_max": p_max, "p_min": p_min, "node": node}


def single_bus_case(generators, forecast, variance, beliefs, demand, breakpoints=(-1.0, 1.0), eps=0.05, **extra):
    """A one-node, one-renewable-unit case; beliefs are scalar variances per producer."""
    return {
        "generators": generators,
        "res_units": [{"id": "u1", "forecast_mw": forecast, "node": "n1"}],
        "network": {"nodes": [{"id": "n1", "demand_mw": demand}], "lines": [], "slack_node": "n1"},
        "sigma_common": [[variance]],
        "risk_sets": [
            {"producer": g["id"], "covariances": [[[v]] for v in beliefs[g["id"]]]} for g in generators
        ],
        "eps_g": eps,
        "eps_f": eps,
        "partition": {"breakpoints": list(breakpoints), "unit": "mw"},
        "meta": {"name": extra.pop("name", "toy")},
        **extra,
    }


@pytest.fixture
def tolerances():
    """Fixture providing default tolerance settings."""
    return Settings()


@pytest.fixture(scope="session")
def builtin_case():
    """The builtin five-producer case study with seed 1."""
    return builtin_case_study(1)


@pytest.fixture
def merit_order_data():
    """Two linear-cost producers, no uncertainty, demand 100 MW."""
    gens = [generator("g1", 0.0, 10.0, 60.0), generator("g2", 0.0, 20.0, 60.0)]
    return single_bus_case(gens, 0.0, 0.0, {"g1": [0.0], "g2": [0.0]}, 100.0, breakpoints=(0.0,), name="merit_order")


@pytest.fixture
def merit_order_case(merit_order_data):
    return case_from_dict(merit_order_data)


@pytest.fixture
def single_generator_case():
    """One producer with c2 = 1 serving 10 MW without uncertainty."""
    data = single_bus_case(
        [generator("g1", 1.0, 0.0, 50.0)], 0.0, 0.0, {"g1": [0.0]}, 10.0, breakpoints=(0.0,), name="single"
    )
    return case_from_dict(data)


@pytest.fixture
def two_producer_data():
    """Desk-sized case: two producers, one renewable unit, two beliefs each, three events."""
    gens = [generator("g1", 0.05, 10.0, 80.0), generator("g2", 0.1, 12.0, 80.0)]
    beliefs = {"g1": [4.0, 9.0], "g2": [4.0, 1.0]}
    return single_bus_case(gens, 20.0, 4.0, beliefs, 100.0, name="two_producers")


@pytest.fixture
def two_producer_case(two_producer_data):
    return case_from_dict(two_producer_data)


@pytest.fixture
def common_only_case(two_producer_data):
    """Same producers, each holding only the common belief."""
    data = copy.deepcopy(two_producer_data)
    for rs in data["risk_sets"]:
        rs["covariances"] = [[[4.0]]]
    return case_from_dict(data)


@pytest.fixture
def disjoint_data(two_producer_data):
    """Producers whose event-probability hulls do not intersect."""
    data = copy.deepcopy(two_producer_data)
    data["risk_sets"] = [
        {"producer": "g1", "covariances": [[[9.0]], [[16.0]]]},
        {"producer": "g2", "covariances": [[[1.0]], [[0.25]]]},
    ]
    data["meta"] = {"name": "disjoint"}
    return data


@pytest.fixture
def disjoint_case(disjoint_data):
    return case_from_dict(disjoint_data, require_common_belief=False)


@pytest.fixture
def three_bus_case():
    """Triangle network with a congested line between the cheap producer and the load."""
    data = {
        "generators": [generator("g1", 0.01, 10.0, 200.0, node="n1"), generator("g2", 0.01, 30.0, 200.0, node="n2")],
        "res_units": [{"id": "u1", "forecast_mw": 10.0, "node": "n3"}],
        "network": {
            "nodes": [{"id": "n1"}, {"id": "n2"}, {"id": "n3", "demand_mw": 100.0}],
            "lines": [
                {"id": "l12", "from": "n1", "to": "n2", "reactance": 0.1, "flow_limit_mw": 100.0},
                {"id": "l13", "from": "n1", "to": "n3", "reactance": 0.1, "flow_limit_mw": 40.0},
                {"id": "l23", "from": "n2", "to": "n3", "reactance": 0.1, "flow_limit_mw": 100.0},
            ],
            "slack_node": "n3",
        },
        "sigma_common": [[1.0]],
        "risk_sets": [
            {"producer": "g1", "covariances": [[[1.0]], [[2.0]]]},
            {"producer": "g2", "covariances": [[[1.0]], [[0.5]]]},
        ],
        "eps_g": 0.05,
        "eps_f": 0.05,
        "partition": {"breakpoints": [-1.0, 1.0], "unit": "mw"},
        "meta": {"name": "three_bus"},
    }
    return case_from_dict(data)


@pytest.fixture
def desk_case_factory():
    """Seeded one- or two-producer single-bus cases with interior optima, small enough for the oracle."""

    def make(seed):
        rng = np.random.default_rng(seed)
        n_gens = int(rng.integers(1, 3))
        n_beliefs = int(rng.integers(1, 3))
        variance = float(rng.uniform(1.0, 9.0))
        gens, beliefs = [], {}
        for i in range(n_gens):
            gid = f"g{i + 1}"
            gens.append(generator(gid, float(rng.uniform(0.1, 0.2)), float(rng.uniform(10.0, 12.0)), 150.0))
            beliefs[gid] = [variance] + [float(rng.uniform(0.5, 12.0)) for _ in range(n_beliefs - 1)]
        breakpoints = (0.0,) if rng.random() < 0.5 else (-2.0, 2.0)
        forecast = float(rng.uniform(5.0, 25.0))
        demand = forecast + float(rng.uniform(60.0, 100.0))
        data = single_bus_case(gens, forecast, variance, beliefs, demand, breakpoints=breakpoints, name=f"desk_{seed}")
        return case_from_dict(data)

    return make
