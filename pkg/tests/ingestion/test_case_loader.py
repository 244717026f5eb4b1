import copy
import json
from pathlib import Path

import pytest

from engine.src.errors import CaseParseError, CaseValidationError
from engine.src.ingestion.case_loader import case_from_dict, case_to_dict, dump_case, dumps_case, load_case

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def test_load_case_file():
    case = load_case(DATA_DIR / "case_two_producers.json")
    assert [g.id for g in case.generators] == ["g1", "g2"]
    assert case.num_beliefs == 2
    assert case.partition.num_events == 3
    assert case.total_demand == 100.0
    assert case.meta.name == "two_producers"


def test_missing_file_raises_parse_error(tmp_path):
    with pytest.raises(CaseParseError, match="not found"):
        load_case(tmp_path / "missing.json")


def test_malformed_file_raises_parse_error():
    with pytest.raises(CaseParseError, match="malformed"):
        load_case(DATA_DIR / "malformed.json")


def test_top_level_must_be_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(CaseParseError):
        load_case(path)


def test_non_psd_belief_names_producer():
    with pytest.raises(CaseValidationError, match="risk set g1 belief 1"):
        load_case(DATA_DIR / "bad_not_psd.json")


def test_common_belief_required_by_default():
    with pytest.raises(CaseValidationError, match="sigma_common is not one of its beliefs"):
        load_case(DATA_DIR / "case_disjoint.json")


def test_common_belief_requirement_can_be_relaxed():
    case = load_case(DATA_DIR / "case_disjoint.json", require_common_belief=False)
    assert case.risk_set("g1").size == 2


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.update(eps_g=0.0), "eps_g"),
        (lambda d: d.update(eps_f=1.0), "eps_f"),
        (lambda d: d["generators"][0].update(p_min=90.0), "generator g1"),
        (lambda d: d["generators"][1].update(node="nowhere"), "generator g2: unknown node"),
        (lambda d: d["risk_sets"].pop(), "risk sets cover"),
        (lambda d: d["risk_sets"][1]["covariances"].pop(), "share one size K"),
        (lambda d: d["partition"].update(breakpoints=[1.0, -1.0]), "strictly increasing"),
        (lambda d: d["network"]["nodes"][0].update(demand_mw=500.0), "exceeds capacity"),
        (lambda d: d.update(sigma_common=[[1.0, 0.0]]), "sigma_common"),
    ],
)
def test_invariant_violations(two_producer_data, mutate, message):
    data = copy.deepcopy(two_producer_data)
    mutate(data)
    with pytest.raises(CaseValidationError, match=message):
        case_from_dict(data)


def test_network_must_be_connected(three_bus_case):
    data = case_to_dict(three_bus_case)
    data["network"]["nodes"].append({"id": "n4"})
    with pytest.raises(CaseValidationError, match="not connected"):
        case_from_dict(data)


def test_round_trip_is_exact(tmp_path, three_bus_case):
    path = dump_case(three_bus_case, tmp_path / "case.json")
    reloaded = load_case(path)
    assert reloaded == three_bus_case
    assert dumps_case(reloaded) == path.read_text()


def test_lines_serialize_with_from_and_to(three_bus_case):
    data = json.loads(dumps_case(three_bus_case))
    line = data["network"]["lines"][0]
    assert line["from"] == "n1" and line["to"] == "n2"
