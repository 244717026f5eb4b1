import json
from pathlib import Path
from unittest.mock import patch

import cvxpy as cp
import pytest

from engine.src.config import settings
from engine.src.main import main

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def test_missing_case_file(tmp_path, capsys):
    code = main(["clear", "--case", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_missing_command_is_usage_error(capsys):
    assert main([]) == 1
    assert "error" in capsys.readouterr().err


def test_case_sources_are_exclusive(tmp_path):
    argv = ["clear", "--case", str(DATA_DIR / "case_two_producers.json"), "--builtin-seed", "1"]
    assert main(argv + ["--out", str(tmp_path)]) == 1


def test_eps_out_of_range(tmp_path, capsys):
    code = main(["clear", "--builtin-seed", "1", "--eps-g", "1.5", "--out", str(tmp_path)])
    assert code == 1
    assert "eps_g" in capsys.readouterr().err


def test_invalid_case_file(tmp_path, capsys):
    code = main(["clear", "--case", str(DATA_DIR / "bad_not_psd.json"), "--out", str(tmp_path)])
    assert code == 1
    assert "g1" in capsys.readouterr().err


def test_casegen_then_clear_matches_builtin(tmp_path):
    case_path = tmp_path / "case.json"
    assert main(["casegen", "--seed", "1", "--out", str(case_path)]) == 0
    from_file = tmp_path / "file"
    builtin = tmp_path / "builtin"
    common = ["--kind", "ra", "--formats", "json-report"]
    assert main(["clear", "--case", str(case_path), "--out", str(from_file)] + common) == 0
    assert main(["clear", "--builtin-seed", "1", "--out", str(builtin)] + common) == 0
    assert (from_file / "report.json").read_bytes() == (builtin / "report.json").read_bytes()


def test_clear_dumps_program(tmp_path):
    argv = ["clear", "--case", str(DATA_DIR / "case_two_producers.json"), "--kind", "rt", "--dump-program"]
    assert main(argv + ["--out", str(tmp_path), "--strict"]) == 0
    assert "balance[system]" in (tmp_path / "program.txt").read_text()
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["propositions"]["passed"]
    assert (tmp_path / "ads_trades.csv").exists()


def test_compare_strict_passes(tmp_path):
    argv = ["compare", "--case", str(DATA_DIR / "case_two_producers.json"), "--out", str(tmp_path), "--strict"]
    assert main(argv) == 0
    for name in ("report.json", "prices.csv", "dispatch.csv", "settlement.csv", "ads_trades.csv"):
        assert (tmp_path / name).exists()
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["rt"]["summary"]["objective"] <= report["no_rt"]["summary"]["objective"] + 1e-6


def test_solver_error_exits_two(tmp_path, capsys):
    with patch.object(cp.Problem, "solve", side_effect=cp.SolverError("boom")):
        code = main(["clear", "--case", str(DATA_DIR / "case_two_producers.json"), "--out", str(tmp_path)])
    assert code == 2
    assert "RISK_TRADING" in capsys.readouterr().err


def test_verify_disjoint_risk_sets(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "require_common_belief", False)
    code = main(["verify", "--case", str(DATA_DIR / "case_disjoint.json"), "--out", str(tmp_path)])
    assert code == 2
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["status"] != "OPTIMAL"
    assert report["flagged_producers"] == ["g1", "g2"]
    assert report["hypothesis"]["disjoint_pairs"] == [["g1", "g2"]]


@pytest.mark.parametrize("command", ["clear", "compare", "verify"])
def test_commands_require_case_source(command, tmp_path):
    assert main([command, "--out", str(tmp_path)]) == 1
