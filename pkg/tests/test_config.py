import pytest

from engine.src.config import Settings
from engine.src.config_loader import ConfigLoader


def test_tolerances_may_be_tightened():
    cfg = Settings(kkt_tol=1e-7, feasibility_tol=1e-8)
    assert cfg.kkt_tol == 1e-7
    assert cfg.feasibility_tol == 1e-8


@pytest.mark.parametrize("field", ["kkt_tol", "gap_tol", "formula_tol"])
def test_tolerances_may_not_be_loosened(field):
    with pytest.raises(ValueError):
        Settings(**{field: 1e-2})


def test_unknown_log_format_rejected():
    with pytest.raises(ValueError):
        Settings(log_format="xml")


def test_settings_read_prefixed_environment(monkeypatch):
    monkeypatch.setenv("RISKMARKET_PARALLEL_SOLVES", "false")
    monkeypatch.setenv("RISKMARKET_OUTPUT_DIR", "/tmp/market-runs")
    cfg = Settings()
    assert cfg.parallel_solves is False
    assert cfg.output_dir == "/tmp/market-runs"


def test_market_config_sections():
    config = ConfigLoader.load_config("market")
    assert {"case_study", "oracle", "reports"} <= set(config)
    assert config["case_study"]["beliefs_per_producer"] == 10
    assert ConfigLoader.load_config("market") is config


def test_missing_config_raises(tmp_path, monkeypatch):
    monkeypatch.setenv("RISKMARKET_CONFIG_DIR", str(tmp_path))
    with pytest.raises(FileNotFoundError):
        ConfigLoader.load_config("absent")


def test_get_config_value_reads_top_level_keys():
    assert ConfigLoader.get_config_value("oracle") is ConfigLoader.load_config("market")["oracle"]
    assert ConfigLoader.get_config_value("absent_key", {"fallback": True}) == {"fallback": True}
