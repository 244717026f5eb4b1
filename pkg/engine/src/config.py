from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    environment: str = Field("development", json_schema_extra={"env": "RISKMARKET_ENVIRONMENT"})
    app_name: str = Field("risk-trading-market", json_schema_extra={"env": "RISKMARKET_APP_NAME"})
    debug: bool = Field(False, json_schema_extra={"env": "RISKMARKET_DEBUG"})

    # logging
    log_level: str = Field("INFO", json_schema_extra={"env": "RISKMARKET_LOG_LEVEL"})
    log_format: str = Field("json", json_schema_extra={"env": "RISKMARKET_LOG_FORMAT"})

    # default artifact directory for the cli
    output_dir: str = Field("./runs", json_schema_extra={"env": "RISKMARKET_OUTPUT_DIR"})

    # embedded conic solver
    solver: str = Field("CLARABEL", json_schema_extra={"env": "RISKMARKET_SOLVER"})
    solver_max_iter: int = Field(500, json_schema_extra={"env": "RISKMARKET_SOLVER_MAX_ITER"})
    solver_tol_gap_abs: float = Field(1e-9, json_schema_extra={"env": "RISKMARKET_SOLVER_TOL_GAP_ABS"})
    solver_tol_gap_rel: float = Field(1e-9, json_schema_extra={"env": "RISKMARKET_SOLVER_TOL_GAP_REL"})
    solver_tol_feas: float = Field(1e-9, json_schema_extra={"env": "RISKMARKET_SOLVER_TOL_FEAS"})
    solver_retry_tol: float = Field(1e-8, json_schema_extra={"env": "RISKMARKET_SOLVER_RETRY_TOL"})

    # certification tolerances, may only be tightened
    feasibility_tol: float = Field(1e-6, json_schema_extra={"env": "RISKMARKET_FEASIBILITY_TOL"})
    gap_tol: float = Field(1e-6, json_schema_extra={"env": "RISKMARKET_GAP_TOL"})
    kkt_tol: float = Field(1e-5, json_schema_extra={"env": "RISKMARKET_KKT_TOL"})
    formula_tol: float = Field(1e-5, json_schema_extra={"env": "RISKMARKET_FORMULA_TOL"})
    dual_sign_tol: float = Field(1e-8, json_schema_extra={"env": "RISKMARKET_DUAL_SIGN_TOL"})
    trade_pin_tol: float = Field(1e-8, json_schema_extra={"env": "RISKMARKET_TRADE_PIN_TOL"})

    # behaviour switches
    require_common_belief: bool = Field(True, json_schema_extra={"env": "RISKMARKET_REQUIRE_COMMON_BELIEF"})
    parallel_solves: bool = Field(True, json_schema_extra={"env": "RISKMARKET_PARALLEL_SOLVES"})
    oracle_max_points: int = Field(200_000_000, json_schema_extra={"env": "RISKMARKET_ORACLE_MAX_POINTS"})

    model_config = SettingsConfigDict(env_prefix="RISKMARKET_", env_file=".env", extra="ignore")

    @field_validator(
        "feasibility_tol", "gap_tol", "kkt_tol", "formula_tol", "dual_sign_tol", "trade_pin_tol"
    )
    @classmethod
    def tolerance_only_tightens(cls, value: float, info) -> float:
        default = cls.model_fields[info.field_name].default
        if not 0.0 < value <= default:
            raise ValueError(f"{info.field_name} must lie in (0, {default:g}], got {value:g}")
        return value

    @field_validator("log_format")
    @classmethod
    def known_log_format(cls, value: str) -> str:
        if value not in ("json", "text"):
            raise ValueError(f"log_format must be 'json' or 'text', got {value!r}")
        return value


settings = Settings()
