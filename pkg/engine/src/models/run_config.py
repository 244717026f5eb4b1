from pathlib import Path
from typing import FrozenSet, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from engine.src.models.program import FormulationKind

Command = Literal["clear", "compare", "verify", "casegen"]
OutputFormat = Literal["json-report", "csv-tables", "plot-data"]


class RunConfig(BaseModel):
    """One validated CLI invocation."""

    model_config = ConfigDict(frozen=True)

    command: Command
    case_path: Optional[Path] = None
    builtin_seed: Optional[int] = None
    kind: FormulationKind = FormulationKind.RISK_TRADING
    eps_g: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    eps_f: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    out: Path
    formats: FrozenSet[OutputFormat] = frozenset({"json-report", "csv-tables", "plot-data"})
    dump_program: bool = False
    strict: bool = False

    @model_validator(mode="after")
    def one_case_source(self) -> "RunConfig":
        if self.command == "casegen":
            if self.builtin_seed is None:
                raise ValueError("casegen needs --seed")
            return self
        if (self.case_path is None) == (self.builtin_seed is None):
            raise ValueError("give exactly one of --case or --builtin-seed")
        return self
