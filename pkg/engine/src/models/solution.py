from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Tuple

import numpy as np


class SolveStatus(str, Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    UNBOUNDED = "UNBOUNDED"
    NUMERICAL_TROUBLE = "NUMERICAL_TROUBLE"


@dataclass(frozen=True)
class Solution:
    """Primal values and multipliers of one solve, signed per the program convention."""

    status: SolveStatus
    primal: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    quad_duals: np.ndarray
    # one (cone scalar dual, cone vector dual) pair per soc block
    soc_duals: Tuple[Tuple[float, np.ndarray], ...]
    objective_value: float
    solver_name: str = ""
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL
