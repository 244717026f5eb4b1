"""Solver-agnostic conic program.

Standard form::

    minimize    1/2 x'Qx + c'x + c0
    subject to  A x  = b                     (space "eq")
                G x <= h                     (space "ineq")
                ||F_j x||^2 + q_j'x <= r_j   (space "quad")
                ||F_b x + g_b|| <= d_b'x + e_b   (space "soc")

Dual sign convention, used by every price formula in the package::

    L = f(x) + y'(Ax - b) + z'(Gx - h) + sum_j nu_j (||F_j x||^2 + q_j'x - r_j)
             - sum_b (u_b * (d_b'x + e_b) + v_b'(F_b x + g_b))

with z >= 0, nu >= 0 and ||v_b|| <= u_b.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Tuple

import numpy as np
import scipy.sparse as sp

from engine.src.errors import LabelError

SPACES = ("var", "eq", "ineq", "quad", "soc")


class FormulationKind(str, Enum):
    RISK_NEUTRAL = "RISK_NEUTRAL"
    RISK_AVERSE = "RISK_AVERSE"
    RISK_TRADING = "RISK_TRADING"
    # auxiliary programs built by the analysis layer
    TRADE_SELECTION = "TRADE_SELECTION"
    HULL_INTERSECTION = "HULL_INTERSECTION"

    @classmethod
    def from_cli(cls, name: str) -> "FormulationKind":
        return {"rn": cls.RISK_NEUTRAL, "ra": cls.RISK_AVERSE, "rt": cls.RISK_TRADING}[name.lower()]

    @property
    def short_name(self) -> str:
        return {"RISK_NEUTRAL": "rn", "RISK_AVERSE": "ra", "RISK_TRADING": "rt"}.get(self.value, self.value.lower())


MARKET_KINDS = (FormulationKind.RISK_NEUTRAL, FormulationKind.RISK_AVERSE, FormulationKind.RISK_TRADING)


@dataclass(frozen=True)
class QuadRow:
    label: str
    F: sp.csr_matrix
    q: np.ndarray
    r: float


@dataclass(frozen=True)
class SocBlock:
    label: str
    F: sp.csr_matrix
    g: np.ndarray
    d: np.ndarray
    e: float


@dataclass(frozen=True)
class ProgramMeta:
    """Case-derived data the pricing layer needs alongside the program."""

    generator_ids: Tuple[str, ...] = ()
    res_ids: Tuple[str, ...] = ()
    node_ids: Tuple[str, ...] = ()
    line_ids: Tuple[str, ...] = ()
    generator_nodes: Tuple[int, ...] = ()
    num_beliefs: int = 0
    num_events: int = 0
    z_g: float = 0.0
    z_f: float = 0.0
    ptdf: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    sigma_common: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    # (G, K, U, U) clipped beliefs, (G, K) aggregate deviations, (G, K, W) event probabilities
    beliefs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0, 0)))
    belief_sigmas: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    event_probs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0)))
    common_event_probs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    zero_trades: bool = False


@dataclass(frozen=True)
class ConicProgram:
    kind: FormulationKind
    num_vars: int
    Q: sp.csr_matrix
    c: np.ndarray
    c0: float
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    quad_rows: Tuple[QuadRow, ...]
    soc_blocks: Tuple[SocBlock, ...]
    labels: Mapping[str, Tuple[str, int]]
    meta: ProgramMeta

    def index(self, label: str) -> Tuple[str, int]:
        try:
            return self.labels[label]
        except KeyError:
            raise LabelError(f"program has no label {label!r}") from None

    def var(self, label: str) -> int:
        space, idx = self.index(label)
        if space != "var":
            raise LabelError(f"label {label!r} names a {space} row, not a variable")
        return idx

    def row(self, label: str, space: str) -> int:
        found, idx = self.index(label)
        if found != space:
            raise LabelError(f"label {label!r} is in space {found}, expected {space}")
        return idx

    def has(self, label: str) -> bool:
        return label in self.labels

    def labels_in(self, space: str) -> List[str]:
        """Labels of one space ordered by index."""
        return [lbl for lbl, _ in sorted(
            ((lbl, idx) for lbl, (sp_, idx) in self.labels.items() if sp_ == space),
            key=lambda item: item[1],
        )]

    @property
    def num_eq(self) -> int:
        return self.A.shape[0]

    @property
    def num_ineq(self) -> int:
        return self.G.shape[0]

    def count(self, prefix: str) -> int:
        return sum(1 for lbl in self.labels if lbl.startswith(prefix + "["))

    def size_summary(self) -> Dict[str, int]:
        return {
            "vars": self.num_vars,
            "eq": self.num_eq,
            "ineq": self.num_ineq,
            "quad": len(self.quad_rows),
            "soc": len(self.soc_blocks),
        }
