"""Market instance data model.

All models are frozen. Matrices are stored exactly as read (row-major nested
lists); eigenvalue clipping of near-PSD matrices happens where they are used.
"""
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, model_validator
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-9

PartitionUnit = Literal["mw", "fraction_of_total_forecast", "sigma_common"]


def _check_covariance(matrix: List[List[float]], size: int, owner: str) -> None:
    if size == 0 and len(matrix) == 0:
        return
    arr = np.asarray(matrix, dtype=float)
    if arr.shape != (size, size):
        raise ValueError(f"{owner}: expected a {size}x{size} matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{owner}: matrix has non-finite entries")
    if np.max(np.abs(arr - arr.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError(f"{owner}: matrix is not symmetric")
    min_eig = np.linalg.eigvalsh(0.5 * (arr + arr.T))[0]
    if min_eig < -PSD_TOL:
        raise ValueError(f"{owner}: matrix is not positive semidefinite (min eigenvalue {min_eig:.6g})")


class Generator(BaseModel):
    """Conventional producer with a quadratic cost c2 p^2 + c1 p + c0."""

    model_config = ConfigDict(frozen=True)

    id: str
    c2: float
    c1: float
    c0: float = 0.0
    p_max: float
    p_min: float = 0.0
    node: str

    @model_validator(mode="after")
    def check_limits(self) -> "Generator":
        if self.p_min > self.p_max:
            raise ValueError(f"generator {self.id}: p_min {self.p_min} exceeds p_max {self.p_max}")
        if self.c2 < 0:
            raise ValueError(f"generator {self.id}: c2 must be non-negative, got {self.c2}")
        return self

    def cost(self, p: float) -> float:
        return self.c2 * p * p + self.c1 * p + self.c0


class ResUnit(BaseModel):
    """Renewable unit with a point forecast; its error is zero-mean Gaussian."""

    model_config = ConfigDict(frozen=True)

    id: str
    forecast_mw: float
    node: str

    @model_validator(mode="after")
    def check_forecast(self) -> "ResUnit":
        if self.forecast_mw < 0:
            raise ValueError(f"res unit {self.id}: forecast_mw must be non-negative, got {self.forecast_mw}")
        return self


class Node(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    demand_mw: float = 0.0


class Line(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    id: Optional[str] = None
    from_node: str = Field(alias="from")
    to_node: str = Field(alias="to")
    reactance: float
    flow_limit_mw: float


class Network(BaseModel):
    """Nodes with demand and DC lines. No lines means a copper plate."""

    model_config = ConfigDict(frozen=True)

    nodes: List[Node]
    lines: List[Line] = []
    slack_node: str

    @model_validator(mode="after")
    def check_topology(self) -> "Network":
        ids = [n.id for n in self.nodes]
        if not ids:
            raise ValueError("network: at least one node is required")
        if len(set(ids)) != len(ids):
            raise ValueError("network: node ids must be unique")
        if self.slack_node not in ids:
            raise ValueError(f"network: slack node {self.slack_node} is not a network node")
        line_ids = self.line_ids()
        if len(set(line_ids)) != len(line_ids):
            raise ValueError("network: line ids must be unique")
        for lid, line in zip(line_ids, self.lines):
            for end in (line.from_node, line.to_node):
                if end not in ids:
                    raise ValueError(f"line {lid}: unknown node {end}")
            if line.from_node == line.to_node:
                raise ValueError(f"line {lid}: both ends at node {line.from_node}")
            if line.flow_limit_mw <= 0:
                raise ValueError(f"line {lid}: flow_limit_mw must be positive")
            if line.reactance <= 0:
                raise ValueError(f"line {lid}: reactance must be positive")
        if self.lines:
            index = self.node_index()
            rows = [index[line.from_node] for line in self.lines]
            cols = [index[line.to_node] for line in self.lines]
            graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ids), len(ids)))
            n_components, _ = connected_components(graph, directed=False)
            if n_components > 1:
                raise ValueError(f"network: graph is not connected ({n_components} components)")
        return self

    def node_index(self) -> Dict[str, int]:
        return {n.id: j for j, n in enumerate(self.nodes)}

    def line_ids(self) -> List[str]:
        return [line.id if line.id is not None else f"line{j}" for j, line in enumerate(self.lines)]

    @property
    def total_demand(self) -> float:
        return float(sum(n.demand_mw for n in self.nodes))


class RiskSet(BaseModel):
    """Finite set of covariance beliefs held by one producer."""

    model_config = ConfigDict(frozen=True)

    producer: str
    covariances: List[List[List[float]]]

    @property
    def size(self) -> int:
        return len(self.covariances)

    def matrix(self, k: int) -> np.ndarray:
        return np.asarray(self.covariances[k], dtype=float)


class EventPartition(BaseModel):
    """Breakpoints splitting the aggregate forecast error into W intervals."""

    model_config = ConfigDict(frozen=True)

    breakpoints: List[float]
    unit: PartitionUnit = "fraction_of_total_forecast"

    @model_validator(mode="after")
    def check_breakpoints(self) -> "EventPartition":
        if not self.breakpoints:
            raise ValueError("partition: at least one breakpoint is required (W >= 2)")
        if not all(np.isfinite(self.breakpoints)):
            raise ValueError("partition: breakpoints must be finite")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("partition: breakpoints must be strictly increasing")
        return self

    @property
    def num_events(self) -> int:
        return len(self.breakpoints) + 1

    def breakpoints_mw(self, total_forecast: float, sigma_common: float = 1.0) -> np.ndarray:
        """Breakpoints expressed in MW of aggregate forecast error."""
        bp = np.asarray(self.breakpoints, dtype=float)
        if self.unit == "mw":
            return bp
        if self.unit == "fraction_of_total_forecast":
            return bp * total_forecast
        return bp * sigma_common

    def labels(self, total_forecast: float, sigma_common: float = 1.0) -> List[str]:
        edges = ["-inf", *[f"{b:g}" for b in self.breakpoints_mw(total_forecast, sigma_common)], "inf"]
        return [f"[{lo},{hi})" for lo, hi in zip(edges[:-1], edges[1:])]


class CaseMeta(BaseModel):
    model_config = ConfigDict(frozen=True, extra="allow")

    seed: Optional[int] = None
    name: Optional[str] = None


class Case(BaseModel):
    """
    Full market instance.

    Validation context key ``require_common_belief`` (default True) controls
    whether ``sigma_common`` must appear in every producer's risk set.
    """

    model_config = ConfigDict(frozen=True)

    generators: List[Generator]
    res_units: List[ResUnit]
    network: Network
    sigma_common: List[List[float]]
    risk_sets: List[RiskSet]
    eps_g: float
    eps_f: float
    partition: EventPartition
    meta: CaseMeta = CaseMeta()

    @model_validator(mode="after")
    def check_case(self, info: ValidationInfo) -> "Case":
        context = info.context or {}
        n_res = len(self.res_units)
        node_ids = set(self.network.node_index())

        if not self.generators:
            raise ValueError("case: at least one generator is required")
        gen_ids = [g.id for g in self.generators]
        if len(set(gen_ids)) != len(gen_ids):
            raise ValueError("case: generator ids must be unique")
        res_ids = [u.id for u in self.res_units]
        if len(set(res_ids)) != len(res_ids):
            raise ValueError("case: res unit ids must be unique")
        for g in self.generators:
            if g.node not in node_ids:
                raise ValueError(f"generator {g.id}: unknown node {g.node}")
        for u in self.res_units:
            if u.node not in node_ids:
                raise ValueError(f"res unit {u.id}: unknown node {u.node}")

        for name in ("eps_g", "eps_f"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"case: {name} must lie in (0, 1), got {value}")

        _check_covariance(self.sigma_common, n_res, "sigma_common")

        producers = [r.producer for r in self.risk_sets]
        if sorted(producers) != sorted(gen_ids) or len(set(producers)) != len(producers):
            raise ValueError(
                f"case: risk sets cover {sorted(producers)}, expected exactly one per generator {sorted(gen_ids)}"
            )
        sizes = {r.size for r in self.risk_sets}
        if min(sizes) < 1:
            empty = [r.producer for r in self.risk_sets if r.size == 0][0]
            raise ValueError(f"risk set {empty}: at least one covariance is required")
        if len(sizes) > 1:
            raise ValueError(f"case: risk sets must share one size K, got sizes {sorted(sizes)}")
        for r in self.risk_sets:
            for k, cov in enumerate(r.covariances):
                _check_covariance(cov, n_res, f"risk set {r.producer} belief {k}")

        if context.get("require_common_belief", True):
            common = np.asarray(self.sigma_common, dtype=float)
            for r in self.risk_sets:
                if not any(np.allclose(r.matrix(k), common, rtol=0.0, atol=SYMMETRY_TOL) for k in range(r.size)):
                    raise ValueError(f"risk set {r.producer}: sigma_common is not one of its beliefs")

        supply = sum(g.p_max for g in self.generators) + sum(u.forecast_mw for u in self.res_units)
        if self.network.total_demand > supply:
            raise ValueError(
                f"case: total demand {self.network.total_demand} MW exceeds capacity plus forecast {supply} MW"
            )
        return self

    @property
    def num_generators(self) -> int:
        return len(self.generators)

    @property
    def num_res(self) -> int:
        return len(self.res_units)

    @property
    def num_beliefs(self) -> int:
        return self.risk_sets[0].size

    @property
    def total_forecast(self) -> float:
        return float(sum(u.forecast_mw for u in self.res_units))

    @property
    def total_demand(self) -> float:
        return self.network.total_demand

    def risk_set(self, producer: str) -> RiskSet:
        for r in self.risk_sets:
            if r.producer == producer:
                return r
        raise KeyError(producer)

    def ordered_risk_sets(self) -> List[RiskSet]:
        """Risk sets in generator order."""
        return [self.risk_set(g.id) for g in self.generators]

    def sigma_common_matrix(self) -> np.ndarray:
        if self.num_res == 0:
            return np.zeros((0, 0))
        return np.asarray(self.sigma_common, dtype=float)
