"""Assemble market-clearing formulations as solver-agnostic conic programs.

Three market formulations share one variable layout::

    p_G[i], alpha[i][u], s[i]          every kind
    t[i]                               RISK_AVERSE, RISK_TRADING
    a[i][w]                            RISK_TRADING
    flow_std[l]                        cases with lines

Rows are oriented so that duals read directly as market prices under the
convention documented in ``engine.src.models.program``: the balance row is
``-sum_i p_G[i] = sum_u f_u - D`` (dual = energy price), the reserve row is
``-sum_i alpha[i][u] = -1`` (dual = reserve price) and the security clearing
row is ``sum_i a[i][w] = 0`` (dual = risk price).
"""
import logging
from typing import Dict, Iterable, List, Sequence, TextIO, Tuple

import numpy as np
import scipy.sparse as sp

from engine.src.errors import ProgramBuildError
from engine.src.models.case import Case, Network
from engine.src.models.program import (
    MARKET_KINDS,
    ConicProgram,
    FormulationKind,
    ProgramMeta,
    QuadRow,
    SocBlock,
)
from engine.src.services.stochastic_kernel import (
    aggregate_sigma,
    event_probabilities,
    matrix_sqrt,
    psd_clip,
    std_normal_quantile,
)

logger = logging.getLogger(__name__)

Q_PSD_TOL = 1e-9


class _Assembler:
    """Collects labelled variables and rows, then freezes them into a ConicProgram."""

    def __init__(self):
        self.labels: Dict[str, Tuple[str, int]] = {}
        self.num_vars = 0
        self._eq: List[Tuple[Dict[int, float], float]] = []
        self._ineq: List[Tuple[Dict[int, float], float]] = []
        self._quad: List[Tuple[str, np.ndarray, Sequence[int], Dict[int, float], float]] = []
        self._soc: List[Tuple[str, np.ndarray, Sequence[int], np.ndarray, int, float]] = []
        self._q_entries: List[Tuple[int, int, float]] = []
        self.c: Dict[int, float] = {}
        self.c0 = 0.0

    def _register(self, label: str, space: str, idx: int) -> None:
        if label in self.labels:
            raise ProgramBuildError(f"duplicate label {label!r}")
        self.labels[label] = (space, idx)

    def add_var(self, label: str) -> int:
        self._register(label, "var", self.num_vars)
        self.num_vars += 1
        return self.num_vars - 1

    def add_eq(self, label: str, coefs: Dict[int, float], rhs: float) -> None:
        self._register(label, "eq", len(self._eq))
        self._eq.append((coefs, float(rhs)))

    def add_ineq(self, label: str, coefs: Dict[int, float], rhs: float) -> None:
        self._register(label, "ineq", len(self._ineq))
        self._ineq.append((coefs, float(rhs)))

    def add_quad(self, label: str, F: np.ndarray, cols: Sequence[int], q: Dict[int, float], r: float) -> None:
        self._register(label, "quad", len(self._quad))
        self._quad.append((label, np.atleast_2d(F), list(cols), q, float(r)))

    def add_soc(self, label: str, F: np.ndarray, cols: Sequence[int], g: np.ndarray, d_col: int, e: float = 0.0) -> None:
        self._register(label, "soc", len(self._soc))
        self._soc.append((label, np.atleast_2d(F), list(cols), np.asarray(g, dtype=float), d_col, float(e)))

    def add_quadratic_objective(self, block: np.ndarray, cols: Sequence[int]) -> None:
        """Add 1/2 x_cols' block x_cols to the objective."""
        for a, ca in enumerate(cols):
            for b, cb in enumerate(cols):
                if block[a, b] != 0.0:
                    self._q_entries.append((ca, cb, float(block[a, b])))

    def add_linear_objective(self, col: int, value: float) -> None:
        self.c[col] = self.c.get(col, 0.0) + float(value)

    def _rows(self, rows: List[Tuple[Dict[int, float], float]]) -> Tuple[sp.csr_matrix, np.ndarray]:
        data, ri, ci = [], [], []
        for r, (coefs, _) in enumerate(rows):
            for col, val in coefs.items():
                if val != 0.0:
                    ri.append(r)
                    ci.append(col)
                    data.append(val)
        mat = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), self.num_vars))
        return mat, np.array([rhs for _, rhs in rows], dtype=float)

    def _block(self, F: np.ndarray, cols: Sequence[int]) -> sp.csr_matrix:
        out = sp.lil_matrix((F.shape[0], self.num_vars))
        if F.size:
            out[:, list(cols)] = F
        return out.tocsr()

    def finish(self, kind: FormulationKind, meta: ProgramMeta) -> ConicProgram:
        n = self.num_vars
        if self._q_entries:
            ri, ci, data = zip(*self._q_entries)
            Q = sp.csr_matrix((data, (ri, ci)), shape=(n, n))
        else:
            Q = sp.csr_matrix((n, n))
        Q = ((Q + Q.T) * 0.5).tocsr()
        if Q.nnz:
            min_eig = float(np.linalg.eigvalsh(Q.toarray())[0])
            if min_eig < -Q_PSD_TOL:
                raise ProgramBuildError(f"objective Hessian is not PSD (min eigenvalue {min_eig:.3g})")
        c = np.zeros(n)
        for col, val in self.c.items():
            c[col] = val
        A, b = self._rows(self._eq)
        G, h = self._rows(self._ineq)
        quad_rows = []
        for label, F, cols, q_coefs, r in self._quad:
            q = np.zeros(n)
            for col, val in q_coefs.items():
                q[col] += val
            quad_rows.append(QuadRow(label=label, F=self._block(F, cols), q=q, r=r))
        soc_blocks = []
        for label, F, cols, g, d_col, e in self._soc:
            d = np.zeros(n)
            d[d_col] = 1.0
            soc_blocks.append(SocBlock(label=label, F=self._block(F, cols), g=g, d=d, e=e))
        return ConicProgram(
            kind=kind,
            num_vars=n,
            Q=Q,
            c=c,
            c0=float(self.c0),
            A=A,
            b=b,
            G=G,
            h=h,
            quad_rows=tuple(quad_rows),
            soc_blocks=tuple(soc_blocks),
            labels=dict(self.labels),
            meta=meta,
        )


def ptdf_matrix(network: Network) -> np.ndarray:
    """
    DC power transfer distribution factors, lines x nodes, slack column zero.

    Flow on line l from ``from`` to ``to`` is ``sum_n ptdf[l, n] * injection[n]``.
    """
    n_nodes = len(network.nodes)
    n_lines = len(network.lines)
    if n_lines == 0:
        return np.zeros((0, n_nodes))
    index = network.node_index()
    slack = index[network.slack_node]
    incidence = np.zeros((n_lines, n_nodes))
    susceptance = np.zeros(n_lines)
    for l, line in enumerate(network.lines):
        incidence[l, index[line.from_node]] = 1.0
        incidence[l, index[line.to_node]] = -1.0
        susceptance[l] = 1.0 / line.reactance
    b_bus = incidence.T @ (susceptance[:, None] * incidence)
    keep = np.array([j for j in range(n_nodes) if j != slack], dtype=int)
    x_bus = np.zeros((n_nodes, n_nodes))
    if keep.size:
        x_bus[np.ix_(keep, keep)] = np.linalg.inv(b_bus[np.ix_(keep, keep)])
    return (susceptance[:, None] * incidence) @ x_bus


def case_statistics(case: Case) -> Dict[str, np.ndarray]:
    """Clipped beliefs, aggregate deviations and event probabilities of a case."""
    n_res = case.num_res
    sigma_c = psd_clip(case.sigma_common_matrix())
    risk_sets = case.ordered_risk_sets()
    beliefs = np.zeros((case.num_generators, case.num_beliefs, n_res, n_res))
    for i, rs in enumerate(risk_sets):
        for k in range(rs.size):
            mat = rs.matrix(k) if n_res else np.zeros((0, 0))
            if mat.shape != (n_res, n_res):
                raise ProgramBuildError(f"risk set {rs.producer} belief {k} has shape {mat.shape}, expected {(n_res, n_res)}")
            beliefs[i, k] = psd_clip(mat)
    common_sigma = aggregate_sigma(sigma_c)
    sigmas = np.array([[aggregate_sigma(beliefs[i, k]) for k in range(case.num_beliefs)] for i in range(case.num_generators)])
    probs = np.array([
        [event_probabilities(case.partition, sigmas[i, k], case.total_forecast, common_sigma) for k in range(case.num_beliefs)]
        for i in range(case.num_generators)
    ])
    common_probs = event_probabilities(case.partition, common_sigma, case.total_forecast, common_sigma)
    return {
        "sigma_common": sigma_c,
        "beliefs": beliefs,
        "belief_sigmas": sigmas,
        "event_probs": probs,
        "common_event_probs": common_probs,
    }


def _declare_market_vars(asm: _Assembler, case: Case, kind: FormulationKind) -> Dict[str, np.ndarray]:
    gen_ids = [g.id for g in case.generators]
    res_ids = [u.id for u in case.res_units]
    W = case.partition.num_events
    cols: Dict[str, np.ndarray] = {}
    cols["p"] = np.array([asm.add_var(f"p_G[{gid}]") for gid in gen_ids], dtype=int)
    cols["alpha"] = np.array(
        [[asm.add_var(f"alpha[{gid}][{uid}]") for uid in res_ids] for gid in gen_ids], dtype=int
    ).reshape(len(gen_ids), len(res_ids))
    cols["s"] = np.array([asm.add_var(f"s[{gid}]") for gid in gen_ids], dtype=int)
    if kind in (FormulationKind.RISK_AVERSE, FormulationKind.RISK_TRADING):
        cols["t"] = np.array([asm.add_var(f"t[{gid}]") for gid in gen_ids], dtype=int)
    if kind == FormulationKind.RISK_TRADING:
        cols["a"] = np.array(
            [[asm.add_var(f"a[{gid}][{w}]") for w in range(W)] for gid in gen_ids], dtype=int
        ).reshape(len(gen_ids), W)
    cols["flow_std"] = np.array([asm.add_var(f"flow_std[{lid}]") for lid in case.network.line_ids()], dtype=int)
    return cols


def build(case: Case, kind: FormulationKind, *, zero_trades: bool = False) -> ConicProgram:
    """
    Build one of the three market-clearing formulations for a validated case.

    Args:
        case (Case): Validated market instance.
        kind (FormulationKind): RISK_NEUTRAL, RISK_AVERSE or RISK_TRADING.
        zero_trades (bool): Pin every security position a[i][w] to zero
            (RISK_TRADING only) with ``ads_zero[i][w]`` rows.

    Returns:
        ConicProgram: Program with a complete label map and case metadata.

    Raises:
        ProgramBuildError: On an unknown kind or inconsistent dimensions.
    """
    if kind not in MARKET_KINDS:
        raise ProgramBuildError(f"unsupported formulation {kind!r}")
    if zero_trades and kind != FormulationKind.RISK_TRADING:
        raise ProgramBuildError("zero_trades only applies to RISK_TRADING")

    stats = case_statistics(case)
    sigma_c = stats["sigma_common"]
    root_c = matrix_sqrt(sigma_c)
    beliefs = stats["beliefs"]
    probs = stats["event_probs"]
    z_g = float(std_normal_quantile(1.0 - case.eps_g))
    z_f = float(std_normal_quantile(1.0 - case.eps_f))

    network = case.network
    node_index = network.node_index()
    ptdf = ptdf_matrix(network)
    gen_nodes = [node_index[g.node] for g in case.generators]
    res_nodes = [node_index[u.node] for u in case.res_units]
    demand = np.array([n.demand_mw for n in network.nodes])
    forecast = np.array([u.forecast_mw for u in case.res_units])

    G, U, W, K = case.num_generators, case.num_res, case.partition.num_events, case.num_beliefs
    asm = _Assembler()
    cols = _declare_market_vars(asm, case, kind)
    p, alpha, s = cols["p"], cols["alpha"], cols["s"]

    # objective
    for i, gen in enumerate(case.generators):
        asm.add_quadratic_objective(np.array([[2.0 * gen.c2]]), [p[i]])
        asm.add_linear_objective(p[i], gen.c1)
        asm.c0 += gen.c0
        if kind == FormulationKind.RISK_NEUTRAL:
            asm.add_quadratic_objective(2.0 * gen.c2 * sigma_c, alpha[i])
        else:
            asm.add_linear_objective(cols["t"][i], 1.0)

    # energy balance and reserve sufficiency
    asm.add_eq("balance[system]", {int(col): -1.0 for col in p}, forecast.sum() - demand.sum())
    for u, res in enumerate(case.res_units):
        asm.add_eq(f"reserve_suff[{res.id}]", {int(alpha[i, u]): -1.0 for i in range(G)}, -1.0)

    if kind == FormulationKind.RISK_TRADING:
        a = cols["a"]
        for w in range(W):
            asm.add_eq(f"ads_clear[{w}]", {int(a[i, w]): 1.0 for i in range(G)}, 0.0)
        if zero_trades:
            for i, gen in enumerate(case.generators):
                for w in range(W):
                    asm.add_eq(f"ads_zero[{gen.id}][{w}]", {int(a[i, w]): 1.0}, 0.0)

    # capacity chance constraints and participation bounds
    for i, gen in enumerate(case.generators):
        asm.add_ineq(f"cap_hi[{gen.id}]", {int(p[i]): 1.0, int(s[i]): z_g}, gen.p_max)
        asm.add_ineq(f"cap_lo[{gen.id}]", {int(p[i]): -1.0, int(s[i]): z_g}, -gen.p_min)
    for i, gen in enumerate(case.generators):
        for u, res in enumerate(case.res_units):
            asm.add_ineq(f"alpha_hi[{gen.id}][{res.id}]", {int(alpha[i, u]): 1.0}, 1.0)
            asm.add_ineq(f"alpha_lo[{gen.id}][{res.id}]", {int(alpha[i, u]): -1.0}, 0.0)

    # flow chance constraints
    flow_std = cols["flow_std"]
    for l, lid in enumerate(network.line_ids()):
        limit = network.lines[l].flow_limit_mw
        # flow caused by forecasts and demand at the nominal point
        fixed = float(ptdf[l, res_nodes] @ forecast) - float(ptdf[l] @ demand)
        hi: Dict[int, float] = {}
        for i in range(G):
            hi[int(p[i])] = hi.get(int(p[i]), 0.0) + ptdf[l, gen_nodes[i]]
        lo = {col: -val for col, val in hi.items()}
        hi[int(flow_std[l])] = z_f
        lo[int(flow_std[l])] = z_f
        asm.add_ineq(f"flow_hi[{lid}]", hi, limit - fixed)
        asm.add_ineq(f"flow_lo[{lid}]", lo, limit + fixed)

    # worst-case variance epigraphs
    if kind in (FormulationKind.RISK_AVERSE, FormulationKind.RISK_TRADING):
        t = cols["t"]
        for i, gen in enumerate(case.generators):
            for k in range(K):
                F = np.sqrt(gen.c2) * matrix_sqrt(beliefs[i, k])
                q = {int(t[i]): -1.0}
                if kind == FormulationKind.RISK_TRADING:
                    for w in range(W):
                        q[int(cols["a"][i, w])] = -float(probs[i, k, w])
                asm.add_quad(f"epigraph[{gen.id}][{k}]", F, alpha[i], q, 0.0)

    # cone memberships
    for i, gen in enumerate(case.generators):
        asm.add_soc(f"soc_s[{gen.id}]", root_c, alpha[i], np.zeros(U), int(s[i]))
    for l, lid in enumerate(network.line_ids()):
        F = np.hstack([-ptdf[l, gen_nodes[i]] * root_c for i in range(G)])
        g = root_c @ ptdf[l, res_nodes] if U else np.zeros(0)
        asm.add_soc(f"soc_flow[{lid}]", F, alpha.reshape(-1), g, int(flow_std[l]))

    meta = ProgramMeta(
        generator_ids=tuple(g.id for g in case.generators),
        res_ids=tuple(u.id for u in case.res_units),
        node_ids=tuple(n.id for n in network.nodes),
        line_ids=tuple(network.line_ids()),
        generator_nodes=tuple(gen_nodes),
        num_beliefs=K,
        num_events=W,
        z_g=z_g,
        z_f=z_f,
        ptdf=ptdf,
        sigma_common=sigma_c,
        beliefs=beliefs,
        belief_sigmas=stats["belief_sigmas"],
        event_probs=probs,
        common_event_probs=stats["common_event_probs"],
        zero_trades=zero_trades,
    )
    program = asm.finish(kind, meta)
    logger.debug("built program", extra={"formulation": kind.value, **program.size_summary()})
    return program


def build_trade_selection(
    case: Case,
    source: ConicProgram,
    alpha: np.ndarray,
    risk_budget: float,
) -> ConicProgram:
    """
    Minimum-norm security positions on the optimal face of a risk-trading solve.

    With dispatch and participation factors fixed, the optimal face is the set
    of (t, a) that clear every event, satisfy every epigraph and keep
    ``sum_i t_i`` within ``risk_budget``. The program minimizes ``||a||^2`` over it.

    Args:
        case (Case): The cleared case.
        source (ConicProgram): The RISK_TRADING program that was solved.
        alpha (np.ndarray): Optimal participation factors, shape (G, U).
        risk_budget (float): Upper bound on the total epigraph value.

    Returns:
        ConicProgram: A TRADE_SELECTION program over variables t[i], a[i][w].
    """
    if source.kind != FormulationKind.RISK_TRADING:
        raise ProgramBuildError("trade selection needs a RISK_TRADING program")
    meta = source.meta
    G, W, K = len(meta.generator_ids), meta.num_events, meta.num_beliefs
    asm = _Assembler()
    t = [asm.add_var(f"t[{gid}]") for gid in meta.generator_ids]
    a = np.array([[asm.add_var(f"a[{gid}][{w}]") for w in range(W)] for gid in meta.generator_ids], dtype=int)
    asm.add_quadratic_objective(2.0 * np.eye(G * W), a.reshape(-1))
    for w in range(W):
        asm.add_eq(f"ads_clear[{w}]", {int(a[i, w]): 1.0 for i in range(G)}, 0.0)
    for i, gen in enumerate(case.generators):
        for k in range(K):
            variance = gen.c2 * float(alpha[i] @ meta.beliefs[i, k] @ alpha[i])
            coefs = {t[i]: -1.0}
            for w in range(W):
                coefs[int(a[i, w])] = -float(meta.event_probs[i, k, w])
            asm.add_ineq(f"epigraph[{gen.id}][{k}]", coefs, -variance)
    asm.add_ineq("risk_budget[system]", {col: 1.0 for col in t}, risk_budget)
    return asm.finish(FormulationKind.TRADE_SELECTION, meta)


def build_hull_intersection(point_sets: Sequence[np.ndarray], owners: Sequence[str]) -> ConicProgram:
    """
    Feasibility program: do the convex hulls of the given point sets share a point?

    Args:
        point_sets (Sequence[np.ndarray]): One (K_j, D) array of points per owner.
        owners (Sequence[str]): Owner names used in the labels.

    Returns:
        ConicProgram: A HULL_INTERSECTION program with convex weights
        ``weight[owner][k]`` and matching rows ``match[owner][d]``.
    """
    if len(point_sets) != len(owners) or not point_sets:
        raise ProgramBuildError("hull intersection needs one point set per owner")
    dims = {np.asarray(ps).shape[1] for ps in point_sets}
    if len(dims) != 1:
        raise ProgramBuildError(f"point sets disagree on dimension: {sorted(dims)}")
    asm = _Assembler()
    weights = []
    for owner, ps in zip(owners, point_sets):
        weights.append([asm.add_var(f"weight[{owner}][{k}]") for k in range(len(ps))])
    for owner, cols in zip(owners, weights):
        asm.add_eq(f"simplex[{owner}]", {col: 1.0 for col in cols}, 1.0)
        for k, col in enumerate(cols):
            asm.add_ineq(f"weight_lo[{owner}][{k}]", {col: -1.0}, 0.0)
    ref = np.asarray(point_sets[0], dtype=float)
    for owner, ps, cols in zip(owners[1:], point_sets[1:], weights[1:]):
        ps = np.asarray(ps, dtype=float)
        for d in range(ref.shape[1]):
            coefs: Dict[int, float] = {}
            for k, col in enumerate(cols):
                coefs[col] = coefs.get(col, 0.0) + ps[k, d]
            for k, col in enumerate(weights[0]):
                coefs[col] = coefs.get(col, 0.0) - ref[k, d]
            asm.add_eq(f"match[{owner}][{d}]", coefs, 0.0)
    return asm.finish(FormulationKind.HULL_INTERSECTION, ProgramMeta())


def _write_coo(stream: TextIO, name: str, mat: sp.spmatrix) -> None:
    coo = sp.coo_matrix(mat)
    stream.write(f"[{name}] {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
    for i, j, v in sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())):
        stream.write(f"{i} {j} {v!r}\n")


def _write_vec(stream: TextIO, name: str, vec: Iterable[float]) -> None:
    values = np.asarray(list(vec), dtype=float)
    nz = np.flatnonzero(values)
    stream.write(f"[{name}] {values.size} {nz.size}\n")
    for i in nz:
        stream.write(f"{int(i)} {float(values[i])!r}\n")


def dump_program(program: ConicProgram, stream: TextIO) -> None:
    """Write a program in the sparse text format described in docs/program_format.md."""
    stream.write("# conic-program v1\n")
    stream.write(f"kind {program.kind.value}\n")
    stream.write(f"vars {program.num_vars}\n")
    stream.write(f"c0 {program.c0!r}\n")
    stream.write(f"[labels] {len(program.labels)}\n")
    for label, (space, idx) in sorted(program.labels.items(), key=lambda item: (item[1][0], item[1][1])):
        stream.write(f"{space} {idx} {label}\n")
    _write_coo(stream, "Q", program.Q)
    _write_vec(stream, "c", program.c)
    _write_coo(stream, "A", program.A)
    _write_vec(stream, "b", program.b)
    _write_coo(stream, "G", program.G)
    _write_vec(stream, "h", program.h)
    for j, row in enumerate(program.quad_rows):
        stream.write(f"[quad] {j} {row.label} r {row.r!r}\n")
        _write_coo(stream, "quad.F", row.F)
        _write_vec(stream, "quad.q", row.q)
    for j, block in enumerate(program.soc_blocks):
        stream.write(f"[soc] {j} {block.label} e {block.e!r}\n")
        _write_coo(stream, "soc.F", block.F)
        _write_vec(stream, "soc.g", block.g)
        _write_vec(stream, "soc.d", block.d)

