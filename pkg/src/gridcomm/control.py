"""Emergency-control MILPs under full and partial communication.

Variables are named ``theta[n]``, ``omega[n]``, ``pg[g]``, ``pl[l]``,
``f[line]``, ``z[line]`` and ``I[k]``. Phase differences use per-node
``theta``. Every ``omega`` exists; bounds apply only at generators.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .grid import GridCase, Line, connected_components, regulation_alpha
from .milp import EQ, GE, LE, MilpModel, MilpSolution, ModelBuilder, solve_with_bounds
from .partition import Partition, UncontrollableArea, partition_areas

OUTCOME_TOL = 1e-6
SNAP_TOL = 1e-12


class InternalConsistencyError(RuntimeError):
    """A solver result violates a physical invariant of the outcome."""


class AccountingError(RuntimeError):
    pass


def big_m_theta(lines: list[Line]) -> float:
    """Bound on any phase difference across a connected network."""
    return sum(ln.x * ln.f_max for ln in lines)


def _alpha(case: GridCase, gid: str) -> float:
    node = case.node_map[gid]
    if node.pg_init == 0 and node.damping_d == 0:
        return 0.0
    return regulation_alpha(node, case.omega_s)


def build_full_model(case: GridCase, failed=()) -> MilpModel:
    """Optimal emergency control with every node reachable."""
    partition = partition_areas(case, failed, ())
    return _build(case, partition, name="full")


def build_partial_model(case: GridCase, partition: Partition) -> MilpModel:
    """Emergency control when ``partition.areas`` are cut off from the center.

    ``partition`` must come from :func:`partition_areas` followed by
    :func:`apply_mode`.
    """
    for area in partition.areas:
        if area.mode is None:
            raise ValueError(f"area {area.area_id} has no operating mode; call apply_mode first")
    return _build(case, partition, name="partial" if partition.areas else "full")


def _build(case: GridCase, partition: Partition, name: str) -> MilpModel:
    nodes, lines = case.without(partition.failed)
    area_of = partition.area_of()
    areas = {a.area_id: a for a in partition.areas}
    w_s, w_min, w_max = case.omega_s, case.omega_min, case.omega_max
    m_theta = big_m_theta(lines)
    m_omega = w_max - w_min

    mb = ModelBuilder(name)
    for n in nodes:
        mb.add_var(f"theta[{n.id}]", -math.inf, math.inf)
        if n.is_generator and n.id not in area_of:
            mb.add_var(f"omega[{n.id}]", w_min, w_max)
        else:
            mb.add_var(f"omega[{n.id}]", -math.inf, math.inf)
    for n in nodes:
        if n.id in area_of:
            continue
        if n.is_generator:
            mb.add_var(f"pg[{n.id}]", 0.0, math.inf)
        elif n.is_load:
            mb.add_var(f"pl[{n.id}]", n.pl_max, 0.0)

    switched = [ln for ln in lines if not (ln.from_node in area_of and ln.to_node in area_of)]
    for ln in switched:
        mb.add_var(f"f[{ln.id}]", -math.inf, math.inf)
        mb.add_var(f"z[{ln.id}]", binary=True)
    for area in partition.areas:
        for lid in area.internal_lines:
            mb.add_var(f"f[{lid}]", -math.inf, math.inf)
    for area in partition.areas:
        mb.add_var(f"I[{area.area_id}]", binary=True)

    def net_flow(nid: str) -> dict[int, float]:
        terms: dict[int, float] = {}
        for ln in case.incident[nid]:
            key = f"f[{ln.id}]"
            if key not in mb:
                continue
            j = mb[key]
            terms[j] = terms.get(j, 0.0) + (1.0 if ln.from_node == nid else -1.0)
        return terms

    # node balance: controllable nodes, then area nodes
    for n in nodes:
        if n.id in area_of:
            continue
        terms = net_flow(n.id)
        if n.is_generator:
            a = _alpha(case, n.id)
            terms[mb[f"pg[{n.id}]"]] = -1.0
            terms[mb[f"omega[{n.id}]"]] = a
            mb.add_constraint(terms, EQ, a * w_s, f"gen_balance[{n.id}]")
        elif n.is_load:
            terms[mb[f"pl[{n.id}]"]] = -1.0
            mb.add_constraint(terms, EQ, 0.0, f"load_balance[{n.id}]")
        else:
            mb.add_constraint(terms, EQ, 0.0, f"bus_balance[{n.id}]")
    for area in partition.areas:
        _area_balance(mb, case, area, net_flow)

    # switchable lines (controllable and border)
    for ln in switched:
        z = mb[f"z[{ln.id}]"]
        border = ln.from_node in area_of or ln.to_node in area_of
        _line_rows(mb, ln, z, m_theta, w_max if border else m_omega)
    for area in partition.areas:
        k = mb[f"I[{area.area_id}]"]
        for lid in area.internal_lines:
            _line_rows(mb, case.line_map[lid], k, m_theta, m_omega)

    # generator output limits (controllable only)
    for n in nodes:
        if not n.is_generator or n.id in area_of:
            continue
        a = _alpha(case, n.id)
        terms = {mb[f"pg[{n.id}]"]: 1.0, mb[f"omega[{n.id}]"]: -a}
        mb.add_constraint(terms, GE, n.pg_min - a * w_s, f"gen_min[{n.id}]")
        mb.add_constraint(terms, LE, n.pg_max - a * w_s, f"gen_max[{n.id}]")

    for area in partition.areas:
        k = mb[f"I[{area.area_id}]"]
        if area.border_lines:
            terms = {mb[f"z[{lid}]"]: 1.0 for lid in area.border_lines}
            terms[k] = -float(len(area.border_lines))
            mb.add_constraint(terms, LE, 0.0, f"island[{area.area_id}]")
        for nid in area.nodes:
            if case.node_map[nid].is_generator:
                w = mb[f"omega[{nid}]"]
                mb.add_constraint({w: 1.0, k: -w_min}, GE, 0.0, f"area_omega_min[{nid}]")
                mb.add_constraint({w: 1.0, k: -w_max}, LE, 0.0, f"area_omega_max[{nid}]")

    objective: dict[int, float] = {}
    for n in nodes:
        if n.is_load and n.id not in area_of:
            objective[mb[f"pl[{n.id}]"]] = 1.0
    for area in partition.areas:
        area_load = sum(v for nid, v in area.init_state.items() if case.node_map[nid].is_load)
        if area_load != 0.0:
            objective[mb[f"I[{area.area_id}]"]] = area_load
    mb.set_objective(objective)
    return mb.build()


def _area_balance(mb: ModelBuilder, case: GridCase, area: UncontrollableArea, net_flow) -> None:
    """Droop-only balance inside an area, released when the area is unstable.

    Each row is written with its constant part scaled by ``I``:
    ``net_flow + alpha * omega = (pg + alpha * omega_s) * I`` for generators
    and ``net_flow = pl * I`` for loads. With ``I = 1`` this is the plain
    balance. With ``I = 0`` the capacity and island rows zero every incident
    flow and the frequency bounds pin generator ``omega`` to 0, so the row
    holds trivially. Unlike a big-M relaxation it stays tight when ``I`` is
    fractional.
    """
    k = mb[f"I[{area.area_id}]"]
    w_s = case.omega_s
    for nid in area.nodes:
        node = case.node_map[nid]
        terms = net_flow(nid)
        if node.is_generator:
            a = area.alpha.get(nid, 0.0)
            const = area.init_state.get(nid, 0.0) + a * w_s
            if a:
                terms[mb[f"omega[{nid}]"]] = a
            tag = f"area_gen_balance[{nid}]"
        elif node.is_load:
            const = area.init_state.get(nid, 0.0)
            tag = f"area_load_balance[{nid}]"
        else:
            const = 0.0
            tag = f"area_bus_balance[{nid}]"
        if const:
            terms[k] = -const
        mb.add_constraint(terms, EQ, 0.0, tag)


def _line_rows(mb: ModelBuilder, ln: Line, switch: int, m_theta: float, m_omega: float) -> None:
    """Flow law, capacity and frequency coupling gated by ``switch``."""
    f = mb[f"f[{ln.id}]"]
    ti, tj = mb[f"theta[{ln.from_node}]"], mb[f"theta[{ln.to_node}]"]
    wi, wj = mb[f"omega[{ln.from_node}]"], mb[f"omega[{ln.to_node}]"]
    law = {f: ln.x, ti: -1.0, tj: 1.0}
    mb.add_constraint({**law, switch: m_theta}, LE, m_theta, f"flow_law[{ln.id}].ub")
    mb.add_constraint({**law, switch: -m_theta}, GE, -m_theta, f"flow_law[{ln.id}].lb")
    mb.add_constraint({f: 1.0, switch: -ln.f_max}, LE, 0.0, f"capacity[{ln.id}].ub")
    mb.add_constraint({f: 1.0, switch: ln.f_max}, GE, 0.0, f"capacity[{ln.id}].lb")
    freq = {wi: 1.0, wj: -1.0}
    mb.add_constraint({**freq, switch: m_omega}, LE, m_omega, f"freq_sync[{ln.id}].ub")
    mb.add_constraint({**freq, switch: -m_omega}, GE, -m_omega, f"freq_sync[{ln.id}].lb")


#: Objective slack allowed when re-flagging an area as stable.
TIE_TOL = 1e-9


def prefer_stable_areas(model: MilpModel, sol: MilpSolution, kernel: str | None = None) -> MilpSolution:
    """Break ties between optimal controls in favour of stable areas.

    An area whose loads are all zero (every area in ``P_ZERO`` mode) does
    not change the objective, so the solver may flag it unstable for no
    reason. Areas flagged unstable are revisited in id order: with every
    other binary held at its value, ``I[k]`` is set to 1 and the LP is
    re-solved. The flag is kept at 1 when that LP is feasible and no worse.
    """
    if not sol.optimal:
        return sol
    flags = sorted(
        (name for name in model.var_names if name.startswith("I[")),
        key=lambda name: int(name[2:-1]),
    )
    bins = model.binary_indices
    for name in flags:
        j = model.index[name]
        if sol.x[j] > 0.5:
            continue
        lb, ub = model.lb.copy(), model.ub.copy()
        lb[bins] = ub[bins] = np.round(sol.x[bins])
        lb[j] = ub[j] = 1.0
        trial = solve_with_bounds(model, lb, ub, kernel=kernel)
        if trial.optimal and trial.objective <= sol.objective + TIE_TOL:
            x = trial.x.copy()
            x[bins] = np.round(x[bins])
            sol = MilpSolution(
                sol.status, x=x, objective=sol.objective, nodes=sol.nodes,
                lp_iterations=sol.lp_iterations + trial.lp_iterations, index=sol.index,
            )
    return sol


@dataclass
class ControlOutcome:
    """Grid state selected by the emergency controller.

    Frequencies of nodes in unstable areas are left out of ``omega``; they
    are decided by the subsequent relay cascade.
    """

    dispatch: dict[str, float]
    effective_output: dict[str, float]
    served: dict[str, float]
    flow: dict[str, float]
    line_status: dict[str, int]
    omega: dict[str, float]
    theta: dict[str, float]
    stable: dict[int, int]
    objective: float
    pending: frozenset[str] = field(default_factory=frozenset)

    @property
    def unstable_areas(self) -> list[int]:
        return [k for k, v in self.stable.items() if v == 0]

    @property
    def served_total(self) -> float:
        return -sum(self.served.values())


def _snap(value: float) -> float:
    """Drop solver round-off around zero so shed loads read exactly 0."""
    return 0.0 if abs(value) < SNAP_TOL else value


def extract_outcome(
    case: GridCase, model: MilpModel, sol: MilpSolution, partition: Partition
) -> ControlOutcome:
    """Map solver values to grid quantities and re-check them independently."""
    if not sol.optimal:
        raise ValueError(f"cannot extract from a {sol.status.value} solution")
    nodes, lines = case.without(partition.failed)
    area_of = partition.area_of()
    areas = {a.area_id: a for a in partition.areas}
    stable = {k: int(round(sol[f"I[{k}]"])) for k in areas}
    pending = frozenset(n for n, k in area_of.items() if not stable[k])

    line_status = {}
    for ln in lines:
        ends = (area_of.get(ln.from_node), area_of.get(ln.to_node))
        if ends[0] is not None and ends[0] == ends[1]:
            line_status[ln.id] = stable[ends[0]]
        else:
            line_status[ln.id] = int(round(sol[f"z[{ln.id}]"]))
    raw_flow = {ln.id: sol[f"f[{ln.id}]"] for ln in lines}
    flow = {lid: (v if line_status[lid] else 0.0) for lid, v in raw_flow.items()}

    omega = {n.id: sol[f"omega[{n.id}]"] for n in nodes if n.id not in pending}
    theta = {n.id: sol[f"theta[{n.id}]"] for n in nodes}
    dispatch, effective, served = {}, {}, {}
    for n in nodes:
        k = area_of.get(n.id)
        if n.is_generator:
            if k is None:
                a = _alpha(case, n.id)
                dispatch[n.id] = sol[f"pg[{n.id}]"]
            else:
                a = areas[k].alpha.get(n.id, 0.0)
                dispatch[n.id] = areas[k].init_state.get(n.id, 0.0)
            if n.id not in pending:
                effective[n.id] = dispatch[n.id] - a * (omega[n.id] - case.omega_s)
        elif n.is_load:
            if k is None:
                served[n.id] = _snap(sol[f"pl[{n.id}]"])
            elif stable[k]:
                served[n.id] = areas[k].init_state.get(n.id, 0.0)

    outcome = ControlOutcome(
        dispatch=dispatch,
        effective_output=effective,
        served=served,
        flow=flow,
        line_status=line_status,
        omega=omega,
        theta=theta,
        stable=stable,
        objective=sol.objective,
        pending=pending,
    )
    problems = check_outcome(case, partition, outcome, raw_flow)
    if problems:
        raise InternalConsistencyError("; ".join(problems[:5]))
    return outcome


def check_outcome(
    case: GridCase,
    partition: Partition,
    outcome: ControlOutcome,
    raw_flow: Mapping[str, float] | None = None,
    tol: float = OUTCOME_TOL,
) -> list[str]:
    """Independent physical checks; returns human-readable violations."""
    problems = []
    nodes, lines = case.without(partition.failed)
    area_of = partition.area_of()
    flows = raw_flow if raw_flow is not None else outcome.flow

    for gid, out in outcome.effective_output.items():
        node = case.node_map[gid]
        if gid not in area_of and not node.pg_min - tol <= out <= node.pg_max + tol:
            problems.append(f"generator {gid} output {out:.6g} outside [{node.pg_min}, {node.pg_max}]")
    for lid, pl in outcome.served.items():
        node = case.node_map[lid]
        if not node.pl_max - tol <= pl <= tol:
            problems.append(f"load {lid} served {pl:.6g} outside [{node.pl_max}, 0]")

    for ln in lines:
        on = outcome.line_status[ln.id]
        f = flows[ln.id]
        if abs(f) > on * ln.f_max + tol:
            problems.append(f"line {ln.id} flow {f:.6g} exceeds {on} * {ln.f_max}")
        if on and ln.from_node not in outcome.pending:
            dtheta = outcome.theta[ln.from_node] - outcome.theta[ln.to_node]
            if abs(ln.x * f - dtheta) > tol:
                problems.append(f"line {ln.id} violates the DC flow law by {abs(ln.x * f - dtheta):.3g}")
        if not on and outcome.flow[ln.id] != 0.0:
            problems.append(f"open line {ln.id} reports flow")

    for n in nodes:
        if n.id in outcome.pending:
            continue
        net = 0.0
        for ln in case.incident[n.id]:
            if ln.id in flows:
                net += flows[ln.id] if ln.from_node == n.id else -flows[ln.id]
        if n.is_generator:
            inj = outcome.effective_output[n.id]
        elif n.is_load:
            inj = outcome.served.get(n.id, 0.0)
        else:
            inj = 0.0
        if abs(net - inj) > tol:
            problems.append(f"node {n.id} balance residual {abs(net - inj):.3g}")

    closed = [ln for ln in lines if outcome.line_status[ln.id]]
    live = [n.id for n in nodes if n.id not in outcome.pending]
    for comp in connected_components(live, closed):
        ws = [outcome.omega[n] for n in comp]
        if max(ws) - min(ws) > tol:
            problems.append(f"frequency spread {max(ws) - min(ws):.3g} Hz in island {comp[0]}")
        for n in comp:
            if case.node_map[n].is_generator and not case.omega_min - tol <= outcome.omega[n] <= case.omega_max + tol:
                problems.append(f"generator {n} frequency {outcome.omega[n]:.6g} out of band")
    return problems


@dataclass(frozen=True)
class Yield:
    served: float
    initial: float

    @property
    def ratio(self) -> float:
        return self.served / self.initial if self.initial > 0 else 1.0


def compute_yield(
    outcome: ControlOutcome,
    cascade_served: Mapping[int, float],
    case: GridCase,
) -> Yield:
    """Served load over the pre-failure load.

    Stable areas count their held loads (already in ``outcome.served``);
    unstable areas count what survived their relay cascade.
    """
    missing = set(outcome.unstable_areas) ^ set(cascade_served)
    if missing:
        raise ValueError(f"cascade results must cover exactly the unstable areas; mismatch {sorted(missing)}")
    served = outcome.served_total + sum(cascade_served.values())
    result = Yield(served=served, initial=case.total_load)
    if result.ratio > 1 + 1e-9:
        raise AccountingError(f"yield {result.ratio:.12f} exceeds 1")
    return result

