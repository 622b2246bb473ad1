"""Grid data types, droop equilibrium and DC power flow.

All powers are per-unit on one system base, frequencies are in Hz and
droop sensitivities ``alpha`` are in pu/Hz.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

#: Droop regulation constant in per-unit of the synchronous frequency.
REGULATION_PU = 0.05
DEFAULT_DAMPING = 0.02
DEFAULT_OMEGA_S = 60.0
DEFAULT_OMEGA_MIN = 59.5
DEFAULT_OMEGA_MAX = 60.5

BALANCE_TOL = 1e-9


class GridError(Exception):
    """Base class for grid-model failures."""


class ZeroDroopError(GridError):
    """Raised when a generator has no regulation capacity at all."""


class NoEquilibriumError(GridError):
    """Raised when an island has no droop capacity but a power imbalance."""


class UnbalancedInjectionError(GridError):
    pass


class TopologyError(GridError):
    pass


class NodeKind(str, enum.Enum):
    GENERATOR = "generator"
    LOAD = "load"
    BUS = "bus"


@dataclass(frozen=True)
class Node:
    """A power node.

    Generators use the ``pg_*`` fields and ``damping_d`` (pu power per pu
    frequency); loads use ``pl_init``/``pl_max``, both non-positive.
    """

    id: str
    kind: NodeKind
    pg_init: float = 0.0
    pg_min: float = 0.0
    pg_max: float = 0.0
    damping_d: float = DEFAULT_DAMPING
    pl_init: float = 0.0
    pl_max: float = 0.0

    @property
    def is_generator(self) -> bool:
        return self.kind is NodeKind.GENERATOR

    @property
    def is_load(self) -> bool:
        return self.kind is NodeKind.LOAD


@dataclass(frozen=True)
class Line:
    id: str
    from_node: str
    to_node: str
    x: float
    f_max: float

    def other(self, node: str) -> str:
        return self.to_node if node == self.from_node else self.from_node


@dataclass(frozen=True)
class GridCase:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    omega_s: float = DEFAULT_OMEGA_S
    omega_min: float = DEFAULT_OMEGA_MIN
    omega_max: float = DEFAULT_OMEGA_MAX

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def line_map(self) -> dict[str, Line]:
        return {ln.id: ln for ln in self.lines}

    @cached_property
    def incident(self) -> dict[str, tuple[Line, ...]]:
        acc: dict[str, list[Line]] = {n.id: [] for n in self.nodes}
        for ln in self.lines:
            for end in (ln.from_node, ln.to_node):
                if end in acc:
                    acc[end].append(ln)
        return {k: tuple(v) for k, v in acc.items()}

    @property
    def generators(self) -> list[Node]:
        return [n for n in self.nodes if n.is_generator]

    @property
    def loads(self) -> list[Node]:
        return [n for n in self.nodes if n.is_load]

    @property
    def total_load(self) -> float:
        return sum(-n.pl_init for n in self.nodes if n.is_load)

    def alpha(self, node_id: str) -> float:
        """Droop sensitivity of a generator at its initial dispatch (pu/Hz)."""
        return regulation_alpha(self.node_map[node_id], self.omega_s)

    def initial_dispatch(self) -> dict[str, float]:
        out = {}
        for n in self.nodes:
            if n.is_generator:
                out[n.id] = n.pg_init
            elif n.is_load:
                out[n.id] = n.pl_init
        return out

    def without(self, failed: Iterable[str]) -> tuple[list[Node], list[Line]]:
        """Surviving nodes and lines after deleting ``failed`` nodes."""
        dead = set(failed)
        nodes = [n for n in self.nodes if n.id not in dead]
        lines = [
            ln for ln in self.lines if ln.from_node not in dead and ln.to_node not in dead
        ]
        return nodes, lines


@dataclass(frozen=True)
class Violation:
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, subject: str, message: str) -> None:
        self.violations.append(Violation(subject, message))

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __str__(self) -> str:
        return "\n".join(str(v) for v in self.violations)


def validate_case(case: GridCase) -> ValidationReport:
    """Check every structural and numeric invariant of a case.

    Violations are collected, not raised.
    """
    report = ValidationReport()
    seen: set[str] = set()
    for n in case.nodes:
        if n.id in seen:
            report.add(n.id, "duplicate node id")
        seen.add(n.id)
        if not isinstance(n.kind, NodeKind):
            report.add(n.id, f"unknown node kind {n.kind!r}")
            continue
        values = (n.pg_init, n.pg_min, n.pg_max, n.damping_d, n.pl_init, n.pl_max)
        if not all(np.isfinite(values)):
            report.add(n.id, "non-finite numeric field")
            continue
        if n.is_generator:
            if n.pg_init < 0:
                report.add(n.id, "generator pg_init must be >= 0")
            if not n.pg_min <= n.pg_init <= n.pg_max:
                report.add(n.id, "generator requires pg_min <= pg_init <= pg_max")
            if n.damping_d < 0:
                report.add(n.id, "damping must be >= 0")
        elif n.is_load:
            if n.pl_init > 0 or n.pl_max > 0:
                report.add(n.id, "load sign: pl_init and pl_max must be <= 0")
            if not n.pl_max <= n.pl_init <= 0:
                report.add(n.id, "load requires pl_max <= pl_init <= 0")

    line_ids: set[str] = set()
    degree = {n.id: 0 for n in case.nodes}
    for ln in case.lines:
        if ln.id in line_ids:
            report.add(ln.id, "duplicate line id")
        line_ids.add(ln.id)
        for end in (ln.from_node, ln.to_node):
            if end not in degree:
                report.add(ln.id, f"endpoint {end!r} is not a node")
        if ln.from_node == ln.to_node:
            report.add(ln.id, "self-loop")
        if not (np.isfinite(ln.x) and ln.x > 0):
            report.add(ln.id, "reactance must be > 0")
        if not (np.isfinite(ln.f_max) and ln.f_max > 0):
            report.add(ln.id, "capacity f_max must be > 0")
        if ln.from_node != ln.to_node:
            for end in (ln.from_node, ln.to_node):
                if end in degree:
                    degree[end] += 1

    for n in case.nodes:
        if n.kind in (NodeKind.GENERATOR, NodeKind.LOAD) and degree.get(n.id) != 1:
            report.add(
                n.id,
                f"{n.kind.value} must attach to exactly one bus (degree {degree.get(n.id)})",
            )

    if not case.omega_min < case.omega_s < case.omega_max:
        report.add("case", "requires omega_min < omega_s < omega_max")
    return report


def regulation_alpha(gen: Node, omega_s: float = DEFAULT_OMEGA_S) -> float:
    """Combined damping and droop sensitivity of a generator, in pu/Hz.

    The droop slope is ``R = omega_s * 0.05 / pg_init`` Hz/pu and the
    damping ``D`` is given per unit of frequency, hence divided by
    ``omega_s``.
    """
    if not gen.is_generator:
        raise ValueError(f"{gen.id} is not a generator")
    if gen.pg_init == 0 and gen.damping_d == 0:
        raise ZeroDroopError(gen.id)
    return gen.pg_init / (omega_s * REGULATION_PU) + gen.damping_d / omega_s


@dataclass(frozen=True)
class IslandState:
    """A set of nodes with injections, droop sensitivities and active lines.

    ``generators`` holds dispatch (>= 0) and ``loads`` holds demand (<= 0);
    buses appear only in ``nodes``. ``alpha`` is nonzero only at regulating generators.
    """

    nodes: tuple[str, ...]
    lines: tuple[Line, ...]
    generators: Mapping[str, float] = field(default_factory=dict)
    loads: Mapping[str, float] = field(default_factory=dict)
    alpha: Mapping[str, float] = field(default_factory=dict)

    def injection(self, node: str) -> float:
        return self.generators.get(node, 0.0) + self.loads.get(node, 0.0)

    @property
    def net_injection(self) -> float:
        return sum(self.generators.values()) + sum(self.loads.values())

    @property
    def total_alpha(self) -> float:
        return sum(self.alpha.get(g, 0.0) for g in self.generators)

    @property
    def served(self) -> float:
        return -sum(self.loads.values())


@dataclass(frozen=True)
class FlowAssignment:
    flow: dict[str, float]
    theta: dict[str, float]
    omega: dict[str, float] = field(default_factory=dict)


def island_droop_frequency(island: IslandState, omega_s: float = DEFAULT_OMEGA_S) -> float:
    """Uniform steady-state frequency of an island under droop control."""
    if not island.nodes:
        raise ValueError("empty island")
    net = island.net_injection
    total_alpha = island.total_alpha
    if total_alpha > 0:
        return omega_s + net / total_alpha
    if abs(net) <= BALANCE_TOL:
        return omega_s
    raise NoEquilibriumError(f"imbalance {net:.6g} pu with no droop capacity")


def connected_components(nodes: Iterable[str], lines: Iterable[Line]) -> list[tuple[str, ...]]:
    """Maximal connected node sets, each sorted, ordered by smallest member."""
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for ln in lines:
        if ln.from_node in adj and ln.to_node in adj:
            adj[ln.from_node].append(ln.to_node)
            adj[ln.to_node].append(ln.from_node)
    seen: set[str] = set()
    comps = []
    for start in sorted(adj):
        if start in seen:
            continue
        seen.add(start)
        stack = [start]
        comp = []
        while stack:
            cur = stack.pop()
            comp.append(cur)
            for nb in adj[cur]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        comps.append(tuple(sorted(comp)))
    return comps


def dc_flow_solve(
    island: IslandState,
    injections: Mapping[str, float],
    reference: str | None = None,
) -> FlowAssignment:
    """Solve the lossless DC flow ``B theta = p`` with ``theta[reference] = 0``.

    Flows are positive in the line's from->to orientation.
    """
    nodes = sorted(island.nodes)
    p = np.array([injections.get(n, 0.0) for n in nodes], dtype=float)
    scale = max(1.0, float(np.abs(p).max(initial=0.0)))
    if abs(p.sum()) > BALANCE_TOL * scale * max(1, len(nodes)):
        raise UnbalancedInjectionError(f"injections sum to {p.sum():.3e}")
    if len(connected_components(nodes, island.lines)) > 1:
        raise TopologyError("island is not connected under its active lines")
    if reference is None:
        reference = nodes[0]
    pos = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    lap = np.zeros((n, n))
    for ln in island.lines:
        i, j = pos[ln.from_node], pos[ln.to_node]
        b = 1.0 / ln.x
        lap[i, i] += b
        lap[j, j] += b
        lap[i, j] -= b
        lap[j, i] -= b
    keep = [i for i in range(n) if i != pos[reference]]
    theta = np.zeros(n)
    if keep:
        theta[keep] = np.linalg.solve(lap[np.ix_(keep, keep)], p[keep])
    flow = {
        ln.id: (theta[pos[ln.from_node]] - theta[pos[ln.to_node]]) / ln.x for ln in island.lines
    }
    return FlowAssignment(flow=flow, theta={nd: float(theta[pos[nd]]) for nd in nodes})
