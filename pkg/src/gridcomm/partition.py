"""Split a damaged grid into controllable and uncontrollable areas."""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace

from .grid import GridCase, IslandState, connected_components, regulation_alpha


class OperatingMode(str, enum.Enum):
    """Local fallback mode of nodes cut off from the control center."""

    P_INIT = "init"
    P_ZERO = "zero"


@dataclass(frozen=True)
class UncontrollableArea:
    area_id: int
    nodes: tuple[str, ...]
    internal_lines: tuple[str, ...]
    border_lines: tuple[str, ...]
    #: Fixed injection per generator/load once the mode is applied.
    init_state: Mapping[str, float] = field(default_factory=dict)
    #: Droop sensitivity per generator (zero for tripped generators).
    alpha: Mapping[str, float] = field(default_factory=dict)
    mode: OperatingMode | None = None


@dataclass(frozen=True)
class Partition:
    failed: tuple[str, ...]
    controllable_nodes: tuple[str, ...]
    controllable_lines: tuple[str, ...]
    areas: tuple[UncontrollableArea, ...]

    @property
    def border_lines(self) -> dict[int, tuple[str, ...]]:
        return {a.area_id: a.border_lines for a in self.areas}

    @property
    def uncontrollable_nodes(self) -> tuple[str, ...]:
        return tuple(sorted(n for a in self.areas for n in a.nodes))

    def area_of(self) -> dict[str, int]:
        return {n: a.area_id for a in self.areas for n in a.nodes}


def partition_areas(
    case: GridCase, failed: Iterable[str], uncontrollable: Iterable[str]
) -> Partition:
    """Remove failed nodes, then group uncontrollable survivors into areas.

    Areas are the connected components of the uncontrollable nodes under
    the surviving lines joining them, numbered by smallest member id.
    """
    failed = set(failed)
    unknown = (failed | set(uncontrollable)) - set(case.node_map)
    if unknown:
        raise KeyError(f"unknown node ids: {sorted(unknown)}")
    nodes, lines = case.without(failed)
    unc = {n for n in uncontrollable if n not in failed}
    internal = [ln for ln in lines if ln.from_node in unc and ln.to_node in unc]
    comps = connected_components(sorted(unc), internal)
    where = {n: k for k, comp in enumerate(comps) for n in comp}

    areas = []
    for k, comp in enumerate(comps):
        members = set(comp)
        areas.append(
            UncontrollableArea(
                area_id=k,
                nodes=comp,
                internal_lines=tuple(
                    ln.id for ln in internal if ln.from_node in members
                ),
                border_lines=tuple(
                    ln.id
                    for ln in lines
                    if (ln.from_node in members) != (ln.to_node in members)
                ),
            )
        )
    ctrl_nodes = tuple(sorted(n.id for n in nodes if n.id not in where))
    ctrl_lines = tuple(
        ln.id for ln in lines if ln.from_node not in where and ln.to_node not in where
    )
    return Partition(
        failed=tuple(sorted(failed)),
        controllable_nodes=ctrl_nodes,
        controllable_lines=ctrl_lines,
        areas=tuple(areas),
    )


def apply_mode(
    partition: Partition,
    case: GridCase,
    mode: OperatingMode,
    last_dispatch: Mapping[str, float] | None = None,
) -> Partition:
    """Fix the operating point of every uncontrollable generator and load.

    ``P_INIT`` holds ``last_dispatch`` (the case's initial values unless a
    prior solve supplies one). ``P_ZERO`` trips generators and loads: zero
    injection and no droop response. Buses are unaffected either way.
    """
    mode = OperatingMode(mode)
    dispatch = case.initial_dispatch() if last_dispatch is None else dict(last_dispatch)
    areas = []
    for area in partition.areas:
        init, alpha = {}, {}
        for nid in area.nodes:
            node = case.node_map[nid]
            if not (node.is_generator or node.is_load):
                continue
            if mode is OperatingMode.P_ZERO:
                init[nid] = 0.0
            else:
                default = node.pg_init if node.is_generator else node.pl_init
                init[nid] = float(dispatch.get(nid, default))
            if node.is_generator:
                if mode is OperatingMode.P_ZERO or (node.pg_init == 0 and node.damping_d == 0):
                    alpha[nid] = 0.0
                else:
                    alpha[nid] = regulation_alpha(node, case.omega_s)
        areas.append(replace(area, init_state=init, alpha=alpha, mode=mode))
    return replace(partition, areas=tuple(areas))


def area_island(case: GridCase, area: UncontrollableArea) -> IslandState:
    """Snapshot of an area at its mode operating point, cut off from the grid."""
    if area.mode is None:
        raise ValueError("apply_mode must run before an area can be simulated")
    gens = {n: v for n, v in area.init_state.items() if case.node_map[n].is_generator}
    loads = {n: v for n, v in area.init_state.items() if case.node_map[n].is_load}
    return IslandState(
        nodes=area.nodes,
        lines=tuple(case.line_map[lid] for lid in area.internal_lines),
        generators=gens,
        loads=loads,
        alpha=dict(area.alpha),
    )
