"""Local protection-relay cascade inside an islanded, unstable area.

One relay fires per iteration and the island re-settles before the next.
Frequency relays act before line relays. Over-frequency trips the
generator with the smallest effective output, under-frequency sheds the
smallest load, overload trips the line with the largest loading ratio;
ties go to the lowest id. A sub-island with load but no droop capacity
blacks out in one iteration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .grid import (
    BALANCE_TOL,
    DEFAULT_OMEGA_S,
    IslandState,
    connected_components,
    dc_flow_solve,
)

OVERLOAD_TOL = 1e-9


class RelayKind(str, enum.Enum):
    TRIP_GENERATOR = "TripGenerator"
    SHED_LOAD = "ShedLoad"
    TRIP_LINE = "TripLine"
    SPLIT_ISLAND = "SplitIsland"
    DONE = "Done"


@dataclass(frozen=True)
class RelayAction:
    kind: RelayKind
    target: str | None = None
    #: Frequency in Hz for generator/load relays, loading ratio for lines.
    observed: float | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "target": self.target, "observed": self.observed}


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    diagnostic: str | None = None
    omega: float | None = None
    flows: dict[str, float] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.stable


@dataclass(frozen=True)
class CascadeResult:
    served: float
    initial: float
    actions: tuple[RelayAction, ...]
    #: Final sub-islands and their settled frequency (``None`` if dead).
    islands: tuple[tuple[tuple[str, ...], float | None], ...]

    #: Served load before any action, then after each logged action.
    served_trace: tuple[float, ...] = ()

    @property
    def n_actions(self) -> int:
        """Relay operations, excluding the bookkeeping Done/SplitIsland entries."""
        return sum(1 for a in self.actions if a.kind not in (RelayKind.DONE, RelayKind.SPLIT_ISLAND))


def _restrict(island: IslandState, comp: tuple[str, ...]) -> IslandState:
    members = set(comp)
    return IslandState(
        nodes=comp,
        lines=tuple(ln for ln in island.lines if ln.from_node in members and ln.to_node in members),
        generators={g: v for g, v in island.generators.items() if g in members},
        loads={n: v for n, v in island.loads.items() if n in members},
        alpha={g: v for g, v in island.alpha.items() if g in members},
    )


def _served(loads: dict[str, float]) -> float:
    return -sum(loads.values()) + 0.0


def _has_droop(island: IslandState) -> bool:
    return island.total_alpha > 0


def stability_check(
    island: IslandState,
    limits: tuple[float, float],
    omega_s: float = DEFAULT_OMEGA_S,
) -> StabilityReport:
    """Whether droop alone balances a connected island within limits.

    Diagnostics: ``no-equilibrium``, ``over-frequency``,
    ``under-frequency`` or ``overload``.
    """
    w_min, w_max = limits
    net = island.net_injection
    if not _has_droop(island):
        if abs(net) > BALANCE_TOL:
            return StabilityReport(False, "no-equilibrium")
        omega = omega_s
    else:
        omega = omega_s + net / island.total_alpha
        if omega > w_max:
            return StabilityReport(False, "over-frequency", omega)
        if omega < w_min:
            return StabilityReport(False, "under-frequency", omega)
    flows = _flows(island, omega, omega_s)
    for ln in island.lines:
        if abs(flows[ln.id]) > ln.f_max + OVERLOAD_TOL:
            return StabilityReport(False, "overload", omega, flows)
    return StabilityReport(True, None, omega, flows)


def _outputs(island: IslandState, omega: float, omega_s: float) -> dict[str, float]:
    return {g: pg - island.alpha.get(g, 0.0) * (omega - omega_s) for g, pg in island.generators.items()}


def _flows(island: IslandState, omega: float, omega_s: float) -> dict[str, float]:
    if not island.lines:
        return {}
    inj = dict(island.loads)
    for g, out in _outputs(island, omega, omega_s).items():
        inj[g] = inj.get(g, 0.0) + out
    return dc_flow_solve(island, inj).flow


def _next_actions(island: IslandState, limits, omega_s) -> list[RelayAction]:
    """Relay actions for one unstable sub-island, or [] if it is stable."""
    report = stability_check(island, limits, omega_s)
    if report.stable:
        return []
    live_loads = sorted((n for n, v in island.loads.items() if v < 0), key=lambda n: (-island.loads[n], n))
    if report.diagnostic == "no-equilibrium":
        if island.net_injection < 0:
            return [RelayAction(RelayKind.SHED_LOAD, n, None) for n in sorted(live_loads)]
        gens = sorted((g for g, v in island.generators.items() if v > 0), key=lambda g: (island.generators[g], g))
        return [RelayAction(RelayKind.TRIP_GENERATOR, gens[0], None)]
    omega = report.omega
    if report.diagnostic == "over-frequency":
        outputs = _outputs(island, omega, omega_s)
        target = min(outputs, key=lambda g: (outputs[g], g))
        return [RelayAction(RelayKind.TRIP_GENERATOR, target, omega)]
    if report.diagnostic == "under-frequency":
        return [RelayAction(RelayKind.SHED_LOAD, live_loads[0], omega)]
    ratios = {ln.id: abs(report.flows[ln.id]) / ln.f_max for ln in island.lines}
    target = min(ratios, key=lambda lid: (-ratios[lid], lid))
    return [RelayAction(RelayKind.TRIP_LINE, target, ratios[target])]


def run_cascade(
    island: IslandState,
    limits: tuple[float, float],
    omega_s: float = DEFAULT_OMEGA_S,
) -> CascadeResult:
    """Fire protection relays until every sub-island is stable or empty.

    A tripped generator keeps its node (it no longer injects or regulates);
    a shed load keeps its node with zero demand. At most ``|V| + |E|``
    relay actions can fire.
    """
    gens = dict(island.generators)
    loads = dict(island.loads)
    alpha = dict(island.alpha)
    lines = list(island.lines)
    bound = len(island.nodes) + len(island.lines)
    initial = island.served + 0.0
    log: list[RelayAction] = []
    trace = [initial]

    while True:
        state = IslandState(island.nodes, tuple(lines), gens, loads, alpha)
        comps = connected_components(island.nodes, lines)
        fired: list[RelayAction] = []
        for comp in comps:
            fired = _next_actions(_restrict(state, comp), limits, omega_s)
            if fired:
                break
        if not fired:
            break
        for action in fired:
            if action.kind is RelayKind.TRIP_GENERATOR:
                gens.pop(action.target)
                alpha.pop(action.target, None)
            elif action.kind is RelayKind.SHED_LOAD:
                loads.pop(action.target)
            else:
                lines = [ln for ln in lines if ln.id != action.target]
            log.append(action)
            trace.append(_served(loads))
            if action.kind is RelayKind.TRIP_LINE and len(connected_components(island.nodes, lines)) > len(comps):
                log.append(RelayAction(RelayKind.SPLIT_ISLAND, action.target, None))
                trace.append(trace[-1])
        if sum(1 for a in log if a.kind is not RelayKind.SPLIT_ISLAND) > bound:
            raise AssertionError(f"cascade exceeded {bound} relay actions")

    state = IslandState(island.nodes, tuple(lines), gens, loads, alpha)
    finals = []
    for comp in connected_components(island.nodes, lines):
        sub = _restrict(state, comp)
        report = stability_check(sub, limits, omega_s)
        finals.append((comp, report.omega))
    log.append(RelayAction(RelayKind.DONE))
    return CascadeResult(
        served=_served(loads),
        initial=initial,
        actions=tuple(log),
        islands=tuple(finals),
        served_trace=tuple(trace),
    )
