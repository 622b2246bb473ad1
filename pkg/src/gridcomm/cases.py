"""Case files (JSON) and synthetic test grids."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .grid import (
    DEFAULT_DAMPING,
    DEFAULT_OMEGA_MAX,
    DEFAULT_OMEGA_MIN,
    DEFAULT_OMEGA_S,
    GridCase,
    IslandState,
    Line,
    Node,
    NodeKind,
    dc_flow_solve,
    validate_case,
)

_CASE_KEYS = {"omega_s", "omega_min", "omega_max", "nodes", "lines"}
_NODE_KEYS = {"id", "kind", "pg_init", "pg_min", "pg_max", "damping_d", "pl_init", "pl_max"}
_LINE_KEYS = {"id", "from", "to", "x", "f_max"}
_REQUIRED = {
    NodeKind.GENERATOR: ("pg_init", "pg_min", "pg_max"),
    NodeKind.LOAD: ("pl_init", "pl_max"),
    NodeKind.BUS: (),
}

BUNDLED = ("case5", "case7_transit", "case30")


class CaseFormatError(ValueError):
    """Case file does not parse or does not match the schema."""


class CaseValidationError(ValueError):
    def __init__(self, report):
        super().__init__(f"case failed validation:\n{report}")
        self.report = report


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CaseFormatError(f"{where}: expected a number, got {value!r}")
    return float(value)


def case_from_dict(data: dict) -> GridCase:
    if not isinstance(data, dict):
        raise CaseFormatError("top level must be an object")
    extra = set(data) - _CASE_KEYS
    if extra:
        raise CaseFormatError(f"unknown top-level fields: {sorted(extra)}")
    for key in ("nodes", "lines"):
        if not isinstance(data.get(key), list):
            raise CaseFormatError(f"'{key}' must be a list")

    nodes = []
    for i, raw in enumerate(data["nodes"]):
        where = f"nodes[{i}]"
        if not isinstance(raw, dict):
            raise CaseFormatError(f"{where}: expected an object")
        extra = set(raw) - _NODE_KEYS
        if extra:
            raise CaseFormatError(f"{where}: unknown fields {sorted(extra)}")
        if "id" not in raw or "kind" not in raw:
            raise CaseFormatError(f"{where}: 'id' and 'kind' are required")
        try:
            kind = NodeKind(str(raw["kind"]).lower())
        except ValueError:
            raise CaseFormatError(f"{where}.kind: unknown kind {raw['kind']!r}") from None
        for key in _REQUIRED[kind]:
            if key not in raw:
                raise CaseFormatError(f"{where}: {kind.value} requires '{key}'")
        fields = {
            k: _number(raw[k], f"{where}.{k}")
            for k in _NODE_KEYS - {"id", "kind"}
            if k in raw
        }
        nodes.append(Node(id=str(raw["id"]), kind=kind, **fields))

    lines = []
    for i, raw in enumerate(data["lines"]):
        where = f"lines[{i}]"
        if not isinstance(raw, dict):
            raise CaseFormatError(f"{where}: expected an object")
        extra = set(raw) - _LINE_KEYS
        missing = _LINE_KEYS - set(raw)
        if extra:
            raise CaseFormatError(f"{where}: unknown fields {sorted(extra)}")
        if missing:
            raise CaseFormatError(f"{where}: missing fields {sorted(missing)}")
        lines.append(
            Line(
                id=str(raw["id"]),
                from_node=str(raw["from"]),
                to_node=str(raw["to"]),
                x=_number(raw["x"], f"{where}.x"),
                f_max=_number(raw["f_max"], f"{where}.f_max"),
            )
        )
    return GridCase(
        nodes=tuple(nodes),
        lines=tuple(lines),
        omega_s=_number(data.get("omega_s", DEFAULT_OMEGA_S), "omega_s"),
        omega_min=_number(data.get("omega_min", DEFAULT_OMEGA_MIN), "omega_min"),
        omega_max=_number(data.get("omega_max", DEFAULT_OMEGA_MAX), "omega_max"),
    )


def case_to_dict(case: GridCase) -> dict:
    nodes = []
    for n in case.nodes:
        entry = {"id": n.id, "kind": n.kind.value}
        if n.is_generator:
            entry.update(pg_init=n.pg_init, pg_min=n.pg_min, pg_max=n.pg_max, damping_d=n.damping_d)
        elif n.is_load:
            entry.update(pl_init=n.pl_init, pl_max=n.pl_max)
        nodes.append(entry)
    return {
        "omega_s": case.omega_s,
        "omega_min": case.omega_min,
        "omega_max": case.omega_max,
        "nodes": nodes,
        "lines": [
            {"id": ln.id, "from": ln.from_node, "to": ln.to_node, "x": ln.x, "f_max": ln.f_max}
            for ln in case.lines
        ],
    }


def loads_case(text: str) -> GridCase:
    """Parse and validate a case from JSON text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    case = case_from_dict(data)
    report = validate_case(case)
    if not report.ok:
        raise CaseValidationError(report)
    return case


def load_case(path: str | Path) -> GridCase:
    """Read a case file, or a bundled case by name (``case5``, ``case30``, ...)."""
    path_str = str(path)
    if path_str in BUNDLED:
        text = resources.files("gridcomm").joinpath(f"data/{path_str}.json").read_text()
    else:
        text = Path(path).read_text()
    return loads_case(text)


def dumps_case(case: GridCase) -> str:
    return json.dumps(case_to_dict(case), indent=1) + "\n"


def save_case(case: GridCase, path: str | Path) -> None:
    Path(path).write_text(dumps_case(case))


def synthetic_case(
    n_buses: int,
    n_generators: int,
    n_loads: int,
    seed: int,
    extra_lines: int | None = None,
    margin: tuple[float, float] = (1.3, 2.0),
    headroom: tuple[float, float] = (1.25, 1.8),
) -> GridCase:
    """A random meshed grid whose initial dispatch is balanced and feasible.

    Buses form a random spanning tree plus ``extra_lines`` chords; every
    generator and load hangs off one bus. Generators may ramp to zero and
    have enough headroom that droop action inside the frequency band stays
    within their limits. Line capacities exceed the initial flows by a
    random ``margin`` factor.
    """
    rng = np.random.default_rng(seed)
    width = len(str(max(n_buses, n_generators, n_loads)))
    buses = [f"B{i:0{width}d}" for i in range(1, n_buses + 1)]
    edges: list[tuple[str, str]] = []
    for i in range(1, n_buses):
        edges.append((buses[int(rng.integers(0, i))], buses[i]))
    if extra_lines is None:
        extra_lines = max(0, n_buses // 3)
    present = {frozenset(e) for e in edges}
    tries = 0
    while extra_lines > 0 and tries < 100 * n_buses and n_buses > 2:
        tries += 1
        a, b = rng.choice(n_buses, size=2, replace=False)
        pair = frozenset((buses[a], buses[b]))
        if pair in present:
            continue
        present.add(pair)
        edges.append((buses[min(a, b)], buses[max(a, b)]))
        extra_lines -= 1

    loads = -rng.uniform(0.2, 1.0, size=n_loads)
    total = -loads.sum()
    weights = rng.uniform(0.5, 1.5, size=n_generators)
    pg = 0.05 + (total - 0.05 * n_generators) * weights / weights.sum() if n_generators else weights

    nodes = [Node(b, NodeKind.BUS) for b in buses]
    pendant: list[tuple[str, str]] = []
    for i in range(n_generators):
        gid = f"G{i + 1:0{width}d}"
        nodes.append(
            Node(
                gid,
                NodeKind.GENERATOR,
                pg_init=float(pg[i]),
                pg_min=0.0,
                pg_max=float(pg[i] * rng.uniform(*headroom)),
                damping_d=DEFAULT_DAMPING,
            )
        )
        pendant.append((gid, buses[int(rng.integers(0, n_buses))]))
    for i in range(n_loads):
        lid = f"L{i + 1:0{width}d}"
        nodes.append(Node(lid, NodeKind.LOAD, pl_init=float(loads[i]), pl_max=float(loads[i])))
        pendant.append((lid, buses[int(rng.integers(0, n_buses))]))

    raw_lines = [(a, b, float(rng.uniform(0.05, 0.3))) for a, b in edges + pendant]
    draft = [Line(f"l{i + 1:02d}", a, b, x, 1.0) for i, (a, b, x) in enumerate(raw_lines)]
    inj = {n.id: n.pg_init + n.pl_init for n in nodes}
    flows = dc_flow_solve(IslandState(tuple(n.id for n in nodes), tuple(draft)), inj).flow
    lines = tuple(
        Line(ln.id, ln.from_node, ln.to_node, ln.x, max(0.1, abs(flows[ln.id]) * float(rng.uniform(*margin))))
        for ln in draft
    )
    return GridCase(nodes=tuple(nodes), lines=lines)
