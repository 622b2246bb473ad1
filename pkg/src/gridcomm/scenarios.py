"""Monte Carlo scenarios: generator failures plus clustered communication loss.

Seeding
-------
Scenario ``i`` of a sweep with master seed ``s`` uses the 64-bit seed
``splitmix64(s + (i + 1) * 0x9E3779B97F4A7C15)``, where ``splitmix64`` is the
output finalizer of the SplitMix64 generator::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)                      (all arithmetic mod 2**64)

Failures are drawn from ``numpy.random.default_rng([seed, 0])`` and
uncontrollable clusters from ``default_rng([seed, 1])``. Both streams depend
only on the master seed and the scenario index, so configurations that
differ only in mode (or only in the uncontrollable count) see the same
failures at the same index.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .cascade import run_cascade
from .control import (
    AccountingError,
    InternalConsistencyError,
    build_full_model,
    build_partial_model,
    compute_yield,
    extract_outcome,
    prefer_stable_areas,
)
from .grid import GridCase
from .milp import MAX_BRUTE_FORCE_BINARIES, SolverError, brute_force_milp, solve_milp
from .partition import OperatingMode, apply_mode, area_island, partition_areas

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
DOMINANCE_TOL = 1e-6
#: Y(P_zero) must beat Y(P_init) by more than this to count as better.
COMPARE_TOL = 1e-9
MAX_SAMPLING_ATTEMPTS = 200
JOBS_ENV = "GRIDCOMM_JOBS"

CSV_HEADER = (
    "n_failed",
    "n_uncontrollable",
    "cluster_size",
    "mode",
    "mean_yield_partial",
    "mean_yield_full",
    "frac_unstable",
    "frac_pzero_gt_pinit",
    "replications",
    "master_seed",
)


class ConfigError(ValueError):
    """Invalid scenario or sweep configuration."""


class SamplingError(RuntimeError):
    """No cluster layout satisfying the constraints was found."""


def splitmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def scenario_seed(master_seed: int, index: int) -> int:
    return splitmix64(master_seed + (index + 1) * GOLDEN_GAMMA)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class ScenarioConfig:
    n_failed: int
    n_uncontrollable: int
    cluster_size: int = 1
    mode: OperatingMode = OperatingMode.P_INIT
    master_seed: int = 0
    replications: int = 100

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", OperatingMode(self.mode))
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r}; expected 'init' or 'zero'") from None
        for name in ("n_failed", "n_uncontrollable", "cluster_size", "replications", "master_seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.n_failed < 0 or self.n_uncontrollable < 0:
            raise ConfigError("counts must be non-negative")
        if self.cluster_size < 1:
            raise ConfigError("cluster_size must be at least 1")
        if self.n_uncontrollable % self.cluster_size:
            raise ConfigError(
                f"cluster_size {self.cluster_size} does not divide n_uncontrollable {self.n_uncontrollable}"
            )
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0 <= self.master_seed <= MASK64:
            raise ConfigError("master_seed must fit in an unsigned 64-bit integer")

    @property
    def n_clusters(self) -> int:
        return self.n_uncontrollable // self.cluster_size

    @property
    def key(self) -> tuple:
        return (self.n_failed, self.n_uncontrollable, self.cluster_size, self.mode.value)


def sample_failed_generators(case: GridCase, n: int, seed) -> tuple[str, ...]:
    """Uniform sample of ``n`` distinct generator ids, returned sorted."""
    gens = sorted(g.id for g in case.generators)
    if n > len(gens):
        raise ConfigError(f"cannot fail {n} generators; the case has {len(gens)}")
    if n == 0:
        return ()
    picked = _rng(seed).choice(len(gens), size=n, replace=False)
    return tuple(sorted(gens[i] for i in picked))


def _neighbours(case: GridCase, alive: set[str]) -> dict[str, list[str]]:
    adj: dict[str, set[str]] = {n: set() for n in alive}
    for ln in case.lines:
        if ln.from_node in alive and ln.to_node in alive:
            adj[ln.from_node].add(ln.to_node)
            adj[ln.to_node].add(ln.from_node)
    return {n: sorted(v) for n, v in adj.items()}


def sample_uncontrollable_clusters(
    case: GridCase,
    n_clusters: int,
    cluster_size: int,
    seed,
    exclude: Iterable[str] = (),
) -> tuple[tuple[str, ...], ...]:
    """Disjoint, mutually non-adjacent connected clusters of equal size.

    Each cluster grows from a uniformly chosen root by repeatedly adding a
    uniformly chosen node from its frontier. A layout that runs into a dead
    end is discarded and redrawn, up to ``MAX_SAMPLING_ATTEMPTS`` times.
    """
    excluded = set(exclude)
    alive = {n.id for n in case.nodes} - excluded
    if n_clusters * cluster_size > len(alive):
        raise SamplingError(
            f"{n_clusters} clusters of size {cluster_size} exceed the {len(alive)} available nodes"
        )
    if n_clusters == 0:
        return ()
    rng = _rng(seed)
    adj = _neighbours(case, alive)
    order = sorted(alive)
    for _ in range(MAX_SAMPLING_ATTEMPTS):
        blocked: set[str] = set()
        clusters = []
        for _ in range(n_clusters):
            free = [n for n in order if n not in blocked]
            if not free:
                break
            members = [free[int(rng.integers(len(free)))]]
            inside = set(members)
            while len(members) < cluster_size:
                frontier = sorted({v for u in members for v in adj[u]} - inside - blocked)
                if not frontier:
                    break
                nxt = frontier[int(rng.integers(len(frontier)))]
                members.append(nxt)
                inside.add(nxt)
            if len(members) < cluster_size:
                break
            clusters.append(tuple(sorted(members)))
            blocked |= inside
            blocked.update(v for u in members for v in adj[u])
        if len(clusters) == n_clusters:
            result = tuple(clusters)
            problems = check_clusters(case, result, excluded)
            if problems:
                raise AssertionError("; ".join(problems))
            return result
    raise SamplingError(
        f"no layout of {n_clusters} non-adjacent connected clusters of size {cluster_size} "
        f"found in {MAX_SAMPLING_ATTEMPTS} attempts"
    )


def check_clusters(
    case: GridCase, clusters: Sequence[Sequence[str]], exclude: Iterable[str] = ()
) -> list[str]:
    """Connectivity, disjointness and non-adjacency violations of a cluster layout."""
    alive = {n.id for n in case.nodes} - set(exclude)
    adj = _neighbours(case, alive)
    problems = []
    owner: dict[str, int] = {}
    for k, cluster in enumerate(clusters):
        for n in cluster:
            if n not in alive:
                problems.append(f"cluster {k} uses unavailable node {n}")
            elif n in owner:
                problems.append(f"node {n} is in clusters {owner[n]} and {k}")
            owner[n] = k
    for k, cluster in enumerate(clusters):
        members = set(cluster) & alive
        if not members:
            continue
        start = min(members)
        seen, todo = {start}, [start]
        while todo:
            for v in adj[todo.pop()]:
                if v in members and v not in seen:
                    seen.add(v)
                    todo.append(v)
        if seen != members:
            problems.append(f"cluster {k} is not connected")
        for u in members:
            for v in adj[u]:
                if owner.get(v, k) != k:
                    problems.append(f"clusters {k} and {owner[v]} are adjacent via {u}-{v}")
    return problems


@dataclass(frozen=True)
class ScenarioRecord:
    index: int
    seed: int
    failed: tuple[str, ...]
    uncontrollable: tuple[str, ...]
    clusters: tuple[tuple[str, ...], ...]
    mode: str
    yield_full: float
    yield_partial: float
    stable: tuple[int, ...] = ()
    n_unstable: int = 0
    cascade_served: dict[int, float] = field(default_factory=dict)
    cascade_actions: dict[int, list] = field(default_factory=dict)
    verified: bool = False
    anomaly: str | None = None

    @property
    def dominance_ok(self) -> bool:
        return self.yield_full >= self.yield_partial - DOMINANCE_TOL

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cascade_served"] = {str(k): v for k, v in self.cascade_served.items()}
        out["cascade_actions"] = {str(k): v for k, v in self.cascade_actions.items()}
        return out


def _verify(model, sol) -> str | None:
    if model.binary.sum() > MAX_BRUTE_FORCE_BINARIES:
        return None
    ref = brute_force_milp(model)
    if ref.status is not sol.status:
        return f"brute force status {ref.status.value} vs {sol.status.value}"
    if sol.optimal and abs(ref.objective - sol.objective) > 1e-6:
        return f"brute force objective {ref.objective!r} vs {sol.objective!r}"
    return None


def _full_yield(case: GridCase, failed: tuple[str, ...], verify: bool) -> tuple[float, bool]:
    model = build_full_model(case, failed)
    sol = solve_milp(model)
    if not sol.optimal:
        raise _Anomaly(f"full model {sol.status.value}")
    checked = False
    if verify:
        problem = _verify(model, sol)
        if problem:
            raise _Anomaly(f"full model: {problem}")
        checked = bool(model.binary.sum() <= MAX_BRUTE_FORCE_BINARIES)
    outcome = extract_outcome(case, model, sol, partition_areas(case, failed, ()))
    return compute_yield(outcome, {}, case).ratio, checked


class _Anomaly(Exception):
    pass


def run_scenario(
    case: GridCase,
    config: ScenarioConfig,
    index: int,
    verify: bool = False,
    full_cache: dict | None = None,
) -> ScenarioRecord:
    """Sample one scenario and evaluate both controllers on it.

    ``full_cache`` may map failure sets to full-communication results from
    earlier calls on the same case; it only saves work. Solver trouble is
    recorded in ``anomaly`` instead of raised.
    """
    seed = scenario_seed(config.master_seed, index)
    failed = sample_failed_generators(case, config.n_failed, [seed, 0])
    clusters = sample_uncontrollable_clusters(
        case, config.n_clusters, config.cluster_size, [seed, 1]
    )
    unc = tuple(sorted(n for c in clusters for n in c))
    base = dict(
        index=index, seed=seed, failed=failed, uncontrollable=unc, clusters=clusters,
        mode=config.mode.value,
    )
    try:
        key = (failed, verify)
        if full_cache is not None and key in full_cache:
            y_full, checked_full = full_cache[key]
        else:
            y_full, checked_full = _full_yield(case, failed, verify)
            if full_cache is not None:
                full_cache[key] = (y_full, checked_full)

        partition = apply_mode(partition_areas(case, failed, unc), case, config.mode)
        model = build_partial_model(case, partition)
        sol = prefer_stable_areas(model, solve_milp(model))
        if not sol.optimal:
            raise _Anomaly(f"partial model {sol.status.value}")
        checked = checked_full
        if verify:
            problem = _verify(model, sol)
            if problem:
                raise _Anomaly(f"partial model: {problem}")
            checked = checked and bool(model.binary.sum() <= MAX_BRUTE_FORCE_BINARIES)
        outcome = extract_outcome(case, model, sol, partition)
        limits = (case.omega_min, case.omega_max)
        served, actions = {}, {}
        for area in partition.areas:
            if outcome.stable[area.area_id]:
                continue
            result = run_cascade(area_island(case, area), limits, case.omega_s)
            served[area.area_id] = result.served
            actions[area.area_id] = [a.to_dict() for a in result.actions]
        y_partial = compute_yield(outcome, served, case).ratio
    except (_Anomaly, SolverError, InternalConsistencyError, AccountingError) as exc:
        return ScenarioRecord(
            **base, yield_full=math.nan, yield_partial=math.nan,
            anomaly=str(exc) if isinstance(exc, _Anomaly) else f"{type(exc).__name__}: {exc}",
        )

    stable = tuple(outcome.stable[a.area_id] for a in partition.areas)
    record = ScenarioRecord(
        **base,
        yield_full=y_full,
        yield_partial=y_partial,
        stable=stable,
        n_unstable=stable.count(0),
        cascade_served=served,
        cascade_actions=actions,
        verified=bool(verify and checked),
    )
    if not record.dominance_ok:
        return ScenarioRecord(
            **{**asdict(record), "anomaly": f"dominance violated: {y_full!r} < {y_partial!r}"}
        )
    return record


@dataclass(frozen=True)
class SweepRow:
    config: ScenarioConfig
    mean_yield_partial: float
    mean_yield_full: float
    frac_unstable: float
    frac_pzero_gt_pinit: float | None
    n_anomalies: int

    def csv_fields(self) -> list[str]:
        c = self.config
        pz = "" if self.frac_pzero_gt_pinit is None else repr(self.frac_pzero_gt_pinit)
        return [
            str(c.n_failed), str(c.n_uncontrollable), str(c.cluster_size), c.mode.value,
            repr(self.mean_yield_partial), repr(self.mean_yield_full), repr(self.frac_unstable),
            pz, str(c.replications), str(c.master_seed),
        ]


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    records: tuple[tuple[ScenarioRecord, ...], ...]

    @property
    def n_anomalies(self) -> int:
        return sum(r.n_anomalies for r in self.rows)

    def row(self, n_failed, n_uncontrollable, cluster_size, mode) -> SweepRow:
        key = (n_failed, n_uncontrollable, cluster_size, OperatingMode(mode).value)
        for r in self.rows:
            if r.config.key == key:
                return r
        raise KeyError(key)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow(r.csv_fields())
        return buf.getvalue()

    def to_jsonl(self) -> str:
        lines = []
        for row, recs in zip(self.rows, self.records):
            for rec in recs:
                entry = {"config": list(row.config.key), **rec.to_dict()}
                lines.append(json.dumps(entry, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def _run_config(args) -> tuple[ScenarioRecord, ...]:
    case, config, verify = args
    cache: dict = {}
    return tuple(run_scenario(case, config, i, verify, cache) for i in range(config.replications))


def default_jobs() -> int:
    value = os.environ.get(JOBS_ENV, "1")
    try:
        jobs = int(value)
    except ValueError:
        raise ConfigError(f"{JOBS_ENV}={value!r} is not an integer") from None
    return max(1, jobs)


def _mean(values: list[float]) -> float:
    return float(math.fsum(values) / len(values))


def sweep(
    case: GridCase,
    configs: Sequence[ScenarioConfig],
    jobs: int | None = None,
    verify: bool = False,
) -> SweepTable:
    """Run every configuration and aggregate one row per configuration.

    Work is split per configuration across ``jobs`` processes; records are
    reassembled in configuration and scenario order, so the table does not
    depend on the number of jobs.
    """
    keys = [(c.key, c.master_seed, c.replications) for c in configs]
    if len(set(keys)) != len(keys):
        raise ConfigError("duplicate configuration in sweep")
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    tasks = [(case, c, verify) for c in configs]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_config, tasks))
    else:
        results = [_run_config(t) for t in tasks]

    by_key = {k: recs for k, recs in zip(keys, results)}
    rows = []
    for config, recs in zip(configs, results):
        other = OperatingMode.P_ZERO if config.mode is OperatingMode.P_INIT else OperatingMode.P_INIT
        partner = by_key.get(((*config.key[:3], other.value), config.master_seed, config.replications))
        frac_pz = None
        if partner is not None:
            zero, init = (recs, partner) if config.mode is OperatingMode.P_ZERO else (partner, recs)
            frac_pz = _mean(
                [1.0 if z.yield_partial > i.yield_partial + COMPARE_TOL else 0.0 for z, i in zip(zero, init)]
            )
        rows.append(
            SweepRow(
                config=config,
                mean_yield_partial=_mean([r.yield_partial for r in recs]),
                mean_yield_full=_mean([r.yield_full for r in recs]),
                frac_unstable=_mean([1.0 if r.n_unstable else 0.0 for r in recs]),
                frac_pzero_gt_pinit=frac_pz,
                n_anomalies=sum(1 for r in recs if r.anomaly),
            )
        )
    return SweepTable(rows=tuple(rows), records=tuple(results))


_CONFIG_FIELDS = {"n_failed", "n_uncontrollable", "cluster_size", "mode"}
_SWEEP_FIELDS = {"master_seed", "replications", "configs"}


def configs_from_dict(data: dict) -> list[ScenarioConfig]:
    """Expand a sweep description into configurations.

    Format::

        {"master_seed": 7, "replications": 100,
         "configs": [{"n_failed": 2, "n_uncontrollable": [0, 5, 10],
                      "cluster_size": 1, "mode": ["init", "zero"]}]}

    Any field of a ``configs`` entry may be a list; entries expand to the
    Cartesian product in field order n_failed, n_uncontrollable,
    cluster_size, mode.
    """
    if not isinstance(data, dict):
        raise ConfigError("sweep config must be a JSON object")
    extra = set(data) - _SWEEP_FIELDS
    if extra:
        raise ConfigError(f"unknown sweep fields: {sorted(extra)}")
    if not isinstance(data.get("configs"), list) or not data["configs"]:
        raise ConfigError("'configs' must be a non-empty list")
    seed = data.get("master_seed", 0)
    reps = data.get("replications", 100)
    out = []
    for i, entry in enumerate(data["configs"]):
        if not isinstance(entry, dict):
            raise ConfigError(f"configs[{i}] must be an object")
        extra = set(entry) - _CONFIG_FIELDS
        if extra:
            raise ConfigError(f"configs[{i}]: unknown fields {sorted(extra)}")
        if not {"n_failed", "n_uncontrollable"} <= set(entry):
            raise ConfigError(f"configs[{i}]: 'n_failed' and 'n_uncontrollable' are required")

        def values(name, default):
            v = entry.get(name, default)
            return v if isinstance(v, list) else [v]

        for nf in values("n_failed", 0):
            for nu in values("n_uncontrollable", 0):
                for cs in values("cluster_size", 1):
                    for mode in values("mode", "init"):
                        out.append(ScenarioConfig(nf, nu, cs, mode, seed, reps))
    return out
