"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 unreadable or invalid input,
3 solver anomaly.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cascade import run_cascade
from .cases import CaseFormatError, CaseValidationError, load_case
from .control import (
    AccountingError,
    InternalConsistencyError,
    build_full_model,
    build_partial_model,
    compute_yield,
    extract_outcome,
    prefer_stable_areas,
)
from .grid import validate_case
from .milp import SolverError, solve_milp
from .partition import OperatingMode, apply_mode, area_island, partition_areas
from .scenarios import JOBS_ENV, ConfigError, SamplingError, configs_from_dict, default_jobs, sweep

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class InputError(Exception):
    pass


class SolverAnomaly(Exception):
    pass


def _ids(text: str | None) -> list[str]:
    if not text:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _load(path: str):
    try:
        return load_case(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _outcome_payload(case, outcome, yld) -> dict:
    return {
        "objective": outcome.objective,
        "yield": yld.ratio,
        "served_total": yld.served,
        "initial_load": yld.initial,
        "served": outcome.served,
        "dispatch": outcome.dispatch,
        "line_status": outcome.line_status,
        "flow": outcome.flow,
        "omega": outcome.omega,
    }


def cmd_validate(args) -> int:
    case = _load(args.case)
    report = validate_case(case)
    print(f"ok: {len(case.nodes)} nodes, {len(case.lines)} lines" if report.ok else str(report))
    return EXIT_OK if report.ok else EXIT_INPUT


def cmd_solve_full(args) -> int:
    case = _load(args.case)
    failed = _ids(args.fail)
    partition = partition_areas(case, failed, ())
    model = build_full_model(case, failed)
    sol = solve_milp(model)
    if not sol.optimal:
        raise SolverAnomaly(f"full model is {sol.status.value}")
    outcome = extract_outcome(case, model, sol, partition)
    payload = _outcome_payload(case, outcome, compute_yield(outcome, {}, case))
    payload.update(failed=failed, nodes=sol.nodes)
    _emit(payload)
    return EXIT_OK


def _areas_payload(case, partition, outcome=None) -> tuple[dict, dict]:
    limits = (case.omega_min, case.omega_max)
    served, report = {}, {}
    for area in partition.areas:
        entry = {"nodes": list(area.nodes), "border_lines": list(area.border_lines)}
        if outcome is not None:
            entry["stable"] = outcome.stable[area.area_id]
        if outcome is None or not outcome.stable[area.area_id]:
            result = run_cascade(area_island(case, area), limits, case.omega_s)
            served[area.area_id] = result.served
            entry.update(
                cascade_served=result.served,
                cascade_initial=result.initial,
                actions=[a.to_dict() for a in result.actions],
            )
        report[str(area.area_id)] = entry
    return served, report


def cmd_solve_partial(args) -> int:
    case = _load(args.case)
    failed = _ids(args.fail)
    partition = apply_mode(
        partition_areas(case, failed, _ids(args.uncontrollable)), case, OperatingMode(args.mode)
    )
    model = build_partial_model(case, partition)
    sol = prefer_stable_areas(model, solve_milp(model))
    if not sol.optimal:
        raise SolverAnomaly(f"partial model is {sol.status.value}")
    outcome = extract_outcome(case, model, sol, partition)
    served, areas = _areas_payload(case, partition, outcome)
    payload = _outcome_payload(case, outcome, compute_yield(outcome, served, case))
    payload.update(failed=failed, mode=args.mode, areas=areas, nodes=sol.nodes)
    _emit(payload)
    return EXIT_OK


def cmd_cascade(args) -> int:
    case = _load(args.case)
    island = _ids(args.island)
    if not island:
        raise InputError("--island needs at least one node id")
    partition = apply_mode(partition_areas(case, (), island), case, OperatingMode(args.mode))
    _, areas = _areas_payload(case, partition)
    _emit({"mode": args.mode, "areas": areas})
    return EXIT_OK


def cmd_sweep(args) -> int:
    case = _load(args.case)
    try:
        data = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.config}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    configs = configs_from_dict(data)
    jobs = args.jobs if args.jobs is not None else default_jobs()
    table = sweep(case, configs, jobs=jobs, verify=args.verify)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(table.to_csv())
    if args.detail:
        (out / "records.jsonl").write_text(table.to_jsonl())
    n_bad = table.n_anomalies
    print(f"wrote {out / 'sweep.csv'} ({len(table.rows)} rows, {n_bad} anomalies)", file=sys.stderr)
    if n_bad:
        for recs in table.records:
            for rec in recs:
                if rec.anomaly:
                    print(f"scenario {rec.index}: {rec.anomaly}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridcomm", description="Grid emergency control under communication loss.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a case file")
    p.add_argument("case", help="case JSON path or bundled name (case5, case30, case7_transit)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-full", help="optimal control with full communication")
    p.add_argument("case")
    p.add_argument("--fail", metavar="IDS", help="comma-separated failed node ids")
    p.set_defaults(func=cmd_solve_full)

    p = sub.add_parser("solve-partial", help="optimal control with uncontrollable areas")
    p.add_argument("case")
    p.add_argument("--uncontrollable", metavar="IDS", required=True)
    p.add_argument("--fail", metavar="IDS")
    p.add_argument("--mode", choices=[m.value for m in OperatingMode], required=True)
    p.set_defaults(func=cmd_solve_partial)

    p = sub.add_parser("cascade", help="relay cascade in an islanded area")
    p.add_argument("case")
    p.add_argument("--island", metavar="IDS", required=True)
    p.add_argument("--mode", choices=[m.value for m in OperatingMode], required=True)
    p.set_defaults(func=cmd_cascade)

    p = sub.add_parser("sweep", help="Monte Carlo sweep to CSV")
    p.add_argument("case")
    p.add_argument("--config", required=True, help="sweep JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--jobs", type=int, default=None,
        help=f"worker processes (default: ${JOBS_ENV} or 1); never changes results",
    )
    p.add_argument("--verify", action="store_true", help="cross-check MILPs with <= 20 binaries by enumeration")
    p.add_argument("--detail", action="store_true", help="also write per-scenario records.jsonl")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, CaseFormatError, CaseValidationError, ConfigError, SamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyError as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverAnomaly, SolverError, InternalConsistencyError, AccountingError) as exc:
        print(f"solver anomaly: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
