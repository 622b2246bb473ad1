"""Compare the compiled and pure-Python simplex kernels.

Builds a fixed batch of emergency-control models on a bundled case and
solves each one with every available kernel, reporting wall time and the
largest objective disagreement. Run from the repository root:

    python benchmarks/bench_simplex.py --models 20 --repeat 3
"""

from __future__ import annotations

import argparse
import time

from gridcomm.cases import load_case
from gridcomm.control import build_full_model, build_partial_model
from gridcomm.milp import KERNELS, solve_lp, solve_milp
from gridcomm.partition import apply_mode, partition_areas
from gridcomm.scenarios import sample_failed_generators, sample_uncontrollable_clusters, scenario_seed


def build_models(case_name: str, count: int, seed: int):
    case = load_case(case_name)
    models = []
    for i in range(count):
        s = scenario_seed(seed, i)
        failed = sample_failed_generators(case, 2, [s, 0])
        if i % 2:
            clusters = sample_uncontrollable_clusters(case, 3, 2, [s, 1])
            part = partition_areas(case, failed, [n for c in clusters for n in c])
            models.append(build_partial_model(case, apply_mode(part, case, "init")))
        else:
            models.append(build_full_model(case, failed))
    return models


def time_kernel(models, kernel: str, repeat: int, lp_only: bool):
    solve = (lambda m: solve_lp(m, kernel=kernel)) if lp_only else (lambda m: solve_milp(m, kernel=kernel))
    best = float("inf")
    objectives = []
    for _ in range(repeat):
        start = time.perf_counter()
        objectives = [solve(m).objective for m in models]
        best = min(best, time.perf_counter() - start)
    return best, objectives


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--case", default="case30")
    parser.add_argument("--models", type=int, default=20)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--lp", action="store_true", help="time root relaxations only")
    args = parser.parse_args(argv)

    models = build_models(args.case, args.models, args.seed)
    sizes = [m.n_vars for m in models]
    print(f"{len(models)} models on {args.case}, {min(sizes)}-{max(sizes)} variables, best of {args.repeat}")

    results = {k: time_kernel(models, k, args.repeat, args.lp) for k in sorted(KERNELS)}
    base = results["python"][0]
    for name, (elapsed, _) in results.items():
        print(f"{name:>8}: {elapsed:8.3f} s  ({base / elapsed:5.1f}x vs python)")
    if len(results) > 1:
        objs = list(results.values())
        gap = max(abs(a - b) for a, b in zip(objs[0][1], objs[1][1]))
        print(f"max objective difference between kernels: {gap:.2e}")
    else:
        print("compiled kernel unavailable; build with `pip install -e . --no-build-isolation`")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
