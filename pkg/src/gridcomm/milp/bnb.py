"""Best-bound branch-and-bound over binary variables, plus an enumeration oracle."""

from __future__ import annotations

import heapq
import itertools

import numpy as np

from .lp import WarmLP, solve_with_bounds
from .model import GAP_TOL, INT_TOL, MilpModel, MilpSolution, Status

MAX_BRUTE_FORCE_BINARIES = 20
#: Open-node cap before children are explored depth-first.
MAX_OPEN_NODES = 20000
#: Open nodes allowed to hold a parent tableau; beyond this they restart from the root.
MAX_WARM_OPEN = 64
#: Bounds within this distance are treated as ties so deeper nodes win.
_BOUND_QUANTUM = 1e-9


class TooManyBinariesError(ValueError):
    pass


def _fractional(x: np.ndarray, bins: np.ndarray) -> np.ndarray:
    vals = x[bins]
    return np.abs(vals - np.round(vals))


def solve_milp(model: MilpModel, kernel: str | None = None) -> MilpSolution:
    """Globally optimal solution of a mixed-binary model.

    Nodes are expanded in order of their parent's LP bound (deeper first on
    ties); the branching variable is the most fractional binary, lowest
    index on ties. A rounding heuristic at the root seeds the incumbent.
    Child relaxations are re-optimized from the parent's tableau; while
    many nodes are open they restart from the root tableau instead, which
    keeps memory bounded.
    """
    bins = model.binary_indices
    warm = WarmLP(model, kernel=kernel)
    root = warm.solve_root()
    if not bins.size or not root.optimal:
        return MilpSolution(
            root.status, x=root.x, objective=root.objective, nodes=1,
            lp_iterations=root.lp_iterations, index=model.index,
        )

    iterations = root.lp_iterations
    nodes = 1
    best: MilpSolution | None = None
    best_obj = np.inf

    def consider(sol: MilpSolution) -> None:
        nonlocal best, best_obj
        if sol.optimal and sol.objective < best_obj - 1e-12:
            best, best_obj = sol, sol.objective

    def relax(parent_tab, fixes, lb, ub):
        """LP at a node: warm start when possible, cold solve otherwise."""
        nonlocal iterations
        sol, tab = warm.reoptimize(parent_tab, fixes)
        if sol is None:
            sol, tab = solve_with_bounds(model, lb, ub, kernel=kernel), None
        iterations += sol.lp_iterations
        return sol, tab

    def fixes_from_root(lb, ub):
        diff = np.flatnonzero((lb != model.lb) | (ub != model.ub))
        return {int(j): float(lb[j]) for j in diff}

    def fix_and_resolve(sol, tab, lb, ub):
        rounded = np.round(sol.x[bins])
        flb, fub = lb.copy(), ub.copy()
        flb[bins] = rounded
        fub[bins] = rounded
        fixes = {int(j): float(v) for j, v in zip(bins, rounded)}
        fixed, _ = relax(tab, fixes, flb, fub)
        return fixed

    counter = itertools.count()
    heap: list = []
    stack: list = []

    def branch(sol, tab, lb, ub, depth):
        frac = _fractional(sol.x, bins)
        k = int(np.argmax(frac))  # first maximum = lowest index
        j = int(bins[k])
        up_first = sol.x[j] >= 0.5
        keep = tab if len(heap) + len(stack) < MAX_WARM_OPEN else None
        children = []
        for val in ((1.0, 0.0) if up_first else (0.0, 1.0)):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = val
            children.append((clb, cub, {j: val}))
        key = round(sol.objective / _BOUND_QUANTUM)
        if len(heap) >= MAX_OPEN_NODES:
            # depth-first: the preferred child must be popped first
            for clb, cub, fix in reversed(children):
                stack.append((sol.objective, clb, cub, keep, fix, depth + 1))
        else:
            for clb, cub, fix in children:
                heapq.heappush(
                    heap, (key, -(depth + 1), next(counter), sol.objective, clb, cub, keep, fix)
                )

    def process(sol, tab, lb, ub, depth):
        if not sol.optimal or sol.objective >= best_obj - GAP_TOL:
            return
        if _fractional(sol.x, bins).max() <= INT_TOL:
            fixed = fix_and_resolve(sol, tab, lb, ub)
            if fixed.optimal and fixed.objective <= sol.objective + GAP_TOL:
                consider(fixed)
                return
        branch(sol, tab, lb, ub, depth)

    if _fractional(root.x, bins).max() > INT_TOL:
        consider(fix_and_resolve(root, warm.root_tableau, model.lb, model.ub))
    process(root, warm.root_tableau, model.lb, model.ub, 0)

    while heap or stack:
        if stack:
            parent_obj, lb, ub, tab, fix, depth = stack.pop()
        else:
            _, negdepth, _, parent_obj, lb, ub, tab, fix = heapq.heappop(heap)
            depth = -negdepth
            if parent_obj >= best_obj - GAP_TOL:
                break
        if parent_obj >= best_obj - GAP_TOL:
            continue
        if tab is None:
            fix = fixes_from_root(lb, ub)
        sol, child_tab = relax(tab, fix, lb, ub)
        nodes += 1
        process(sol, child_tab, lb, ub, depth)

    if best is None:
        return MilpSolution(Status.INFEASIBLE, nodes=nodes, lp_iterations=iterations, index=model.index)
    x = best.x.copy()
    x[bins] = np.round(x[bins])
    return MilpSolution(
        Status.OPTIMAL, x=x, objective=best.objective, nodes=nodes,
        lp_iterations=iterations, index=model.index,
    )


def brute_force_milp(model: MilpModel, kernel: str | None = None) -> MilpSolution:
    """Enumerate every binary assignment and keep the best LP optimum.

    Assignments are visited in binary counting order (first binary is the
    least significant digit); the first strictly best one wins.
    """
    bins = model.binary_indices
    if len(bins) > MAX_BRUTE_FORCE_BINARIES:
        raise TooManyBinariesError(
            f"{len(bins)} binaries exceeds the enumeration limit of {MAX_BRUTE_FORCE_BINARIES}"
        )
    best: MilpSolution | None = None
    unbounded = False
    iterations = 0
    count = 0
    lb, ub = model.lb.copy(), model.ub.copy()
    for combo in itertools.product((0.0, 1.0), repeat=len(bins)):
        vals = np.array(combo[::-1])
        if len(bins) and ((vals < model.lb[bins]) | (vals > model.ub[bins])).any():
            continue
        lb[bins] = vals
        ub[bins] = vals
        sol = solve_with_bounds(model, lb, ub, kernel=kernel)
        count += 1
        iterations += sol.lp_iterations
        if sol.status is Status.UNBOUNDED:
            unbounded = True
        elif sol.optimal and (best is None or sol.objective < best.objective - 1e-12):
            best = sol
    if unbounded:
        return MilpSolution(Status.UNBOUNDED, nodes=count, lp_iterations=iterations, index=model.index)
    if best is None:
        return MilpSolution(Status.INFEASIBLE, nodes=count, lp_iterations=iterations, index=model.index)
    return MilpSolution(
        Status.OPTIMAL, x=best.x, objective=best.objective, nodes=count,
        lp_iterations=iterations, index=model.index,
    )
