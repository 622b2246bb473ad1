"""Continuous LP solves over a :class:`MilpModel` with the simplex kernel."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _simplex_py
from .model import EQ, FEAS_TOL, GE, LE, MilpModel, MilpSolution, Status

try:
    if os.environ.get("GRIDCOMM_PURE_PYTHON"):
        raise ImportError("compiled kernel disabled by GRIDCOMM_PURE_PYTHON")
    from . import _simplex_cy
except ImportError:
    _simplex_cy = None

KERNELS = {"python": _simplex_py.simplex}
PRIMAL_KERNELS = {"python": _simplex_py.primal}
DUAL_KERNELS = {"python": _simplex_py.dual}
if _simplex_cy is not None:
    KERNELS["cython"] = _simplex_cy.simplex
    PRIMAL_KERNELS["cython"] = _simplex_cy.primal
    DUAL_KERNELS["cython"] = _simplex_cy.dual

DEFAULT_KERNEL = "cython" if "cython" in KERNELS else "python"

_EMPTY_ROW_TOL = 1e-9
_POLISH_TRIGGER = 1e-10
#: Equality residual above which a warm-started result is discarded.
_WARM_CHECK_TOL = 1e-8


class SolverError(RuntimeError):
    """The simplex kernel failed to terminate or produced an inconsistent point."""


def kernel_name(kernel: str | None = None) -> str:
    name = kernel or os.environ.get("GRIDCOMM_KERNEL") or DEFAULT_KERNEL
    if name not in KERNELS:
        raise ValueError(f"unknown simplex kernel {name!r}; available: {sorted(KERNELS)}")
    return name


def solve_lp(model: MilpModel, relaxed: bool = True, kernel: str | None = None) -> MilpSolution:
    """Solve the continuous problem.

    With ``relaxed`` binaries range over [0, 1]; without it every binary
    must already be fixed by its bounds.
    """
    if not relaxed:
        open_bins = model.binary & (model.lb != model.ub)
        if open_bins.any():
            raise ValueError("model has unfixed binaries; use solve_milp or relaxed=True")
    return solve_with_bounds(model, model.lb, model.ub, kernel=kernel)


@dataclass(frozen=True)
class _StandardForm:
    """``min c@y, A y = b, 0 <= y <= u`` derived from model bounds.

    Structural column ``k`` maps to model variable ``J[k]`` through
    ``x = shift + sign * y`` (minus the split column for free variables).
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    u: np.ndarray
    J: np.ndarray
    shift: np.ndarray
    sign: np.ndarray
    free: np.ndarray
    x_fixed: np.ndarray


def _standard_form(model: MilpModel, lb: np.ndarray, ub: np.ndarray) -> _StandardForm | None:
    """Presolve fixed variables and empty rows; ``None`` if trivially infeasible."""
    A, sense, c = model.A, model.sense, model.c
    fixed = lb == ub
    J = np.flatnonzero(~fixed)
    x = np.where(fixed, lb, 0.0)
    rhs = model.rhs - A[:, fixed] @ lb[fixed] if fixed.any() else model.rhs.copy()
    AJ = A[:, J]

    active = np.any(AJ != 0.0, axis=1)
    if not active.all():
        r, s = rhs[~active], sense[~active]
        bad = ((s == LE) & (r < -_EMPTY_ROW_TOL)) | ((s == GE) & (r > _EMPTY_ROW_TOL))
        bad |= (s == EQ) & (np.abs(r) > _EMPTY_ROW_TOL)
        if bad.any():
            return None
        AJ, rhs, sense = AJ[active], rhs[active], sense[active]

    lbJ, ubJ, cJ = lb[J], ub[J], c[J]
    fin_lb, fin_ub = np.isfinite(lbJ), np.isfinite(ubJ)
    free = ~fin_lb & ~fin_ub
    mirrored = ~fin_lb & fin_ub
    shift = np.where(fin_lb, lbJ, np.where(mirrored, ubJ, 0.0))
    sign = np.where(mirrored, -1.0, 1.0)
    width = np.where(fin_lb, ubJ - lbJ, np.inf)

    m = AJ.shape[0]
    slack_rows = np.flatnonzero(sense != EQ)
    slack = np.zeros((m, len(slack_rows)))
    slack[slack_rows, np.arange(len(slack_rows))] = np.where(sense[slack_rows] == LE, 1.0, -1.0)
    return _StandardForm(
        A=np.hstack([AJ * sign, -AJ[:, free], slack]),
        b=rhs - AJ @ shift,
        c=np.concatenate([cJ * sign, -cJ[free], np.zeros(len(slack_rows))]),
        u=np.concatenate([width, np.full(int(free.sum()) + len(slack_rows), np.inf)]),
        J=J,
        shift=shift,
        sign=sign,
        free=free,
        x_fixed=x,
    )


def _max_iter(A: np.ndarray) -> int:
    return 50 * (A.shape[0] + A.shape[1]) + 1000


def _recover(std: _StandardForm, y: np.ndarray) -> np.ndarray:
    n_j = len(std.J)
    xj = std.shift + std.sign * y[:n_j]
    xj[std.free] -= y[n_j : n_j + int(std.free.sum())]
    x = std.x_fixed.copy()
    x[std.J] = xj
    return x


def solve_with_bounds(
    model: MilpModel, lb: np.ndarray, ub: np.ndarray, kernel: str | None = None
) -> MilpSolution:
    """LP over ``model`` with bounds overridden by ``lb``/``ub``."""
    simplex = KERNELS[kernel_name(kernel)]
    if (lb > ub).any():
        return MilpSolution(Status.INFEASIBLE, index=model.index)
    std = _standard_form(model, lb, ub)
    if std is None:
        return MilpSolution(Status.INFEASIBLE, index=model.index)
    if len(std.J) == 0:
        x = std.x_fixed
        return MilpSolution(Status.OPTIMAL, x=x, objective=float(model.c @ x), index=model.index)

    status, y, basis, iters = simplex(std.A, std.b, std.c, std.u, _max_iter(std.A))
    if status == _simplex_py.ITERATION_LIMIT:
        raise SolverError(f"simplex iteration limit reached on model {model.name!r}")
    if status == _simplex_py.INFEASIBLE:
        return MilpSolution(Status.INFEASIBLE, index=model.index, lp_iterations=iters)
    if status == _simplex_py.UNBOUNDED:
        return MilpSolution(Status.UNBOUNDED, index=model.index, lp_iterations=iters)

    y = _polish(std.A, std.b, np.zeros_like(std.u), std.u, y, basis)
    x = _recover(std, y)
    return MilpSolution(
        Status.OPTIMAL,
        x=x,
        objective=float(model.c @ x),
        nodes=0,
        lp_iterations=iters,
        index=model.index,
    )


@dataclass
class Tableau:
    """Optimal simplex tableau kept for re-optimization after bound changes."""

    T: np.ndarray
    xB: np.ndarray
    basis: np.ndarray
    at_upper: np.ndarray
    is_basic: np.ndarray
    d: np.ndarray
    lo: np.ndarray
    up: np.ndarray

    def copy(self) -> "Tableau":
        return Tableau(*(getattr(self, f).copy() for f in self.__dataclass_fields__))


class WarmLP:
    """LP relaxations of one model that differ only in fixed binaries.

    The root relaxation is solved once with the primal kernel. A node that
    fixes binaries re-optimizes a copy of its parent's tableau with the dual
    simplex, which typically needs a handful of pivots instead of a full
    solve. Results that fail an independent feasibility check, or dual runs
    that hit the iteration limit, are reported as ``None`` so callers can
    fall back to :func:`solve_with_bounds`.
    """

    def __init__(self, model: MilpModel, kernel: str | None = None) -> None:
        self.model = model
        self.kernel = kernel_name(kernel)
        self._primal = PRIMAL_KERNELS[self.kernel]
        self._dual = DUAL_KERNELS[self.kernel]
        self.std = _standard_form(model, model.lb, model.ub) if not (model.lb > model.ub).any() else None
        self.root_tableau: Tableau | None = None
        if self.std is not None:
            self._col = np.full(model.n_vars, -1)
            self._col[self.std.J] = np.arange(len(self.std.J))

    def solve_root(self) -> MilpSolution:
        model, std = self.model, self.std
        if std is None or len(std.J) == 0:
            return solve_with_bounds(model, model.lb, model.ub, kernel=self.kernel)
        status, T, xB, basis, at_upper, is_basic, ub, iters = self._primal(
            std.A, std.b, std.c, std.u, _max_iter(std.A)
        )
        if status == _simplex_py.ITERATION_LIMIT:
            raise SolverError(f"simplex iteration limit reached on model {model.name!r}")
        if status == _simplex_py.INFEASIBLE:
            return MilpSolution(Status.INFEASIBLE, index=model.index, lp_iterations=iters)
        if status == _simplex_py.UNBOUNDED:
            return MilpSolution(Status.UNBOUNDED, index=model.index, lp_iterations=iters)
        n = T.shape[1]
        cost = np.concatenate([std.c, np.zeros(len(basis))])
        d = std.c - cost[basis] @ T
        self.root_tableau = Tableau(T, xB, basis, at_upper, is_basic, d, np.zeros_like(ub), ub.copy())
        return self._solution(self.root_tableau, iters, n)

    def reoptimize(
        self, parent: Tableau | None, fixes: dict[int, float]
    ) -> tuple[MilpSolution | None, Tableau | None]:
        """Fix model variables ``{index: value}`` on top of ``parent``.

        ``parent=None`` starts from the root tableau. Returns
        ``(solution, tableau)``; the solution is ``None`` when the caller
        should solve from scratch.
        """
        base = self.root_tableau if parent is None else parent
        if base is None:
            return None, None
        tab = base.copy()
        std = self.std
        for j, val in fixes.items():
            k = int(self._col[j])
            if k < 0:
                if std.x_fixed[j] != val:
                    return MilpSolution(Status.INFEASIBLE, index=self.model.index), None
                continue
            yv = (val - std.shift[k]) * std.sign[k]
            if not tab.is_basic[k]:
                old = tab.up[k] if tab.at_upper[k] else tab.lo[k]
                if yv != old:
                    tab.xB -= tab.T[:, k] * (yv - old)
                tab.at_upper[k] = 0
            tab.lo[k] = tab.up[k] = yv
        status, iters = self._dual(
            tab.T, tab.xB, tab.basis, tab.at_upper, tab.is_basic, tab.d, tab.lo, tab.up,
            _max_iter(tab.T),
        )
        if status == _simplex_py.INFEASIBLE:
            return MilpSolution(Status.INFEASIBLE, index=self.model.index, lp_iterations=iters), None
        if status != _simplex_py.OPTIMAL:
            return None, None
        sol = self._solution(tab, iters, tab.T.shape[1])
        return (sol, tab) if sol is not None else (None, None)

    def _solution(self, tab: Tableau, iters: int, n: int) -> MilpSolution | None:
        std, model = self.std, self.model
        y = np.where(tab.at_upper[:n].astype(bool), tab.up[:n], tab.lo[:n])
        mask = tab.basis < n
        y[tab.basis[mask]] = tab.xB[mask]
        y = _polish(std.A, std.b, tab.lo[:n], tab.up[:n], y, tab.basis)
        x = _recover(std, y)
        if np.abs(std.A @ y - std.b).max(initial=0.0) > _WARM_CHECK_TOL:
            return None
        return MilpSolution(
            Status.OPTIMAL, x=x, objective=float(model.c @ x), lp_iterations=iters, index=model.index
        )


def _polish(
    A: np.ndarray, b: np.ndarray, lo: np.ndarray, up: np.ndarray, y: np.ndarray, basis: np.ndarray
) -> np.ndarray:
    """Recompute basic values from the original matrix to shed pivot drift."""
    if np.abs(A @ y - b).max(initial=0.0) <= _POLISH_TRIGGER:
        return y
    n = A.shape[1]
    rows = np.flatnonzero(basis < n)
    cols = basis[rows]
    nonbasic = np.ones(n, dtype=bool)
    nonbasic[cols] = False
    rhs = b[rows] - A[np.ix_(rows, np.flatnonzero(nonbasic))] @ y[nonbasic]
    try:
        yb = np.linalg.solve(A[np.ix_(rows, cols)], rhs)
    except np.linalg.LinAlgError:
        return y
    out = y.copy()
    out[cols] = yb
    if np.abs(A @ out - b).max(initial=0.0) > np.abs(A @ y - b).max(initial=0.0):
        return y
    return np.clip(out, lo, up)


def check_feasible(model: MilpModel, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
    """Whether ``x`` satisfies every row, bound and integrality requirement."""
    if model.constraint_residual(x) > tol:
        return False
    vals = x[model.binary]
    return bool(np.all(np.abs(vals - np.round(vals)) <= tol))
