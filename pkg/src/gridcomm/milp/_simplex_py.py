"""Bounded-variable primal simplex on a dense tableau (numpy fallback kernel).

Solves ``min c @ y  s.t.  A y = b,  0 <= y <= u`` with ``u`` possibly
infinite. Phase 1 uses one implicit artificial per row not covered by a
singleton slack column. Pricing is Dantzig's rule; after a run of degenerate
pivots the kernel switches to Bland's rule until progress resumes.

The Cython kernel in ``_simplex_cy.pyx`` implements the same algorithm with
the same tie-breaking and must stay in lockstep with this file.
"""

import numpy as np

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = 0, 1, 2, 3

PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9
PHASE1_TOL = 1e-7
DRIVE_OUT_TOL = 1e-7
TIE_TOL = 1e-12
DEGENERATE_STEP = 1e-12
DEGENERATE_RUN = 50
PRIMAL_TOL = 1e-9


def _pivot(T, r, q):
    T[r] /= T[r, q]
    col = T[:, q].copy()
    col[r] = 0.0
    rows = np.flatnonzero(col)
    if rows.size:
        T[rows] -= np.outer(col[rows], T[r])
        T[rows, q] = 0.0
    T[r, q] = 1.0


def _iterate(T, xB, basis, ub, at_upper, is_basic, cost, n, max_iter):
    """Run simplex iterations for one phase. Returns (status, iterations)."""
    d = cost[:n] - cost[basis] @ T
    degenerate = 0
    bland = False
    it = 0
    while True:
        cand = ~is_basic[:n] & (ub[:n] > 0.0)
        cand &= np.where(at_upper[:n], d > DUAL_TOL, d < -DUAL_TOL)
        if not cand.any():
            return OPTIMAL, it
        if it >= max_iter:
            return ITERATION_LIMIT, it
        it += 1
        if bland:
            q = int(np.argmax(cand))
        else:
            q = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
        s = -1.0 if at_upper[q] else 1.0
        alpha = s * T[:, q]

        ub_b = ub[basis]
        ratios = np.full(len(xB), np.inf)
        dec = alpha > PIVOT_TOL
        inc = (alpha < -PIVOT_TOL) & np.isfinite(ub_b)
        ratios[dec] = np.maximum(xB[dec], 0.0) / alpha[dec]
        ratios[inc] = np.maximum(ub_b[inc] - xB[inc], 0.0) / -alpha[inc]
        tmin = ratios.min() if len(ratios) else np.inf
        t_flip = ub[q]

        if t_flip <= tmin:
            if np.isinf(t_flip):
                return UNBOUNDED, it
            t = t_flip
            xB -= t * alpha
            at_upper[q] = not at_upper[q]
        else:
            t = tmin
            ties = np.flatnonzero(ratios <= tmin + TIE_TOL)
            if bland:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = basis[r]
            to_upper = alpha[r] < 0.0
            xB -= t * alpha
            xB[r] = t if s > 0 else ub[q] - t
            _pivot(T, r, q)
            dq = d[q]
            if dq != 0.0:
                d -= dq * T[r]
            d[q] = 0.0
            basis[r] = q
            is_basic[q] = True
            is_basic[leaving] = False
            at_upper[leaving] = to_upper
            at_upper[q] = False

        if t <= DEGENERATE_STEP:
            degenerate += 1
            if degenerate > DEGENERATE_RUN:
                bland = True
        else:
            degenerate = 0
            bland = False


def primal(A, b, c, u, max_iter):
    """Solve the standard-form LP and keep the final tableau.

    Returns ``(status, T, xB, basis, at_upper, is_basic, ub, iterations)``.
    ``T`` is the tableau over the ``n`` structural columns; ``basis`` entries
    ``>= n`` denote artificial variables left in redundant rows, and the
    status/bound arrays have length ``n + m`` to cover them.
    """
    m, n = A.shape
    T = np.array(A, dtype=float, order="C", copy=True)
    rhs = np.array(b, dtype=float, copy=True)
    flip = rhs < 0
    T[flip] *= -1.0
    rhs[flip] *= -1.0

    N = n + m
    ub = np.empty(N)
    ub[:n] = u
    ub[n:] = np.inf
    basis = np.arange(n, N)
    xB = rhs.copy()
    is_basic = np.zeros(N, dtype=bool)
    is_basic[n:] = True
    at_upper = np.zeros(N, dtype=bool)

    # Singleton columns with a positive entry start in the basis.
    nnz = np.count_nonzero(T, axis=0)
    for j in np.flatnonzero(nnz == 1):
        i = int(np.flatnonzero(T[:, j])[0])
        coef = T[i, j]
        if coef <= 0.0 or basis[i] < n:
            continue
        val = rhs[i] / coef
        if val > ub[j]:
            continue
        T[i] /= coef
        xB[i] = val
        is_basic[basis[i]] = False
        ub[basis[i]] = 0.0
        basis[i] = j
        is_basic[j] = True

    total = 0
    state = (T, xB, basis, at_upper, is_basic, ub)
    if (basis >= n).any():
        cost1 = np.zeros(N)
        cost1[n:] = 1.0
        status, its = _iterate(T, xB, basis, ub, at_upper, is_basic, cost1, n, max_iter)
        total += its
        if status == ITERATION_LIMIT:
            return (status, *state, total)
        if xB[basis >= n].sum() > PHASE1_TOL:
            return (INFEASIBLE, *state, total)
        for r in np.flatnonzero(basis >= n):
            row = np.where(is_basic[:n], 0.0, np.abs(T[r]))
            q = int(np.argmax(row))
            if row[q] <= DRIVE_OUT_TOL:
                continue
            leaving = basis[r]
            xB[r] = ub[q] if at_upper[q] else 0.0
            _pivot(T, r, q)
            basis[r] = q
            is_basic[q] = True
            is_basic[leaving] = False
            at_upper[q] = False
        ub[n:] = 0.0

    cost2 = np.zeros(N)
    cost2[:n] = c
    status, its = _iterate(T, xB, basis, ub, at_upper, is_basic, cost2, n, max_iter)
    total += its
    return (status, *state, total)


def simplex(A, b, c, u, max_iter):
    """Solve the standard-form LP.

    Returns ``(status, y, basis, iterations)``. Basis entries ``>= n`` denote
    artificial variables left in redundant rows.
    """
    n = A.shape[1]
    status, T, xB, basis, at_upper, is_basic, ub, total = primal(A, b, c, u, max_iter)
    return status, _values(xB, basis, ub, at_upper, n), basis, total


def dual(T, xB, basis, at_upper, is_basic, d, lo, up, max_iter):
    """Bounded dual simplex from a dual-feasible tableau, in place.

    ``lo``/``up`` have length ``n + m``; nonbasic variables sit at ``lo``
    unless flagged ``at_upper``. The leaving row is the largest bound
    violation (lowest row on ties); the entering column minimizes
    ``|d_j / T[r, j]|`` with ties to the largest pivot magnitude, then the
    lowest index. Returns ``(status, iterations)``; status is OPTIMAL,
    INFEASIBLE or ITERATION_LIMIT.
    """
    m, n = T.shape
    it = 0
    while True:
        lo_b, up_b = lo[basis], up[basis]
        below = lo_b - xB
        above = xB - up_b
        viol = np.maximum(below, above)
        r = int(np.argmax(viol)) if m else 0
        if m == 0 or viol[r] <= PRIMAL_TOL:
            return OPTIMAL, it
        if it >= max_iter:
            return ITERATION_LIMIT, it
        it += 1
        delta = -below[r] if below[r] >= above[r] else above[r]

        row = T[r]
        movable = ~is_basic[:n] & (up[:n] > lo[:n])
        want = np.where(at_upper[:n], -np.sign(delta), np.sign(delta))
        cand = movable & (row * want > PIVOT_TOL)
        if not cand.any():
            return INFEASIBLE, it
        absrow = np.abs(row)
        ratio = np.full(n, np.inf)
        ratio[cand] = np.abs(d[cand]) / absrow[cand]
        rmin = ratio.min()
        ties = np.flatnonzero(ratio <= rmin + TIE_TOL)
        q = int(ties[np.argmax(absrow[ties])])

        theta = delta / row[q]
        value_q = up[q] if at_upper[q] else lo[q]
        leaving = basis[r]
        xB -= theta * T[:, q]
        xB[r] = value_q + theta
        _pivot(T, r, q)
        dq = d[q]
        if dq != 0.0:
            d -= dq * T[r]
        d[q] = 0.0
        basis[r] = q
        is_basic[q] = True
        is_basic[leaving] = False
        at_upper[leaving] = delta > 0
        at_upper[q] = False


def _values(xB, basis, ub, at_upper, n):
    y = np.where(at_upper[:n], ub[:n], 0.0)
    mask = basis < n
    y[basis[mask]] = xB[mask]
    return y
