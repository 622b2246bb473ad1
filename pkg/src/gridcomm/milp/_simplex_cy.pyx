# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bounded-variable primal simplex kernel.

Same algorithm, tolerances and tie-breaking as ``_simplex_py``; keep the two
in lockstep.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY, isinf

cnp.import_array()

DEF PIVOT_TOL = 1e-9
DEF DUAL_TOL = 1e-9
DEF PHASE1_TOL = 1e-7
DEF DRIVE_OUT_TOL = 1e-7
DEF TIE_TOL = 1e-12
DEF DEGENERATE_STEP = 1e-12
DEF DEGENERATE_RUN = 50
DEF PRIMAL_TOL = 1e-9

cdef enum:
    OPTIMAL = 0
    INFEASIBLE = 1
    UNBOUNDED = 2
    ITERATION_LIMIT = 3


cdef void _pivot(double[:, ::1] T, Py_ssize_t r, Py_ssize_t q,
                 Py_ssize_t[::1] nzcols) noexcept nogil:
    cdef Py_ssize_t m = T.shape[0], n = T.shape[1]
    cdef Py_ssize_t i, j, k, nnz = 0
    cdef double piv = T[r, q], f
    for j in range(n):
        T[r, j] = T[r, j] / piv
    for j in range(n):
        if T[r, j] != 0.0:
            nzcols[nnz] = j
            nnz += 1
    for i in range(m):
        if i == r:
            continue
        f = T[i, q]
        if f == 0.0:
            continue
        for k in range(nnz):
            j = nzcols[k]
            T[i, j] = T[i, j] - f * T[r, j]
        T[i, q] = 0.0
    T[r, q] = 1.0


cdef int _iterate(double[:, ::1] T, double[::1] xB, Py_ssize_t[::1] basis,
                  double[::1] ub, char[::1] at_upper, char[::1] is_basic,
                  double[::1] cost, Py_ssize_t n, long max_iter, long *iters,
                  double[::1] d, double[::1] alpha, double[::1] ratios,
                  Py_ssize_t[::1] nzcols) noexcept nogil:
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t i, j, q, r, leaving
    cdef double best, v, s, t, tmin, t_flip, ub_b, dq, a
    cdef int degenerate = 0
    cdef bint bland = False, to_upper
    cdef long it = 0

    for j in range(n):
        d[j] = 0.0
    for i in range(m):
        v = cost[basis[i]]
        if v != 0.0:
            for j in range(n):
                d[j] += v * T[i, j]
    for j in range(n):
        d[j] = cost[j] - d[j]

    while True:
        q = -1
        best = -1.0
        for j in range(n):
            if is_basic[j] or ub[j] <= 0.0:
                continue
            v = d[j]
            if at_upper[j]:
                if v <= DUAL_TOL:
                    continue
            elif v >= -DUAL_TOL:
                continue
            if bland:
                q = j
                break
            if fabs(v) > best:
                best = fabs(v)
                q = j
        if q < 0:
            iters[0] = it
            return OPTIMAL
        if it >= max_iter:
            iters[0] = it
            return ITERATION_LIMIT
        it += 1

        s = -1.0 if at_upper[q] else 1.0
        tmin = INFINITY
        for i in range(m):
            a = s * T[i, q]
            alpha[i] = a
            ratios[i] = INFINITY
            if a > PIVOT_TOL:
                v = xB[i] if xB[i] > 0.0 else 0.0
                ratios[i] = v / a
            elif a < -PIVOT_TOL:
                ub_b = ub[basis[i]]
                if not isinf(ub_b):
                    v = ub_b - xB[i]
                    if v < 0.0:
                        v = 0.0
                    ratios[i] = v / -a
            if ratios[i] < tmin:
                tmin = ratios[i]
        t_flip = ub[q]

        if t_flip <= tmin:
            if isinf(t_flip):
                iters[0] = it
                return UNBOUNDED
            t = t_flip
            for i in range(m):
                xB[i] = xB[i] - t * alpha[i]
            at_upper[q] = not at_upper[q]
        else:
            t = tmin
            r = -1
            for i in range(m):
                if ratios[i] <= tmin + TIE_TOL:
                    if r < 0:
                        r = i
                    elif bland:
                        if basis[i] < basis[r]:
                            r = i
                    elif fabs(alpha[i]) > fabs(alpha[r]):
                        r = i
            leaving = basis[r]
            to_upper = alpha[r] < 0.0
            for i in range(m):
                xB[i] = xB[i] - t * alpha[i]
            xB[r] = t if s > 0 else ub[q] - t
            _pivot(T, r, q, nzcols)
            dq = d[q]
            if dq != 0.0:
                for j in range(n):
                    d[j] = d[j] - dq * T[r, j]
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


def primal(A, b, c, u, long max_iter):
    """Solve ``min c@y, A y = b, 0 <= y <= u``; see ``_simplex_py.primal``."""
    cdef Py_ssize_t m = A.shape[0], n = A.shape[1]
    cdef Py_ssize_t N = n + m
    cdef Py_ssize_t i, j, q, leaving, cnt, row
    cdef double coef, val, best, infeas
    cdef long its = 0, total = 0
    cdef int status

    T_arr = np.array(A, dtype=np.float64, order="C", copy=True)
    rhs_arr = np.array(b, dtype=np.float64, copy=True)
    cdef double[:, ::1] T = T_arr
    cdef double[::1] rhs = rhs_arr
    for i in range(m):
        if rhs[i] < 0:
            rhs[i] = -rhs[i]
            for j in range(n):
                T[i, j] = -T[i, j]

    ub_arr = np.empty(N, dtype=np.float64)
    ub_arr[:n] = u
    ub_arr[n:] = np.inf
    cdef double[::1] ub = ub_arr
    basis_arr = np.arange(n, N, dtype=np.intp)
    cdef Py_ssize_t[::1] basis = basis_arr
    xB_arr = rhs_arr.copy()
    cdef double[::1] xB = xB_arr
    is_basic_arr = np.zeros(N, dtype=np.int8)
    is_basic_arr[n:] = 1
    cdef char[::1] is_basic = is_basic_arr.view(np.byte)
    at_upper_arr = np.zeros(N, dtype=np.int8)
    cdef char[::1] at_upper = at_upper_arr.view(np.byte)

    d_arr = np.zeros(n)
    alpha_arr = np.zeros(m)
    ratios_arr = np.zeros(m)
    nz_arr = np.zeros(n, dtype=np.intp)
    cdef double[::1] d = d_arr, alpha = alpha_arr, ratios = ratios_arr
    cdef Py_ssize_t[::1] nzcols = nz_arr

    for j in range(n):
        cnt = 0
        row = -1
        for i in range(m):
            if T[i, j] != 0.0:
                cnt += 1
                row = i
        if cnt != 1:
            continue
        coef = T[row, j]
        if coef <= 0.0 or basis[row] < n:
            continue
        val = rhs[row] / coef
        if val > ub[j]:
            continue
        for q in range(n):
            T[row, q] = T[row, q] / coef
        xB[row] = val
        is_basic[basis[row]] = False
        ub[basis[row]] = 0.0
        basis[row] = j
        is_basic[j] = True

    cdef bint need_phase1 = False
    for i in range(m):
        if basis[i] >= n:
            need_phase1 = True
            break

    cost_arr = np.zeros(N)
    cdef double[::1] cost = cost_arr
    if need_phase1:
        for i in range(n, N):
            cost[i] = 1.0
        with nogil:
            status = _iterate(T, xB, basis, ub, at_upper, is_basic, cost, n, max_iter,
                              &its, d, alpha, ratios, nzcols)
        total += its
        if status == ITERATION_LIMIT:
            return status, T_arr, xB_arr, basis_arr, at_upper_arr, is_basic_arr, ub_arr, total
        infeas = 0.0
        for i in range(m):
            if basis[i] >= n:
                infeas += xB[i]
        if infeas > PHASE1_TOL:
            return INFEASIBLE, T_arr, xB_arr, basis_arr, at_upper_arr, is_basic_arr, ub_arr, total
        for i in range(m):
            if basis[i] < n:
                continue
            q = -1
            best = -1.0
            for j in range(n):
                if is_basic[j]:
                    continue
                if fabs(T[i, j]) > best:
                    best = fabs(T[i, j])
                    q = j
            if q < 0 or best <= DRIVE_OUT_TOL:
                continue
            leaving = basis[i]
            xB[i] = ub[q] if at_upper[q] else 0.0
            _pivot(T, i, q, nzcols)
            basis[i] = q
            is_basic[q] = True
            is_basic[leaving] = False
            at_upper[q] = False
        for i in range(n, N):
            ub[i] = 0.0
            cost[i] = 0.0

    for j in range(n):
        cost[j] = c[j]
    with nogil:
        status = _iterate(T, xB, basis, ub, at_upper, is_basic, cost, n, max_iter,
                          &its, d, alpha, ratios, nzcols)
    total += its
    return status, T_arr, xB_arr, basis_arr, at_upper_arr, is_basic_arr, ub_arr, total


def simplex(A, b, c, u, long max_iter):
    """Solve the standard-form LP; see ``_simplex_py.simplex``."""
    status, T, xB, basis, at_upper, is_basic, ub, total = primal(A, b, c, u, max_iter)
    return status, _values(xB, basis, ub, at_upper, A.shape[1]), basis, total


cdef inline double _dual_ratio(double[:, ::1] T, Py_ssize_t r, Py_ssize_t j, double delta,
                               char[::1] is_basic, char[::1] at_upper, double[::1] d,
                               double[::1] lo, double[::1] up) noexcept nogil:
    """``|d_j / T[r, j]|`` for an eligible entering column, else infinity."""
    cdef double a
    if is_basic[j] or up[j] <= lo[j]:
        return INFINITY
    a = T[r, j]
    if at_upper[j]:
        a = -a
    if delta < 0:
        a = -a
    if a <= PIVOT_TOL:
        return INFINITY
    return fabs(d[j]) / fabs(T[r, j])


cdef int _dual(double[:, ::1] T, double[::1] xB, Py_ssize_t[::1] basis,
               char[::1] at_upper, char[::1] is_basic, double[::1] d,
               double[::1] lo, double[::1] up, long max_iter, long *iters,
               double[::1] col, Py_ssize_t[::1] nzcols) noexcept nogil:
    cdef Py_ssize_t m = T.shape[0], n = T.shape[1]
    cdef Py_ssize_t i, j, r, q, leaving
    cdef double worst, v, delta, ratio, rmin, best_a, theta, value_q, dq
    cdef long it = 0
    while True:
        r = -1
        worst = PRIMAL_TOL
        delta = 0.0
        for i in range(m):
            v = lo[basis[i]] - xB[i]
            if v > worst:
                worst = v
                r = i
                delta = -v
            v = xB[i] - up[basis[i]]
            if v > worst:
                worst = v
                r = i
                delta = v
        if r < 0:
            iters[0] = it
            return OPTIMAL
        if it >= max_iter:
            iters[0] = it
            return ITERATION_LIMIT
        it += 1

        rmin = INFINITY
        for j in range(n):
            ratio = _dual_ratio(T, r, j, delta, is_basic, at_upper, d, lo, up)
            if ratio < rmin:
                rmin = ratio
        q = -1
        best_a = 0.0
        if rmin < INFINITY:
            for j in range(n):
                ratio = _dual_ratio(T, r, j, delta, is_basic, at_upper, d, lo, up)
                if ratio <= rmin + TIE_TOL and fabs(T[r, j]) > best_a:
                    best_a = fabs(T[r, j])
                    q = j
        if q < 0:
            iters[0] = it
            return INFEASIBLE

        theta = delta / T[r, q]
        value_q = up[q] if at_upper[q] else lo[q]
        leaving = basis[r]
        for i in range(m):
            col[i] = T[i, q]
        for i in range(m):
            xB[i] = xB[i] - theta * col[i]
        xB[r] = value_q + theta
        _pivot(T, r, q, nzcols)
        dq = d[q]
        if dq != 0.0:
            for j in range(n):
                d[j] = d[j] - dq * T[r, j]
        d[q] = 0.0
        basis[r] = q
        is_basic[q] = True
        is_basic[leaving] = False
        at_upper[leaving] = delta > 0
        at_upper[q] = False


def dual(T_arr, xB_arr, basis_arr, at_upper_arr, is_basic_arr, d_arr, lo_arr, up_arr, long max_iter):
    """Bounded dual simplex from a dual-feasible tableau; see ``_simplex_py.dual``."""
    cdef double[:, ::1] T = T_arr
    cdef double[::1] xB = xB_arr, d = d_arr, lo = lo_arr, up = up_arr
    cdef Py_ssize_t[::1] basis = basis_arr
    cdef char[::1] at_upper = at_upper_arr.view(np.byte)
    cdef char[::1] is_basic = is_basic_arr.view(np.byte)
    col_arr = np.zeros(T_arr.shape[0])
    nz_arr = np.zeros(T_arr.shape[1], dtype=np.intp)
    cdef double[::1] col = col_arr
    cdef Py_ssize_t[::1] nzcols = nz_arr
    cdef long its = 0
    cdef int status
    with nogil:
        status = _dual(T, xB, basis, at_upper, is_basic, d, lo, up, max_iter, &its, col, nzcols)
    return status, its


def _values(xB, basis, ub, at_upper, Py_ssize_t n):
    y = np.where(at_upper[:n].astype(bool), ub[:n], 0.0)
    mask = basis < n
    y[basis[mask]] = xB[mask]
    return y
