# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same API and semantics as ``_pyimpl``."""
import math

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()


cdef inline Py_ssize_t _imin3(Py_ssize_t a, Py_ssize_t b, Py_ssize_t c) nogil:
    if b < a:
        a = b
    if c < a:
        a = c
    return a


cdef Py_ssize_t _lev(unsigned int[:] a, Py_ssize_t la, unsigned int[:] b, Py_ssize_t lb,
                     Py_ssize_t bound, Py_ssize_t* row) nogil:
    cdef Py_ssize_t i, j, diag, tmp, row_min, cost
    for j in range(lb + 1):
        row[j] = j
    for i in range(1, la + 1):
        diag = row[0]
        row[0] = i
        row_min = i
        for j in range(1, lb + 1):
            tmp = row[j]
            cost = 0 if a[i - 1] == b[j - 1] else 1
            row[j] = _imin3(tmp + 1, row[j - 1] + 1, diag + cost)
            diag = tmp
            if row[j] < row_min:
                row_min = row[j]
        if row_min >= bound:
            return bound
    return row[lb]


cdef unsigned int[:] _codepoints(str s):
    cdef Py_ssize_t n = len(s), k
    arr = np.empty(max(n, 1), dtype=np.uint32)
    cdef unsigned int[:] view = arr
    for k in range(n):
        view[k] = s[k]
    return view


def levenshtein(str a, str b):
    cdef Py_ssize_t la = len(a), lb = len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    cdef unsigned int[:] va = _codepoints(a)
    cdef unsigned int[:] vb = _codepoints(b)
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((lb + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t d
    try:
        d = _lev(va, la, vb, lb, la + lb + 1, row)
    finally:
        free(row)
    return d


def nearest_word(str word, list candidates, Py_ssize_t max_dist):
    cdef Py_ssize_t lw = len(word), lc, idx, d, best_idx = -1
    cdef Py_ssize_t bound = max_dist + 1
    cdef Py_ssize_t cap = lw + 64
    cdef unsigned int[:] vw = _codepoints(word)
    cdef unsigned int[:] vc
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((cap + 1) * sizeof(Py_ssize_t))
    cdef str cand
    try:
        for idx in range(len(candidates)):
            cand = <str> candidates[idx]
            lc = len(cand)
            if (lc - lw if lc > lw else lw - lc) >= bound:
                continue
            if lc > cap:
                free(row)
                cap = lc
                row = <Py_ssize_t*> malloc((cap + 1) * sizeof(Py_ssize_t))
            if lw == 0:
                d = lc
            elif lc == 0:
                d = lw
            else:
                vc = _codepoints(cand)
                d = _lev(vw, lw, vc, lc, bound, row)
            if d < bound:
                best_idx = idx
                bound = d
                if d == 0:
                    break
    finally:
        free(row)
    if best_idx < 0:
        return (-1, -1)
    return (best_idx, bound)


def solve_assignment(cnp.ndarray cost_in):
    cdef const double[:, ::1] c = np.ascontiguousarray(cost_in, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], m = c.shape[1]
    u_arr = np.zeros(n)
    v_arr = np.zeros(m)
    col_arr = np.full(n, -1, dtype=np.int64)
    rowc_arr = np.full(m, -1, dtype=np.int64)
    short_arr = np.empty(m)
    path_arr = np.empty(m, dtype=np.int64)
    rem_arr = np.empty(m, dtype=np.int64)
    sr_arr = np.empty(n, dtype=np.uint8)
    sc_arr = np.empty(m, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, shortest = short_arr
    cdef long long[::1] col4row = col_arr, row4col = rowc_arr, path = path_arr, remaining = rem_arr
    cdef unsigned char[::1] in_sr = sr_arr, in_sc = sc_arr
    cdef Py_ssize_t cur_row, i, j, r, pos, pick, n_rem, sink, k, tmp
    cdef double min_val, lowest, rc, sj
    for cur_row in range(n):
        for j in range(m):
            shortest[j] = INFINITY
            path[j] = -1
            in_sc[j] = 0
            remaining[j] = j
        for r in range(n):
            in_sr[r] = 0
        n_rem = m
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink < 0:
            in_sr[i] = 1
            lowest = INFINITY
            pick = -1
            for pos in range(n_rem):
                j = remaining[pos]
                rc = min_val + c[i, j] - u[i] - v[j]
                if rc < shortest[j]:
                    path[j] = i
                    shortest[j] = rc
                sj = shortest[j]
                if sj < lowest or (sj == lowest and sj < INFINITY and row4col[j] < 0
                                   and row4col[remaining[pick]] >= 0):
                    lowest = sj
                    pick = pos
            if lowest == INFINITY:
                raise ValueError(f"row {cur_row} has no finite-cost augmenting path")
            min_val = lowest
            j = remaining[pick]
            # ordered removal keeps the scan order (and tie-breaks) identical to _pyimpl
            for k in range(pick, n_rem - 1):
                remaining[k] = remaining[k + 1]
            n_rem -= 1
            in_sc[j] = 1
            if row4col[j] < 0:
                sink = j
            else:
                i = row4col[j]
        u[cur_row] += min_val
        for r in range(n):
            if in_sr[r] and r != cur_row:
                u[r] += min_val - shortest[col4row[r]]
        for j in range(m):
            if in_sc[j]:
                v[j] -= min_val - shortest[j]
        j = sink
        while True:
            r = path[j]
            row4col[j] = r
            tmp = col4row[r]
            col4row[r] = j
            j = tmp
            if r == cur_row:
                break
    return col_arr


cdef int _locate(double mx, double my, double dx, double dy,
                 const double[:, ::1] poly, double tol) nogil:
    cdef Py_ssize_t m = poly.shape[0], k, k1
    cdef double rx, ry, sx, sy, ex, ey, ee, t, px, py, xc
    cdef bint inside = False
    for k in range(m):
        k1 = k + 1 if k + 1 < m else 0
        rx = poly[k, 0]; ry = poly[k, 1]
        sx = poly[k1, 0]; sy = poly[k1, 1]
        ex = sx - rx; ey = sy - ry
        ee = ex * ex + ey * ey
        t = ((mx - rx) * ex + (my - ry) * ey) / ee
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        px = rx + t * ex - mx
        py = ry + t * ey - my
        if px * px + py * py <= tol * tol:
            return 2 if dx * ex + dy * ey > 0.0 else 3
    for k in range(m):
        k1 = k + 1 if k + 1 < m else 0
        rx = poly[k, 0]; ry = poly[k, 1]
        sx = poly[k1, 0]; sy = poly[k1, 1]
        if (ry > my) != (sy > my):
            xc = rx + (my - ry) * (sx - rx) / (sy - ry)
            if mx < xc:
                inside = not inside
    return 1 if inside else 0


cdef void _sort(double* a, Py_ssize_t n) nogil:
    cdef Py_ssize_t i, j
    cdef double x
    for i in range(1, n):
        x = a[i]
        j = i - 1
        while j >= 0 and a[j] > x:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = x


cdef Py_ssize_t _edge_terms(const double[:, ::1] P, const double[:, ::1] Q, bint keep_shared,
                            double tol, double* ts, double* out, Py_ssize_t n_out) nogil:
    cdef Py_ssize_t n = P.shape[0], m = Q.shape[0], i, i1, k, k1, nt, s
    cdef double px, py, qx, qy, dx, dy, dd, dlen, rx, ry, sx, sy, ex, ey, wx, wy
    cdef double denom, elen, t, uu, cross, a, b, tm, ox, oy
    cdef int where, e
    for i in range(n):
        i1 = i + 1 if i + 1 < n else 0
        px = P[i, 0]; py = P[i, 1]
        qx = P[i1, 0]; qy = P[i1, 1]
        dx = qx - px; dy = qy - py
        dd = dx * dx + dy * dy
        dlen = sqrt(dd)
        ts[0] = 0.0
        ts[1] = 1.0
        nt = 2
        for k in range(m):
            k1 = k + 1 if k + 1 < m else 0
            rx = Q[k, 0]; ry = Q[k, 1]
            sx = Q[k1, 0]; sy = Q[k1, 1]
            ex = sx - rx; ey = sy - ry
            wx = rx - px; wy = ry - py
            denom = dx * ey - dy * ex
            elen = sqrt(ex * ex + ey * ey)
            if fabs(denom) > 1e-14 * dlen * elen:
                t = (wx * ey - wy * ex) / denom
                uu = (wx * dy - wy * dx) / denom
                if 0.0 < t < 1.0 and -1e-12 <= uu <= 1.0 + 1e-12:
                    ts[nt] = t
                    nt += 1
            elif fabs(wx * dy - wy * dx) <= tol * dlen:
                for e in range(2):
                    ox = rx if e == 0 else sx
                    oy = ry if e == 0 else sy
                    t = ((ox - px) * dx + (oy - py) * dy) / dd
                    if 0.0 < t < 1.0:
                        ts[nt] = t
                        nt += 1
        _sort(ts, nt)
        cross = px * qy - qx * py
        for s in range(nt - 1):
            a = ts[s]
            b = ts[s + 1]
            if b - a <= 1e-12:
                continue
            tm = 0.5 * (a + b)
            where = _locate(px + tm * dx, py + tm * dy, dx, dy, Q, tol)
            if where == 1 or (where == 2 and keep_shared):
                out[n_out] = (b - a) * cross
                n_out += 1
    return n_out


def intersection_area(a_in, b_in):
    cdef const double[:, ::1] A = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[:, ::1] B = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], k, n_out
    cdef double scale = 0.0, tol
    for k in range(n):
        scale = max(scale, fabs(A[k, 0]), fabs(A[k, 1]))
    for k in range(m):
        scale = max(scale, fabs(B[k, 0]), fabs(B[k, 1]))
    if scale == 0.0:
        scale = 1.0
    tol = 1e-9 * scale
    cdef Py_ssize_t width = 2 * (n if n > m else m) + 2
    cdef double* ts = <double*> malloc(width * sizeof(double))
    # each edge yields at most width - 1 pieces
    cdef double* out = <double*> malloc((n + m) * width * sizeof(double))
    try:
        with nogil:
            n_out = _edge_terms(A, B, True, tol, ts, out, 0)
            n_out = _edge_terms(B, A, False, tol, ts, out, n_out)
        terms = [out[k] for k in range(n_out)]
    finally:
        free(ts)
        free(out)
    return max(0.0, 0.5 * math.fsum(terms))
