"""Pure-Python implementations of the hot kernels.

Mirrors ``_core.pyx`` function for function; :mod:`spotkit._accel` picks one
at import time. Keep the two in lock-step: the test-suite runs both.
"""
from __future__ import annotations

import math

import numpy as np

INF = math.inf


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _bounded_levenshtein(a: str, b: str, bound: int) -> int:
    """Exact distance if it is < bound, otherwise any value >= bound."""
    la, lb = len(a), len(b)
    if abs(la - lb) >= bound:
        return bound
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        ca = a[i - 1]
        cur = [i] + [0] * lb
        row_min = i
        for j in range(1, lb + 1):
            d = prev[j - 1] + (ca != b[j - 1])
            if prev[j] + 1 < d:
                d = prev[j] + 1
            if cur[j - 1] + 1 < d:
                d = cur[j - 1] + 1
            cur[j] = d
            if d < row_min:
                row_min = d
        if row_min >= bound:
            return bound
        prev = cur
    return prev[lb]


def nearest_word(word: str, candidates: list, max_dist: int) -> tuple:
    """Index and distance of the first candidate with minimal distance <= max_dist.

    Returns ``(-1, -1)`` when every candidate is farther than ``max_dist``.
    Candidates are scanned in order, so callers control tie-breaking by
    pre-sorting.
    """
    best_idx, bound = -1, max_dist + 1
    for idx, cand in enumerate(candidates):
        d = _bounded_levenshtein(word, cand, bound)
        if d < bound:
            best_idx, bound = idx, d
            if d == 0:
                break
    return (best_idx, bound) if best_idx >= 0 else (-1, -1)


def solve_assignment(cost: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path assignment for an n x m cost matrix, n <= m.

    Returns ``col4row`` (length n). Raises ``ValueError`` naming the row
    that cannot be matched at finite cost.
    """
    n, m = cost.shape
    c = cost.tolist()
    u = [0.0] * n
    v = [0.0] * m
    col4row = [-1] * n
    row4col = [-1] * m
    for cur_row in range(n):
        shortest = [INF] * m
        path = [-1] * m
        in_sr = [False] * n
        in_sc = [False] * m
        remaining = list(range(m))
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink < 0:
            in_sr[i] = True
            lowest = INF
            pick = -1
            ci = c[i]
            ui = u[i]
            for pos, j in enumerate(remaining):
                r = min_val + ci[j] - ui - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                sj = shortest[j]
                if sj < lowest or (sj == lowest and sj < INF and row4col[j] < 0
                                   and row4col[remaining[pick]] >= 0):
                    lowest = sj
                    pick = pos
            if lowest == INF:
                raise ValueError(f"row {cur_row} has no finite-cost augmenting path")
            min_val = lowest
            j = remaining.pop(pick)
            in_sc[j] = True
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
            col4row[r], j = j, col4row[r]
            if r == cur_row:
                break
    return np.asarray(col4row, dtype=np.int64)


# -- polygon intersection ---------------------------------------------------

def _locate(mx, my, dx, dy, poly, tol):
    """Classify a point against a closed polygon.

    Returns 1 inside, 0 outside, 2 on an edge running the same way as
    (dx, dy), 3 on an edge running the opposite way.
    """
    m = len(poly)
    for k in range(m):
        rx, ry = poly[k]
        sx, sy = poly[(k + 1) % m]
        ex, ey = sx - rx, sy - ry
        ee = ex * ex + ey * ey
        t = ((mx - rx) * ex + (my - ry) * ey) / ee
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        px, py = rx + t * ex - mx, ry + t * ey - my
        if px * px + py * py <= tol * tol:
            return 2 if dx * ex + dy * ey > 0.0 else 3
    inside = False
    for k in range(m):
        rx, ry = poly[k]
        sx, sy = poly[(k + 1) % m]
        if (ry > my) != (sy > my):
            xc = rx + (my - ry) * (sx - rx) / (sy - ry)
            if mx < xc:
                inside = not inside
    return 1 if inside else 0


def _edge_terms(P, Q, keep_shared, tol, out):
    n, m = len(P), len(Q)
    for i in range(n):
        px, py = P[i]
        qx, qy = P[(i + 1) % n]
        dx, dy = qx - px, qy - py
        dd = dx * dx + dy * dy
        dlen = math.sqrt(dd)
        ts = [0.0, 1.0]
        for k in range(m):
            rx, ry = Q[k]
            sx, sy = Q[(k + 1) % m]
            ex, ey = sx - rx, sy - ry
            wx, wy = rx - px, ry - py
            denom = dx * ey - dy * ex
            elen = math.sqrt(ex * ex + ey * ey)
            if abs(denom) > 1e-14 * dlen * elen:
                t = (wx * ey - wy * ex) / denom
                u = (wx * dy - wy * dx) / denom
                if 0.0 < t < 1.0 and -1e-12 <= u <= 1.0 + 1e-12:
                    ts.append(t)
            elif abs(wx * dy - wy * dx) <= tol * dlen:
                for ox, oy in ((rx, ry), (sx, sy)):
                    t = ((ox - px) * dx + (oy - py) * dy) / dd
                    if 0.0 < t < 1.0:
                        ts.append(t)
        ts.sort()
        cross = px * qy - qx * py
        for a, b in zip(ts, ts[1:]):
            if b - a <= 1e-12:
                continue
            tm = 0.5 * (a + b)
            where = _locate(px + tm * dx, py + tm * dy, dx, dy, Q, tol)
            if where == 1 or (where == 2 and keep_shared):
                out.append((b - a) * cross)


def intersection_area(a: np.ndarray, b: np.ndarray) -> float:
    """Area of the intersection of two simple, positively oriented polygons.

    Integrates the boundary of the intersection: pieces of each polygon's
    edges lying inside the other. Overlapping collinear edges running the
    same way are counted once, opposite-running ones not at all.
    """
    A = [(float(x), float(y)) for x, y in a]
    B = [(float(x), float(y)) for x, y in b]
    scale = max(max(abs(x), abs(y)) for x, y in A + B) or 1.0
    tol = 1e-9 * scale
    terms: list = []
    _edge_terms(A, B, True, tol, terms)
    _edge_terms(B, A, False, tol, terms)
    return max(0.0, 0.5 * math.fsum(terms))
