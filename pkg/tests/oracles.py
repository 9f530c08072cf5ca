"""Independent reference implementations used only by the tests.

None of these share code paths with the package: IoU by scanline
rasterization, assignment by permutation enumeration, attention sampling by
explicit loops.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


# -- geometry -------------------------------------------------------------------

def _raster_mask(pts, x0, y0, sx, sy, res):
    """Even-odd fill of pixel centres on a res x res grid."""
    pts = np.asarray(pts, dtype=np.float64)
    nxt = np.roll(pts, -1, axis=0)
    ys = y0 + (np.arange(res) + 0.5) * sy
    y1, y2 = pts[:, 1][None, :], nxt[:, 1][None, :]
    x1, x2 = pts[:, 0][None, :], nxt[:, 0][None, :]
    Y = ys[:, None]
    crosses = (y1 > Y) != (y2 > Y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x1 + (Y - y1) * (x2 - x1) / (y2 - y1)
    rows, edges = np.nonzero(crosses)
    cols = np.floor((xc[rows, edges] - x0) / sx - 0.5).astype(np.int64) + 1
    cols = np.clip(cols, 0, res)
    # toggles stored column-major so the prefix-xor runs over contiguous rows
    flat = np.zeros((res + 1) * res, dtype=np.uint8)
    np.add.at(flat, cols * res + rows, 1)
    acc = (flat & 1).reshape(res + 1, res)
    for c in range(1, res + 1):
        np.bitwise_xor(acc[c - 1], acc[c], out=acc[c])
    return acc[:res].view(bool)


def raster_iou(a, b, res: int = 2048) -> float:
    """IoU by sampling pixel centres of a res x res grid over the joint bounds."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    both = np.vstack([a, b])
    x0, y0 = both.min(axis=0)
    x1, y1 = both.max(axis=0)
    sx, sy = (x1 - x0) / res, (y1 - y0) / res
    ma = _raster_mask(a, x0, y0, sx, sy, res)
    mb = _raster_mask(b, x0, y0, sx, sy, res)
    union = np.count_nonzero(ma | mb)
    return np.count_nonzero(ma & mb) / union if union else 0.0


def star_polygon(rng: np.random.Generator, n: int, center, radius, jitter: float):
    """Random simple star-shaped polygon, clockwise in y-down coordinates.

    ``jitter`` = 0 gives a convex regular-ish ring; larger values make it
    non-convex.
    """
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    # keep angles distinct so the ring stays simple
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False) * 0.5 + ang * 0.5
    ang = np.sort(ang)
    r = radius * (1.0 - jitter * rng.uniform(0, 1, n))
    pts = np.stack([center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)], axis=1)
    return pts


# -- assignment -------------------------------------------------------------------

def brute_force_assignment(cost) -> float:
    """Minimum total cost over all matchings covering the smaller side."""
    c = np.asarray(cost, dtype=np.float64)
    n, m = c.shape
    if n > m:
        c = c.T
        n, m = m, n
    best = math.inf
    for cols in itertools.permutations(range(m), n):
        total = math.fsum(c[i, j] for i, j in enumerate(cols))
        best = min(best, total)
    return best


# -- attention ------------------------------------------------------------------------

def naive_bilinear(fm, x, y):
    """Bilinear read, align_corners=False, zero outside, by explicit loops."""
    h, w, ch = fm.shape
    px, py = x * w - 0.5, y * h - 0.5
    out = [0.0] * ch
    for yy in (math.floor(py), math.floor(py) + 1):
        for xx in (math.floor(px), math.floor(px) + 1):
            wt = (1 - abs(px - xx)) * (1 - abs(py - yy))
            if 0 <= yy < h and 0 <= xx < w and wt > 0:
                for c in range(ch):
                    out[c] += wt * fm[yy, xx, c]
    return np.array(out)


def naive_deformable(ref, value_maps, offsets, logits, out_proj=None):
    """Direct double loop over heads and sampling points."""
    H, K = logits.shape
    parts = []
    for h in range(H):
        row = logits[h]
        mx = max(row)
        e = [math.exp(v - mx) for v in row]
        s = sum(e)
        acc = np.zeros(value_maps[h].shape[2])
        for k in range(K):
            acc = acc + (e[k] / s) * naive_bilinear(
                value_maps[h], ref[0] + offsets[h, k, 0], ref[1] + offsets[h, k, 1])
        parts.append(acc)
    out = np.concatenate(parts)
    return out if out_proj is None else out @ out_proj
