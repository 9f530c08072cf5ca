"""Optimal one-to-one matching of predicted queries to ground-truth instances."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Sequence

import numpy as np

from . import _accel
from .geometry import BBox, bbox_giou


class InfeasibleAssignmentError(ValueError):
    """No one-to-one matching of finite cost covers the smaller side."""


@dataclass(frozen=True)
class Assignment:
    """Matched (prediction, ground truth) index pairs.

    ``unmatched_rows`` are background predictions; ``unmatched_cols`` are
    ground truths left over when there are more of them than predictions.
    """

    pairs: tuple
    total_cost: float
    unmatched_rows: tuple = field(default=())
    unmatched_cols: tuple = field(default=())

    def as_dict(self) -> dict:
        return dict(self.pairs)


def _check_cost(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        if c.size == 0:
            return c.reshape(0, 0)
        raise ValueError(f"cost matrix must be 2-D, got shape {c.shape}")
    if np.isnan(c).any():
        raise ValueError("cost matrix contains NaN")
    if (c == -np.inf).any():
        raise ValueError("cost matrix contains -inf")
    return c


def hungarian_solve(cost) -> Assignment:
    """Minimum-cost matching covering every row or every column, whichever is fewer.

    ``+inf`` entries forbid a pair. Ties between equal-cost matchings resolve
    deterministically (lowest indices first in the augmenting-path scan).

    Raises:
        InfeasibleAssignmentError: if some row (or column) of the smaller side
            cannot be matched at finite cost.
    """
    c = _check_cost(cost)
    n, m = c.shape
    if n == 0 or m == 0:
        return Assignment((), 0.0, tuple(range(n)), tuple(range(m)))
    transposed = n > m
    work = c.T if transposed else c
    side = "column" if transposed else "row"
    dead = np.flatnonzero(np.isinf(work).all(axis=1))
    if dead.size:
        raise InfeasibleAssignmentError(f"{side} {int(dead[0])} has only infinite costs")
    try:
        col4row = _accel.solve_assignment(np.ascontiguousarray(work))
    except ValueError as exc:
        raise InfeasibleAssignmentError(f"no finite matching covers every {side}: {exc}") from None
    if transposed:
        pairs = sorted((int(j), int(i)) for i, j in enumerate(col4row))
    else:
        pairs = [(int(i), int(j)) for i, j in enumerate(col4row)]
    total = math.fsum(float(c[i, j]) for i, j in pairs)
    used_r = {i for i, _ in pairs}
    used_c = {j for _, j in pairs}
    return Assignment(
        tuple(pairs),
        total,
        tuple(i for i in range(n) if i not in used_r),
        tuple(j for j in range(m) if j not in used_c),
    )


# -- set-prediction cost ----------------------------------------------------

def focal_class_cost(prob, alpha: float = 0.25, gamma: float = 2.0, eps: float = 1e-7):
    """alpha * (1 - p)^gamma * -log(p): the focal loss of calling a query positive."""
    p = np.clip(np.asarray(prob, dtype=np.float64), eps, 1.0 - eps)
    cost = alpha * (1.0 - p) ** gamma * -np.log(p)
    # a fully confident positive costs nothing
    return np.where(np.asarray(prob) >= 1.0, 0.0, cost)


def _stack_points(items, what):
    arrs = []
    for k, pts in enumerate(items):
        a = np.asarray(getattr(pts, "points", pts), dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != 2:
            raise ValueError(f"{what} {k}: points must have shape (N, 2)")
        if (a > 1.0 + 1e-6).any() or (a < -1e-6).any():
            raise ValueError(f"{what} {k}: coordinates are not normalized to [0, 1]")
        arrs.append(a)
    if arrs and len({a.shape[0] for a in arrs}) != 1:
        raise ValueError(f"{what}: control-point counts differ")
    return arrs


def spotting_match_cost(preds: Sequence, gts: Sequence, weights=None) -> np.ndarray:
    """Composite matching cost between Q predictions and K ground truths.

    Args:
        preds: ``(class_prob, points, box)`` per query; points normalized.
        gts: ``(points, box)`` per instance; points normalized.
        weights: :class:`~spotkit.losses.LossWeights` (defaults if None).

    Returns:
        ``(Q, K)`` array of ``cls * focal_cost + coord * mean|dp| + giou * (1 - GIoU)``.
    """
    from .losses import LossWeights

    w = weights or LossWeights()
    q, k = len(preds), len(gts)
    if q == 0 or k == 0:
        return np.zeros((q, k))
    p_pts = _stack_points([p[1] for p in preds], "prediction")
    g_pts = _stack_points([g[0] for g in gts], "ground truth")
    if p_pts[0].shape != g_pts[0].shape:
        raise ValueError("predictions and ground truths have different control-point counts")
    P = np.stack(p_pts).reshape(q, -1)
    G = np.stack(g_pts).reshape(k, -1)
    coord = np.abs(P[:, None, :] - G[None, :, :]).mean(axis=2)
    probs = np.array([float(p[0]) for p in preds])
    cls = focal_class_cost(probs, w.focal_alpha, w.focal_gamma)
    giou = np.array([[1.0 - bbox_giou(_box(p[2]), _box(g[1])) for g in gts] for p in preds])
    return w.cls * cls[:, None] + w.coord * coord + w.giou * giou


def _box(b) -> BBox:
    return b if isinstance(b, BBox) else BBox(*b)


def match_instances(preds: Sequence, gts: Sequence, weights=None) -> Assignment:
    """Match predictions to ground truths; leftover predictions are background."""
    return hungarian_solve(spotting_match_cost(preds, gts, weights))
