"""Polygon and box primitives for text instances.

Polygons are ordered control points in image coordinates (x right, y down),
clockwise from the top-left corner. In y-down coordinates a clockwise ring
has a *positive* shoelace sum, so that is the canonical orientation here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import _accel


class GeometryError(ValueError):
    """Raised for invalid polygons, boxes or image dimensions."""


class Point(NamedTuple):
    x: float
    y: float


class Polygon:
    """A validated simple polygon.

    Construction checks the ring (at least three finite points, no repeated
    consecutive points, non-zero area, no self-intersection) and reverses
    counter-clockwise input; ``reoriented`` records that it happened.
    The ``points`` array is read-only.
    """

    __slots__ = ("points", "reoriented")

    def __init__(self, points, *, check_simple: bool = True):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise GeometryError(f"points must have shape (N, 2), got {pts.shape}")
        if len(pts) < 3:
            raise GeometryError(f"polygon needs at least 3 points, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("polygon has non-finite coordinates")
        nxt = np.roll(pts, -1, axis=0)
        if np.any(np.all(pts == nxt, axis=1)):
            raise GeometryError("polygon has repeated consecutive points")
        area2 = _twice_signed_area(pts)
        if area2 == 0.0:
            raise GeometryError("polygon is degenerate (zero area)")
        if check_simple:
            bad = find_self_intersection(pts)
            if bad is not None:
                raise GeometryError(f"polygon self-intersects (edges {bad[0]} and {bad[1]})")
        self.reoriented = area2 < 0.0
        if self.reoriented:
            # keep the first point, walk the ring the other way
            pts = np.concatenate([pts[:1], pts[:0:-1]])
        pts.setflags(write=False)
        self.points = pts

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"Polygon({self.points.tolist()!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Polygon) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    @property
    def area(self) -> float:
        return polygon_area(self)

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self.points + (dx, dy), check_simple=False)

    def scaled(self, sx: float, sy: float | None = None) -> "Polygon":
        return Polygon(self.points * (sx, sx if sy is None else sy), check_simple=False)


@dataclass(frozen=True)
class BBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        vals = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite box {vals}")
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise GeometryError(f"box corners out of order: {vals}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_tuple(self) -> tuple:
        return (self.x0, self.y0, self.x1, self.y1)


def as_polygon(p) -> Polygon:
    return p if isinstance(p, Polygon) else Polygon(p)


def _twice_signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return math.fsum((x * yn - xn * y).tolist())


def signed_area(points) -> float:
    """Shoelace area; positive for clockwise rings in y-down coordinates."""
    return 0.5 * _twice_signed_area(np.asarray(points, dtype=np.float64))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def find_self_intersection(points) -> tuple | None:
    """First pair of edges (i, j) that touch illegally, or None for a simple ring.

    Adjacent edges may share their common vertex but must not fold back
    onto each other.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    lo = np.minimum(pts, np.roll(pts, -1, axis=0))
    hi = np.maximum(pts, np.roll(pts, -1, axis=0))
    # bbox prefilter, then exact orientation tests on the survivors
    overlap = np.all(lo[:, None, :] <= hi[None, :, :], axis=2) & np.all(
        lo[None, :, :] <= hi[:, None, :], axis=2)
    cand = np.argwhere(np.triu(overlap, k=1))
    P = pts.tolist()
    for i, j in cand.tolist():
        a1, a2 = P[i], P[(i + 1) % n]
        b1, b2 = P[j], P[(j + 1) % n]
        if j == i + 1 or (i == 0 and j == n - 1):
            # adjacent: only the shared vertex may coincide; reject fold-backs
            shared, a_far, b_far = (a2, a1, b2) if j == i + 1 else (a1, a2, b1)
            ux, uy = a_far[0] - shared[0], a_far[1] - shared[1]
            vx, vy = b_far[0] - shared[0], b_far[1] - shared[1]
            if ux * vy - uy * vx == 0 and ux * vx + uy * vy > 0:
                return (i, j)
            continue
        if _segments_intersect(a1, a2, b1, b2):
            return (i, j)
    return None


def validate_polygon(points) -> Polygon:
    """Return a validated, clockwise :class:`Polygon` or raise GeometryError."""
    return as_polygon(points)


def polygon_area(p) -> float:
    """Absolute shoelace area."""
    return abs(signed_area(as_polygon(p).points))


def polygon_bbox(p) -> BBox:
    pts = as_polygon(p).points
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return BBox(float(x0), float(y0), float(x1), float(y1))


def _ordered_intersection(a: Polygon, b: Polygon) -> float:
    # canonical argument order makes the result exactly symmetric
    if (len(a), a.points.tobytes()) > (len(b), b.points.tobytes()):
        a, b = b, a
    return _accel.intersection_area(a.points, b.points)


def intersection_area(a, b) -> float:
    a, b = as_polygon(a), as_polygon(b)
    ba, bb = polygon_bbox(a), polygon_bbox(b)
    if ba.x1 <= bb.x0 or bb.x1 <= ba.x0 or ba.y1 <= bb.y0 or bb.y1 <= ba.y0:
        return 0.0
    return _ordered_intersection(a, b)


def _pair_iou(inter: float, area_a: float, area_b: float) -> float:
    if inter <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / (area_a + area_b - inter)))


def polygon_iou(a, b) -> float:
    """Intersection over union of two simple polygons, in [0, 1]."""
    a, b = as_polygon(a), as_polygon(b)
    if a == b:
        return 1.0
    return _pair_iou(intersection_area(a, b), polygon_area(a), polygon_area(b))


def bbox_iou(a: BBox, b: BBox) -> float:
    """Box IoU; identical boxes give 1 even when their area is zero."""
    if a == b:
        return 1.0
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def bbox_giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: IoU minus the empty fraction of the enclosing box.

    Zero-area boxes contribute an IoU of 0; if the enclosing box itself has
    zero area (both boxes are the same point) the result is 1.
    """
    cw = max(a.x1, b.x1) - min(a.x0, b.x0)
    ch = max(a.y1, b.y1) - min(a.y0, b.y0)
    c_area = cw * ch
    if c_area <= 0.0:
        if cw == 0.0 and ch == 0.0:
            return 1.0
        # enclosing box degenerate along one axis: treat like an empty box
        return bbox_iou(a, b)
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    iou = inter / union if union > 0 else 0.0
    return iou - (c_area - union) / c_area


def _check_dims(width, height):
    if width <= 0 or height <= 0:
        raise GeometryError(f"image dimensions must be positive, got {width}x{height}")


def normalize_points(p, width: int, height: int) -> Polygon:
    """Pixel coordinates to [0, 1] image-relative coordinates."""
    _check_dims(width, height)
    return Polygon(as_polygon(p).points / (float(width), float(height)), check_simple=False)


def denormalize_points(p, width: int, height: int) -> Polygon:
    _check_dims(width, height)
    return Polygon(as_polygon(p).points * (float(width), float(height)), check_simple=False)


def polygons_bounds(polys: Iterable[Polygon]) -> BBox:
    pts = np.concatenate([as_polygon(p).points for p in polys])
    return BBox(*pts.min(axis=0).tolist(), *pts.max(axis=0).tolist())


def iou_matrix(polys_a: list, polys_b: list) -> np.ndarray:
    """Pairwise :func:`polygon_iou`; boxes are compared first to skip disjoint pairs."""
    A = [as_polygon(p) for p in polys_a]
    B = [as_polygon(p) for p in polys_b]
    out = np.zeros((len(A), len(B)))
    if not A or not B:
        return out
    box_a = np.array([[*p.points.min(axis=0), *p.points.max(axis=0)] for p in A])
    box_b = np.array([[*p.points.min(axis=0), *p.points.max(axis=0)] for p in B])
    area_a = [polygon_area(p) for p in A]
    area_b = [polygon_area(p) for p in B]
    hit = ((box_a[:, None, 0] < box_b[None, :, 2]) & (box_b[None, :, 0] < box_a[:, None, 2])
           & (box_a[:, None, 1] < box_b[None, :, 3]) & (box_b[None, :, 1] < box_a[:, None, 3]))
    for i, j in np.argwhere(hit).tolist():
        a, b = A[i], B[j]
        if a == b:
            out[i, j] = 1.0
        else:
            out[i, j] = _pair_iou(_ordered_intersection(a, b), area_a[i], area_b[j])
    return out
