"""Seeded synthetic scenes, controlled prediction perturbation and augmentations.

Scenes hold word instances as 20-point polygons (10 top points left to
right, 10 bottom points right to left), either straight quads or ribbons
bounded by two offset sine arcs, rendered as blocky glyph rectangles.
Every random draw comes from :class:`~spotkit.rng.XorShift64Star` so the
output is a pure function of the seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import string

import numpy as np

from .geometry import Polygon, polygon_bbox, polygon_iou
from .imaging import check_image, resize_bilinear
from .metrics import SpotInstance, edit_distance
from .rng import XorShift64Star, derive_seed

N_POINTS = 20
DEFAULT_CHARSET = string.ascii_uppercase + string.digits


class PlacementError(RuntimeError):
    """Not enough room to place the requested number of instances."""


@dataclass(frozen=True)
class SceneSpec:
    width: int = 400
    height: int = 400
    min_instances: int = 3
    max_instances: int = 8
    charset: str = DEFAULT_CHARSET
    curved_fraction: float = 0.4
    word_length: tuple = (3, 9)
    text_height: tuple = (18.0, 36.0)
    seed: int = 0
    max_attempts: int = 200

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"scene dimensions must be positive, got {self.width}x{self.height}")
        if not self.charset:
            raise ValueError("charset is empty")
        if not 0 <= self.min_instances <= self.max_instances:
            raise ValueError("need 0 <= min_instances <= max_instances")
        if not 0.0 <= self.curved_fraction <= 1.0:
            raise ValueError("curved_fraction must be in [0, 1]")
        lo, hi = self.word_length
        if not 1 <= lo <= hi:
            raise ValueError("word_length must satisfy 1 <= lo <= hi")


@dataclass(frozen=True)
class AnnotationSet:
    """Pixel-space instances of one image.

    Polygons must lie inside ``[0, width] x [0, height]``. ``n_points``
    fixes the control-point count (None accepts any).
    """

    image_id: str
    width: int
    height: int
    instances: tuple = ()
    n_points: int | None = field(default=N_POINTS, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.image_id!r}: non-positive size {self.width}x{self.height}")
        for k, inst in enumerate(self.instances):
            pts = inst.polygon.points
            if self.n_points is not None and len(pts) != self.n_points:
                raise ValueError(f"image {self.image_id!r} instance {k}: "
                                 f"{len(pts)} points, expected {self.n_points}")
            if pts.min() < 0 or pts[:, 0].max() > self.width or pts[:, 1].max() > self.height:
                raise ValueError(f"image {self.image_id!r} instance {k}: polygon outside "
                                 f"{self.width}x{self.height} image")

    def __len__(self) -> int:
        return len(self.instances)

    def _with(self, instances, width=None, height=None) -> "AnnotationSet":
        return AnnotationSet(self.image_id, width or self.width, height or self.height,
                             tuple(instances), self.n_points)

    def scaled(self, sx: float, sy: float | None = None, width=None, height=None) -> "AnnotationSet":
        """Coordinates multiplied by (sx, sy); image size by the same factors unless given."""
        sy = sx if sy is None else sy
        w = width if width is not None else int(round(self.width * sx))
        h = height if height is not None else int(round(self.height * sy))
        return self._with([SpotInstance(i.polygon.scaled(sx, sy), i.text, i.score)
                           for i in self.instances], w, h)

    def normalized_points(self) -> list:
        """Each polygon's points divided by the image size."""
        return [i.polygon.points / (self.width, self.height) for i in self.instances]


# -- scene generation ----------------------------------------------------------

def ribbon_polygon(x0: float, y0: float, length: float, thickness: float,
                   amplitude: float = 0.0, phase: float = 0.0, slope: float = 0.0) -> np.ndarray:
    """20 control points of a word ribbon starting at top-left (x0, y0).

    The top edge follows ``y0 + slope * dx + amplitude * sin(phase + pi * t)``
    and the bottom edge is the same curve shifted down by ``thickness``.
    """
    half = N_POINTS // 2
    t = np.linspace(0.0, 1.0, half)
    xs = x0 + t * length
    top = y0 + slope * (xs - x0) + amplitude * np.sin(phase + math.pi * t)
    upper = np.stack([xs, top], axis=1)
    lower = np.stack([xs, top + thickness], axis=1)[::-1]
    return np.concatenate([upper, lower])


def _random_word(rng: XorShift64Star, charset: str, lo: int, hi: int) -> str:
    return "".join(rng.choice(charset) for _ in range(rng.randint(lo, hi)))


def _background(rng: XorShift64Star, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    base = np.array([rng.uniform(0.15, 0.85) for _ in range(3)])
    grad = np.array([rng.uniform(-0.15, 0.15) for _ in range(3)])
    ramp = (np.arange(h)[:, None] / max(h - 1, 1)) * np.ones((1, w))
    img = np.clip(base + ramp[..., None] * grad, 0.0, 1.0)
    return img, base


def _render_glyphs(img, pts: np.ndarray, text: str, color: np.ndarray):
    """One filled rectangle per character, with a notch coded from the character."""
    h, w, _ = img.shape
    half = N_POINTS // 2
    top, bottom = pts[:half], pts[half:][::-1]
    xs = top[:, 0]
    L = len(text)
    for k, ch in enumerate(text):
        cx = xs[0] + (k + 0.5) / L * (xs[-1] - xs[0])
        ty = np.interp(cx, xs, top[:, 1])
        by = np.interp(cx, xs, bottom[:, 1])
        cw = 0.35 * (xs[-1] - xs[0]) / L
        gh = 0.3 * (by - ty)
        cy = 0.5 * (ty + by)
        x0, x1 = int(math.ceil(cx - cw)), int(math.floor(cx + cw))
        y0, y1 = int(math.ceil(cy - gh)), int(math.floor(cy + gh))
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, w - 1), min(y1, h - 1)
        if x1 < x0 or y1 < y0:
            continue
        img[y0:y1 + 1, x0:x1 + 1] = color
        code = ord(ch)
        if x1 - x0 >= 2 and y1 - y0 >= 4:
            # a notch whose position encodes the character
            ny = y0 + 1 + code % max(y1 - y0 - 2, 1)
            img[ny, x0 + 1:x1] = 1.0 - color


def generate_scene(spec: SceneSpec, index: int = 0) -> tuple[np.ndarray, AnnotationSet]:
    """Image and annotations of scene ``index`` under ``spec.seed``.

    Instances have pairwise disjoint bounding boxes (with a 2 px gap) and
    stay inside the image. Raises :class:`PlacementError` naming the
    achieved count when placement runs out of attempts.
    """
    rng = XorShift64Star(derive_seed(spec.seed, index))
    W, H = spec.width, spec.height
    img, base = _background(rng, H, W)
    count = rng.randint(spec.min_instances, spec.max_instances)
    placed: list[tuple[np.ndarray, str]] = []
    boxes: list[tuple] = []
    attempts = 0
    while len(placed) < count:
        if attempts >= spec.max_attempts:
            raise PlacementError(f"placed {len(placed)} of {count} instances in a "
                                 f"{W}x{H} scene after {attempts} attempts")
        attempts += 1
        word = _random_word(rng, spec.charset, *spec.word_length)
        thick = rng.uniform(*spec.text_height)
        length = max(len(word) * thick * 0.7, thick)
        curved = rng.random() < spec.curved_fraction
        amp = rng.uniform(-0.6, 0.6) * thick if curved else 0.0
        phase = rng.uniform(-0.5, 0.5) if curved else 0.0
        slope = 0.0 if curved else rng.uniform(-0.15, 0.15)
        pts = ribbon_polygon(0.0, 0.0, length, thick, amp, phase, slope)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = hi - lo
        if span[0] > W - 2 or span[1] > H - 2:
            continue
        ox = rng.uniform(1.0, W - 1.0 - span[0]) - lo[0]
        oy = rng.uniform(1.0, H - 1.0 - span[1]) - lo[1]
        pts = pts + (ox, oy)
        box = (*(lo + (ox, oy)), *(hi + (ox, oy)))
        if any(box[0] < b[2] + 2 and b[0] < box[2] + 2 and box[1] < b[3] + 2 and b[1] < box[3] + 2
               for b in boxes):
            continue
        boxes.append(box)
        placed.append((pts, word))
    instances = []
    for pts, word in placed:
        color = np.where(base > 0.5, rng.uniform(0.0, 0.2), rng.uniform(0.8, 1.0))
        _render_glyphs(img, pts, word, color)
        instances.append(SpotInstance(Polygon(pts), word))
    return img, AnnotationSet(f"img_{index:05d}", W, H, tuple(instances))


# -- prediction perturbation ------------------------------------------------------

def _mutate_text(rng: XorShift64Star, text: str, edits: int, charset: str) -> str:
    for _ in range(1000):
        s = list(text)
        for _ in range(edits):
            op = rng.randint(0, 2) if s else 0
            if op == 0:
                s.insert(rng.randint(0, len(s)), rng.choice(charset))
            elif op == 1:
                del s[rng.randint(0, len(s) - 1)]
            else:
                k = rng.randint(0, len(s) - 1)
                s[k] = rng.choice([c for c in charset if c != s[k]])
        out = "".join(s)
        if edit_distance(text, out) == edits:
            return out
    raise RuntimeError(f"could not apply exactly {edits} edits to {text!r}")


def shift_for_iou(poly: Polygon, direction, target_iou: float, iters: int = 60) -> float:
    """Translation distance along ``direction`` giving the target IoU (bisection)."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.hypot(*d)
    b = polygon_bbox(poly)
    lo, hi = 0.0, 2.0 * math.hypot(b.x1 - b.x0, b.y1 - b.y0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if polygon_iou(poly, poly.translated(*(mid * d))) >= target_iou:
            lo = mid
        else:
            hi = mid
    return lo


def perturb_predictions(gt: AnnotationSet, target_iou: float, text_edits: int, seed: int,
                        charset: str = DEFAULT_CHARSET, tolerance: float = 0.02,
                        max_directions: int = 32) -> AnnotationSet:
    """Predictions that overlap each ground truth at ``target_iou`` with ``text_edits`` typos.

    Each polygon is translated along a random direction by a bisected
    distance; directions leaving the image are redrawn. Scores are 1.
    """
    if not 0.0 < target_iou <= 1.0:
        raise ValueError(f"target_iou must be in (0, 1], got {target_iou}")
    if text_edits < 0:
        raise ValueError("text_edits must be >= 0")
    rng = XorShift64Star(derive_seed(seed, 0x9E47))
    out = []
    for k, inst in enumerate(gt.instances):
        poly = inst.polygon
        if target_iou < 1.0:
            for _ in range(max_directions):
                theta = rng.uniform(0.0, 2.0 * math.pi)
                d = (math.cos(theta), math.sin(theta))
                dist = shift_for_iou(poly, d, target_iou)
                cand = poly.translated(dist * d[0], dist * d[1])
                pts = cand.points
                inside = (pts.min() >= 0 and pts[:, 0].max() <= gt.width
                          and pts[:, 1].max() <= gt.height)
                if inside and abs(polygon_iou(poly, cand) - target_iou) <= tolerance:
                    poly = cand
                    break
            else:
                raise ValueError(f"image {gt.image_id!r} instance {k}: IoU {target_iou} "
                                 f"unreachable within the image bounds")
        text = inst.text
        if text_edits and not inst.dont_care:
            text = _mutate_text(rng, text, text_edits, charset)
        out.append(SpotInstance(poly, text, 1.0))
    return AnnotationSet(gt.image_id, gt.width, gt.height, tuple(out), gt.n_points)


# -- augmentation ---------------------------------------------------------------------

def resize_scale(height: int, width: int, short_edge: float, max_long: float = 1600.0) -> float:
    """Scale mapping the short side to ``short_edge``, capped so the long side <= ``max_long``."""
    s = short_edge / min(height, width)
    if max(height, width) * s > max_long:
        s = max_long / max(height, width)
    return s


def random_resize_aug(img, ann: AnnotationSet, seed: int, short_range=(480, 896),
                      max_long: float = 1600.0, short_edge: float | None = None):
    """Resize so the shorter edge is a random integer in ``short_range`` (long edge capped).

    Coordinates are multiplied by the realized per-axis factors
    (new size / old size), so normalized coordinates are unchanged.
    """
    x = check_image(img)
    h, w, _ = x.shape
    if short_edge is None:
        short_edge = XorShift64Star(derive_seed(seed, 0x2E5)).randint(*short_range)
    s = resize_scale(h, w, short_edge, max_long)
    nh, nw = max(1, int(round(h * s))), max(1, int(round(w * s)))
    out = resize_bilinear(x, nh, nw)
    return out, ann.scaled(nw / w, nh / h, width=nw, height=nh)


def _crop_ok(boxes: np.ndarray, rect) -> tuple[bool, np.ndarray]:
    x0, y0, x1, y1 = rect
    inside = (boxes[:, 0] >= x0) & (boxes[:, 1] >= y0) & (boxes[:, 2] <= x1) & (boxes[:, 3] <= y1)
    outside = (boxes[:, 2] <= x0) | (boxes[:, 0] >= x1) | (boxes[:, 3] <= y0) | (boxes[:, 1] >= y1)
    return bool(np.all(inside | outside) and inside.any()), inside


def instance_aware_crop(img, ann: AnnotationSet, seed: int, rect=None,
                        min_fraction: float = 0.3, attempts: int = 100):
    """Random crop that never cuts an instance.

    Every instance ends up fully inside the crop (kept, translated) or fully
    outside (dropped); at least one is kept. ``rect`` = (x0, y0, x1, y1) in
    integer pixels skips the random draw. Returns ``(img, ann, cropped)``;
    when no valid rectangle is found the input comes back with
    ``cropped=False``.
    """
    x = check_image(img)
    if not ann.instances:
        raise ValueError("instance-aware crop needs at least one instance")
    H, W, _ = x.shape
    boxes = np.array([polygon_bbox(i.polygon).as_tuple() for i in ann.instances])
    rng = XorShift64Star(derive_seed(seed, 0xC409))
    candidates = [rect] if rect is not None else None
    chosen = None
    for k in range(1 if rect is not None else attempts):
        if candidates:
            r = tuple(int(v) for v in candidates[0])
        else:
            cw = rng.randint(max(1, int(min_fraction * W)), W)
            ch = rng.randint(max(1, int(min_fraction * H)), H)
            cx = rng.randint(0, W - cw)
            cy = rng.randint(0, H - ch)
            r = (cx, cy, cx + cw, cy + ch)
        if not (0 <= r[0] < r[2] <= W and 0 <= r[1] < r[3] <= H):
            raise ValueError(f"crop rectangle {r} outside the {W}x{H} image")
        ok, inside = _crop_ok(boxes, r)
        if ok:
            chosen = (r, inside)
            break
    if chosen is None:
        return x, ann, False
    (x0, y0, x1, y1), inside = chosen
    kept = [SpotInstance(i.polygon.translated(-x0, -y0), i.text, i.score)
            for i, keep in zip(ann.instances, inside) if keep]
    out = AnnotationSet(ann.image_id, x1 - x0, y1 - y0, tuple(kept), ann.n_points)
    return x[y0:y1, x0:x1], out, True
