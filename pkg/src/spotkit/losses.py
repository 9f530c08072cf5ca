"""Training losses of the spotter and the super-resolution generator.

Every loss returns a :class:`LossValue` carrying the value and its analytic
gradient with respect to the primary input, flattened. Encoder/decoder
objectives compose the per-instance terms with the ``lambda`` weights of
:class:`LossWeights`; the generator objective combines perceptual,
relativistic adversarial and pixel L1 terms.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
import math
from typing import Callable, Sequence

import numpy as np

from .geometry import BBox

EPS = 1e-7
MAX_TEXT_LEN = 25


@dataclass(frozen=True)
class LossWeights:
    """Weighting factors.

    ``cls``/``coord``/``giou``/``char`` weight the encoder and decoder terms;
    ``adv`` and ``pix`` weight the adversarial and L1 terms of the generator
    loss. None of the defaults are fixed by the model description; they are
    the usual values for this detector family and ESRGAN.
    """

    cls: float = 2.0
    coord: float = 5.0
    giou: float = 2.0
    char: float = 4.0
    adv: float = 0.005
    pix: float = 0.01
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"weight {f.name} must be finite and >= 0, got {v}")
        if self.focal_alpha > 1:
            raise ValueError("focal_alpha must be <= 1")

    def scaled(self, c: float) -> "LossWeights":
        """Every lambda multiplied by ``c`` (focal parameters untouched)."""
        d = asdict(self)
        for k in ("cls", "coord", "giou", "char", "adv", "pix"):
            d[k] *= c
        return LossWeights(**d)


@dataclass(frozen=True)
class LossValue:
    value: float
    gradient: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gradient, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "value", float(self.value))

    def __float__(self):
        return self.value


# -- classification ---------------------------------------------------------

def focal_loss(p, y, alpha: float = 0.25, gamma: float = 2.0, eps: float = EPS) -> LossValue:
    """Sum of binary focal losses; gradient with respect to the probabilities.

    ``p`` and ``y`` may be scalars or equal-length arrays. Probabilities are
    clamped to [eps, 1 - eps]; where the clamp is active the gradient is 0.
    """
    p_raw = np.atleast_1d(np.asarray(p, dtype=np.float64))
    y = np.broadcast_to(np.atleast_1d(np.asarray(y)), p_raw.shape)
    if ((p_raw < 0) | (p_raw > 1) | ~np.isfinite(p_raw)).any():
        raise ValueError("probabilities must lie in [0, 1]")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    q = np.clip(p_raw, eps, 1.0 - eps)
    active = (p_raw > eps) & (p_raw < 1.0 - eps)
    pos = y == 1
    one_m = 1.0 - q
    val = np.where(pos,
                   -alpha * one_m ** gamma * np.log(q),
                   -(1.0 - alpha) * q ** gamma * np.log(one_m))
    # d/dp of the positive and negative branches
    g_pos = alpha * (gamma * one_m ** (gamma - 1.0) * np.log(q) - one_m ** gamma / q) \
        if gamma != 0 else -alpha / q
    g_neg = -(1.0 - alpha) * (gamma * q ** (gamma - 1.0) * np.log(one_m) - q ** gamma / one_m) \
        if gamma != 0 else (1.0 - alpha) / one_m
    grad = np.where(pos, g_pos, g_neg) * active
    return LossValue(math.fsum(val.tolist()), grad)


def char_ce_loss(logits, target, pad_index: int | None = None,
                 max_len: int = MAX_TEXT_LEN) -> LossValue:
    """Mean character cross-entropy over non-padding positions.

    Args:
        logits: ``(T, V)`` scores, T <= ``max_len``.
        target: ``T`` class indices; ``V`` (one past the last class) marks padding
            unless ``pad_index`` says otherwise.

    Gradient is with respect to the flattened logits.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("logits must have shape (T, V)")
    T, V = z.shape
    if V < 2:
        raise ValueError("need at least 2 classes")
    if T > max_len:
        raise ValueError(f"{T} positions exceed the maximum text length {max_len}")
    t = np.asarray(target, dtype=np.int64).reshape(-1)
    if t.shape[0] != T:
        raise ValueError("target length does not match logits")
    pad = V if pad_index is None else pad_index
    if ((t < 0) | ((t >= V) & (t != pad))).any():
        raise ValueError("target index out of range")
    valid = t != pad
    n = int(valid.sum())
    grad = np.zeros_like(z)
    if n == 0:
        return LossValue(0.0, grad)
    zs = z - z.max(axis=1, keepdims=True)
    logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    rows = np.flatnonzero(valid)
    value = -logp[rows, t[rows]].sum() / n
    soft = np.exp(logp[rows])
    soft[np.arange(n), t[rows]] -= 1.0
    grad[rows] = soft / n
    return LossValue(value, grad)


# -- regression ---------------------------------------------------------------

def l1_coord_loss(pred, gt) -> LossValue:
    """Mean absolute error over all 2N control-point coordinates."""
    a = np.asarray(getattr(pred, "points", pred), dtype=np.float64)
    b = np.asarray(getattr(gt, "points", gt), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"control-point shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return LossValue(np.abs(d).mean(), np.sign(d) / d.size)


def _box_arr(b):
    if isinstance(b, BBox):
        return np.array(b.as_tuple())
    return np.asarray(b, dtype=np.float64).reshape(4)


def giou_loss(pred, gt) -> LossValue:
    """1 - GIoU(pred, gt) in [0, 2], gradient w.r.t. pred's (x0, y0, x1, y1).

    Kinks (coinciding edges) take the one-sided derivative where the
    prediction's edge is the binding one.
    """
    ax0, ay0, ax1, ay1 = _box_arr(pred)
    bx0, by0, bx1, by1 = _box_arr(gt)
    BBox(ax0, ay0, ax1, ay1), BBox(bx0, by0, bx1, by1)
    aw, ah = ax1 - ax0, ay1 - ay0
    area_a = aw * ah
    area_b = (bx1 - bx0) * (by1 - by0)
    iw_raw = min(ax1, bx1) - max(ax0, bx0)
    ih_raw = min(ay1, by1) - max(ay0, by0)
    iw, ih = max(iw_raw, 0.0), max(ih_raw, 0.0)
    inter = iw * ih
    union = area_a + area_b - inter
    cw = max(ax1, bx1) - min(ax0, bx0)
    ch = max(ay1, by1) - min(ay0, by0)
    c_area = cw * ch
    if c_area <= 0.0:
        return LossValue(0.0 if cw == 0.0 and ch == 0.0 else 1.0, np.zeros(4))
    iou = inter / union if union > 0 else 0.0
    giou = iou - (c_area - union) / c_area

    d_area = np.array([-ah, -aw, ah, aw])
    d_iw = np.array([-float(ax0 > bx0), 0.0, float(ax1 < bx1), 0.0]) if iw_raw > 0 else np.zeros(4)
    d_ih = np.array([0.0, -float(ay0 > by0), 0.0, float(ay1 < by1)]) if ih_raw > 0 else np.zeros(4)
    d_inter = d_iw * ih + d_ih * iw
    d_union = d_area - d_inter
    d_cw = np.array([-float(ax0 < bx0), 0.0, float(ax1 > bx1), 0.0])
    d_ch = np.array([0.0, -float(ay0 < by0), 0.0, float(ay1 > by1)])
    d_c = d_cw * ch + d_ch * cw
    d_iou = (d_inter / union - inter * d_union / union ** 2) if union > 0 else np.zeros(4)
    # giou = iou - 1 + union / c_area
    d_giou = d_iou + d_union / c_area - union * d_c / c_area ** 2
    return LossValue(1.0 - giou, -d_giou)


# -- composite objectives ---------------------------------------------------

def _composite(terms: Sequence[Sequence[float]], lams: Sequence[float]) -> LossValue:
    cols = [np.asarray(t, dtype=np.float64).reshape(-1) for t in terms]
    if len({c.shape[0] for c in cols}) != 1:
        raise ValueError("per-instance term lists have different lengths")
    value = math.fsum(lam * v for lam, c in zip(lams, cols) for v in c.tolist())
    grad = np.concatenate([np.full(c.shape[0], lam) for lam, c in zip(lams, cols)])
    return LossValue(value, grad)


def encoder_loss(cls_terms, coord_terms, giou_terms, w: LossWeights | None = None) -> LossValue:
    """Sum over proposals of cls*L_cls + coord*L_coord + giou*L_gIoU.

    Gradient is with respect to the concatenated term vectors.
    """
    w = w or LossWeights()
    return _composite([cls_terms, coord_terms, giou_terms], [w.cls, w.coord, w.giou])


def decoder_loss(cls_terms, coord_terms, char_terms, w: LossWeights | None = None) -> LossValue:
    """Sum over queries of cls*L_cls + coord*L_coord + char*L_char."""
    w = w or LossWeights()
    return _composite([cls_terms, coord_terms, char_terms], [w.cls, w.coord, w.char])


def encoder_objective(probs, labels, pred_points, gt_points, pred_boxes, gt_boxes,
                      w: LossWeights | None = None) -> LossValue:
    """Encoder loss from raw proposal outputs.

    Classification runs over every proposal; coordinate and GIoU terms over
    the positives (``labels == 1``), whose ``pred_points``/``gt_points`` and
    boxes are aligned. Gradient is w.r.t. ``[probs, pred_points.ravel(),
    pred_boxes.ravel()]``.
    """
    w = w or LossWeights()
    probs = np.asarray(probs, dtype=np.float64)
    pp = np.asarray(pred_points, dtype=np.float64)
    gp = np.asarray(gt_points, dtype=np.float64)
    pb = np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4)
    gb = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    if len(pp) != len(gp) or len(pb) != len(gb) or len(pp) != len(pb):
        raise ValueError("matched predictions and targets must align")
    fl = focal_loss(probs, labels, w.focal_alpha, w.focal_gamma)
    coord = [l1_coord_loss(a, b) for a, b in zip(pp, gp)]
    giou = [giou_loss(a, b) for a, b in zip(pb, gb)]
    value = math.fsum([w.cls * fl.value] + [w.coord * c.value for c in coord]
                      + [w.giou * g.value for g in giou])
    grad = [w.cls * fl.gradient]
    grad += [w.coord * c.gradient for c in coord] + [w.giou * g.gradient for g in giou]
    return LossValue(value, np.concatenate(grad) if grad else np.zeros(0))


def decoder_objective(probs, labels, pred_points, gt_points, char_logits, char_targets,
                      w: LossWeights | None = None) -> LossValue:
    """Decoder loss from raw query outputs.

    Gradient is w.r.t. ``[probs, pred_points.ravel(), char_logits.ravel()]``.
    """
    w = w or LossWeights()
    probs = np.asarray(probs, dtype=np.float64)
    pp = np.asarray(pred_points, dtype=np.float64)
    gp = np.asarray(gt_points, dtype=np.float64)
    logits = np.asarray(char_logits, dtype=np.float64)
    if len(pp) != len(gp) or len(logits) != len(pp) or len(char_targets) != len(pp):
        raise ValueError("matched predictions and targets must align")
    fl = focal_loss(probs, labels, w.focal_alpha, w.focal_gamma)
    coord = [l1_coord_loss(a, b) for a, b in zip(pp, gp)]
    chars = [char_ce_loss(z, t) for z, t in zip(logits, char_targets)]
    value = math.fsum([w.cls * fl.value] + [w.coord * c.value for c in coord]
                      + [w.char * c.value for c in chars])
    grad = [w.cls * fl.gradient] + [w.coord * c.gradient for c in coord]
    grad += [w.char * c.gradient for c in chars]
    return LossValue(value, np.concatenate(grad))


# -- super-resolution generator ----------------------------------------------

def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relativistic_adv_terms(c_real, c_fake) -> tuple[LossValue, LossValue]:
    """Relativistic average discriminator and generator losses.

    With ``D(a, b) = sigmoid(C(a) - mean C(b))``::

        d_loss = -mean log D(real, fake) - mean log(1 - D(fake, real))
        g_loss = -mean log D(fake, real) - mean log(1 - D(real, fake))

    Both gradients are w.r.t. ``[c_real, c_fake]``.
    """
    r = np.asarray(c_real, dtype=np.float64).reshape(-1)
    f = np.asarray(c_fake, dtype=np.float64).reshape(-1)
    if r.size == 0 or f.size == 0:
        raise ValueError("critic batches must be non-empty")
    nr, nf = r.size, f.size
    xr = r - f.mean()
    xf = f - r.mean()
    # -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
    d_val = _softplus(-xr).mean() + _softplus(xf).mean()
    g_val = _softplus(-xf).mean() + _softplus(xr).mean()

    s_nr, s_xf = _sigmoid(-xr), _sigmoid(xf)
    d_r = -s_nr / nr - s_xf.sum() / (nf * nr)
    d_f = s_nr.sum() / (nr * nf) + s_xf / nf
    s_nf, s_xr = _sigmoid(-xf), _sigmoid(xr)
    g_f = -s_nf / nf - s_xr.sum() / (nr * nf)
    g_r = s_nf.sum() / (nf * nr) + s_xr / nr
    return (LossValue(d_val, np.concatenate([d_r, d_f])),
            LossValue(g_val, np.concatenate([g_r, g_f])))


def generator_loss(l_per: float, g_adv: float, l1_pix: float, w: LossWeights | None = None) -> float:
    """Perceptual loss + adv * relativistic generator loss + pix * pixel L1."""
    w = w or LossWeights()
    return l_per + w.adv * g_adv + w.pix * l1_pix


# -- verification -------------------------------------------------------------

def finite_diff_grad_check(f: Callable, x, step: float = 1e-6, analytic=None) -> float:
    """Max relative error between an analytic gradient and central differences.

    ``f(x)`` returns a :class:`LossValue` (or a float, in which case
    ``analytic`` must be given). Error per coordinate is
    ``|analytic - fd| / max(1, |analytic|)``.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)

    def value(v):
        out = f(v)
        return float(getattr(out, "value", out))

    if analytic is None:
        analytic = f(x).gradient
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    if analytic.shape != x.shape:
        raise ValueError(f"gradient length {analytic.size} != input length {x.size}")
    worst = 0.0
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        fh, fl = value(hi), value(lo)
        if not (math.isfinite(fh) and math.isfinite(fl)):
            raise ValueError(f"non-finite evaluation at coordinate {i}")
        fd = (fh - fl) / (2.0 * step)
        worst = max(worst, abs(analytic[i] - fd) / max(1.0, abs(analytic[i])))
    return worst


def _separated_boxes(rng, n: int, gap: float = 1e-2) -> tuple[np.ndarray, np.ndarray]:
    """Overlapping box pairs whose corresponding edges never coincide."""
    pred, gt = [], []
    while len(pred) < n:
        a = np.array([rng.uniform(0.0, 0.4), rng.uniform(0.0, 0.4),
                      rng.uniform(0.5, 0.9), rng.uniform(0.5, 0.9)])
        b = a + np.array([rng.uniform(-0.3, 0.3) for _ in range(4)])
        if b[2] - b[0] < 0.1 or b[3] - b[1] < 0.1:
            continue
        edges_x = np.array([a[0], a[2], b[0], b[2]])
        edges_y = np.array([a[1], a[3], b[1], b[3]])
        if min(np.diff(np.sort(edges_x)).min(), np.diff(np.sort(edges_y)).min()) < gap:
            continue
        pred.append(a)
        gt.append(b)
    return np.array(pred), np.array(gt)


def _off_kink(rng, shape, gap: float = 1e-3) -> np.ndarray:
    """Random offsets with magnitude at least ``gap`` (keeps L1 away from its kink)."""
    mag = gap + rng.uniform_array(shape, 0.0, 0.05)
    sign = np.where(rng.uniform_array(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def gradient_checks(seed: int = 0, step: float = 1e-6, inject_fault: bool = False,
                    w: LossWeights | None = None) -> dict:
    """Central-difference check of every analytic gradient on seeded inputs.

    Returns ``{component name: max relative error}``. ``inject_fault``
    perturbs the focal-loss gradient so the check must fail.
    """
    from .rng import XorShift64Star, derive_seed

    rng = XorShift64Star(derive_seed(seed, 0x6AD))
    w = w or LossWeights()
    n, N, T, V = 3, 20, 6, 8
    probs = rng.uniform_array(n, 0.05, 0.95)
    labels = np.array([1, 0, 1])
    gt_pts = rng.uniform_array((n, N, 2), 0.1, 0.9)
    pred_pts = gt_pts + _off_kink(rng, (n, N, 2))
    pred_boxes, gt_boxes = _separated_boxes(rng, n)
    logits = rng.normal_array((n, T, V))
    targets = np.array([[rng.randint(0, V - 1) for _ in range(T - 2)] + [V, V] for _ in range(n)])
    c_real = rng.normal_array(4)
    c_fake = rng.normal_array(5)
    terms = rng.uniform_array((3, n), 0.0, 2.0)

    def fault(g):
        return g * 1.1 + 1e-3 if inject_fault else g

    def split_enc(x):
        return (x[:n], x[n:n + n * N * 2].reshape(n, N, 2), x[n + n * N * 2:].reshape(n, 4))

    def split_dec(x):
        return (x[:n], x[n:n + n * N * 2].reshape(n, N, 2), x[n + n * N * 2:].reshape(n, T, V))

    def enc(x):
        p, pts, boxes = split_enc(x)
        return encoder_objective(p, labels, pts, gt_pts, boxes, gt_boxes, w)

    def dec(x):
        p, pts, z = split_dec(x)
        return decoder_objective(p, labels, pts, gt_pts, z, targets, w)

    def rel(which):
        def f(x):
            return relativistic_adv_terms(x[:4], x[4:])[which]
        return f

    def gen(x):
        return generator_loss(x[0], x[1], x[2], w)

    cr = np.concatenate([c_real, c_fake])
    fl = focal_loss(probs, labels, w.focal_alpha, w.focal_gamma)
    checks = {
        "focal": finite_diff_grad_check(
            lambda x: focal_loss(x, labels, w.focal_alpha, w.focal_gamma), probs, step,
            analytic=fault(fl.gradient)),
        "l1_coord": max(finite_diff_grad_check(lambda x, g=g: l1_coord_loss(x.reshape(N, 2), g),
                                               p.ravel(), step)
                        for p, g in zip(pred_pts, gt_pts)),
        "giou": max(finite_diff_grad_check(lambda x, g=g: giou_loss(x, g), p, step)
                    for p, g in zip(pred_boxes, gt_boxes)),
        "char_ce": max(finite_diff_grad_check(lambda x, t=t: char_ce_loss(x.reshape(T, V), t),
                                              z.ravel(), step)
                       for z, t in zip(logits, targets)),
        "encoder_loss": finite_diff_grad_check(
            lambda x: encoder_loss(x[:n], x[n:2 * n], x[2 * n:], w), terms.ravel(), step),
        "decoder_loss": finite_diff_grad_check(
            lambda x: decoder_loss(x[:n], x[n:2 * n], x[2 * n:], w), terms.ravel(), step),
        "encoder_objective": finite_diff_grad_check(
            enc, np.concatenate([probs, pred_pts.ravel(), pred_boxes.ravel()]), step),
        "decoder_objective": finite_diff_grad_check(
            dec, np.concatenate([probs, pred_pts.ravel(), logits.ravel()]), step),
        "relativistic_d": finite_diff_grad_check(rel(0), cr, step),
        "relativistic_g": finite_diff_grad_check(rel(1), cr, step),
        "generator_loss": finite_diff_grad_check(
            gen, np.array([1.0, 2.0, 3.0]), step, analytic=np.array([1.0, w.adv, w.pix])),
    }
    return checks
