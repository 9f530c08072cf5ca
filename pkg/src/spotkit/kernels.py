"""Training-free forward kernels of the spotter.

Attention primitives (dense, shifted-window, deformable), the location and
character heads, and a complete toy forward pass wired at the model's
hyperparameters: 100 composite queries, 20 control points, 25 characters,
8 heads, 4 sampling points, 6 encoder and 6+6 decoder layers. Weights are
seeded uniform draws in [-0.1, 0.1]; outputs are well-formed but untrained.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import string
from typing import NamedTuple

import numpy as np

from .geometry import Polygon
from .rng import XorShift64Star, derive_seed

DEFAULT_VOCAB = string.digits + string.ascii_uppercase + string.ascii_lowercase


@dataclass(frozen=True)
class SpotterConfig:
    num_queries: int = 100
    n_points: int = 20
    max_chars: int = 25
    heads: int = 8
    sample_points: int = 4
    enc_layers: int = 6
    dec_layers: int = 6
    d_model: int = 64
    ffn_dim: int = 128
    window: int = 4
    swin_blocks: int = 2
    weight_range: float = 0.1
    vocab: str = DEFAULT_VOCAB

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.n_points < 4 or self.n_points % 2:
            raise ValueError("n_points must be an even number >= 4")
        if len(self.vocab) < 2:
            raise ValueError("vocabulary needs at least 2 characters")


@dataclass
class FeatureMap:
    """Row-major ``(height, width, channels)`` feature grid."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"feature map must be (h, w, c), got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("feature map has non-finite values")

    @classmethod
    def from_flat(cls, height: int, width: int, channels: int, values) -> "FeatureMap":
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        if v.size != height * width * channels:
            raise ValueError(f"expected {height * width * channels} values, got {v.size}")
        return cls(v.reshape(height, width, channels))

    height = property(lambda self: self.data.shape[0])
    width = property(lambda self: self.data.shape[1])
    channels = property(lambda self: self.data.shape[2])


@dataclass
class QuerySet:
    """Composite queries: per-point location queries and per-slot character queries."""

    point_queries: np.ndarray   # (q, n_points, d)
    char_queries: np.ndarray    # (q, max_chars, d)

    def __post_init__(self):
        p, c = self.point_queries, self.char_queries
        if p.ndim != 3 or c.ndim != 3 or p.shape[0] != c.shape[0] or p.shape[2] != c.shape[2]:
            raise ValueError("point and character queries must share (q, ., d)")

    q = property(lambda self: self.point_queries.shape[0])
    n_points = property(lambda self: self.point_queries.shape[1])
    max_chars = property(lambda self: self.char_queries.shape[1])


# -- dense attention --------------------------------------------------------------

def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mx = np.max(x, axis=axis, keepdims=True)
    if np.isneginf(mx).any():
        raise ValueError("softmax row with every logit at -inf")
    e = np.exp(x - mx)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_attention(queries, keys, values, mask=None, return_weights: bool = False):
    """softmax(Q K^T / sqrt(d)) V over the last two axes (leading axes batch).

    ``mask`` (broadcastable to the score matrix) is True where attention is
    allowed.
    """
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query/key widths differ: {q.shape[-1]} vs {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"{k.shape[-2]} keys but {v.shape[-2]} values")
    scores = q @ np.swapaxes(k, -1, -2) / math.sqrt(q.shape[-1])
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    w = softmax(scores, axis=-1)
    out = w @ v
    return (out, w) if return_weights else out


def _layer_norm(x, eps: float = 1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def _multihead(x_q, x_kv, p, heads, mask=None):
    """Multi-head attention with projections ``p = (wq, wk, wv, wo)``."""
    wq, wk, wv, wo = p
    d = x_q.shape[-1]
    dh = d // heads

    def split(t):
        return np.swapaxes(t.reshape(*t.shape[:-1], heads, dh), -2, -3)

    out = softmax_attention(split(x_q @ wq), split(x_kv @ wk), split(x_kv @ wv), mask)
    out = np.swapaxes(out, -2, -3).reshape(*x_q.shape[:-1], d)
    return out @ wo


# -- shifted windows ------------------------------------------------------------------

class WindowLayout(NamedTuple):
    height: int
    width: int
    padded_height: int
    padded_width: int
    window: int
    shift: int


def _as_array(fm):
    return fm.data if isinstance(fm, FeatureMap) else np.asarray(fm)


def window_partition(fm, window: int, shift: int = 0):
    """Pad to a multiple of ``window``, roll by ``-shift``, cut into windows.

    Returns ``(windows, layout)`` with windows of shape
    ``(n_windows, window * window, channels)`` in row-major window order.
    """
    x = _as_array(fm)
    if window < 1 or not 0 <= shift < window:
        raise ValueError(f"need window >= 1 and 0 <= shift < window, got {window}, {shift}")
    h, w, c = x.shape
    hp, wp = -(-h // window) * window, -(-w // window) * window
    padded = np.zeros((hp, wp, c), dtype=x.dtype)
    padded[:h, :w] = x
    if shift:
        padded = np.roll(padded, (-shift, -shift), axis=(0, 1))
    win = padded.reshape(hp // window, window, wp // window, window, c)
    win = win.transpose(0, 2, 1, 3, 4).reshape(-1, window * window, c)
    return win, WindowLayout(h, w, hp, wp, window, shift)


def window_merge(windows, layout: WindowLayout) -> np.ndarray:
    """Inverse of :func:`window_partition` (padding stripped)."""
    h, w, hp, wp, window, shift = layout
    c = windows.shape[-1]
    x = windows.reshape(hp // window, wp // window, window, window, c)
    x = x.transpose(0, 2, 1, 3, 4).reshape(hp, wp, c)
    if shift:
        x = np.roll(x, (shift, shift), axis=(0, 1))
    return x[:h, :w]


def window_attention_mask(layout: WindowLayout) -> np.ndarray:
    """``(n_windows, T, T)`` mask keeping attention inside contiguous regions.

    Tokens wrapped around by the cyclic shift, and padding, may not attend
    across to ordinary tokens.
    """
    h, w, hp, wp, window, shift = layout
    rows = (np.arange(hp) + shift) % hp
    cols = (np.arange(wp) + shift) % wp
    wrap_r = np.arange(hp) >= hp - shift if shift else np.zeros(hp, bool)
    wrap_c = np.arange(wp) >= wp - shift if shift else np.zeros(wp, bool)
    pad = (rows[:, None] >= h) | (cols[None, :] >= w)
    label = wrap_r[:, None] * 1 + wrap_c[None, :] * 2 + pad * 4
    lab, _ = window_partition(label[..., None], window, 0)
    lab = lab[..., 0]
    return lab[:, :, None] == lab[:, None, :]


def shifted_window_attention(x, p, heads: int, window: int, shift: int) -> np.ndarray:
    win, layout = window_partition(x, window, shift)
    mask = window_attention_mask(layout)[:, None]
    out = _multihead(win, win, p, heads, mask)
    return window_merge(out, layout)


# -- sampling -------------------------------------------------------------------------

def bilinear_sample_many(data, xy) -> np.ndarray:
    """Bilinear reads at normalized points ``xy[..., 2]`` from ``(h, w, c)`` data.

    Pixel (i, j) has its centre at ((j + 0.5) / w, (i + 0.5) / h); reads
    outside the grid see zeros.
    """
    data = np.asarray(data, dtype=np.float64)
    h, w, c = data.shape
    xy = np.asarray(xy, dtype=np.float64)
    px = xy[..., 0] * w - 0.5
    py = xy[..., 1] * h - 0.5
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx, fy = px - x0, py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros(xy.shape[:-1] + (c,))
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = data[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
            out += np.where(ok, wy * wx, 0.0)[..., None] * vals
    return out


def bilinear_sample(fm, p) -> np.ndarray:
    """Channel vector at normalized point ``p`` (align_corners=False, zero padding)."""
    return bilinear_sample_many(_as_array(fm), np.asarray(p, dtype=np.float64)[None])[0]


def _deform_core(value, refs, offsets, logits):
    """Batched deformable sampling.

    value: (h, w, H, dh); refs: (B, 2); offsets: (B, H, K, 2) normalized;
    logits: (B, H, K). Returns (B, H * dh) before the output projection.
    """
    h, w, H, dh = value.shape
    B = refs.shape[0]
    attn = softmax(logits, axis=-1)
    loc = refs[:, None, None, :] + offsets
    out = np.empty((B, H, dh))
    for head in range(H):
        samples = bilinear_sample_many(value[:, :, head, :], loc[:, head])   # (B, K, dh)
        out[:, head] = np.einsum("bk,bkd->bd", attn[:, head], samples)
    return out.reshape(B, H * dh)


def deformable_attention(query, reference, value_maps, offsets=None, weights=None,
                         out_proj=None, *, offset_proj=None, weight_proj=None) -> np.ndarray:
    """Deformable attention for one query.

    Args:
        query: ``(d,)`` query vector; only used to predict ``offsets`` and
            ``weights`` through ``offset_proj`` / ``weight_proj`` when those
            are not given directly (may be None otherwise).
        reference: normalized (x, y) reference point.
        value_maps: ``H`` per-head maps, each ``(h, w, dh)``.
        offsets: ``(H, K, 2)`` normalized sampling offsets.
        weights: ``(H, K)`` attention logits, softmax-normalized per head.
        out_proj: optional ``(H * dh, d_out)`` output projection.

    Returns:
        ``sum_k softmax(weights)[h, k] * sample(value_h, reference + offset[h, k])``
        concatenated over heads, then projected.
    """
    vm = np.stack([np.asarray(v, dtype=np.float64) for v in value_maps], axis=2)
    H = vm.shape[2]
    if offsets is None or weights is None:
        if query is None or offset_proj is None or weight_proj is None:
            raise ValueError("give offsets and weights, or a query with both projections")
        q = np.asarray(query, dtype=np.float64)
        if offsets is None:
            offsets = (q @ offset_proj).reshape(H, -1, 2)
        if weights is None:
            weights = (q @ weight_proj).reshape(H, -1)
    offsets = np.asarray(offsets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if offsets.shape[:2] != weights.shape or offsets.shape[0] != H:
        raise ValueError(f"offsets {offsets.shape} / weights {weights.shape} do not match {H} heads")
    ref = np.asarray(reference, dtype=np.float64).reshape(1, 2)
    out = _deform_core(vm, ref, offsets[None], weights[None])[0]
    return out if out_proj is None else out @ out_proj


# -- heads --------------------------------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LocationOutput(NamedTuple):
    coords: np.ndarray          # (q, n, 2) sigmoid outputs in (0, 1)
    confidence: np.ndarray      # (q,)
    polygons: list              # q normalized Polygons


def ribbon_cells(boxes, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-control-point placement cells inside each reference box.

    Top points run left to right along the upper half of the box, bottom
    points right to left along the lower half. Each cell is a quarter of
    the point spacing wide, so any point chosen inside its cell keeps both
    chains x-monotone, strictly separated, and the ring simple.

    Returns ``(lo, size)``, each ``(q, n_points, 2)``.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    half = n_points // 2
    x0, y0, x1, y1 = boxes.T
    bw, bh = x1 - x0, y1 - y0
    spacing = bw / half
    centers = x0[:, None] + (np.arange(half)[None, :] + 0.5) * spacing[:, None]
    cx = np.concatenate([centers, centers[:, ::-1]], axis=1)
    cw = spacing / 4.0
    lo = np.empty((len(boxes), n_points, 2))
    lo[..., 0] = cx - cw[:, None] / 2
    lo[:, :half, 1] = y0[:, None]
    lo[:, half:, 1] = (y0 + bh / 2)[:, None]
    size = np.empty_like(lo)
    size[..., 0] = cw[:, None]
    size[..., 1] = (bh / 2)[:, None]
    return lo, size


def location_head(states, w_coord, b_coord, w_conf, b_conf, boxes=None) -> LocationOutput:
    """Two-channel coordinate regression plus instance confidence.

    ``states`` is ``(q, n_points, d)``. Raw coordinates are
    ``sigmoid(states @ w_coord + b_coord)``; each is placed inside its
    control point's cell of the query's reference box (the unit square when
    ``boxes`` is None), which always yields a valid clockwise polygon.
    """
    s = np.asarray(states, dtype=np.float64)
    q, n, _ = s.shape
    coords = _sigmoid(s @ w_coord + b_coord)
    conf = _sigmoid(s.mean(axis=1) @ w_conf + b_conf).reshape(q)
    if boxes is None:
        boxes = np.tile([0.0, 0.0, 1.0, 1.0], (q, 1))
    lo, size = ribbon_cells(boxes, n)
    pts = lo + coords * size
    return LocationOutput(coords, conf, [Polygon(p) for p in pts])


class CharOutput(NamedTuple):
    probs: np.ndarray     # (q, max_chars, V + 1), last class is the end token
    texts: list


def char_head(states, w_char, b_char, vocab: str) -> CharOutput:
    """Per-slot character distribution; greedy decode stops at the end token."""
    s = np.asarray(states, dtype=np.float64)
    logits = s @ w_char + b_char
    V = len(vocab)
    if logits.shape[-1] != V + 1:
        raise ValueError(f"expected {V + 1} classes (vocabulary + end token), got {logits.shape[-1]}")
    return decode_chars(logits, vocab)


def decode_chars(logits, vocab: str) -> CharOutput:
    probs = softmax(logits, axis=-1)
    best = np.argmax(logits, axis=-1)
    end = len(vocab)
    texts = []
    for row in np.atleast_2d(best):
        chars = []
        for k in row.tolist():
            if k == end:
                break
            chars.append(vocab[k])
        texts.append("".join(chars))
    return CharOutput(probs, texts)


# -- toy spotter ------------------------------------------------------------------------------

class _Init:
    def __init__(self, seed: int, scale: float):
        self.rng = XorShift64Star(derive_seed(seed, 0x5EED))
        self.scale = scale

    def __call__(self, *shape):
        return self.rng.uniform_array(shape, -self.scale, self.scale)

    def attn(self, d):
        return tuple(self(d, d) for _ in range(4))

    def ffn(self, d, f):
        return (self(d, f), self(f), self(f, d), self(d))

    def deform(self, d, H, K):
        return {"off": self(d, H * K * 2), "attn": self(d, H * K),
                "value": self(d, d), "out": self(d, d)}


@dataclass
class SpotterWeights:
    config: SpotterConfig
    params: dict = field(default_factory=dict)

    @classmethod
    def from_seed(cls, seed: int, in_channels: int, config: SpotterConfig | None = None):
        cfg = config or SpotterConfig()
        d, H, K, f = cfg.d_model, cfg.heads, cfg.sample_points, cfg.ffn_dim
        init = _Init(seed, cfg.weight_range)
        p = {
            "embed": init(in_channels, d),
            "swin": [(init.attn(d), init.ffn(d, f)) for _ in range(cfg.swin_blocks)],
            "enc": [(init.deform(d, H, K), init.ffn(d, f)) for _ in range(cfg.enc_layers)],
            "proposal_cls": init(d),
            "proposal_box": init(d, 2),
            "instance": init(d, d),
            "point_embed": init(cfg.n_points, d),
            "char_embed": init(cfg.max_chars, d),
            "loc_dec": [(init.attn(d), init.attn(d), init.deform(d, H, K), init.ffn(d, f))
                        for _ in range(cfg.dec_layers)],
            "char_dec": [(init.attn(d), init.deform(d, H, K), init.ffn(d, f))
                         for _ in range(cfg.dec_layers)],
            "coord": (init(d, 2), init(2)),
            "conf": (init(d), init(1)),
            "char": (init(d, len(cfg.vocab) + 1), init(len(cfg.vocab) + 1)),
        }
        return cls(cfg, p)


def _ffn(x, p):
    w1, b1, w2, b2 = p
    return np.maximum(x @ w1 + b1, 0.0) @ w2 + b2


def _deform_layer(queries, refs, memory, shape, p, H, K):
    """Deformable attention of ``queries (B, d)`` at ``refs (B, 2)`` into ``memory``."""
    h, w = shape
    d = queries.shape[-1]
    value = (memory @ p["value"]).reshape(h, w, H, d // H)
    offsets = (queries @ p["off"]).reshape(-1, H, K, 2) / np.array([w, h])
    logits = (queries @ p["attn"]).reshape(-1, H, K)
    return _deform_core(value, refs, offsets, logits) @ p["out"]


def token_centers(h: int, w: int) -> np.ndarray:
    ys, xs = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def image_to_feature_map(img, patch: int = 8) -> FeatureMap:
    """Average-pool an ``(H, W, 3)`` image into ``patch x patch`` cells."""
    img = np.asarray(img, dtype=np.float64)
    H, W, c = img.shape
    h, w = H // patch, W // patch
    if h == 0 or w == 0:
        raise ValueError(f"image {W}x{H} smaller than one {patch}-pixel patch")
    x = img[: h * patch, : w * patch].reshape(h, patch, w, patch, c).mean(axis=(1, 3))
    return FeatureMap(x)


def _proposal_boxes(centers, sizes):
    """Boxes around proposal centres, kept strictly inside the unit square."""
    half = sizes / 2
    margin = 1e-3
    c = np.clip(centers, half + margin, 1.0 - half - margin)
    return np.concatenate([c - half, c + half], axis=1)


def spotting_forward(fm, seed: int = 0, config: SpotterConfig | None = None,
                     weights: SpotterWeights | None = None) -> list:
    """Run the toy spotter on a feature map; returns ``num_queries`` SpotInstances.

    Pipeline: linear embedding, shifted-window attention blocks, deformable
    encoder layers, top-Q encoder proposals, then a location decoder and a
    character decoder that share the query index of each instance.
    Polygons are normalized to the unit square; deterministic given ``seed``.
    """
    from .metrics import SpotInstance

    fm = fm if isinstance(fm, FeatureMap) else FeatureMap(fm)
    cfg = weights.config if weights is not None else (config or SpotterConfig())
    if fm.height < cfg.window or fm.width < cfg.window:
        raise ValueError(f"feature map {fm.height}x{fm.width} is smaller than one "
                         f"{cfg.window}x{cfg.window} attention window")
    W = weights or SpotterWeights.from_seed(seed, fm.channels, cfg)
    p = W.params
    H, K, Q = cfg.heads, cfg.sample_points, cfg.num_queries
    h, w = fm.height, fm.width

    # feature extraction: embedding + alternating regular / shifted windows
    x = fm.data @ p["embed"]
    for b, (attn, ffn) in enumerate(p["swin"]):
        shift = (cfg.window // 2) * (b % 2)
        x = _layer_norm(x + shifted_window_attention(x, attn, H, cfg.window, shift))
        x = _layer_norm(x + _ffn(x, ffn))

    # deformable encoder over all tokens
    mem = x.reshape(h * w, -1)
    centers = token_centers(h, w)
    for deform, ffn in p["enc"]:
        mem = _layer_norm(mem + _deform_layer(mem, centers, mem, (h, w), deform, H, K))
        mem = _layer_norm(mem + _ffn(mem, ffn))

    # top-Q proposals (stable order: score desc, then token index)
    score = mem @ p["proposal_cls"]
    order = np.lexsort((np.arange(len(score)), -score))
    picks = order[np.arange(Q) % len(order)]
    sizes = 0.05 + 0.25 * _sigmoid(mem[picks] @ p["proposal_box"])
    boxes = _proposal_boxes(centers[picks], sizes)
    inst = mem[picks] @ p["instance"]                             # (Q, d)

    # location decoder: composite point queries
    lo, size = ribbon_cells(boxes, cfg.n_points)
    point_refs = (lo + 0.5 * size).reshape(-1, 2)
    pq = p["point_embed"][None] + inst[:, None]                   # (Q, N, d)
    for intra, inter, deform, ffn in p["loc_dec"]:
        pq = _layer_norm(pq + _multihead(pq, pq, intra, H))
        t = np.swapaxes(pq, 0, 1)
        pq = _layer_norm(pq + np.swapaxes(_multihead(t, t, inter, H), 0, 1))
        flat = pq.reshape(-1, pq.shape[-1])
        flat = _layer_norm(flat + _deform_layer(flat, point_refs, mem, (h, w), deform, H, K))
        pq = _layer_norm(flat + _ffn(flat, ffn)).reshape(pq.shape)

    # character decoder: slots spread along each box's centre line
    M = cfg.max_chars
    fx = (np.arange(M) + 0.5) / M
    char_refs = np.stack([boxes[:, None, 0] + fx[None] * (boxes[:, None, 2] - boxes[:, None, 0]),
                          np.repeat(((boxes[:, 1] + boxes[:, 3]) / 2)[:, None], M, axis=1)],
                         axis=-1).reshape(-1, 2)
    cq = p["char_embed"][None] + inst[:, None]                    # (Q, M, d)
    for self_attn, deform, ffn in p["char_dec"]:
        cq = _layer_norm(cq + _multihead(cq, cq, self_attn, H))
        flat = cq.reshape(-1, cq.shape[-1])
        flat = _layer_norm(flat + _deform_layer(flat, char_refs, mem, (h, w), deform, H, K))
        cq = _layer_norm(flat + _ffn(flat, ffn)).reshape(cq.shape)

    loc = location_head(pq, *p["coord"], *p["conf"], boxes=boxes)
    chars = char_head(cq, *p["char"], cfg.vocab)
    return [SpotInstance(poly, text, float(c), max_text=cfg.max_chars)
            for poly, text, c in zip(loc.polygons, chars.texts, loc.confidence)]
