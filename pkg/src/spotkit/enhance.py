"""Underwater degradation model and a small RRDB super-resolution generator.

The degradation applies per-channel transmission with an airlight term,
then blur, box downsampling and seeded Gaussian noise. The generator has
the ESRGAN layout (shallow conv, residual-in-residual dense blocks, trunk
conv with a global skip, nearest-neighbour upsampling stages, two output
convs) at a configurable width; only the forward pass exists.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .imaging import box_downsample, check_image, clamp01, gaussian_blur, upsample_nearest
from .rng import XorShift64Star, derive_seed


@dataclass(frozen=True)
class DegradeParams:
    """Underwater degradation parameters.

    Attributes:
        attenuation: per-channel (R, G, B) transmission in (0, 1]; red is
            absorbed first under water, so it is the lowest in the preset.
        haze: fraction of the airlight that reaches the camera regardless
            of transmission, in [0, 1].
        airlight: veiling light colour, each channel in [0, 1].
        blur_sigma: Gaussian blur in pixels.
        downsample: integer box-downsampling factor.
        noise_sigma: standard deviation of additive Gaussian noise.
        seed: noise seed.
    """

    attenuation: tuple = (1.0, 1.0, 1.0)
    haze: float = 0.0
    airlight: tuple = (0.0, 0.0, 0.0)
    blur_sigma: float = 0.0
    downsample: int = 1
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        att = tuple(float(a) for a in self.attenuation)
        air = tuple(float(a) for a in self.airlight)
        if len(att) != 3 or not all(0.0 < a <= 1.0 for a in att):
            raise ValueError(f"attenuation must be 3 values in (0, 1], got {self.attenuation}")
        if len(air) != 3 or not all(0.0 <= a <= 1.0 for a in air):
            raise ValueError(f"airlight must be 3 values in [0, 1], got {self.airlight}")
        if not 0.0 <= self.haze <= 1.0:
            raise ValueError(f"haze must be in [0, 1], got {self.haze}")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("blur_sigma and noise_sigma must be >= 0")
        if int(self.downsample) != self.downsample or self.downsample < 1:
            raise ValueError(f"downsample must be an integer >= 1, got {self.downsample}")
        object.__setattr__(self, "attenuation", att)
        object.__setattr__(self, "airlight", air)
        object.__setattr__(self, "downsample", int(self.downsample))


DEGRADE_PRESETS = {
    "identity": DegradeParams(),
    "underwater": DegradeParams(attenuation=(0.45, 0.75, 0.9), haze=0.3,
                                airlight=(0.05, 0.35, 0.45), blur_sigma=1.0,
                                downsample=2, noise_sigma=0.02),
}


def degrade_preset(name: str, **overrides) -> DegradeParams:
    try:
        base = DEGRADE_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown degradation preset {name!r}; "
                         f"expected one of {sorted(DEGRADE_PRESETS)}") from None
    return replace(base, **overrides)


def degrade_underwater(img, p: DegradeParams) -> np.ndarray:
    """Apply colour cast, blur, downsampling and noise; deterministic per ``p.seed``."""
    x = check_image(img)
    att = np.asarray(p.attenuation)
    air = np.asarray(p.airlight)
    if p.downsample > x.shape[0] or p.downsample > x.shape[1]:
        raise ValueError(f"downsample factor {p.downsample} larger than image "
                         f"{x.shape[1]}x{x.shape[0]}")
    x = clamp01(x * att + air * (1.0 - att * (1.0 - p.haze)))
    x = gaussian_blur(x, p.blur_sigma)
    x = box_downsample(x, p.downsample)
    if p.noise_sigma > 0:
        rng = XorShift64Star(derive_seed(p.seed, 0xD06))
        x = x + p.noise_sigma * rng.normal_array(x.shape)
    return clamp01(x)


# -- generator ------------------------------------------------------------------

@dataclass(frozen=True)
class RRDBConfig:
    """Generator width. ``RRDBConfig.esrgan()`` is the full-size layout."""

    features: int = 8
    growth: int = 4
    blocks: int = 2
    beta: float = 0.2
    slope: float = 0.2

    @classmethod
    def esrgan(cls) -> "RRDBConfig":
        return cls(features=64, growth=32, blocks=23)


def conv2d(x, w, b=None) -> np.ndarray:
    """Same-size 2-D convolution (cross-correlation), zero padding.

    ``x`` is ``(h, w, c_in)``; ``w`` is ``(k, k, c_in, c_out)`` with odd ``k``.
    """
    k, k2, cin, cout = w.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {w.shape[:2]}")
    if x.shape[-1] != cin:
        raise ValueError(f"input has {x.shape[-1]} channels, kernel expects {cin}")
    r = k // 2
    xp = np.pad(x, ((r, r), (r, r), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(0, 1))  # (h, w, c, k, k)
    out = np.tensordot(win, w.transpose(2, 0, 1, 3), axes=3)
    return out if b is None else out + b


def _lrelu(x, slope):
    return np.where(x >= 0, x, slope * x)


def _conv_shape(cin, cout, k=3):
    return (k, k, cin, cout)


def rrdb_weight_shapes(cfg: RRDBConfig, scale: int) -> dict:
    """Name -> shape for every conv kernel (biases are ``(c_out,)``)."""
    nf, gc = cfg.features, cfg.growth
    shapes = {"conv_first": _conv_shape(3, nf)}
    for b in range(cfg.blocks):
        for d in range(3):
            for i in range(5):
                cout = gc if i < 4 else nf
                shapes[f"rrdb{b}.db{d}.conv{i}"] = _conv_shape(nf + i * gc, cout)
    shapes["trunk"] = _conv_shape(nf, nf)
    for u in range(_n_upsamples(scale)):
        shapes[f"up{u}"] = _conv_shape(nf, nf)
    shapes["conv_hr"] = _conv_shape(nf, nf)
    shapes["conv_last"] = _conv_shape(nf, 3)
    return shapes


def _n_upsamples(scale: int) -> int:
    if scale not in (2, 4):
        raise ValueError(f"scale must be 2 or 4, got {scale}")
    return int(math.log2(scale))


def init_rrdb_weights(seed: int, cfg: RRDBConfig = RRDBConfig(), scale: int = 4,
                      weight_range: float = 0.1) -> dict:
    """Seeded uniform weights in [-weight_range, weight_range], zero biases."""
    rng = XorShift64Star(derive_seed(seed, 0x2DB))
    weights = {}
    for name, shape in rrdb_weight_shapes(cfg, scale).items():
        weights[name] = rng.uniform_array(shape, -weight_range, weight_range)
        weights[name + ".bias"] = np.zeros(shape[-1])
    return weights


def zero_residual_branches(weights: dict, include_trunk: bool = False) -> dict:
    """Copy of ``weights`` with every dense-block conv (optionally the trunk) zeroed."""
    out = dict(weights)
    for name, v in weights.items():
        if name.startswith("rrdb") or (include_trunk and name.startswith("trunk")):
            out[name] = np.zeros_like(v)
    return out


def _check_weights(weights: dict, cfg: RRDBConfig, scale: int):
    for name, shape in rrdb_weight_shapes(cfg, scale).items():
        if name not in weights or name + ".bias" not in weights:
            raise ValueError(f"missing weight {name!r}")
        if weights[name].shape != shape or weights[name + ".bias"].shape != (shape[-1],):
            raise ValueError(f"weight {name!r} has shape {weights[name].shape}, expected {shape}")


def dense_block(x, weights: dict, prefix: str, cfg: RRDBConfig) -> np.ndarray:
    """Five densely connected convs; the last one is scaled by beta and added to x."""
    feats = [x]
    for i in range(5):
        y = conv2d(np.concatenate(feats, axis=-1), weights[f"{prefix}.conv{i}"],
                   weights[f"{prefix}.conv{i}.bias"])
        if i < 4:
            feats.append(_lrelu(y, cfg.slope))
    return x + cfg.beta * y


def rrdb_block(x, weights: dict, b: int, cfg: RRDBConfig) -> np.ndarray:
    y = x
    for d in range(3):
        y = dense_block(y, weights, f"rrdb{b}.db{d}", cfg)
    return x + cfg.beta * y


@dataclass
class RRDBOutput:
    image: np.ndarray
    shallow: np.ndarray = field(repr=False)
    body: np.ndarray = field(repr=False)       # pre-upsample features (after global skip)


def rrdb_forward(img_lowres, weights: dict, scale: int = 4, cfg: RRDBConfig = RRDBConfig(),
                 return_features: bool = False):
    """Super-resolve ``img_lowres`` by ``scale``; output is clamped to [0, 1].

    With ``return_features`` an :class:`RRDBOutput` also carries the shallow
    features and the pre-upsample features.
    """
    x = check_image(img_lowres)
    _check_weights(weights, cfg, scale)
    shallow = conv2d(x, weights["conv_first"], weights["conv_first.bias"])
    y = shallow
    for b in range(cfg.blocks):
        y = rrdb_block(y, weights, b, cfg)
    body = shallow + conv2d(y, weights["trunk"], weights["trunk.bias"])
    y = body
    for u in range(_n_upsamples(scale)):
        y = _lrelu(conv2d(upsample_nearest(y), weights[f"up{u}"], weights[f"up{u}.bias"]), cfg.slope)
    y = _lrelu(conv2d(y, weights["conv_hr"], weights["conv_hr.bias"]), cfg.slope)
    out = clamp01(conv2d(y, weights["conv_last"], weights["conv_last.bias"]))
    return RRDBOutput(out, shallow, body) if return_features else out


@dataclass(frozen=True)
class EnhanceConfig:
    """``mode`` is ``"identity"`` or ``"rrdb"``; the generator uses seeded weights."""

    mode: str = "identity"
    scale: int = 4
    seed: int = 0
    rrdb: RRDBConfig = RRDBConfig()

    def __post_init__(self):
        if self.mode not in ("identity", "rrdb"):
            raise ValueError(f"enhance mode must be 'identity' or 'rrdb', got {self.mode!r}")
        if self.mode == "rrdb":
            _n_upsamples(self.scale)

    @property
    def factor(self) -> int:
        return 1 if self.mode == "identity" else self.scale


def enhance(img, config: EnhanceConfig = EnhanceConfig(), weights: dict | None = None) -> np.ndarray:
    x = check_image(img)
    if config.mode == "identity":
        return x
    w = weights if weights is not None else init_rrdb_weights(config.seed, config.rrdb, config.scale)
    return rrdb_forward(x, w, config.scale, config.rrdb)


def enhance_with_annotations(img, annotations, config: EnhanceConfig = EnhanceConfig(),
                             weights: dict | None = None):
    """Enhance an image and scale its pixel annotations by the same factor.

    ``annotations`` must provide ``scaled(factor)`` (as AnnotationSet does).
    """
    out = enhance(img, config, weights)
    return out, annotations.scaled(config.factor)
