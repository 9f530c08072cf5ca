"""Image tensor helpers shared by the degradation, enhancement and augmentation code.

Images are ``(height, width, 3)`` float64 arrays with values in [0, 1].
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage


def check_image(img) -> np.ndarray:
    """Validate an image tensor and return it as float64."""
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"image must have shape (h, w, 3), got {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"image has empty dimensions {x.shape[:2]}")
    if not np.isfinite(x).all():
        raise ValueError("image has non-finite values")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("image values outside [0, 1]")
    return x


def clamp01(x) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def to_uint8(img) -> np.ndarray:
    return np.round(clamp01(img) * 255.0).astype(np.uint8)


def from_uint8(arr) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64) / 255.0


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Per-channel Gaussian blur (edge pixels replicated); sigma 0 is a no-op."""
    if sigma < 0:
        raise ValueError(f"blur sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img
    return ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="nearest")


def box_downsample(img, factor: int) -> np.ndarray:
    """Average non-overlapping ``factor x factor`` blocks (trailing rows/cols dropped)."""
    h, w, c = img.shape
    if factor < 1:
        raise ValueError(f"downsample factor must be >= 1, got {factor}")
    if factor > h or factor > w:
        raise ValueError(f"downsample factor {factor} larger than image {w}x{h}")
    if factor == 1:
        return img
    hh, ww = h // factor, w // factor
    return img[: hh * factor, : ww * factor].reshape(hh, factor, ww, factor, c).mean(axis=(1, 3))


def resize_bilinear(img, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize with pixel-centre alignment (half-pixel offsets, edges clamped)."""
    h, w, c = img.shape
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target size must be positive, got {new_w}x{new_h}")
    ys = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    xs = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([ndimage.map_coordinates(img[..., k], [yy, xx], order=1, mode="nearest")
                     for k in range(c)], axis=-1)


def upsample_nearest(x, factor: int = 2) -> np.ndarray:
    return np.repeat(np.repeat(x, factor, axis=0), factor, axis=1)
