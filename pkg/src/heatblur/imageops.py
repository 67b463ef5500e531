"""Image and kernel primitives shared by the attack, defense, and evaluation code.

Images are float64 numpy arrays of shape (height, width, channels) with
channels 1 (grayscale) or 3 (RGB) and pixel values in [0, 1].
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "validate_image",
    "gaussian_kernel",
    "gaussian_blur",
    "distance",
    "clip_image",
]


def validate_image(image) -> np.ndarray:
    """Coerce to float64 and check the (height, width, channels) image contract."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"image must have shape (height, width, channels), got {arr.shape}")
    if arr.shape[2] not in (1, 3):
        raise ValueError(f"image must have 1 or 3 channels, got {arr.shape[2]}")
    if arr.size == 0:
        raise ValueError("image must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image pixels must lie in [0, 1]")
    return arr


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps exp(-d^2 / (2 sigma^2)) for offsets |d| <= ceil(3 sigma)."""
    if not np.isfinite(sigma) or sigma <= 0:
        raise ValueError(f"sigma must be a positive finite number, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _convolve_axis(arr: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    if n == 1:
        # A singleton axis reflects onto itself; convolution is the identity.
        return arr.copy()
    radius = len(taps) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="reflect")
    out = np.zeros_like(arr)
    window = [slice(None)] * arr.ndim
    for i, tap in enumerate(taps):
        window[axis] = slice(i, i + n)
        out += tap * padded[tuple(window)]
    return out


def gaussian_blur(image, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflected borders; sigma <= 0 returns a copy.

    The output is clipped to [0, 1] to absorb rounding fuzz from kernel
    normalization; a blur is a convex combination of in-range pixels, so the
    clip never moves a value by more than a few ulp.
    """
    image = validate_image(image)
    if sigma <= 0:
        return image.copy()
    taps = gaussian_kernel(sigma)
    out = _convolve_axis(image, taps, axis=0)
    out = _convolve_axis(out, taps, axis=1)
    return np.clip(out, 0.0, 1.0)


def distance(a, b, norm: str = "linf") -> float:
    """L-infinity or L2 distance between two equally shaped arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = (a - b).ravel()
    if norm == "linf":
        return float(np.max(np.abs(diff)))
    if norm == "l2":
        return float(np.linalg.norm(diff))
    raise ValueError(f"unknown norm {norm!r}, expected 'linf' or 'l2'")


def clip_image(image, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Clamp every pixel into [lo, hi]."""
    if lo > hi:
        raise ValueError(f"invalid clip range: lo={lo} > hi={hi}")
    return np.clip(np.asarray(image, dtype=np.float64), lo, hi)
