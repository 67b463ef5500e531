"""8-bit image I/O (PNG and binary PPM, via Pillow) and heatmap rendering."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .imageops import validate_image

__all__ = ["load_image", "save_image", "export_heatmap_png"]

_ACCEPTED_FORMATS = ("PNG", "PPM")


def load_image(path) -> np.ndarray:
    """Decode an 8-bit grayscale/RGB PNG or a binary PPM into a [0, 1] float image."""
    path = Path(path)
    with PILImage.open(path) as im:
        if im.format not in _ACCEPTED_FORMATS:
            raise ValueError(f"unsupported image format {im.format!r} for {path} (PNG or PPM expected)")
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)[:, :, None]
        elif im.mode == "RGB":
            arr = np.asarray(im, dtype=np.float64)
        else:
            raise ValueError(f"unsupported image mode {im.mode!r} for {path} (8-bit gray or RGB expected)")
    return arr / 255.0


def save_image(image, path) -> Path:
    """Write a [0, 1] float image as an 8-bit grayscale or RGB PNG."""
    image = validate_image(image)
    arr = np.round(image * 255.0).astype(np.uint8)
    if image.shape[2] == 1:
        pil = PILImage.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(arr, mode="RGB")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        pil.save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"failed writing image {path}: {exc}") from exc
    return path


def _to_gray_levels(values: np.ndarray) -> np.ndarray:
    """Min-max normalize a real map to uint8; a constant map renders mid-gray."""
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        return np.full(values.shape, 128, dtype=np.uint8)
    scaled = (values - lo) / (hi - lo)
    return np.round(scaled * 255.0).astype(np.uint8)


def export_heatmap_png(source, path, overlay=None, alpha: float = 0.5) -> Path:
    """Render a relevance map (or boolean mask) as an 8-bit PNG.

    Real-valued maps are min-max normalized to grayscale; boolean masks map
    to black/white.  With ``overlay`` the rendered map is alpha-blended onto
    that image and written as RGB.
    """
    values = getattr(source, "values", source)
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"heatmap must be 2-D, got shape {values.shape}")
    if values.dtype == bool:
        gray = np.where(values, 255, 0).astype(np.uint8)
    else:
        if not np.all(np.isfinite(values)):
            raise ValueError("heatmap contains non-finite values")
        gray = _to_gray_levels(values.astype(np.float64))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        if overlay is None:
            PILImage.fromarray(gray, mode="L").save(path, format="PNG")
        else:
            base = validate_image(overlay)
            if base.shape[:2] != values.shape:
                raise ValueError(f"overlay shape {base.shape[:2]} does not match heatmap {values.shape}")
            if base.shape[2] == 1:
                base = np.repeat(base, 3, axis=2)
            heat = (gray.astype(np.float64) / 255.0)[:, :, None]
            blended = (1.0 - alpha) * base + alpha * heat
            PILImage.fromarray(np.round(blended * 255.0).astype(np.uint8), mode="RGB").save(
                path, format="PNG"
            )
    except OSError as exc:
        raise OSError(f"failed writing heatmap {path}: {exc}") from exc
    return path
