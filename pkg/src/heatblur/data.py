"""Datasets: in-memory container, a simple on-disk format, and synthetic shape images.

The on-disk layout is a directory with an ``index.csv`` of
``relative-path,label`` lines, the referenced PNG/PPM files, and an optional
``classes.txt`` naming one class per line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imageio import load_image, save_image

__all__ = [
    "Dataset",
    "DatasetError",
    "generate_synthetic_dataset",
    "load_dataset",
    "save_dataset",
    "split_dataset",
]


class DatasetError(Exception):
    """A dataset directory could not be loaded; the message names the entry."""


@dataclass
class Dataset:
    """Images of one shared shape with integer labels and class names."""

    images: np.ndarray
    labels: np.ndarray
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must have shape (n, height, width, channels), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match {self.images.shape[0]} images"
            )
        if not self.class_names:
            count = int(self.labels.max()) + 1 if len(self.labels) else 0
            self.class_names = [f"class_{i}" for i in range(count)]
        self.class_names = [str(name) for name in self.class_names]
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError(f"labels must lie in [0, {len(self.class_names)}), got range "
                             f"[{self.labels.min()}, {self.labels.max()}]")
        if len(self.labels) and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("image pixels must lie in [0, 1]")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], list(self.class_names))


def split_dataset(dataset: Dataset, train_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Deterministic shuffled split into (train, held-out) parts."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in [0, 1], got {train_fraction}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    cut = int(round(train_fraction * len(dataset)))
    return dataset.subset(order[:cut]), dataset.subset(order[cut:])


# --- synthetic shapes -------------------------------------------------------

_BACKGROUND = 0.3
_FOREGROUND = 0.75


def _draw_hbar(canvas, rng):
    side = canvas.shape[0]
    thickness = max(2, side // 5)
    y0 = rng.integers(1, side - thickness - 1)
    margin = rng.integers(1, max(2, side // 8))
    canvas[y0 : y0 + thickness, margin : side - margin] = _FOREGROUND


def _draw_vbar(canvas, rng):
    side = canvas.shape[0]
    thickness = max(2, side // 5)
    x0 = rng.integers(1, side - thickness - 1)
    margin = rng.integers(1, max(2, side // 8))
    canvas[margin : side - margin, x0 : x0 + thickness] = _FOREGROUND


def _draw_cross(canvas, rng):
    side = canvas.shape[0]
    thickness = max(2, side // 6)
    y0 = rng.integers(side // 4, 3 * side // 4 - thickness + 1)
    x0 = rng.integers(side // 4, 3 * side // 4 - thickness + 1)
    margin = rng.integers(1, max(2, side // 8))
    canvas[y0 : y0 + thickness, margin : side - margin] = _FOREGROUND
    canvas[margin : side - margin, x0 : x0 + thickness] = _FOREGROUND


def _draw_disc(canvas, rng):
    side = canvas.shape[0]
    cy = side / 2 + rng.uniform(-side / 6, side / 6)
    cx = side / 2 + rng.uniform(-side / 6, side / 6)
    radius = side / 4.5 * rng.uniform(0.85, 1.15)
    yy, xx = np.ogrid[:side, :side]
    canvas[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2] = _FOREGROUND


def _draw_ring(canvas, rng):
    side = canvas.shape[0]
    cy = side / 2 + rng.uniform(-side / 8, side / 8)
    cx = side / 2 + rng.uniform(-side / 8, side / 8)
    outer = side / 3.2 * rng.uniform(0.9, 1.1)
    inner = outer * 0.55
    yy, xx = np.ogrid[:side, :side]
    dist2 = (yy - cy) ** 2 + (xx - cx) ** 2
    canvas[(dist2 <= outer**2) & (dist2 >= inner**2)] = _FOREGROUND


def _draw_diagonal(canvas, rng):
    side = canvas.shape[0]
    halfwidth = max(1, side // 10)
    offset = rng.integers(-side // 4, side // 4 + 1)
    yy, xx = np.ogrid[:side, :side]
    canvas[np.abs((yy - xx) - offset) <= halfwidth] = _FOREGROUND


_SHAPES = [
    ("hbar", _draw_hbar),
    ("vbar", _draw_vbar),
    ("cross", _draw_cross),
    ("disc", _draw_disc),
    ("ring", _draw_ring),
    ("diagonal", _draw_diagonal),
]


def generate_synthetic_dataset(
    classes: int = 3,
    size: int = 600,
    side: int = 16,
    seed: int = 0,
    noise: float = 0.08,
) -> Dataset:
    """Grayscale images of per-class geometric shapes with additive noise.

    Deterministic for a fixed seed.  Labels are balanced: class i receives
    every (i mod classes)-th slot, so a size divisible by the class count
    yields exactly equal groups.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if classes > len(_SHAPES):
        raise ValueError(f"at most {len(_SHAPES)} shape classes are available, got {classes}")
    if size < 1:
        raise ValueError(f"dataset size must be >= 1, got {size}")
    if side < 8:
        raise ValueError(f"image side must be >= 8, got {side}")
    rng = np.random.default_rng(seed)
    labels = np.array([i % classes for i in range(size)], dtype=np.int64)
    images = np.zeros((size, side, side, 1))
    for i, label in enumerate(labels):
        canvas = np.full((side, side), _BACKGROUND)
        _SHAPES[label][1](canvas, rng)
        canvas += rng.normal(0.0, noise, canvas.shape)
        images[i, :, :, 0] = np.clip(canvas, 0.0, 1.0)
    return Dataset(images, labels, [name for name, _ in _SHAPES[:classes]])


# --- on-disk format ---------------------------------------------------------


def load_dataset(path) -> Dataset:
    """Load a dataset directory in the order listed by its index file."""
    root = Path(path)
    index = root / "index.csv"
    if not index.is_file():
        raise DatasetError(f"missing index file: {index}")

    class_names = []
    classes_file = root / "classes.txt"
    if classes_file.is_file():
        class_names = [line.strip() for line in classes_file.read_text(encoding="utf-8").splitlines()
                       if line.strip()]

    images = []
    labels = []
    for lineno, line in enumerate(index.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        rel, sep, label_text = line.rpartition(",")
        if not sep or not rel:
            raise DatasetError(f"{index}:{lineno}: expected 'relative-path,label', got {line!r}")
        try:
            label = int(label_text)
        except ValueError as exc:
            raise DatasetError(f"{index}:{lineno}: label {label_text!r} is not an integer") from exc
        file = root / rel
        if not file.is_file():
            raise DatasetError(f"{index}:{lineno}: missing image file {rel!r}")
        try:
            image = load_image(file)
        except (OSError, ValueError) as exc:
            raise DatasetError(f"{index}:{lineno}: cannot load {rel!r}: {exc}") from exc
        if images and image.shape != images[0].shape:
            raise DatasetError(
                f"{index}:{lineno}: image {rel!r} has shape {image.shape}, expected {images[0].shape}"
            )
        images.append(image)
        labels.append(label)

    if not images:
        raise DatasetError(f"{index}: no entries")
    count = max(labels) + 1
    if class_names and count > len(class_names):
        raise DatasetError(
            f"{index}: label {count - 1} out of range for {len(class_names)} classes in classes.txt"
        )
    if labels and min(labels) < 0:
        raise DatasetError(f"{index}: negative label {min(labels)}")
    return Dataset(np.stack(images), np.array(labels), class_names)


def save_dataset(dataset: Dataset, path) -> Path:
    """Write PNG files plus index.csv and classes.txt."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(len(dataset)):
        name = f"img_{i:05d}.png"
        save_image(dataset.images[i], root / name)
        lines.append(f"{name},{int(dataset.labels[i])}")
    (root / "index.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (root / "classes.txt").write_text("\n".join(dataset.class_names) + "\n", encoding="utf-8")
    return root
