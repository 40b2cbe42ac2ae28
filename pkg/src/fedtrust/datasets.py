"""Dataset ingestion: IDX binary files and a synthetic fallback.

The IDX reader parses the classic big-endian image/label format
byte-exactly; the synthetic generator produces Gaussian class-blob
images so every experiment can run offline with the same shapes.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

DATA_DIR_ENV = "FEDTRUST_DATA_DIR"

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxParseError(ValueError):
    """IDX format violation, pointing at the offending byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class Dataset:
    """Flattened examples in [0, 1] with integer labels."""

    X: np.ndarray
    y: np.ndarray
    image_shape: Tuple[int, int]

    def __post_init__(self):
        if len(self.X) != len(self.y):
            raise ValueError("example/label count mismatch")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if len(self.y) else 0


def resolve_data_path(path) -> Path:
    """Resolve a dataset path, searching FEDTRUST_DATA_DIR for relative names."""
    p = Path(path)
    if p.is_absolute():
        return p
    base = os.environ.get(DATA_DIR_ENV)
    return Path(base) / p if base else p


def _read_exact(fh, count: int, what: str, offset: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise IdxParseError(f"truncated file while reading {what}", offset + len(data))
    return data


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair into a flattened dataset.

    Pixels are scaled to [0, 1]. Raises IdxParseError on a wrong magic
    number, a truncated file, or an image/label count mismatch.
    """
    images_path = resolve_data_path(images_path)
    labels_path = resolve_data_path(labels_path)

    with open(images_path, "rb") as fh:
        header = _read_exact(fh, 16, "image header", 0)
        magic, n_images, n_rows, n_cols = struct.unpack(">IIII", header)
        if magic != IMAGES_MAGIC:
            raise IdxParseError(
                f"bad image magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}", 0
            )
        pixel_count = n_images * n_rows * n_cols
        pixels = _read_exact(fh, pixel_count, "pixel data", 16)

    with open(labels_path, "rb") as fh:
        header = _read_exact(fh, 8, "label header", 0)
        magic, n_labels = struct.unpack(">II", header)
        if magic != LABELS_MAGIC:
            raise IdxParseError(
                f"bad label magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}", 0
            )
        labels = _read_exact(fh, n_labels, "label data", 8)

    if n_images != n_labels:
        raise IdxParseError(
            f"image count {n_images} does not match label count {n_labels}", 4
        )

    X = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64) / 255.0
    X = X.reshape(n_images, n_rows * n_cols)
    y = np.frombuffer(labels, dtype=np.uint8).astype(np.int64)
    return Dataset(X=X, y=y, image_shape=(n_rows, n_cols))


def synth_dataset(
    n_samples: int,
    n_classes: int = 10,
    seed: Optional[int] = 0,
    noise: float = 0.25,
    image_side: int = 28,
    rng: Optional[np.random.Generator] = None,
) -> Dataset:
    """Generate Gaussian class-blob images, balanced across classes.

    Each class lights up a bright disk at a class-specific grid position;
    at low noise the classes are linearly separable. Class sizes are
    balanced to within one example.
    """
    if n_samples < n_classes:
        raise ValueError(f"need at least {n_classes} samples, got {n_samples}")
    rng = rng or np.random.default_rng(seed)

    # class templates: one disk per class on a coarse grid
    grid = int(np.ceil(np.sqrt(n_classes)))
    cell = image_side / grid
    radius = max(cell / 3.0, 1.0)
    rows, cols = np.mgrid[0:image_side, 0:image_side]
    templates = np.zeros((n_classes, image_side, image_side))
    for c in range(n_classes):
        cy = (c // grid + 0.5) * cell
        cx = (c % grid + 0.5) * cell
        templates[c] = ((rows - cy) ** 2 + (cols - cx) ** 2 <= radius**2).astype(float)

    labels = np.arange(n_samples) % n_classes
    rng.shuffle(labels)
    X = templates[labels].reshape(n_samples, -1)
    X = np.clip(X + rng.normal(scale=noise, size=X.shape), 0.0, 1.0)
    return Dataset(X=X, y=labels.astype(np.int64), image_shape=(image_side, image_side))
