"""IDX-format image/label ingestion, normalization, and stratified
small-subset sampling for the data-scarcity sweeps.

The IDX container is the standard big-endian MNIST layout: images carry
magic 0x00000803 followed by count/rows/cols as 32-bit words and raw pixel
bytes; labels carry magic 0x00000801, a count word, and label bytes. Pixels
map to [0, 1] by /255. Serializers are provided for round-trip testing and
for writing synthetic corpora in the same container.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IdxFormatError, IdxTruncationError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, H, W) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ConfigurationError(
                f"{len(self.images)} images vs {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def class_ids(self) -> np.ndarray:
        return np.unique(self.labels)


def _read_words(data: bytes, count: int, offset: int) -> tuple[tuple[int, ...], int]:
    end = offset + 4 * count
    if len(data) < end:
        raise IdxTruncationError("header ends early", len(data))
    return struct.unpack(f">{count}I", data[offset:end]), end


def parse_idx_images(data: bytes) -> np.ndarray:
    """Decode an IDX image stream into an (N, rows, cols) float64 array
    with pixels scaled to [0, 1]."""
    (magic,), offset = _read_words(data, 1, 0)
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(
            f"image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"
        )
    (count, rows, cols), offset = _read_words(data, 3, offset)
    expected = offset + count * rows * cols
    if len(data) < expected:
        raise IdxTruncationError(
            f"pixel payload for {count} {rows}x{cols} images ends early",
            len(data),
        )
    pixels = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols,
                           offset=offset)
    return pixels.reshape(count, rows, cols).astype(np.float64) / 255.0


def parse_idx_labels(data: bytes) -> np.ndarray:
    (magic, count), offset = _read_words(data, 2, 0)
    if magic != LABEL_MAGIC:
        raise IdxFormatError(
            f"label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}"
        )
    if len(data) < offset + count:
        raise IdxTruncationError(
            f"label payload for {count} labels ends early", len(data)
        )
    return np.frombuffer(data, dtype=np.uint8, count=count,
                         offset=offset).astype(np.int64)


def serialize_idx_images(images: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx_images`; pixels re-quantized by *255."""
    arr = np.asarray(images)
    n, rows, cols = arr.shape
    header = struct.pack(">4I", IMAGE_MAGIC, n, rows, cols)
    pixels = np.rint(arr * 255.0).clip(0, 255).astype(np.uint8)
    return header + pixels.tobytes()


def serialize_idx_labels(labels: np.ndarray) -> bytes:
    arr = np.asarray(labels)
    header = struct.pack(">2I", LABEL_MAGIC, len(arr))
    return header + arr.astype(np.uint8).tobytes()


def load_dataset(images_path, labels_path) -> Dataset:
    images_path, labels_path = Path(images_path), Path(labels_path)
    for p in (images_path, labels_path):
        if not p.exists():
            raise FileNotFoundError(f"data file not found: {p}")
    images = parse_idx_images(images_path.read_bytes())
    labels = parse_idx_labels(labels_path.read_bytes())
    return Dataset(images=images, labels=labels)


def stratified_subset(ds: Dataset, per_class: int, seed: int) -> Dataset:
    """Exactly ``per_class`` samples per class, without replacement,
    deterministic per seed. Order is by class, then draw order."""
    if per_class < 1:
        raise ConfigurationError(f"per_class must be >= 1, got {per_class}")
    rng = np.random.default_rng(seed)
    picks = []
    for cls in ds.class_ids:
        pool = np.flatnonzero(ds.labels == cls)
        if len(pool) < per_class:
            raise ConfigurationError(
                f"class {cls} has only {len(pool)} samples, need {per_class}"
            )
        picks.append(rng.choice(pool, size=per_class, replace=False))
    idx = np.concatenate(picks)
    return Dataset(images=ds.images[idx], labels=ds.labels[idx])


def batches(ds: Dataset, batch_size: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """One shuffled pass over the dataset; the final short batch is kept."""
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed).permutation(len(ds))
    out = []
    for start in range(0, len(ds), batch_size):
        chunk = order[start:start + batch_size]
        out.append((ds.images[chunk], ds.labels[chunk]))
    return out
