"""IDX file codec (the MNIST distribution format).

Big-endian headers: magic 0x00000803 for 3-D uint8 image files and
0x00000801 for 1-D uint8 label files. Files ending in ``.gz`` are
(de)compressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise IdxFormatError(f"truncated file: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def read_idx_images(path) -> np.ndarray:
    """Read an IDX image file into a (N, H, W) uint8 array."""
    with _open(path, "rb") as f:
        magic, n, h, w = struct.unpack(">iiii", _read_exact(f, 16, "header"))
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
        data = _read_exact(f, n * h * w, "pixel payload")
        if f.read(1):
            raise IdxFormatError("trailing bytes after pixel payload")
    return np.frombuffer(data, dtype=np.uint8).reshape(n, h, w)


def read_idx_labels(path) -> np.ndarray:
    """Read an IDX label file into a (N,) uint8 array."""
    with _open(path, "rb") as f:
        magic, n = struct.unpack(">ii", _read_exact(f, 8, "header"))
        if magic != LABEL_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
        data = _read_exact(f, n, "label payload")
        if f.read(1):
            raise IdxFormatError("trailing bytes after label payload")
    return np.frombuffer(data, dtype=np.uint8)


def write_idx_images(path, images: np.ndarray):
    images = np.asarray(images)
    if images.ndim != 3:
        raise IdxFormatError(f"expected (N, H, W) images, got shape {images.shape}")
    if images.dtype != np.uint8:
        raise IdxFormatError("images must be uint8; quantize before writing")
    with _open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise IdxFormatError(f"expected 1-D labels, got shape {labels.shape}")
    if labels.dtype != np.uint8:
        if labels.min() < 0 or labels.max() > 255:
            raise IdxFormatError("labels outside uint8 range")
        labels = labels.astype(np.uint8)
    with _open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())
