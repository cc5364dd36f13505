"""Versioned binary persistence for model parameters.

Layout: 4-byte magic, little-endian uint32 format version, uint32 length of a
UTF-8 JSON descriptor (model kind, architecture metadata, per-array shapes),
then each parameter tensor as raw little-endian float64 in C order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RSTM"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def save_arrays(path, kind: str, meta: dict, arrays):
    arrays = [np.asarray(a, dtype="<f8", order="C") for a in arrays]
    descriptor = {
        "kind": kind,
        "meta": meta,
        "shapes": [list(a.shape) for a in arrays],
    }
    blob = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for a in arrays:
            f.write(a.tobytes())


def load_arrays(path, kind: str):
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ModelFormatError(f"bad magic {magic!r} in {path}")
        version, blob_len = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ModelFormatError(f"unsupported format version {version}")
        descriptor = json.loads(f.read(blob_len).decode("utf-8"))
        if descriptor.get("kind") != kind:
            raise ModelFormatError(
                f"expected a {kind!r} file, found {descriptor.get('kind')!r}"
            )
        arrays = []
        for shape in descriptor["shapes"]:
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise ModelFormatError("truncated parameter payload")
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
        if f.read(1):
            raise ModelFormatError("trailing bytes after parameter payload")
    return descriptor["meta"], arrays
