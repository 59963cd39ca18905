"""Flat binary tensor files used for checkpoints and corpus images.

Layout: 8-byte magic, u32 rank, u32 per-axis extents, then the row-major
float64 payload. All integers and floats are little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"GEOVQAT1"


def save_tensor(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f8").tobytes())


def load_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise DataError(f"{path}: bad tensor magic")
    (rank,) = struct.unpack_from("<I", raw, 8)
    shape = struct.unpack_from(f"<{rank}I", raw, 12)
    payload = raw[12 + 4 * rank:]
    expect = 8 * int(np.prod(shape)) if rank else 8
    if len(payload) != expect:
        raise DataError(f"{path}: payload size {len(payload)} does not match shape {shape}")
    return np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
