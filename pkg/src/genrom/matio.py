"""Binary array container used for on-disk model artifacts.

Layout (little-endian throughout):

    bytes 0..7    magic b"GRMAT\\x00\\x01\\x00"
    bytes 8..11   uint32 rank
    then rank *   uint64 dimension sizes
    then          float64 payload, C order

A sidecar-free single-array format keeps artifact directories portable and
diffable at the byte level, which the deterministic-report contract relies on.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GRMAT\x00\x01\x00"


def _canonical(array) -> np.ndarray:
    # ascontiguousarray promotes 0-d to 1-d, so guard the scalar case
    a = np.asarray(array, dtype=np.float64)
    return np.ascontiguousarray(a) if a.ndim else a


def save_array(path: str | Path, array: np.ndarray) -> None:
    """Write a float64 array to ``path`` in the container format."""
    a = _canonical(array)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.tobytes(order="C"))


def load_array(path: str | Path) -> np.ndarray:
    """Read an array written by :func:`save_array`."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head != MAGIC:
            raise ValueError(f"{path}: not a genrom array file (bad magic)")
        (rank,) = struct.unpack("<I", fh.read(4))
        if rank > 32:
            raise ValueError(f"{path}: implausible rank {rank}")
        shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
        count = int(np.prod(shape)) if rank else 1
        payload = fh.read(8 * count)
        if len(payload) != 8 * count:
            raise ValueError(f"{path}: truncated payload")
        return np.frombuffer(payload, dtype="<f8").reshape(shape).copy()


def array_hash(array: np.ndarray) -> str:
    """Content hash of an array, independent of memory layout."""
    a = _canonical(array)
    h = hashlib.sha256()
    h.update(str(a.shape).encode())
    h.update(a.tobytes(order="C"))
    return h.hexdigest()
