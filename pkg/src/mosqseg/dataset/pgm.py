"""Binary 8-bit PGM (P5) read/write for raster grids."""

from __future__ import annotations

import re

import numpy as np

_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def to_pgm_bytes(grid) -> bytes:
    arr = np.asarray(grid)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + arr.tobytes()


def from_pgm_bytes(data: bytes) -> np.ndarray:
    m = _HEADER.match(data)
    if not m:
        raise ValueError("not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval > 255:
        raise ValueError(f"only 8-bit PGM is supported, maxval={maxval}")
    body = data[m.end(): m.end() + w * h]
    if len(body) != w * h:
        raise ValueError(f"PGM truncated: expected {w * h} bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, grid) -> None:
    with open(path, "wb") as f:
        f.write(to_pgm_bytes(grid))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return from_pgm_bytes(f.read())
