"""Uncompressed run-length encoding for binary masks.

Runs alternate 0-runs and 1-runs over the row-major flattening and always
start with the number of leading zeros (which may be 0), so each mask has
exactly one encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mosqseg.geometry import BitMask


class RleError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class RleMask:
    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(int(r) for r in self.runs))
        if self.width < 1 or self.height < 1:
            raise RleError(f"RLE dims must be >= 1, got {self.width}x{self.height}")
        if any(r < 0 for r in self.runs):
            raise RleError("RLE runs must be non-negative")
        if any(r == 0 for r in self.runs[1:]):
            raise RleError("RLE has a zero-length run after the leading one")
        total = sum(self.runs)
        if total != self.width * self.height:
            raise RleError(f"RLE runs sum to {total}, expected {self.width * self.height}")

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "runs": list(self.runs)}


def encode_rle(mask: BitMask) -> RleMask:
    flat = mask.bits.ravel()
    # indices where the value changes, bracketed by the ends
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(mask.width, mask.height, tuple(runs))


def decode_rle(r: RleMask) -> BitMask:
    values = np.arange(len(r.runs)) % 2 == 1
    flat = np.repeat(values, r.runs)
    return BitMask.from_flat(r.width, r.height, flat)
