"""Boxes, polygons and bit-masks, plus the IoU functions built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid geometric values or incomparable operands."""


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box stored as top-left corner plus real-valued size."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise GeometryError(f"non-finite box {self}")
        if self.w <= 0 or self.h <= 0:
            raise GeometryError(f"box needs positive width and height, got {self}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def to_polygon(self) -> Polygon:
        return Polygon(((self.x, self.y), (self.x2, self.y), (self.x2, self.y2), (self.x, self.y2)))


@dataclass(frozen=True, slots=True)
class GridDims:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise GeometryError(f"grid dims must be integers, got {self.width}x{self.height}")
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"grid dims must be >= 1, got {self.width}x{self.height}")


def _shoelace(vertices: Sequence[tuple[float, float]]) -> float:
    xs = np.asarray([v[0] for v in vertices], dtype=float)
    ys = np.asarray([v[1] for v in vertices], dtype=float)
    return 0.5 * float(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1)))


@dataclass(frozen=True, slots=True)
class Polygon:
    """Closed polygon given by its ordered vertices (the closing edge is implicit)."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise GeometryError(f"polygon needs >= 3 vertices, got {len(verts)}")
        if not all(math.isfinite(c) for v in verts for c in v):
            raise GeometryError("polygon has non-finite vertices")
        if _shoelace(verts) == 0.0:
            raise GeometryError("polygon has zero area")

    @property
    def xs(self) -> np.ndarray:
        return np.array([v[0] for v in self.vertices])

    @property
    def ys(self) -> np.ndarray:
        return np.array([v[1] for v in self.vertices])

    def bounds(self) -> BoundingBox:
        """Tight real-valued box around the vertices."""
        xs, ys = self.xs, self.ys
        return BoundingBox(float(xs.min()), float(ys.min()), float(xs.max() - xs.min()), float(ys.max() - ys.min()))


class BitMask:
    """Immutable boolean raster of shape (height, width), row-major.

    Pixel ``(i, j)`` is column ``i``, row ``j``; its center sits at
    ``(i + 0.5, j + 0.5)``.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.array(bits, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise GeometryError(f"bit mask must be a non-empty 2-D grid, got shape {arr.shape}")
        arr.setflags(write=False)
        self._bits = arr

    @classmethod
    def zeros(cls, dims: GridDims) -> BitMask:
        return cls(np.zeros((dims.height, dims.width), dtype=bool))

    @classmethod
    def from_flat(cls, width: int, height: int, flat) -> BitMask:
        flat = np.asarray(flat, dtype=bool)
        if flat.size != width * height:
            raise GeometryError(f"expected {width * height} bits, got {flat.size}")
        return cls(flat.reshape(height, width))

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def width(self) -> int:
        return self._bits.shape[1]

    @property
    def height(self) -> int:
        return self._bits.shape[0]

    @property
    def dims(self) -> GridDims:
        return GridDims(self.width, self.height)

    def count(self) -> int:
        return int(self._bits.sum())

    def __eq__(self, other):
        if not isinstance(other, BitMask):
            return NotImplemented
        return self._bits.shape == other._bits.shape and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self):
        return hash((self._bits.shape, self._bits.tobytes()))

    def __repr__(self):
        return f"BitMask({self.width}x{self.height}, set={self.count()})"


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def box_iou_matrix(a: Sequence[BoundingBox], b: Sequence[BoundingBox]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(a), len(b))``; same arithmetic as :func:`box_iou`."""
    if not a or not b:
        return np.zeros((len(a), len(b)))
    pa = np.array([[bx.x, bx.y, bx.x2, bx.y2] for bx in a])
    pb = np.array([[bx.x, bx.y, bx.x2, bx.y2] for bx in b])
    iw = np.minimum(pa[:, None, 2], pb[None, :, 2]) - np.maximum(pa[:, None, 0], pb[None, :, 0])
    ih = np.minimum(pa[:, None, 3], pb[None, :, 3]) - np.maximum(pa[:, None, 1], pb[None, :, 1])
    overlap = (iw > 0) & (ih > 0)
    inter = np.where(overlap, iw * ih, 0.0)
    area_a = np.array([bx.area for bx in a])
    area_b = np.array([bx.area for bx in b])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(overlap, inter / union, 0.0)


def polygon_area(poly: Polygon) -> float:
    return abs(_shoelace(poly.vertices))


def rasterize_polygon(poly: Polygon, grid: GridDims) -> BitMask:
    """Even-odd rasterization sampled at pixel centers.

    A pixel is set when a ray cast to +x from its center crosses the
    polygon boundary an odd number of times. Edges use the half-open rule
    ``min(y0, y1) <= yc < max(y0, y1)`` so shared vertices count once.
    """
    out = np.zeros((grid.height, grid.width), dtype=bool)
    xs, ys = poly.xs, poly.ys
    # only rows/cols whose centers can fall inside the vertex extent
    c0 = max(0, int(math.floor(xs.min() - 0.5)))
    c1 = min(grid.width, int(math.ceil(xs.max() + 0.5)))
    r0 = max(0, int(math.floor(ys.min() - 0.5)))
    r1 = min(grid.height, int(math.ceil(ys.max() + 0.5)))
    if c0 >= c1 or r0 >= r1:
        return BitMask(out)

    cx = np.arange(c0, c1) + 0.5
    cy = np.arange(r0, r1) + 0.5
    inside = np.zeros((r1 - r0, c1 - c0), dtype=bool)
    x_next, y_next = np.roll(xs, -1), np.roll(ys, -1)
    for x0, y0, x1, y1 in zip(xs, ys, x_next, y_next):
        if y0 == y1:
            continue
        spans = ((y0 <= cy) & (cy < y1)) | ((y1 <= cy) & (cy < y0))
        if not spans.any():
            continue
        x_cross = x0 + (cy - y0) * (x1 - x0) / (y1 - y0)
        inside ^= spans[:, None] & (cx[None, :] < x_cross[:, None])
    out[r0:r1, c0:c1] = inside
    return BitMask(out)


def rasterize_box(box: BoundingBox, grid: GridDims) -> BitMask:
    return rasterize_polygon(box.to_polygon(), grid)


def mask_iou(a: BitMask, b: BitMask) -> float:
    if a.bits.shape != b.bits.shape:
        raise GeometryError(
            f"incomparable masks: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(a.bits & b.bits)) / union


def mask_to_bbox(mask: BitMask) -> BoundingBox:
    """Tightest integer-aligned box containing every set pixel."""
    rows = np.flatnonzero(mask.bits.any(axis=1))
    cols = np.flatnonzero(mask.bits.any(axis=0))
    if rows.size == 0:
        raise GeometryError("mask has no set pixels, so no region to bound")
    return BoundingBox(
        float(cols[0]), float(rows[0]), float(cols[-1] - cols[0] + 1), float(rows[-1] - rows[0] + 1)
    )


def union_masks(masks: Iterable[BitMask], dims: GridDims) -> BitMask:
    acc = np.zeros((dims.height, dims.width), dtype=bool)
    for m in masks:
        acc |= m.bits
    return BitMask(acc)
