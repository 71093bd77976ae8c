"""Anchor grids, box-regression encoding, anchor matching and NMS.

Boxes are parameterized by their top-left corner and size.  Offsets of a
box relative to an anchor are::

    t_x = (x - x_a) / w_a      t_w = ln(w / w_a)
    t_y = (y - y_a) / h_a      t_h = ln(h / h_a)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from mosqseg.geometry import BitMask, BoundingBox, GeometryError, GridDims, box_iou, box_iou_matrix

DEFAULT_POS_THR = 0.5
DEFAULT_NEG_THR = 0.3
DEFAULT_NMS_THR = 0.7


@dataclass(frozen=True, slots=True)
class Anchor:
    box: BoundingBox
    level: int = 0


class RegressionTarget(NamedTuple):
    t_x: float
    t_y: float
    t_w: float
    t_h: float


@dataclass(frozen=True)
class AnchorConfig:
    """Per-level strides and scales plus shared aspect ratios.

    ``scales`` has one tuple per level; a flat sequence of numbers is
    applied at every level.  Ratios are width/height.
    """

    strides: tuple[float, ...] = (4, 8, 16, 32, 64)
    scales: tuple = ((32,), (64,), (128,), (256,), (512,))
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    clip: bool = False

    def __post_init__(self):
        strides = tuple(float(s) for s in self.strides)
        scales = tuple(self.scales)
        if scales and not isinstance(scales[0], (tuple, list)):
            scales = tuple(tuple(float(s) for s in scales) for _ in strides)
        else:
            scales = tuple(tuple(float(s) for s in lvl) for lvl in scales)
        object.__setattr__(self, "strides", strides)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if not strides or any(s <= 0 for s in strides):
            raise ValueError("strides must be positive and non-empty")
        if len(scales) != len(strides):
            raise ValueError(f"{len(scales)} scale groups for {len(strides)} levels")
        if any(not lvl or any(s <= 0 for s in lvl) for lvl in scales):
            raise ValueError("every level needs >= 1 positive scale")
        if not self.ratios or any(r <= 0 for r in self.ratios):
            raise ValueError("ratios must be positive and non-empty")


def generate_anchors(cfg: AnchorConfig, image: GridDims) -> list[Anchor]:
    """One anchor per (cell, scale, ratio) and level, centred on grid cells.

    Order is level, row, column, scale, ratio.  With ``cfg.clip`` anchors are
    cut to the image and dropped if nothing remains.
    """
    anchors = []
    for level, (stride, scales) in enumerate(zip(cfg.strides, cfg.scales)):
        nx = math.ceil(image.width / stride)
        ny = math.ceil(image.height / stride)
        shapes = [(s * math.sqrt(r), s / math.sqrt(r)) for s in scales for r in cfg.ratios]
        for row in range(ny):
            cy = (row + 0.5) * stride
            for col in range(nx):
                cx = (col + 0.5) * stride
                for w, h in shapes:
                    x, y = cx - w / 2, cy - h / 2
                    if cfg.clip:
                        x0, y0 = max(x, 0.0), max(y, 0.0)
                        x1, y1 = min(x + w, image.width), min(y + h, image.height)
                        if x1 <= x0 or y1 <= y0:
                            continue
                        x, y, w, h = x0, y0, x1 - x0, y1 - y0
                    anchors.append(Anchor(BoundingBox(x, y, w, h), level))
    return anchors


def encode_box(anchor: Anchor, target: BoundingBox) -> RegressionTarget:
    a = anchor.box
    return RegressionTarget(
        (target.x - a.x) / a.w,
        (target.y - a.y) / a.h,
        math.log(target.w / a.w),
        math.log(target.h / a.h),
    )


def decode_box(anchor: Anchor, t: RegressionTarget) -> BoundingBox:
    a = anchor.box
    return BoundingBox(
        a.x + t[0] * a.w,
        a.y + t[1] * a.h,
        a.w * math.exp(t[2]),
        a.h * math.exp(t[3]),
    )


class MatchLabel(NamedTuple):
    """``kind`` is "positive", "negative" or "ignore"; ``gt_index`` only for positives."""

    kind: str
    gt_index: Optional[int] = None

    @classmethod
    def positive(cls, gt_index: int) -> MatchLabel:
        return cls("positive", gt_index)

    @property
    def is_positive(self) -> bool:
        return self.kind == "positive"


NEGATIVE = MatchLabel("negative")
IGNORE = MatchLabel("ignore")


def match_anchors(
    anchors: Sequence[Anchor],
    gts: Sequence[BoundingBox],
    pos_thr: float = DEFAULT_POS_THR,
    neg_thr: float = DEFAULT_NEG_THR,
) -> list[MatchLabel]:
    """Label anchors positive / negative / ignore against ground-truth boxes.

    An anchor is positive when its best IoU reaches ``pos_thr`` (matched to
    that best GT, lowest index on ties), negative below ``neg_thr`` and
    ignored in between.  Then every GT forces its own best anchor positive,
    so no GT is left without a positive anchor; if two GTs share a best
    anchor the lower GT index keeps it.
    """
    if not 0.0 <= neg_thr <= pos_thr <= 1.0:
        raise ValueError(f"need 0 <= neg_thr <= pos_thr <= 1, got {neg_thr}, {pos_thr}")
    if not gts:
        return [NEGATIVE] * len(anchors)
    if not anchors:
        return []
    iou = box_iou_matrix([a.box for a in anchors], list(gts))
    best_gt = iou.argmax(axis=1)  # first max -> lowest GT index
    best_iou = iou[np.arange(len(anchors)), best_gt]
    labels = []
    for i in range(len(anchors)):
        if best_iou[i] >= pos_thr:
            labels.append(MatchLabel.positive(int(best_gt[i])))
        elif best_iou[i] < neg_thr:
            labels.append(NEGATIVE)
        else:
            labels.append(IGNORE)
    forced = set()
    for g in range(len(gts)):
        a = int(iou[:, g].argmax())
        if a in forced:
            continue
        forced.add(a)
        labels[a] = MatchLabel.positive(g)
    return labels


def nms(boxes: Sequence[tuple[BoundingBox, float]], thr: float = DEFAULT_NMS_THR) -> list[int]:
    """Greedy non-maximum suppression; returns kept indices in keep order."""
    if not 0.0 <= thr <= 1.0:
        raise ValueError(f"NMS threshold must be in [0, 1], got {thr}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i][1], i))
    kept: list[int] = []
    for i in order:
        if all(box_iou(boxes[i][0], boxes[k][0]) < thr for k in kept):
            kept.append(i)
    return kept


def clip_to_grid(box: BoundingBox, dims: GridDims) -> tuple[int, int, int, int]:
    """Integer pixel range ``(x0, y0, x1, y1)`` covered by ``box``, clipped to the grid."""
    x0 = max(0, math.floor(box.x))
    y0 = max(0, math.floor(box.y))
    x1 = min(dims.width, math.ceil(box.x2))
    y1 = min(dims.height, math.ceil(box.y2))
    return x0, y0, x1, y1


def fg_bg_ratio(anchor: Anchor, gt_mask: BitMask) -> tuple[int, int]:
    """Foreground and background pixel counts inside the anchor's clipped region."""
    x0, y0, x1, y1 = clip_to_grid(anchor.box, gt_mask.dims)
    if x1 <= x0 or y1 <= y0:
        raise GeometryError(f"anchor {anchor.box} lies entirely outside the {gt_mask.width}x{gt_mask.height} grid")
    window = gt_mask.bits[y0:y1, x0:x1]
    fg = int(np.count_nonzero(window))
    return fg, window.size - fg
