"""Instance matching, precision/recall, AP and mAP over the four anatomy classes.

Detections are matched to ground truth per image and class: in descending
score order (lower index first on ties) each detection takes the unmatched
ground truth with the highest IoU, provided it reaches the threshold.

AP is the 101-point interpolated average: the precision envelope (best
precision at recall >= r) averaged over r = 0.00, 0.01, ..., 1.00.  It is
computed with exact rationals and rounded once at the end.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from mosqseg.dataset import (
    AnatomyClass,
    AnnotatedDataset,
    AnnotatedImage,
    AnnotatedRegion,
    Detection,
    decode_rle,
)
from mosqseg.geometry import GridDims, box_iou_matrix, rasterize_polygon

DEFAULT_THRESHOLDS = (0.30, 0.50, 0.70)
IOU_KINDS = ("box", "mask")
RECALL_LEVELS = 101


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    """Counts for one class (possibly summed over images).

    ``pairs`` holds ``(detection index, gt index, iou)``; ``det_is_tp`` is
    aligned with the detection input order.
    """

    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[int, int, float], ...] = ()
    det_is_tp: tuple[bool, ...] = ()

    def __add__(self, other: MatchResult) -> MatchResult:
        return MatchResult(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class PrecisionRecall:
    precision: float
    recall: float


def _check_kind(kind: str):
    if kind not in IOU_KINDS:
        raise EvaluationError(f"iou kind must be one of {IOU_KINDS}, got {kind!r}")


def iou_table(
    dets: Sequence[Detection],
    gts: Sequence[AnnotatedRegion],
    kind: str = "box",
    dims: Optional[GridDims] = None,
    det_ids: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """IoU of every detection against every ground-truth region, shape (D, G).

    ``det_ids`` only relabels detections in error messages.
    """
    _check_kind(kind)
    det_bits = []
    if kind == "mask":
        for local, d in enumerate(dets):
            i = det_ids[local] if det_ids is not None else local
            if d.mask is None:
                raise EvaluationError(f"detection {i} (image {d.image_id!r}) has no mask for mask IoU")
            if dims is not None and (d.mask.width, d.mask.height) != (dims.width, dims.height):
                raise EvaluationError(
                    f"detection {i} (image {d.image_id!r}) mask is {d.mask.width}x{d.mask.height}, "
                    f"image is {dims.width}x{dims.height}"
                )
            if gts:
                det_bits.append(decode_rle(d.mask).bits.ravel())
    if not dets or not gts:
        return np.zeros((len(dets), len(gts)))
    if kind == "box":
        return box_iou_matrix([d.box for d in dets], [g.box for g in gts])
    if dims is None:
        raise EvaluationError("mask IoU needs the image dimensions")
    gt_bits = [rasterize_polygon(g.polygon, dims).bits.ravel() for g in gts]
    dm = np.array(det_bits, dtype=np.int64)
    gm = np.array(gt_bits, dtype=np.int64)
    inter = dm @ gm.T
    union = dm.sum(axis=1)[:, None] + gm.sum(axis=1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


def _greedy(scores: Sequence[float], iou: np.ndarray, iou_thr: float) -> MatchResult:
    n_det, n_gt = iou.shape
    order = sorted(range(n_det), key=lambda i: (-scores[i], i))
    taken = np.zeros(n_gt, dtype=bool)
    is_tp = [False] * n_det
    pairs = []
    for i in order:
        if n_gt == 0:
            break
        cand = np.where(taken | (iou[i] < iou_thr), -1.0, iou[i])
        g = int(np.argmax(cand))  # first max -> lowest GT index
        if cand[g] < 0:
            continue
        taken[g] = True
        is_tp[i] = True
        pairs.append((i, g, float(iou[i, g])))
    tp = len(pairs)
    return MatchResult(tp, n_det - tp, n_gt - tp, tuple(pairs), tuple(is_tp))


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[AnnotatedRegion],
    iou_thr: float,
    kind: str = "box",
    dims: Optional[GridDims] = None,
) -> MatchResult:
    """Greedy score-ordered matching for one image and one class."""
    iou = iou_table(dets, gts, kind, dims)
    return _greedy([d.score for d in dets], iou, iou_thr)


def precision_recall(m: MatchResult) -> PrecisionRecall:
    """Vacuous conventions: precision is 1 with no detections, recall 1 with no GT."""
    n_det = m.tp + m.fp
    n_gt = m.tp + m.fn
    precision = m.tp / n_det if n_det else 1.0
    recall = m.tp / n_gt if n_gt else 1.0
    return PrecisionRecall(precision, recall)


def ap_from_ranked(is_tp: Sequence[bool], n_gt: int) -> float:
    """101-point interpolated AP from detection outcomes already sorted by score."""
    if n_gt == 0:
        return 1.0 if len(is_tp) == 0 else 0.0
    tp_cum = np.cumsum(np.asarray(is_tp, dtype=np.int64)) if len(is_tp) else np.zeros(0, dtype=np.int64)
    precision = [Fraction(int(t), k + 1) for k, t in enumerate(tp_cum)]
    envelope = precision[:]
    for k in range(len(envelope) - 2, -1, -1):
        envelope[k] = max(envelope[k], envelope[k + 1])
    total = Fraction(0)
    k = 0
    for j in range(RECALL_LEVELS):
        # first rank whose recall tp/n_gt reaches j/100
        while k < len(tp_cum) and 100 * int(tp_cum[k]) < j * n_gt:
            k += 1
        if k == len(tp_cum):
            break
        total += envelope[k]
    return float(total / RECALL_LEVELS)


class _ClassIndex:
    """Per-image IoU tables for one class; threshold-independent, so built once."""

    def __init__(self, dets, images: Sequence[AnnotatedImage], cls, kind: str, ids=None):
        by_id = {img.id: img for img in images}
        self.dets = list(dets)
        ids = list(range(len(self.dets))) if ids is None else list(ids)
        self.n_gt = 0
        self.tables = []
        grouped: dict[str, list[int]] = {}
        for i, d in enumerate(self.dets):
            if d.image_id not in by_id:
                raise EvaluationError(f"detection {ids[i]} references unknown image_id {d.image_id!r}")
            grouped.setdefault(d.image_id, []).append(i)
        for img in images:
            gts = [r for r in img.regions if cls is None or r.cls == cls]
            self.n_gt += len(gts)
            idx = grouped.get(img.id, [])
            if not idx and not gts:
                continue
            table = iou_table([self.dets[i] for i in idx], gts, kind, img.dims, [ids[i] for i in idx])
            self.tables.append((idx, table))

    def match(self, iou_thr: float) -> tuple[MatchResult, list[bool]]:
        total = MatchResult(0, 0, 0)
        is_tp = [False] * len(self.dets)
        for idx, table in self.tables:
            m = _greedy([self.dets[i].score for i in idx], table, iou_thr)
            total = total + m
            for local, hit in enumerate(m.det_is_tp):
                is_tp[idx[local]] = hit
        return total, is_tp

    def ap(self, is_tp: Sequence[bool]) -> float:
        order = sorted(range(len(self.dets)), key=lambda i: (-self.dets[i].score, i))
        return ap_from_ranked([is_tp[i] for i in order], self.n_gt)


def average_precision(
    dets: Sequence[Detection],
    gts: Sequence[AnnotatedImage],
    iou_thr: float,
    kind: str = "box",
) -> float:
    """AP for one class.

    ``dets`` may span many images; ``gts`` are the images with their regions
    of that class only (see :func:`class_view`).  With no ground truth the
    AP is 1.0 if there are also no detections, else 0.0.
    """
    index = _ClassIndex(dets, gts, None, kind)
    _, is_tp = index.match(iou_thr)
    return index.ap(is_tp)


def class_view(images: Sequence[AnnotatedImage], cls: AnatomyClass) -> list[AnnotatedImage]:
    """The images restricted to regions of ``cls``."""
    return [
        AnnotatedImage(img.id, img.dims, tuple(r for r in img.regions if r.cls == cls), img.attributes)
        for img in images
    ]


def per_class_ap(
    dets: Sequence[Detection], ds: AnnotatedDataset, iou_thr: float, kind: str = "box"
) -> dict[AnatomyClass, float]:
    out = {}
    for cls in AnatomyClass:
        index = _ClassIndex([d for d in dets if d.cls == cls], ds.images, cls, kind)
        _, is_tp = index.match(iou_thr)
        out[cls] = index.ap(is_tp)
    return out


def mean_average_precision(
    dets: Sequence[Detection], ds: AnnotatedDataset, iou_thr: float, kind: str = "box"
) -> float:
    aps = per_class_ap(dets, ds, iou_thr, kind)
    return sum(aps[c] for c in AnatomyClass) / len(AnatomyClass)


@dataclass(frozen=True)
class ClassResult:
    """One (class, threshold) cell.  Counts and AP may be absent for tabulated input."""

    cls: AnatomyClass
    threshold: float
    precision: float
    recall: float
    ap: Optional[float] = None
    tp: Optional[int] = None
    fp: Optional[int] = None
    fn: Optional[int] = None


def format_percent(ratio: float) -> str:
    """Percent with two decimals, dropping an all-zero fraction: 0.875 -> 87.50, 0.52 -> 52."""
    text = f"{round(ratio * 100, 2):.2f}"
    return text[:-3] if text.endswith(".00") else text


def _thr_key(t: float) -> str:
    return f"{t:.2f}"


@dataclass(frozen=True)
class EvaluationReport:
    thresholds: tuple[float, ...]
    iou_kind: str
    results: tuple[ClassResult, ...]
    map: dict[float, float] = field(default_factory=dict)

    def __post_init__(self):
        _check_kind(self.iou_kind)
        for t in self.thresholds:
            if not 0.0 < t <= 1.0:
                raise EvaluationError(f"threshold {t} outside (0, 1]")

    def cell(self, cls: AnatomyClass, threshold: float) -> ClassResult:
        for r in self.results:
            if r.cls == cls and r.threshold == threshold:
                return r
        raise KeyError((cls, threshold))

    def to_dict(self) -> dict:
        classes = {}
        for cls in AnatomyClass:
            classes[cls.label] = {}
            for t in self.thresholds:
                r = self.cell(cls, t)
                classes[cls.label][_thr_key(t)] = {
                    "precision": r.precision,
                    "recall": r.recall,
                    "ap": r.ap,
                    "tp": r.tp,
                    "fp": r.fp,
                    "fn": r.fn,
                }
        return {
            "iou_kind": self.iou_kind,
            "thresholds": list(self.thresholds),
            "classes": classes,
            "map": {_thr_key(t): self.map.get(t) for t in self.thresholds},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "iou_threshold", "precision", "recall", "ap", "tp", "fp", "fn", "iou_kind"])
        for cls in AnatomyClass:
            for t in self.thresholds:
                r = self.cell(cls, t)
                w.writerow([
                    cls.label, _thr_key(t), repr(r.precision), repr(r.recall),
                    "" if r.ap is None else repr(r.ap),
                    "" if r.tp is None else r.tp,
                    "" if r.fp is None else r.fp,
                    "" if r.fn is None else r.fn,
                    self.iou_kind,
                ])
        return buf.getvalue()

    def markdown_rows(self) -> list[list[str]]:
        rows = []
        for cls in AnatomyClass:
            row = [cls.title]
            for t in self.thresholds:
                r = self.cell(cls, t)
                row += [format_percent(r.precision), format_percent(r.recall)]
            rows.append(row)
        return rows

    def to_markdown(self) -> str:
        n = len(self.thresholds)
        head = ["Anatomy"]
        sub = [""]
        for t in self.thresholds:
            head += [f"IoU Ratio={_thr_key(t)}", ""]
            sub += ["Precision (%)", "Recall (%)"]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * (1 + 2 * n), "| " + " | ".join(sub) + " |"]
        lines += ["| " + " | ".join(row) + " |" for row in self.markdown_rows()]
        lines += ["", "| IoU Ratio | mAP (%) |", "|---|---|"]
        for t in self.thresholds:
            v = self.map.get(t)
            lines.append(f"| {_thr_key(t)} | {'' if v is None else format_percent(v)} |")
        lines += ["", f"IoU kind: {self.iou_kind}", ""]
        return "\n".join(lines)


def report_from_table(
    table: Mapping[AnatomyClass, Sequence[tuple[float, float]]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    map_values: Optional[Sequence[float]] = None,
    iou_kind: str = "mask",
) -> EvaluationReport:
    """Build a report from already-tabulated (precision, recall) ratios per threshold."""
    results = []
    for cls in AnatomyClass:
        for t, (p, r) in zip(thresholds, table[cls]):
            results.append(ClassResult(cls, t, p, r))
    maps = dict(zip(thresholds, map_values)) if map_values is not None else {}
    return EvaluationReport(tuple(thresholds), iou_kind, tuple(results), maps)


def build_report(
    ds: AnnotatedDataset,
    dets: Sequence[Detection],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    kind: str = "box",
) -> EvaluationReport:
    """Per-class precision/recall/AP at each threshold, plus mAP per threshold.

    Precision and recall count every detection (no score cut-off).
    """
    _check_kind(kind)
    thresholds = tuple(float(t) for t in thresholds)
    if not thresholds:
        raise EvaluationError("need at least one IoU threshold")
    for t in thresholds:
        if not 0.0 < t <= 1.0:
            raise EvaluationError(f"threshold {t} outside (0, 1]")
    known = {img.id for img in ds.images}
    for i, d in enumerate(dets):
        if d.image_id not in known:
            raise EvaluationError(f"detection {i} references unknown image_id {d.image_id!r}")

    indexes = {}
    for cls in AnatomyClass:
        ids = [i for i, d in enumerate(dets) if d.cls == cls]
        indexes[cls] = _ClassIndex([dets[i] for i in ids], ds.images, cls, kind, ids)
    results = []
    maps = {}
    for t in thresholds:
        aps = []
        for cls in AnatomyClass:
            m, is_tp = indexes[cls].match(t)
            pr = precision_recall(m)
            ap = indexes[cls].ap(is_tp)
            aps.append(ap)
            results.append(ClassResult(cls, t, pr.precision, pr.recall, ap, m.tp, m.fp, m.fn))
        maps[t] = sum(aps) / len(aps)
    results.sort(key=lambda r: (int(r.cls), thresholds.index(r.threshold)))
    return EvaluationReport(thresholds, kind, tuple(results), maps)
