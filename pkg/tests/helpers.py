"""Fixture builders and brute-force oracles shared by the test modules.

The oracles deliberately avoid the package's own code paths: plain-Python
crossing-number tests, exact rational IoU, exhaustive matchings.
"""

from __future__ import annotations

import functools
from fractions import Fraction

import numpy as np

from mosqseg.dataset import (
    AnatomyClass,
    AnnotatedDataset,
    AnnotatedImage,
    AnnotatedRegion,
    Detection,
    encode_rle,
)
from mosqseg.geometry import BoundingBox, GridDims, Polygon, rasterize_polygon
from mosqseg.metrics import report_from_table

T, A, W, L = AnatomyClass.THORAX, AnatomyClass.ABDOMEN, AnatomyClass.WING, AnatomyClass.LEG
DIMS = GridDims(100, 100)

SPECIES = (
    "aedes_aegypti", "aedes_infirmatus", "aedes_taeniorhynchus",
    "anopheles_crucians", "anopheles_quadrimaculatus", "anopheles_stephensi",
    "culex_coronator", "culex_nigripalpus", "culex_salinarius",
)


# ----------------------------------------------------------------- oracles

def point_in_polygon(px, py, verts) -> bool:
    """Crossing-number test, ray towards +x, half-open edge rule."""
    inside = False
    n = len(verts)
    for k in range(n):
        x0, y0 = verts[k]
        x1, y1 = verts[(k + 1) % n]
        if (y0 <= py < y1) or (y1 <= py < y0):
            xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            if px < xc:
                inside = not inside
    return inside


def raster_oracle(verts, width, height) -> np.ndarray:
    out = np.zeros((height, width), dtype=bool)
    for j in range(height):
        for i in range(width):
            out[j, i] = point_in_polygon(i + 0.5, j + 0.5, verts)
    return out


def decimal_fraction(t: float) -> Fraction:
    """A threshold as the decimal it was written as: 0.1 -> 1/10, not the binary float's value."""
    return Fraction(str(t))


def exact_box_iou(a, b) -> Fraction:
    """IoU of integer boxes (x, y, w, h) as an exact rational."""
    iw = min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0])
    ih = min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return Fraction(0)
    inter = iw * ih
    return Fraction(inter, a[2] * a[3] + b[2] * b[3] - inter)


def max_matching(iou, thr) -> int:
    """Maximum number of disjoint (det, gt) pairs with IoU >= thr.

    Exhaustive: every detection either stays unmatched or takes each free
    eligible GT in turn.  Memoized on (detection, set of used GT).
    """
    n_det = len(iou)

    @functools.lru_cache(maxsize=None)
    def best(d: int, used: int) -> int:
        if d == n_det:
            return 0
        out = best(d + 1, used)
        for g, v in enumerate(iou[d]):
            if v >= thr and not used >> g & 1:
                out = max(out, 1 + best(d + 1, used | 1 << g))
        return out

    return best(0, 0)


def greedy_oracle(scores, iou, thr):
    """Independent restatement of score-ordered greedy matching; returns per-det hit flags."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    taken = set()
    hit = [False] * len(scores)
    for i in order:
        best_g, best_v = None, None
        for g in range(len(iou[i]) if iou else 0):
            if g in taken or iou[i][g] < thr:
                continue
            if best_v is None or iou[i][g] > best_v:
                best_g, best_v = g, iou[i][g]
        if best_g is not None:
            taken.add(best_g)
            hit[i] = True
    return hit


def ap_oracle(images, thr) -> Fraction:
    """AP by enumerating every score threshold.

    ``images`` is a list of ``(det_scores, det_boxes, gt_boxes)`` with integer
    boxes.  For each distinct score t, keep detections scoring >= t, rematch
    from scratch and record (precision, recall); then average over the 101
    recall levels the best precision among points reaching that recall.
    """
    n_gt = sum(len(g) for _, _, g in images)
    all_scores = sorted({s for scores, _, _ in images for s in scores}, reverse=True)
    if n_gt == 0:
        return Fraction(1) if not all_scores else Fraction(0)
    points = []
    for t in all_scores:
        tp = kept = 0
        for scores, dboxes, gboxes in images:
            keep = [i for i, s in enumerate(scores) if s >= t]
            iou = [[exact_box_iou(dboxes[i], g) for g in gboxes] for i in keep]
            hit = greedy_oracle([scores[i] for i in keep], iou, decimal_fraction(thr))
            tp += sum(hit)
            kept += len(keep)
        points.append((Fraction(tp, kept), Fraction(tp, n_gt)))
    total = Fraction(0)
    for j in range(101):
        r = Fraction(j, 100)
        reaching = [p for p, rec in points if rec >= r]
        total += max(reaching) if reaching else 0
    return total / 101


# ----------------------------------------------------------------- fixtures

def box_poly(x, y, w, h) -> Polygon:
    return Polygon(((x, y), (x + w, y), (x + w, y + h), (x, y + h)))


def _mosquito_regions(n_wings: int, n_legs: int) -> list[AnnotatedRegion]:
    regions = [
        AnnotatedRegion(AnatomyClass.THORAX, box_poly(100, 60, 40, 40)),
        AnnotatedRegion(AnatomyClass.ABDOMEN, Polygon(((110, 100), (130, 100), (126, 200), (114, 200)))),
    ]
    wing_shapes = [((140, 70), (220, 90), (142, 96)), ((100, 70), (20, 90), (98, 96))]
    regions += [AnnotatedRegion(AnatomyClass.WING, Polygon(wing_shapes[k])) for k in range(n_wings)]
    for k in range(n_legs):
        x = 30 + 36 * k
        regions.append(AnnotatedRegion(AnatomyClass.LEG, Polygon(((x, 210), (x + 3, 210), (x + 13, 250), (x + 10, 250)))))
    return regions


def holdout_dataset() -> AnnotatedDataset:
    """27 images with 27 thoraxes, 27 abdomens, 48 wings and 105 legs."""
    images = []
    for k in range(27):
        n_wings = 2 if k < 21 else 1
        n_legs = 4 if k < 24 else 3
        images.append(AnnotatedImage(f"test_{k:03d}.jpg", GridDims(256, 256), tuple(_mosquito_regions(n_wings, n_legs))))
    return AnnotatedDataset(tuple(images))


def species_dataset() -> AnnotatedDataset:
    images = []
    for k, name in enumerate(SPECIES):
        regions = _mosquito_regions(1 + k % 2, 2 + k % 5)
        images.append(AnnotatedImage(f"{name}_001.jpg", GridDims(256, 256), tuple(regions), {"species": name}))
    return AnnotatedDataset(tuple(images))


def sized_dataset(n: int, dims=GridDims(256, 256)) -> AnnotatedDataset:
    return AnnotatedDataset(tuple(
        AnnotatedImage(f"img_{k:04d}.jpg", dims, tuple(_mosquito_regions(2, 6))) for k in range(n)
    ))


def perfect_detections(ds: AnnotatedDataset, with_masks: bool = True) -> list[Detection]:
    dets = []
    for img in ds.images:
        for r in img.regions:
            mask = encode_rle(rasterize_polygon(r.polygon, img.dims)) if with_masks else None
            dets.append(Detection(img.id, r.cls, 0.99, r.box, mask))
    return dets


def shifted_box(box: BoundingBox, dx: float) -> BoundingBox:
    return BoundingBox(box.x + dx, box.y, box.w, box.h)



def region(cls, x, y, w, h) -> AnnotatedRegion:
    return AnnotatedRegion(cls, box_poly(x, y, w, h))


def det(image_id, cls, score, x, y, w, h) -> Detection:
    return Detection(image_id, cls, score, BoundingBox(x, y, w, h))


def random_dataset(rng, n_images=None) -> AnnotatedDataset:
    n_images = int(rng.integers(0, 5)) if n_images is None else n_images
    images = []
    for k in range(n_images):
        dims = GridDims(int(rng.integers(16, 300)), int(rng.integers(16, 300)))
        regions = []
        for _ in range(int(rng.integers(0, 6))):
            n = int(rng.integers(3, 9))
            xs = rng.uniform(0, dims.width, n)
            ys = rng.uniform(0, dims.height, n)
            if rng.random() < 0.5:
                xs, ys = np.round(xs), np.round(ys)
            try:
                poly = Polygon(tuple(zip(xs.tolist(), ys.tolist())))
            except ValueError:
                continue
            regions.append(AnnotatedRegion(AnatomyClass(int(rng.integers(0, 4))), poly))
        images.append(AnnotatedImage(f"img{k}_{rng.integers(1e6)}.jpg", dims, tuple(regions)))
    return AnnotatedDataset(tuple(images))


def monotone_fixture():
    """Each class has three GT boxes 20x20; detections shifted by 10, 6, 2 px.

    IoU of a 20-px box shifted by d is (20-d)/(20+d): 1/3, 0.538, 0.818.
    """
    regions, dets = [], []
    for c, cls in enumerate(AnatomyClass):
        for k, (d, s) in enumerate(((10, 0.9), (6, 0.8), (2, 0.7))):
            x, y = 5 + 30 * k, 5 + 25 * c
            regions.append(region(cls, x, y, 20, 20))
            dets.append(det("m", cls, s, x + d, y, 20, 20))
    return AnnotatedDataset((AnnotatedImage("m", GridDims(120, 120), tuple(regions)),)), dets


def two_image_fixture():
    """Hand-enumerated report.

    image a: thorax exact (0.9); abdomen shifted 5 -> IoU 0.6 (0.8); wing shifted 10 -> IoU 1/3 (0.7);
             spurious wing (0.2)
    image b: thorax GT missed; one of two legs found exactly (0.6); spurious abdomen (0.5)
    """
    a = AnnotatedImage("a.jpg", DIMS, (region(T, 10, 10, 20, 20), region(A, 40, 40, 20, 20), region(W, 70, 10, 20, 20)))
    b = AnnotatedImage("b.jpg", DIMS, (region(T, 10, 10, 20, 20), region(L, 50, 50, 5, 30), region(L, 70, 50, 5, 30)))
    dets = [
        det("a.jpg", T, 0.9, 10, 10, 20, 20),
        det("a.jpg", A, 0.8, 45, 40, 20, 20),
        det("a.jpg", W, 0.7, 80, 10, 20, 20),
        det("a.jpg", W, 0.2, 0, 80, 10, 10),
        det("b.jpg", L, 0.6, 50, 50, 5, 30),
        det("b.jpg", A, 0.5, 0, 0, 10, 10),
    ]
    return AnnotatedDataset((a, b)), dets


# (tp, fp, fn) per class and threshold, counted by hand from the fixture description
EXPECTED_COUNTS = {
    T: {0.3: (1, 0, 1), 0.5: (1, 0, 1), 0.7: (1, 0, 1)},
    A: {0.3: (1, 1, 0), 0.5: (1, 1, 0), 0.7: (0, 2, 1)},
    W: {0.3: (1, 1, 0), 0.5: (0, 2, 1), 0.7: (0, 2, 1)},
    L: {0.3: (1, 0, 1), 0.5: (1, 0, 1), 0.7: (1, 0, 1)},
}
# half recall at full precision covers recall levels 0.00..0.50
HALF = Fraction(51, 101)
EXPECTED_AP = {
    T: {0.3: HALF, 0.5: HALF, 0.7: HALF},
    A: {0.3: 1, 0.5: 1, 0.7: 0},
    W: {0.3: 1, 0.5: 0, 0.7: 0},
    L: {0.3: HALF, 0.5: HALF, 0.7: HALF},
}


# holdout-set precision/recall table, percent
HOLDOUT_TABLE = {
    T: [(96, 96), (100, 87.50), (100, 52)],
    A: [(95.23, 95.23), (100, 85.71), (100, 61.90)],
    W: [(100, 88.36), (100, 81.81), (100, 61.36)],
    L: [(95.46, 35.76), (100, 21.40), (100, 19.25)],
}
HOLDOUT_MAP = (53.49, 52.38, 41.20)


def holdout_table_report():
    ratios = {c: [(p / 100, r / 100) for p, r in rows] for c, rows in HOLDOUT_TABLE.items()}
    return report_from_table(ratios, map_values=[v / 100 for v in HOLDOUT_MAP])
