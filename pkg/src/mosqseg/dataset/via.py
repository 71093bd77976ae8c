"""VGG Image Annotator (VIA) ground truth and the JSON prediction format.

Ground truth follows VIA's exported-annotations layout: a dict of image
entries (optionally wrapped in a project's ``_via_img_metadata``), each
with ``filename``, ``regions`` and ``file_attributes``.  VIA does not store
pixel dimensions, so entries may carry ``width``/``height`` keys (written by
:func:`serialize_via`) or the caller supplies ``default_dims``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional

from mosqseg.geometry import BoundingBox, GeometryError, GridDims, Polygon
from mosqseg.dataset.rle import RleError, RleMask
from mosqseg.dataset.types import (
    AnatomyClass,
    AnnotatedDataset,
    AnnotatedImage,
    AnnotatedRegion,
    AnnotationError,
    ClassCounts,
    Detection,
    parse_class_label,
)

DEFAULT_CLASS_KEY = "anatomy"


class JsonSyntaxError(AnnotationError):
    """Malformed JSON; ``offset`` is the byte offset of the failure in UTF-8."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"malformed JSON at byte {offset}: {msg}")
        self.offset = offset


@dataclass(frozen=True)
class Issue:
    image_id: Optional[str]
    message: str

    def __str__(self):
        return f"{self.image_id}: {self.message}" if self.image_id else self.message


class ViaFormatError(AnnotationError):
    """One or more content problems in a VIA document."""

    def __init__(self, issues: list[Issue]):
        self.issues = list(issues)
        head = "; ".join(str(i) for i in self.issues[:5])
        more = f" (+{len(self.issues) - 5} more)" if len(self.issues) > 5 else ""
        super().__init__(head + more)


class PredictionFormatError(AnnotationError):
    def __init__(self, index: int, msg: str):
        super().__init__(f"prediction record {index}: {msg}")
        self.index = index


def _load_json(doc: str | bytes) -> Any:
    if isinstance(doc, bytes):
        doc = doc.decode("utf-8")
    try:
        return json.loads(doc)
    except json.JSONDecodeError as e:
        offset = len(doc[: e.pos].encode("utf-8"))
        raise JsonSyntaxError(e.msg, offset) from None


def _image_entries(obj: Any) -> dict:
    if not isinstance(obj, dict):
        raise ViaFormatError([Issue(None, "VIA document must be a JSON object")])
    if "_via_img_metadata" in obj:
        obj = obj["_via_img_metadata"]
        if not isinstance(obj, dict):
            raise ViaFormatError([Issue(None, "_via_img_metadata must be an object")])
    return obj


def _entry_dims(entry: dict, default_dims: Optional[GridDims]) -> Optional[GridDims]:
    for src in (entry, entry.get("file_attributes") or {}):
        if "width" in src and "height" in src:
            return GridDims(int(src["width"]), int(src["height"]))
    return default_dims


def _region_label(attrs: Any, class_key: str):
    if not isinstance(attrs, dict) or class_key not in attrs:
        return None
    value = attrs[class_key]
    # VIA checkbox attributes come out as {"option": true, ...}
    if isinstance(value, dict):
        chosen = [k for k, v in value.items() if v]
        return chosen[0] if len(chosen) == 1 else repr(value)
    return value


def _clamp_polygon(xs, ys, dims: GridDims) -> Polygon:
    pts = [
        (min(max(float(x), 0.0), float(dims.width)), min(max(float(y), 0.0), float(dims.height)))
        for x, y in zip(xs, ys)
    ]
    return Polygon(tuple(pts))


def _parse_entries(
    entries: dict, class_key: str, default_dims: Optional[GridDims]
) -> tuple[list[AnnotatedImage], list[Issue]]:
    images: list[AnnotatedImage] = []
    issues: list[Issue] = []
    seen: set[str] = set()
    for key, entry in entries.items():
        if not isinstance(entry, dict):
            issues.append(Issue(str(key), "image entry must be an object"))
            continue
        image_id = entry.get("filename") or str(key)
        if image_id in seen:
            issues.append(Issue(image_id, "duplicate image id"))
            continue
        seen.add(image_id)
        try:
            dims = _entry_dims(entry, default_dims)
        except (GeometryError, TypeError, ValueError) as e:
            issues.append(Issue(image_id, f"bad image dimensions: {e}"))
            continue
        if dims is None:
            issues.append(Issue(image_id, "image dimensions missing (no width/height and no default)"))
            continue

        raw_regions = entry.get("regions", [])
        if isinstance(raw_regions, dict):  # VIA 1.x keyed regions
            raw_regions = list(raw_regions.values())
        if not isinstance(raw_regions, list):
            issues.append(Issue(image_id, "regions must be a list or object"))
            continue
        regions = []
        for r_idx, region in enumerate(raw_regions):
            where = f"region {r_idx}"
            if not isinstance(region, dict):
                issues.append(Issue(image_id, f"{where}: region must be an object"))
                continue
            shape = region.get("shape_attributes") or {}
            if not isinstance(shape, dict):
                issues.append(Issue(image_id, f"{where}: shape_attributes must be an object"))
                continue
            name = shape.get("name")
            if name != "polygon":
                issues.append(Issue(image_id, f"{where}: unsupported region shape {name!r}"))
                continue
            label = _region_label(region.get("region_attributes"), class_key)
            if label is None:
                issues.append(Issue(image_id, f"{where}: missing class attribute {class_key!r}"))
                continue
            try:
                cls = parse_class_label(label)
            except KeyError:
                issues.append(Issue(image_id, f"{where}: unknown class label {label!r} in image {image_id!r}"))
                continue
            xs, ys = shape.get("all_points_x"), shape.get("all_points_y")
            if not isinstance(xs, list) or not isinstance(ys, list) or len(xs) != len(ys):
                issues.append(Issue(image_id, f"{where}: all_points_x/all_points_y missing or unequal length"))
                continue
            try:
                poly = _clamp_polygon(xs, ys, dims)
            except (GeometryError, TypeError, ValueError) as e:
                issues.append(Issue(image_id, f"{where}: invalid polygon: {e}"))
                continue
            regions.append(AnnotatedRegion(cls, poly))
        attrs = entry.get("file_attributes") or {}
        if not isinstance(attrs, dict):
            attrs = {}
        attrs = {k: v for k, v in attrs.items() if k not in ("width", "height")}
        images.append(AnnotatedImage(image_id, dims, tuple(regions), attrs))
    return images, issues


def parse_via(
    doc: str | bytes,
    class_key: str = DEFAULT_CLASS_KEY,
    default_dims: Optional[GridDims] = None,
) -> AnnotatedDataset:
    """Parse a VIA JSON document into an :class:`AnnotatedDataset`.

    Polygon vertices are clamped to ``[0, width] x [0, height]``.

    Raises:
        JsonSyntaxError: the text is not JSON.
        ViaFormatError: every content problem found, each tied to its image.
    """
    entries = _image_entries(_load_json(doc))
    images, issues = _parse_entries(entries, class_key, default_dims)
    if issues:
        raise ViaFormatError(issues)
    return AnnotatedDataset(tuple(images))


def validate_via(
    doc: str | bytes,
    class_key: str = DEFAULT_CLASS_KEY,
    default_dims: Optional[GridDims] = None,
) -> list[Issue]:
    """All problems in ``doc``; empty when it parses cleanly."""
    try:
        parse_via(doc, class_key, default_dims)
    except JsonSyntaxError as e:
        return [Issue(None, str(e))]
    except ViaFormatError as e:
        return e.issues
    return []


def _num(v: float):
    return int(v) if float(v).is_integer() else v


def serialize_via(ds: AnnotatedDataset, class_key: str = DEFAULT_CLASS_KEY) -> str:
    out = {}
    for img in ds.images:
        regions = []
        for reg in img.regions:
            regions.append(
                {
                    "shape_attributes": {
                        "name": "polygon",
                        "all_points_x": [_num(x) for x, _ in reg.polygon.vertices],
                        "all_points_y": [_num(y) for _, y in reg.polygon.vertices],
                    },
                    "region_attributes": {class_key: reg.cls.label},
                }
            )
        out[f"{img.id}-1"] = {
            "filename": img.id,
            "size": -1,
            "width": img.dims.width,
            "height": img.dims.height,
            "regions": regions,
            "file_attributes": dict(img.attributes),
        }
    return json.dumps(out, indent=1)


def dataset_stats(ds: AnnotatedDataset) -> ClassCounts:
    counts = {c: 0 for c in AnatomyClass}
    for img in ds.images:
        for reg in img.regions:
            counts[reg.cls] += 1
    return ClassCounts(counts, len(ds.images))


def _parse_detection(i: int, rec: Any) -> Detection:
    if not isinstance(rec, dict):
        raise PredictionFormatError(i, "record must be an object")
    try:
        image_id = rec["image_id"]
        label = rec["class"]
        score = rec["score"]
        bbox = rec["bbox"]
    except KeyError as e:
        raise PredictionFormatError(i, f"missing field {e.args[0]!r}") from None
    if not isinstance(image_id, str) or not image_id:
        raise PredictionFormatError(i, "image_id must be a non-empty string")
    try:
        cls = parse_class_label(label)
    except KeyError:
        raise PredictionFormatError(i, f"unknown class {label!r}") from None
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
        raise PredictionFormatError(i, f"score {score!r} outside [0, 1]")
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise PredictionFormatError(i, "bbox must be [x, y, w, h]")
    try:
        box = BoundingBox(*(float(v) for v in bbox))
    except (GeometryError, TypeError, ValueError) as e:
        raise PredictionFormatError(i, f"bad bbox: {e}") from None
    mask = None
    if rec.get("rle") is not None:
        r = rec["rle"]
        try:
            mask = RleMask(int(r["width"]), int(r["height"]), tuple(r["runs"]))
        except (RleError, KeyError, TypeError, ValueError) as e:
            raise PredictionFormatError(i, f"bad rle: {e}") from None
    return Detection(image_id, cls, float(score), box, mask)


def parse_predictions(doc: str | bytes) -> list[Detection]:
    obj = _load_json(doc)
    if not isinstance(obj, list):
        raise AnnotationError("predictions document must be a JSON array")
    return [_parse_detection(i, rec) for i, rec in enumerate(obj)]


def serialize_predictions(dets: list[Detection]) -> str:
    recs = []
    for d in dets:
        rec = {
            "image_id": d.image_id,
            "class": d.cls.label,
            "score": d.score,
            "bbox": d.box.as_list(),
        }
        if d.mask is not None:
            rec["rle"] = d.mask.to_dict()
        recs.append(rec)
    return json.dumps(recs, indent=1)

