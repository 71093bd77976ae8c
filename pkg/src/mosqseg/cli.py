"""Mosquito anatomy annotation, anchor, loss-check and evaluation tools.

Usage: ``mosqseg <command> [options]``.

Exit status is 0 on success, 1 when inputs are readable but invalid (or a
check fails), and 2 for I/O and usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from mosqseg.anchors import (
    DEFAULT_NEG_THR,
    DEFAULT_POS_THR,
    AnchorConfig,
    encode_box,
    fg_bg_ratio,
    generate_anchors,
    match_anchors,
)
from mosqseg.config import OUTPUT_FORMATS, TRAINING, RunConfig
from mosqseg.dataset import (
    DEFAULT_CLASS_KEY,
    AnatomyClass,
    AnnotatedDataset,
    AnnotationError,
    augment,
    dataset_stats,
    parse_predictions,
    parse_via,
    rescale,
    serialize_via,
    validate_via,
)
from mosqseg.dataset.transforms import DEFAULT_COPIES, DEFAULT_FLIP_PROB, DEFAULT_SIGMA_RANGE
from mosqseg.geometry import GeometryError, GridDims, rasterize_polygon
from mosqseg.gradcheck import TOLERANCE, focal_cce_gap, run_gradient_checks
from mosqseg.losses import DEFAULT_GAMMA
from mosqseg.metrics import DEFAULT_THRESHOLDS, EvaluationError, build_report

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _IOFailure(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except (OSError, UnicodeDecodeError) as e:
        raise _IOFailure(f"cannot read {path}: {e}") from None


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise _IOFailure(f"cannot write {path}: {e}") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _thresholds(text: str) -> tuple[float, ...]:
    values = _float_list(text)
    if any(not 0.0 < t <= 1.0 for t in values):
        raise argparse.ArgumentTypeError(f"thresholds must be in (0, 1], got {text!r}")
    return values


def _scale_groups(text: str):
    groups = [_float_list(g) for g in text.split(";") if g.strip()]
    return groups[0] if len(groups) == 1 else tuple(groups)


def _dims(text: str) -> GridDims:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
        return GridDims(w, h)
    except (ValueError, GeometryError):
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def _load_gt(args) -> AnnotatedDataset:
    return parse_via(_read(args.gt), args.class_key, args.default_dims)


def cmd_validate(args) -> int:
    issues = validate_via(_read(args.gt), args.class_key, args.default_dims)
    for issue in issues:
        print(issue)
    print(f"{len(issues)} errors")
    return EXIT_INVALID if issues else EXIT_OK


def _stats_text(counts: dict, fmt: str) -> str:
    cols = ["images"] + [c.label for c in AnatomyClass]
    if fmt == "json":
        return json.dumps({k: counts[k] for k in cols}, indent=2) + "\n"
    if fmt == "csv":
        return ",".join(cols) + "\n" + ",".join(str(counts[k]) for k in cols) + "\n"
    lines = ["| Images | " + " | ".join(c.title for c in AnatomyClass) + " |", "|" + "---|" * len(cols)]
    lines.append("| " + " | ".join(str(counts[k]) for k in cols) + " |")
    return "\n".join(lines) + "\n"


def cmd_stats(args) -> int:
    counts = dataset_stats(_load_gt(args)).as_dict()
    _write(args.out, _stats_text(counts, args.format))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds = _load_gt(args)
    dets = parse_predictions(_read(args.pred))
    report = build_report(ds, dets, args.thresholds, args.iou_kind)
    for t in report.thresholds:
        print(f"mAP@{t:.2f} ({report.iou_kind}): {report.map[t]:.4f}")
    text = {"json": report.to_json, "csv": report.to_csv, "md": report.to_markdown}[args.format]()
    _write(args.out, text)
    return EXIT_OK


def cmd_augment(args) -> int:
    ds = _load_gt(args)
    if args.rescale is not None:
        ds = AnnotatedDataset(tuple(rescale(img, args.rescale) for img in ds.images))
    out = augment(ds, args.seed, args.flip_prob, (args.sigma_min, args.sigma_max), args.copies)
    _write(args.out, serialize_via(out, args.class_key) + "\n")
    print(f"{len(ds)} images -> {len(out)} images", file=sys.stderr)
    return EXIT_OK


def cmd_anchors(args) -> int:
    cfg = args.config.anchors
    image = None
    if args.gt:
        ds = _load_gt(args)
        if not ds.images:
            raise AnnotationError("ground-truth file has no images")
        lookup = ds.by_id()
        if args.image_id is not None and args.image_id not in lookup:
            raise AnnotationError(f"unknown image id {args.image_id!r}")
        image = lookup[args.image_id] if args.image_id is not None else ds.images[0]
    if args.dims is not None:
        dims = args.dims
    elif image is not None:
        dims = image.dims
    else:
        dims = GridDims(1024, 1024)

    anchors = generate_anchors(cfg, dims)
    regions = list(image.regions) if image is not None else []
    labels = match_anchors(anchors, [r.box for r in regions], args.pos_thr, args.neg_thr)
    masks = {}
    records = []
    for anchor, label in zip(anchors, labels):
        if args.positives_only and not label.is_positive:
            continue
        rec = {"box": anchor.box.as_list(), "level": anchor.level, "label": label.kind}
        if label.is_positive:
            g = label.gt_index
            rec["gt_index"] = g
            rec["class"] = regions[g].cls.label
            rec["target"] = list(encode_box(anchor, regions[g].box))
            if g not in masks:
                masks[g] = rasterize_polygon(regions[g].polygon, dims)
            try:
                fg, bg = fg_bg_ratio(anchor, masks[g])
                rec["foreground"], rec["background"] = fg, bg
            except GeometryError:
                rec["foreground"] = rec["background"] = None
        records.append(rec)
    summary = {k: sum(1 for lb in labels if lb.kind == k) for k in ("positive", "negative", "ignore")}
    doc = {
        "image": {"id": image.id if image else None, "width": dims.width, "height": dims.height},
        "config": {"strides": list(cfg.strides), "scales": [list(s) for s in cfg.scales], "ratios": list(cfg.ratios), "clip": cfg.clip},
        "count": len(anchors),
        "labels": summary,
        "anchors": records,
    }
    _write(args.out, json.dumps(doc, indent=1) + "\n")
    return EXIT_OK


def cmd_losscheck(args) -> int:
    if args.samples < 1:
        print("--samples must be >= 1", file=sys.stderr)
        return EXIT_IO
    results = run_gradient_checks((args.gamma,), args.samples, args.seed)
    for r in results:
        print(f"{r.kernel:<22} max_rel_error={r.max_rel_error:.3e}  {'PASS' if r.passed else 'FAIL'}")
    if args.gamma == 0:
        gap = focal_cce_gap(args.samples, args.seed)
        print(f"focal(gamma=0) == cce: max abs difference {gap:.3e}")
    worst = max(results, key=lambda r: r.max_rel_error)
    if not worst.passed:
        print(f"worst offender: {worst.kernel} at {worst.worst_point} (error {worst.max_rel_error:.3e} >= {TOLERANCE:g})")
        return EXIT_INVALID
    print(f"all {len(results)} kernels within {TOLERANCE:g}")
    return EXIT_OK


def cmd_defaults(args) -> int:
    doc = {"training": TRAINING.to_dict(), "run": {
        "thresholds": list(DEFAULT_THRESHOLDS),
        "gamma": DEFAULT_GAMMA,
        "class_key": DEFAULT_CLASS_KEY,
        "flip_prob": DEFAULT_FLIP_PROB,
        "sigma_range": list(DEFAULT_SIGMA_RANGE),
        "copies": DEFAULT_COPIES,
        "pos_thr": DEFAULT_POS_THR,
        "neg_thr": DEFAULT_NEG_THR,
    }}
    _write(args.out, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--class-key", default=DEFAULT_CLASS_KEY, help="VIA region attribute holding the class label")
    common.add_argument("--default-dims", type=_dims, help="WIDTHxHEIGHT for VIA entries without dimensions")

    parser = argparse.ArgumentParser(prog="mosqseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a VIA ground-truth file")
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", parents=[common], help="per-class region counts")
    p.add_argument("--gt", required=True)
    p.add_argument("--format", choices=OUTPUT_FORMATS, default="json")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("evaluate", parents=[common], help="precision/recall/AP report for predictions")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--format", choices=OUTPUT_FORMATS, default="json")
    p.add_argument("--iou-kind", choices=("box", "mask"), default="box")
    p.add_argument("--thresholds", type=_thresholds, default=DEFAULT_THRESHOLDS)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("augment", parents=[common], help="write an augmented VIA dataset")
    p.add_argument("--gt", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flip-prob", type=float, default=DEFAULT_FLIP_PROB)
    p.add_argument("--sigma-min", type=float, default=DEFAULT_SIGMA_RANGE[0])
    p.add_argument("--sigma-max", type=float, default=DEFAULT_SIGMA_RANGE[1])
    p.add_argument("--copies", type=int, default=DEFAULT_COPIES)
    p.add_argument("--rescale", type=_dims, help="rescale every image to WIDTHxHEIGHT first")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("anchors", parents=[common], help="dump anchors, match labels and targets as JSON")
    p.add_argument("--gt")
    p.add_argument("--image-id")
    p.add_argument("--dims", type=_dims, help="grid size when no --gt image is used")
    p.add_argument("--strides", type=_float_list, default=AnchorConfig().strides)
    p.add_argument("--scales", type=_scale_groups, default=AnchorConfig().scales,
                   help="comma list used at every level, or ';'-separated groups per level")
    p.add_argument("--ratios", type=_float_list, default=AnchorConfig().ratios)
    p.add_argument("--clip", action="store_true")
    p.add_argument("--pos-thr", type=float, default=DEFAULT_POS_THR)
    p.add_argument("--neg-thr", type=float, default=DEFAULT_NEG_THR)
    p.add_argument("--positives-only", action="store_true")
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("losscheck", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_losscheck)

    p = sub.add_parser("defaults", parents=[common], help="print recorded training and run defaults")
    p.set_defaults(func=cmd_defaults)
    return parser


def run_config(args) -> RunConfig:
    """Collect the parsed flags into a validated :class:`RunConfig`."""
    kw = {}
    for attr, key in (
        ("gt", "gt_path"), ("pred", "pred_path"), ("out", "out_path"), ("class_key", "class_key"),
        ("thresholds", "thresholds"), ("iou_kind", "iou_kind"), ("format", "output_format"),
        ("gamma", "gamma"), ("seed", "seed"), ("flip_prob", "flip_prob"), ("copies", "copies"),
        ("pos_thr", "pos_thr"), ("neg_thr", "neg_thr"),
    ):
        if getattr(args, attr, None) is not None:
            kw[key] = getattr(args, attr)
    if hasattr(args, "sigma_min"):
        kw["sigma_range"] = (args.sigma_min, args.sigma_max)
    if hasattr(args, "strides"):
        kw["anchors"] = AnchorConfig(args.strides, args.scales, args.ratios, clip=args.clip)
    return RunConfig(**kw)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.config = run_config(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args)
    except _IOFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (AnnotationError, EvaluationError, GeometryError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
