"""Annotation I/O, mask encoding and dataset transforms."""

from mosqseg.dataset.rle import RleError, RleMask, decode_rle, encode_rle
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
from mosqseg.dataset.via import (
    DEFAULT_CLASS_KEY,
    Issue,
    JsonSyntaxError,
    PredictionFormatError,
    ViaFormatError,
    dataset_stats,
    parse_predictions,
    parse_via,
    serialize_predictions,
    serialize_via,
    validate_via,
)
from mosqseg.dataset.transforms import (
    TARGET_DIMS,
    apply_augmentation,
    augment,
    gaussian_blur,
    gaussian_kernel,
    hflip,
    hflip_raster,
    rescale,
)
from mosqseg.dataset.pgm import read_pgm, write_pgm

__all__ = [
    "AnatomyClass", "AnnotatedDataset", "AnnotatedImage", "AnnotatedRegion", "AnnotationError",
    "ClassCounts", "DEFAULT_CLASS_KEY", "Detection", "Issue", "JsonSyntaxError",
    "PredictionFormatError", "RleError", "RleMask", "TARGET_DIMS", "ViaFormatError",
    "apply_augmentation", "augment", "dataset_stats", "decode_rle", "encode_rle",
    "gaussian_blur", "gaussian_kernel", "hflip", "hflip_raster", "parse_class_label",
    "parse_predictions", "parse_via", "read_pgm", "rescale", "serialize_predictions",
    "serialize_via", "validate_via", "write_pgm",
]
