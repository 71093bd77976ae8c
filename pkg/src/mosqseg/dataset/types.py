from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Optional

from mosqseg.geometry import BoundingBox, GridDims, Polygon
from mosqseg.dataset.rle import RleMask


class AnnotationError(ValueError):
    """Base class for annotation / prediction content errors."""


class AnatomyClass(enum.IntEnum):
    """The four anatomical components, ordinal = report row order."""

    THORAX = 0
    ABDOMEN = 1
    WING = 2
    LEG = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def title(self) -> str:
        return self.name.capitalize()


_LABEL_ALIASES = {
    "thorax": AnatomyClass.THORAX,
    "abdomen": AnatomyClass.ABDOMEN,
    "wing": AnatomyClass.WING,
    "wings": AnatomyClass.WING,
    "leg": AnatomyClass.LEG,
    "legs": AnatomyClass.LEG,
}


def parse_class_label(label: str) -> AnatomyClass:
    """Case-insensitive label lookup; plural ``wings``/``legs`` accepted.

    Raises:
        KeyError: label is not one of the four classes.
    """
    if not isinstance(label, str):
        raise KeyError(label)
    return _LABEL_ALIASES[label.strip().lower()]


@dataclass(frozen=True, slots=True)
class AnnotatedRegion:
    cls: AnatomyClass
    polygon: Polygon

    @property
    def box(self) -> BoundingBox:
        return self.polygon.bounds()


@dataclass(frozen=True)
class AnnotatedImage:
    """One image's ground truth.

    ``attributes`` carries VIA ``file_attributes`` through untouched; the
    augmenter records its transform parameters there.
    """

    id: str
    dims: GridDims
    regions: tuple[AnnotatedRegion, ...] = ()
    attributes: dict[str, Any] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if not self.id:
            raise AnnotationError("image id must be non-empty")
        object.__setattr__(self, "regions", tuple(self.regions))


@dataclass(frozen=True)
class AnnotatedDataset:
    images: tuple[AnnotatedImage, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        seen = set()
        for img in self.images:
            if img.id in seen:
                raise AnnotationError(f"duplicate image id {img.id!r}")
            seen.add(img.id)

    def __len__(self):
        return len(self.images)

    def by_id(self) -> dict[str, AnnotatedImage]:
        return {img.id: img for img in self.images}


@dataclass(frozen=True, slots=True)
class Detection:
    image_id: str
    cls: AnatomyClass
    score: float
    box: BoundingBox
    mask: Optional[RleMask] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise AnnotationError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class ClassCounts:
    """Region counts per class plus the number of images."""

    counts: dict[AnatomyClass, int]
    images: int

    def __getitem__(self, cls: AnatomyClass) -> int:
        return self.counts.get(cls, 0)

    def as_dict(self) -> dict[str, int]:
        out = {"images": self.images}
        out.update({c.label: self[c] for c in AnatomyClass})
        return out
