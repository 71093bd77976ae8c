"""Preprocessing and augmentation: rescaling, horizontal flips, Gaussian blur.

Annotations carry no pixels, so :func:`augment` works on geometry and
records what it did (flip, blur sigma) in each copy's ``attributes``;
:func:`apply_augmentation` replays that record on a raster.
"""

from __future__ import annotations

import math
import os
from dataclasses import replace

import numpy as np

from mosqseg.geometry import GridDims, Polygon
from mosqseg.dataset.types import AnnotatedDataset, AnnotatedImage, AnnotatedRegion

TARGET_DIMS = GridDims(1024, 1024)
DEFAULT_COPIES = 2  # 500 originals -> 1500 training images
DEFAULT_FLIP_PROB = 0.5
DEFAULT_SIGMA_RANGE = (0.5, 2.0)


def _map_regions(img: AnnotatedImage, fn) -> tuple[AnnotatedRegion, ...]:
    return tuple(
        AnnotatedRegion(r.cls, Polygon(tuple(fn(x, y) for x, y in r.polygon.vertices)))
        for r in img.regions
    )


def rescale(img: AnnotatedImage, target: GridDims = TARGET_DIMS) -> AnnotatedImage:
    sx = target.width / img.dims.width
    sy = target.height / img.dims.height
    if sx == 1.0 and sy == 1.0:
        return img
    regions = _map_regions(img, lambda x, y: (x * sx, y * sy))
    return replace(img, dims=target, regions=regions)


def hflip(img: AnnotatedImage) -> AnnotatedImage:
    """Mirror left-to-right: every vertex ``x`` becomes ``width - x``."""
    w = img.dims.width
    return replace(img, regions=_map_regions(img, lambda x, y: (w - x, y)))


def hflip_raster(raster: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(raster)[:, ::-1])


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at radius ``ceil(3 * sigma)``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=float)
    w = np.exp(-0.5 * (k / sigma) ** 2)
    return w / w.sum()


def _convolve_axis(grid: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    # numpy "symmetric" repeats the edge sample (half-sample reflection)
    padded = np.pad(grid, pad, mode="symmetric")
    n = grid.shape[axis]
    out = np.zeros_like(grid, dtype=float)
    for i, wt in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + n)
        out += wt * padded[tuple(sl)]
    return out


def gaussian_blur(raster, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2-D real grid with reflect padding."""
    kernel = gaussian_kernel(sigma)
    grid = np.asarray(raster, dtype=float)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
    return _convolve_axis(_convolve_axis(grid, kernel, 1), kernel, 0)


def _copy_id(image_id: str, k: int) -> str:
    stem, ext = os.path.splitext(image_id)
    return f"{stem}_aug{k}{ext}"


def augment(
    ds: AnnotatedDataset,
    seed: int,
    flip_prob: float = DEFAULT_FLIP_PROB,
    sigma_range: tuple[float, float] = DEFAULT_SIGMA_RANGE,
    copies: int = DEFAULT_COPIES,
) -> AnnotatedDataset:
    """Originals followed, per image, by ``copies`` randomly transformed copies.

    Each copy flips with probability ``flip_prob`` and draws a blur sigma
    uniformly from ``sigma_range`` (a sigma of 0 means no blur).  All draws
    come from one PCG64 stream seeded with ``seed`` and consumed in dataset
    order, so output is reproducible across platforms.
    """
    lo, hi = sigma_range
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError(f"flip_prob must be in [0, 1], got {flip_prob}")
    if lo < 0 or hi < lo:
        raise ValueError(f"bad sigma range {sigma_range}")
    if copies < 0:
        raise ValueError("copies must be >= 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for img in ds.images:
        out.append(img)
        for k in range(1, copies + 1):
            flip = bool(rng.random() < flip_prob)
            sigma = float(rng.uniform(lo, hi))
            aug = hflip(img) if flip else img
            attrs = dict(img.attributes)
            attrs["augmentation"] = {"source": img.id, "flip": flip, "blur_sigma": sigma}
            out.append(replace(aug, id=_copy_id(img.id, k), attributes=attrs))
    return AnnotatedDataset(tuple(out))


def apply_augmentation(raster, record: dict) -> np.ndarray:
    """Replay an augmentation record (as stored by :func:`augment`) on pixels."""
    grid = np.asarray(raster, dtype=float)
    if record.get("flip"):
        grid = hflip_raster(grid)
    sigma = float(record.get("blur_sigma", 0.0))
    if sigma > 0:
        grid = gaussian_blur(grid, sigma)
    return grid
