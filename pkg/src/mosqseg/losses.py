"""Classification, mask and box-regression loss kernels with analytic gradients.

All logs are natural.  Kernels accept a scalar or an array and return a
:class:`LossValue` of the same shape; ``grad`` is the derivative of the loss
with respect to the probability (or residual) argument.  ``p = 0`` is a
domain error rather than being clamped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from mosqseg.geometry import BitMask

DEFAULT_GAMMA = 2.0


class LossDomainError(ValueError):
    pass


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")


@dataclass(frozen=True)
class LossValue:
    value: Any
    grad: Any


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _prob(p, lo_open=True, hi_open=False, name="p"):
    arr = np.asarray(p, dtype=float)
    lo_bad = arr <= 0 if lo_open else arr < 0
    hi_bad = arr >= 1 if hi_open else arr > 1
    if np.any(lo_bad | hi_bad | ~np.isfinite(arr)):
        lo = "(" if lo_open else "["
        hi = ")" if hi_open else "]"
        raise LossDomainError(f"{name} must lie in {lo}0, 1{hi}")
    return arr


def cce(p) -> LossValue:
    """Cross entropy of the ground-truth-class probability: ``-ln p``."""
    p = _prob(p)
    return LossValue(_out(-np.log(p)), _out(-1.0 / p))


def bce(p, y) -> LossValue:
    """Binary cross entropy of positive-class probability ``p`` for label ``y``."""
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise LossDomainError("labels must be 0 or 1")
    arr = np.asarray(p, dtype=float)
    # p may touch the bound of the favoured class only
    pos_bad = (y == 1) & ~((arr > 0) & (arr <= 1))
    neg_bad = (y == 0) & ~((arr >= 0) & (arr < 1))
    if np.any(pos_bad | neg_bad):
        raise LossDomainError("p must be in (0, 1] for y=1 and [0, 1) for y=0")
    with np.errstate(divide="ignore"):
        value = np.where(y == 1, -np.log(np.where(y == 1, arr, 1.0)), -np.log1p(-np.where(y == 0, arr, 0.0)))
        grad = np.where(y == 1, -1.0 / np.where(y == 1, arr, 1.0), 1.0 / (1.0 - np.where(y == 0, arr, 0.0)))
    return LossValue(_out(value), _out(grad))


def focal(p, cfg: FocalConfig = FocalConfig()) -> LossValue:
    """Focal loss ``-(1-p)^gamma ln p`` and its derivative in ``p``."""
    p = _prob(p)
    g = cfg.gamma
    q = 1.0 - p
    logp = np.log(p)
    mod = q**g
    value = -mod * logp
    if g == 0:
        grad = -1.0 / p
    else:
        # gamma * q^(gamma-1) * ln p -> 0 as p -> 1 for every gamma > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            first = np.where(q > 0, g * q ** (g - 1.0) * logp, 0.0)
        grad = first - mod / p
    return LossValue(_out(value + 0.0), _out(grad))


def smooth_l1(x) -> LossValue:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise LossDomainError("residual must be finite")
    small = np.abs(x) < 1
    value = np.where(small, 0.5 * x * x, np.abs(x) - 0.5)
    grad = np.where(small, x, np.sign(x))
    return LossValue(_out(value), _out(grad))


def regressor_loss(t_pred: Sequence[float], t_star: Sequence[float]) -> LossValue:
    """Sum of smooth-L1 over the four offset residuals ``t_star - t_pred``.

    ``grad`` is the 4-vector of derivatives with respect to ``t_pred``.
    """
    tp = np.asarray(t_pred, dtype=float)
    ts = np.asarray(t_star, dtype=float)
    if tp.shape != (4,) or ts.shape != (4,):
        raise ValueError("regression targets must have four components")
    per = smooth_l1(ts - tp)
    return LossValue(float(np.sum(per.value)), -np.asarray(per.grad))


def mask_loss(pred, gt: BitMask, cfg: FocalConfig = FocalConfig()) -> LossValue:
    """Mean per-pixel focal loss of a probability grid against a binary mask.

    Foreground pixels score ``pred``, background pixels ``1 - pred``.
    ``grad`` is the gradient grid with respect to ``pred``.
    """
    pred = np.asarray(pred, dtype=float)
    if pred.shape != gt.bits.shape:
        raise LossDomainError(f"prediction shape {pred.shape} does not match mask {gt.bits.shape}")
    if np.any((pred <= 0) | (pred >= 1) | ~np.isfinite(pred)):
        raise LossDomainError("mask probabilities must lie in (0, 1)")
    fg = gt.bits
    pt = np.where(fg, pred, 1.0 - pred)
    per = focal(pt, cfg)
    n = pred.size
    sign = np.where(fg, 1.0, -1.0)
    return LossValue(float(np.sum(per.value) / n), sign * np.asarray(per.grad) / n)


def mean_bce_mask(pred, gt: BitMask) -> float:
    """Mean BCE over a probability grid; the gamma = 0 counterpart of :func:`mask_loss`."""
    pred = np.asarray(pred, dtype=float)
    return float(np.mean(bce(pred, gt.bits.astype(int)).value))
