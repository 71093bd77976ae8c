"""Finite-difference verification of the analytic loss gradients.

Scalar kernels are differenced directly in float64.  The aggregate kernels
(summed regression loss, mean mask loss) are differenced from the loss
formula at 50-digit precision, since their float64 values are too coarse
to resolve the smallest per-component gradients at a 1e-6 step.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from mosqseg.geometry import BitMask
from mosqseg.losses import FocalConfig, bce, cce, focal, mask_loss, regressor_loss, smooth_l1

STEP = 1e-6
TOLERANCE = 1e-5
P_RANGE = (0.01, 0.99)
KINK_GUARD = 4 * STEP


@dataclass(frozen=True)
class CheckResult:
    kernel: str
    max_rel_error: float
    worst_point: object
    points: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return np.abs(analytic - numeric) / scale


def _central(fn, x):
    return (fn(x + STEP) - fn(x - STEP)) / (2 * STEP)


def _summarize(name, err, points) -> CheckResult:
    k = int(np.argmax(err))
    return CheckResult(name, float(err[k]), points[k], len(err))


def _away_from_kink(rng, n, lo=-4.0, hi=4.0):
    x = rng.uniform(lo, hi, n)
    bad = np.abs(np.abs(x) - 1.0) < KINK_GUARD
    while bad.any():
        x[bad] = rng.uniform(lo, hi, bad.sum())
        bad = np.abs(np.abs(x) - 1.0) < KINK_GUARD
    return x


def check_cce(rng, n) -> CheckResult:
    p = rng.uniform(*P_RANGE, n)
    num = _central(lambda v: cce(v).value, p)
    return _summarize("cce", relative_error(cce(p).grad, num), p)


def check_bce(rng, n) -> CheckResult:
    p = rng.uniform(*P_RANGE, n)
    y = rng.integers(0, 2, n)
    num = _central(lambda v: bce(v, y).value, p)
    return _summarize("bce", relative_error(bce(p, y).grad, num), list(zip(p, y)))


def check_focal(rng, n, gamma) -> CheckResult:
    cfg = FocalConfig(gamma)
    p = rng.uniform(*P_RANGE, n)
    num = _central(lambda v: focal(v, cfg).value, p)
    return _summarize(f"focal(gamma={gamma:g})", relative_error(focal(p, cfg).grad, num), p)


def check_smooth_l1(rng, n) -> CheckResult:
    x = _away_from_kink(rng, n)
    num = _central(lambda v: smooth_l1(v).value, x)
    return _summarize("smooth_l1", relative_error(smooth_l1(x).grad, num), x)


def _mp_focal(p, gamma):
    return -((1 - p) ** gamma) * mpmath.log(p)


def _mp_smooth_l1(x):
    return x * x / 2 if abs(x) < 1 else abs(x) - mpmath.mpf("0.5")


def check_regressor(rng, n) -> CheckResult:
    """Per-component central differences of the summed smooth-L1.

    The other three residuals are constant under a one-component
    perturbation, so at 50 digits they cancel and only the perturbed term
    is differenced.
    """
    h = mpmath.mpf(STEP)
    errs, pts = [], []
    with mpmath.workdps(50):
        for _ in range(n):
            t_star = rng.uniform(-2, 2, 4)
            t_pred = t_star - _away_from_kink(rng, 4)
            grad = regressor_loss(t_pred, t_star).grad
            num = np.empty(4)
            for i in range(4):
                ts, tp = mpmath.mpf(float(t_star[i])), mpmath.mpf(float(t_pred[i]))
                num[i] = float((_mp_smooth_l1(ts - (tp + h)) - _mp_smooth_l1(ts - (tp - h))) / (2 * h))
            errs.append(relative_error(grad, num).max())
            pts.append((tuple(t_pred), tuple(t_star)))
    return _summarize("regressor_loss", np.array(errs), pts)


def check_mask_loss(rng, n, gamma, size=6) -> CheckResult:
    """Central differences of the mean per-pixel focal loss, one pixel at a time.

    Evaluated at 50 digits: in float64 the rounding of the mean over all
    pixels swamps gradients near ``p_t -> 1`` for large gamma.  Unperturbed
    pixels cancel exactly, leaving the perturbed pixel's term over ``n``.
    """
    cfg = FocalConfig(gamma)
    h = mpmath.mpf(STEP)
    g = mpmath.mpf(gamma)
    errs, pts = [], []
    with mpmath.workdps(50):
        for _ in range(n):
            gt = BitMask(rng.random((size, size)) < 0.3)
            pred = rng.uniform(*P_RANGE, (size, size))
            r, c = (int(v) for v in rng.integers(0, size, 2))
            grad = mask_loss(pred, gt, cfg).grad[r, c]
            p = mpmath.mpf(float(pred[r, c]))
            if gt.bits[r, c]:
                up, down = _mp_focal(p + h, g), _mp_focal(p - h, g)
            else:
                up, down = _mp_focal(1 - (p + h), g), _mp_focal(1 - (p - h), g)
            num = float((up - down) / (2 * h) / pred.size)
            errs.append(float(relative_error(grad, num)))
            pts.append((r, c, float(pred[r, c])))
    return _summarize(f"mask_loss(gamma={gamma:g})", np.array(errs), pts)


def run_gradient_checks(gammas=(0.0, 1.0, 2.0, 5.0), samples: int = 1000, seed: int = 0) -> list[CheckResult]:
    """Check every kernel at ``samples`` random interior points.

    Focal and mask losses are checked once per gamma in ``gammas``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    results = [check_cce(rng, samples), check_bce(rng, samples)]
    results += [check_focal(rng, samples, g) for g in gammas]
    results += [check_smooth_l1(rng, samples), check_regressor(rng, samples)]
    results += [check_mask_loss(rng, samples, g) for g in gammas]
    return results


def focal_cce_gap(samples: int = 1000, seed: int = 0) -> float:
    """Max |focal_{gamma=0}(p) - cce(p)| on random p; exactly 0 when the reduction holds."""
    rng = np.random.Generator(np.random.PCG64(seed))
    p = rng.uniform(*P_RANGE, samples)
    return float(np.max(np.abs(focal(p, FocalConfig(0.0)).value - cce(p).value)))
