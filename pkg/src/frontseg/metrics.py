"""Confusion-count accumulation, MCC, IOU, Dice, and dilation-based
tolerance evaluation for line masks.

MCC is the headline metric here because it stays informative under extreme
class imbalance: accuracy saturates once the dominant background class is
predicted, while MCC only rewards correlation across both classes.

Tolerance evaluation makes near-misses count: both the predicted and the
ground-truth line masks are dilated by a radius derived from a tolerance in
meters, then overlap metrics are computed on the dilated pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .morphology import dilate

__all__ = [
    "ConfusionCounts",
    "ToleranceSpec",
    "confusion",
    "mcc",
    "iou",
    "dice",
    "evaluate_with_tolerance",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other):
        # associative merge, so per-image counts can be pooled in any fixed order
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred, gt):
    """Pixelwise tallies with class 1 as positive."""
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    p = p.astype(bool)
    g = g.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp, fp, fn, tn)


def mcc(c):
    """(tp*tn - fp*fn) / sqrt((tp+fp)(tp+fn)(tn+fp)(tn+fn)), in [-1, 1].
    Returns 0 when any denominator factor is zero (the random-prediction
    value). Exact integer arithmetic until the final division."""
    f1 = c.tp + c.fp
    f2 = c.tp + c.fn
    f3 = c.tn + c.fp
    f4 = c.tn + c.fn
    if 0 in (f1, f2, f3, f4):
        return 0.0
    numerator = c.tp * c.tn - c.fp * c.fn
    # the factor product is an exact integer; one correctly rounded sqrt of
    # it keeps perfect and inverted predictions at exactly +-1
    return numerator / math.sqrt(f1 * f2 * f3 * f4)


def iou(c):
    """tp / (tp+fp+fn); defined as 1 when both masks are empty."""
    denom = c.tp + c.fp + c.fn
    return c.tp / denom if denom else 1.0


def dice(c):
    """2*tp / (2*tp+fp+fn); defined as 1 when both masks are empty."""
    denom = 2 * c.tp + c.fp + c.fn
    return 2 * c.tp / denom if denom else 1.0


def _round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ToleranceSpec:
    """Tolerance in meters converted to a pixel radius at a given
    resolution. The radius is rounded, so the effective tolerance actually
    applied (radius * resolution) is reported back alongside the metrics."""

    tolerance_m: float
    resolution_m: float

    def __post_init__(self):
        if self.tolerance_m < 0:
            raise ValueError("tolerance_m must be >= 0")
        if self.resolution_m is None or not self.resolution_m > 0:
            raise ValueError("resolution_m must be > 0")

    @property
    def radius_px(self):
        return _round_half_up(self.tolerance_m / self.resolution_m)

    @property
    def effective_tolerance_m(self):
        return self.radius_px * self.resolution_m


def tolerance_confusion(pred_lines, gt_lines, spec):
    """Confusion counts after dilating BOTH masks with a (2r+1) x (2r+1)
    rectangle, so near-misses within the tolerance radius count as hits."""
    r = spec.radius_px
    side = 2 * r + 1
    p = dilate(pred_lines, side) if r > 0 else np.asarray(pred_lines)
    g = dilate(gt_lines, side) if r > 0 else np.asarray(gt_lines)
    return confusion(p, g)


def evaluate_with_tolerance(pred_lines, gt_lines, spec):
    """Overlap metrics on the tolerance-dilated pair. Returns a dict with
    iou, dice, mcc, the radius in pixels and the effective tolerance in
    meters actually applied."""
    c = tolerance_confusion(pred_lines, gt_lines, spec)
    return {
        "iou": iou(c),
        "dice": dice(c),
        "mcc": mcc(c),
        "radius_px": spec.radius_px,
        "effective_tolerance_m": spec.effective_tolerance_m,
    }
