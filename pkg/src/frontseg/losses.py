"""Loss values and analytic gradients with respect to the predictions.

Four losses, all reduced by the mean over every pixel in the batch tensor
(batch x H x W), all computed in float64 with a fixed summation order so
repeated evaluations are bit-identical:

* ``bce``: plain binary cross-entropy.
* ``weighted_bce``: per-class weights, intended to carry inverse class
  frequencies computed once over the training split.
* ``dmap_bce``: the prediction is multiplied by the distance-map weight
  inside both log terms, so mistakes near the line band cost more and the
  background is softened by k.
* ``dw_loss``: an earlier distance-weighted formulation kept as a
  comparison baseline.

Predictions and weighted products are clamped to [eps, 1-eps] before any
log; gradients treat the clamp as identity (the derivative is evaluated at
the clamped value).
"""

from __future__ import annotations

import numpy as np

EPS = 1e-7

__all__ = ["EPS", "bce", "weighted_bce", "dmap_bce", "dw_loss", "inverse_frequency_weights", "LOSS_NAMES"]

LOSS_NAMES = ("bce", "wbce", "dmap_bce", "dw")


def _validate(pred, target, weights=None):
    p = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {y.shape}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("targets must be 0 or 1")
    if weights is not None:
        d = np.asarray(weights, dtype=np.float64)
        if d.shape != p.shape:
            raise ValueError(f"weights shape {d.shape} != prediction shape {p.shape}")
        return p, y, d
    return p, y


def bce(pred, target):
    """-mean(y*log(p) + (1-y)*log(1-p)); returns (loss, dloss/dpred)."""
    p, y = _validate(pred, target)
    n = p.size
    pc = np.clip(p, EPS, 1.0 - EPS)
    loss = -np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    grad = (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n
    return float(loss), grad


def weighted_bce(pred, target, class_weights):
    """BCE with the per-pixel term scaled by w_pos where y=1 and w_neg
    where y=0, then averaged over all pixels."""
    w_pos, w_neg = class_weights
    if not (w_pos > 0 and w_neg > 0):
        raise ValueError("class weights must be positive")
    p, y = _validate(pred, target)
    n = p.size
    pc = np.clip(p, EPS, 1.0 - EPS)
    w = np.where(y == 1.0, w_pos, w_neg)
    loss = -np.mean(w * (y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))
    grad = w * (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n
    return float(loss), grad


def dmap_bce(pred, target, weights):
    """BCE through the product p*d: -mean(y*log(p*d) + (1-y)*log(1-p*d)),
    with the product clamped to [eps, 1-eps]."""
    p, y, d = _validate(pred, target, weights)
    if d.min() <= 0 or d.max() > 1:
        raise ValueError("distance-map weights must lie in (0, 1]")
    n = p.size
    q = np.clip(p * d, EPS, 1.0 - EPS)
    loss = -np.mean(y * np.log(q) + (1.0 - y) * np.log1p(-q))
    # dq/dp = d through the clamp
    grad = d * (-(y / q) + (1.0 - y) / (1.0 - q)) / n
    return float(loss), grad


def dw_loss(pred, target, weights, d_max=None):
    """Comparison baseline: mean((1-g)*d*p - g*d_max*log(p)). d_max defaults
    to the maximum of the supplied weight map over the batch."""
    p, g, d = _validate(pred, target, weights)
    if d_max is None:
        d_max = float(d.max())
    if not d_max > 0:
        raise ValueError("d_max must be > 0")
    n = p.size
    pc = np.clip(p, EPS, 1.0 - EPS)
    loss = np.mean((1.0 - g) * d * pc - g * d_max * np.log(pc))
    grad = ((1.0 - g) * d - g * d_max / pc) / n
    return float(loss), grad


def inverse_frequency_weights(positive_pixels, negative_pixels):
    """(w_pos, w_neg) with w_c = total/(2*count_c), computed once over the
    training split. A class that never occurs gets weight 1."""
    total = positive_pixels + negative_pixels
    if total <= 0:
        raise ValueError("empty pixel counts")
    w_pos = total / (2.0 * positive_pixels) if positive_pixels else 1.0
    w_neg = total / (2.0 * negative_pixels) if negative_pixels else 1.0
    return float(w_pos), float(w_neg)
