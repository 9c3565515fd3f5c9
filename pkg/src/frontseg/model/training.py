"""Seeded training loop: shuffled mini-batches, one of the four losses,
Adam stepped on a triangular cyclic learning rate, pooled validation
metrics after every epoch, and patience-based early stopping on either
validation MCC (maximize) or validation BCE (minimize) with best-snapshot
restoration.

Validation MCC is computed from confusion counts POOLED over the entire
validation split, not averaged per image: per-image MCC is undefined
whenever an image lacks one of the classes, which is the norm for thin-line
targets, while pooled counts are always well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..distmap import DistanceMapParams, build_distance_map
from ..earlystop import EarlyStopper, StopperConfig
from ..losses import bce, dmap_bce, dw_loss, inverse_frequency_weights, weighted_bce
from ..metrics import ConfusionCounts, confusion, mcc
from ..raster import extract_patches, pad_to_multiple, stitch_predictions
from .optim import Adam, CyclicLrSchedule, lr_at

__all__ = ["TrainConfig", "TrainResult", "train", "predict_image"]


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "bce"  # bce | wbce | dmap_bce | dw
    monitor: str = "mcc"  # mcc | bce
    patience: int = 30
    min_delta: float = 0.0
    batch_size: int = 20
    max_epochs: int = 200
    lr_min: float = 1e-7
    lr_max: float = 1e-2
    clr_step_epochs: int = 5
    seed: int = 0
    threshold: float = 0.5
    dmap: DistanceMapParams = field(default_factory=DistanceMapParams)
    dmap_max: float = None  # dw loss cap; None means the batch map maximum

    def __post_init__(self):
        if self.loss not in ("bce", "wbce", "dmap_bce", "dw"):
            raise ValueError(f"unknown loss '{self.loss}'")
        if self.monitor not in ("mcc", "bce"):
            raise ValueError(f"unknown monitor '{self.monitor}'")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


@dataclass
class TrainResult:
    history: list  # one dict per epoch
    best_epoch: int
    best_value: float
    last_epoch: int
    stopped_early: bool


def _check_split(name, images, targets):
    x = np.asarray(images)
    y = np.asarray(targets)
    if x.ndim != 3 or x.shape != y.shape:
        raise ValueError(f"{name} split: need matching (M, H, W) images and targets")
    if x.shape[0] == 0:
        raise ValueError(f"{name} split is empty")
    return x, y


def _make_loss(config, train_targets):
    """Bind the selected loss to its per-split constants. Returns
    f(pred, target, dmaps_or_None) -> (loss, grad)."""
    if config.loss == "bce":
        return lambda p, y, d: bce(p, y)
    if config.loss == "wbce":
        pos = int(train_targets.sum())
        neg = int(train_targets.size - pos)
        weights = inverse_frequency_weights(pos, neg)
        return lambda p, y, d: weighted_bce(p, y, weights)
    if config.loss == "dmap_bce":
        return lambda p, y, d: dmap_bce(p, y, d)
    return lambda p, y, d: dw_loss(p, y, d, d_max=config.dmap_max)


def _needs_dmap(config):
    return config.loss in ("dmap_bce", "dw")


def _validation_scores(net, val_x, val_y, batch_size, threshold):
    """Pooled BCE and pooled-confusion MCC over the whole split."""
    total_pixels = 0
    loss_sum = 0.0
    pooled = ConfusionCounts()
    for lo in range(0, val_x.shape[0], batch_size):
        xb = val_x[lo : lo + batch_size]
        yb = val_y[lo : lo + batch_size]
        prob = net.forward(xb, training=False)
        value, _ = bce(prob, yb)
        loss_sum += value * prob.size
        total_pixels += prob.size
        pooled = pooled + confusion(prob >= threshold, yb)
    return loss_sum / total_pixels, mcc(pooled)


def train(net, train_data, val_data, config):
    """Train in place; on return the network holds the parameters of the
    best epoch under the configured monitor. train_data and val_data are
    (images, targets) arrays of shape (M, H, W) with {0,1} targets; images
    are expected to be normalized already."""
    train_x, train_y = _check_split("train", *train_data)
    val_x, val_y = _check_split("val", *val_data)

    loss_fn = _make_loss(config, train_y)
    dmaps = None
    if _needs_dmap(config):
        dmaps = np.stack(
            [build_distance_map(patch, config.dmap) for patch in train_y.astype(np.uint8)]
        )

    m = train_x.shape[0]
    batches_per_epoch = -(-m // config.batch_size)
    sched = CyclicLrSchedule(config.lr_min, config.lr_max, config.clr_step_epochs * batches_per_epoch)
    adam = Adam(net.params())
    stopper = EarlyStopper(
        StopperConfig(
            mode="maximize" if config.monitor == "mcc" else "minimize",
            patience=config.patience,
            min_delta=config.min_delta,
        )
    )
    rng = np.random.default_rng(config.seed)

    history = []
    best = {"net": net.snapshot(), "adam": adam.snapshot(), "epoch": 0}
    iteration = 0
    stopped = False
    for epoch in range(config.max_epochs):
        perm = rng.permutation(m)
        epoch_losses = []
        lr = sched.lr_min
        for b in range(batches_per_epoch):
            idx = perm[b * config.batch_size : (b + 1) * config.batch_size]
            xb = train_x[idx]
            yb = train_y[idx]
            db = dmaps[idx] if dmaps is not None else None
            prob = net.forward(xb, training=True)
            value, grad = loss_fn(prob, yb, db)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite training loss {value} at epoch {epoch}, batch {b}"
                )
            lr = lr_at(sched, iteration)
            net.backward(grad)
            adam.step(net.grads(), lr)
            iteration += 1
            epoch_losses.append(value)

        val_bce, val_mcc = _validation_scores(net, val_x, val_y, config.batch_size, config.threshold)
        monitored = val_mcc if config.monitor == "mcc" else val_bce
        decision = stopper.observe(epoch, monitored)
        if decision.status == "improved":
            best = {"net": net.snapshot(), "adam": adam.snapshot(), "epoch": epoch}
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(epoch_losses)),
                "val_bce": val_bce,
                "val_mcc": val_mcc,
                "lr": lr,
                "improved": 1 if decision.status == "improved" else 0,
            }
        )
        if decision.status == "stop":
            stopped = True
            break

    net.load_snapshot(best["net"])
    adam.load_snapshot(best["adam"])
    return TrainResult(
        history=history,
        best_epoch=stopper.best_checkpoint(),
        best_value=stopper.best_value,
        last_epoch=history[-1]["epoch"],
        stopped_early=stopped,
    ), adam


def predict_image(net, image, patch_size, batch_size=8):
    """Pad -> patches -> inference forward -> stitch -> crop. The image is
    used as given; apply the same normalization as at training time before
    calling."""
    arr = np.asarray(image, dtype=np.float32)
    divisor = 2**net.spec.depth
    if patch_size % divisor:
        raise ValueError(f"patch_size {patch_size} must be divisible by {divisor}")
    padded, layout = pad_to_multiple(arr, patch_size)
    patches = extract_patches(padded, layout)
    probs = []
    for lo in range(0, len(patches), batch_size):
        batch = np.stack(patches[lo : lo + batch_size])
        out = net.forward(batch, training=False)
        probs.extend(out[i] for i in range(out.shape[0]))
    return stitch_predictions(probs, layout)
