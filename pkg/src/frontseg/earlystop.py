"""Patience-based early stopping with best-state restoration.

A pure state machine over the observed per-epoch validation values: it is
fed one value per epoch and answers improved / waiting / stop. Improvement
is strict (ties keep the earlier best), so the restored checkpoint is always
the FIRST epoch that attained the best value, and when a stop fires the
distance between the stop epoch and the best epoch equals the patience
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["StopperConfig", "Decision", "EarlyStopper"]


@dataclass(frozen=True)
class StopperConfig:
    mode: str = "maximize"
    patience: int = 30
    min_delta: float = 0.0

    def __post_init__(self):
        if self.mode not in ("maximize", "minimize"):
            raise ValueError("mode must be 'maximize' or 'minimize'")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.min_delta < 0:
            raise ValueError("min_delta must be >= 0")


@dataclass(frozen=True)
class Decision:
    status: str  # "improved" | "waiting" | "stop"
    wait: int
    best_value: float
    best_epoch: int


class EarlyStopper:
    def __init__(self, config):
        self.config = config
        self.best_value = None
        self.best_epoch = None
        self.epochs_since_improvement = 0
        self.stopped = False
        self._last_epoch = None

    def _improved(self, value):
        if self.best_value is None:
            return True  # the first observation always establishes a best
        if self.config.mode == "maximize":
            return value > self.best_value + self.config.min_delta
        return value < self.best_value - self.config.min_delta

    def observe(self, epoch, value):
        """Feed one epoch's monitored value; epochs must arrive in strictly
        increasing order."""
        if self.stopped:
            raise RuntimeError("stopper already fired; no further observations accepted")
        if self._last_epoch is not None and epoch <= self._last_epoch:
            raise ValueError(f"epoch {epoch} not after previous epoch {self._last_epoch}")
        self._last_epoch = epoch
        if self._improved(value):
            self.best_value = float(value)
            self.best_epoch = epoch
            self.epochs_since_improvement = 0
            status = "improved"
        else:
            self.epochs_since_improvement += 1
            if self.epochs_since_improvement >= self.config.patience:
                self.stopped = True
                status = "stop"
            else:
                status = "waiting"
        return Decision(status, self.epochs_since_improvement, self.best_value, self.best_epoch)

    def best_checkpoint(self):
        """Epoch index whose snapshot should be restored."""
        if self.best_epoch is None:
            raise RuntimeError("no observations yet")
        return self.best_epoch
