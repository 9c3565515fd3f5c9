"""Adam with bias correction, and the triangular cyclic learning-rate
schedule that sweeps linearly between lr_min and lr_max with a fixed
half-cycle length in iterations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Adam", "CyclicLrSchedule", "lr_at"]


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)  # (name, array) pairs, arrays updated in place
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(arr) for _, arr in self.params]
        self.v = [np.zeros_like(arr) for _, arr in self.params]
        self.t = 0

    def step(self, grads, lr):
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for (name, p), m, v, g in zip(self.params, self.m, self.v, grads):
            if g.shape != p.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.isfinite(g).all():
                raise ValueError(f"{name}: non-finite gradient")
            g = g.astype(p.dtype, copy=False)
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

    def snapshot(self):
        return {
            "t": self.t,
            "m": [a.copy() for a in self.m],
            "v": [a.copy() for a in self.v],
        }

    def load_snapshot(self, snap):
        self.t = snap["t"]
        for dst, src in zip(self.m, snap["m"]):
            np.copyto(dst, src)
        for dst, src in zip(self.v, snap["v"]):
            np.copyto(dst, src)


@dataclass(frozen=True)
class CyclicLrSchedule:
    lr_min: float
    lr_max: float
    step_size: int  # iterations per half cycle

    def __post_init__(self):
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError("need 0 < lr_min <= lr_max")
        if self.step_size < 1:
            raise ValueError("step_size must be >= 1")


def lr_at(sched, iteration):
    """Triangular wave: lr_min at iteration 0, lr_max after step_size
    iterations, back to lr_min after 2*step_size, repeating."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    s = sched.step_size
    cycle = math.floor(1 + iteration / (2 * s))
    x = abs(iteration / s - 2 * cycle + 1)
    return sched.lr_min + (sched.lr_max - sched.lr_min) * max(0.0, 1.0 - x)
