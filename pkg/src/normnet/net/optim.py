"""Adam with bias correction and the exponential step-decay schedule."""

from __future__ import annotations

import numpy as np

BASE_LR = 1e-4
DECAY_RATE = 0.96
DECAY_EVERY = 5000


def lr_schedule(step: int) -> float:
    """Learning rate after ``step`` optimizer steps: staircase decay."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return BASE_LR * DECAY_RATE ** (step // DECAY_EVERY)


class Adam:
    """In-place Adam over a name-keyed parameter dict.

    Moment buffers start at zero; ``step_count`` is the number of updates
    applied, fed back into the bias correction.
    """

    def __init__(self, params: dict[str, np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        missing = set(self.params) - set(grads)
        if missing:
            raise ValueError(f"gradients missing for {sorted(missing)[0]!r}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
