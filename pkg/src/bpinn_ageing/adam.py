"""Adam optimizer over flat parameter vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")


class Adam:
    """Bias-corrected Adam.  ``step`` updates ``params`` in place."""

    def __init__(self, n: int, config: AdamConfig = AdamConfig()):
        self.config = config
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        c = self.config
        self.t += 1
        self.m *= c.beta1
        self.m += (1 - c.beta1) * grad
        self.v *= c.beta2
        self.v += (1 - c.beta2) * grad * grad
        lr_t = c.lr * np.sqrt(1 - c.beta2 ** self.t) / (1 - c.beta1 ** self.t)
        params -= lr_t * self.m / (np.sqrt(self.v) + c.eps * np.sqrt(1 - c.beta2 ** self.t))
        return params
