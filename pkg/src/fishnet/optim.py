"""Stochastic gradient descent with classical momentum and L2 weight decay.

The update, per parameter tensor w with gradient g and velocity v:

    v <- momentum * v - lr * (g + weight_decay * w)
    w <- w + v

Decay couples into the gradient (L2 style, applied to weights and biases
alike).  Velocities persist across steps and epochs; training drivers reset
them only at fold boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SgdConfig:
    lr: float = 0.01
    momentum: float = 0.8
    weight_decay: float = 1e-6
    batch_size: int = 24
    epochs_per_fold: int = 100

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs_per_fold < 1:
            raise ValueError(f"epochs_per_fold must be >= 1, got {self.epochs_per_fold}")


@dataclass
class ParamState:
    """Parameter tensors plus shape-matched velocity buffers (zero-initialized)."""

    params: list[np.ndarray]
    velocities: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.velocities:
            self.velocities = [np.zeros_like(p) for p in self.params]
        if len(self.velocities) != len(self.params):
            raise ValueError("one velocity buffer per parameter required")
        for p, v in zip(self.params, self.velocities):
            if p.shape != v.shape:
                raise ValueError(
                    f"velocity shape {v.shape} does not match parameter {p.shape}"
                )


def sgd_step(state: ParamState, grads: list[np.ndarray], cfg: SgdConfig) -> ParamState:
    """Apply one momentum-SGD update in place; returns the same state."""
    if len(grads) != len(state.params):
        raise ValueError(
            f"got {len(grads)} gradients for {len(state.params)} parameters"
        )
    for w, v, g in zip(state.params, state.velocities, grads):
        if g.shape != w.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {w.shape}"
            )
        v *= cfg.momentum
        v -= cfg.lr * (g + cfg.weight_decay * w)
        w += v
    return state
