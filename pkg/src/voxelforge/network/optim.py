"""SGD with momentum and weight decay, and the one-cycle learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatchError

MOMENTUM = 0.9
WEIGHT_DECAY = 0.0005

# (epoch, lr) knots; linear in between, flat after the last knot
ONE_CYCLE_KNOTS = ((0.0, 0.01), (10.0, 0.1), (20.0, 0.01), (30.0, 0.0005))
CYCLE_EPOCHS = ONE_CYCLE_KNOTS[-1][0]


def one_cycle_lr(epoch: float) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    xs, ys = zip(*ONE_CYCLE_KNOTS)
    return float(np.interp(epoch, xs, ys))


@dataclass
class OptimState:
    velocity: list = field(default_factory=list)
    momentum: float = MOMENTUM
    weight_decay: float = WEIGHT_DECAY

    @classmethod
    def for_params(cls, params, **kw) -> "OptimState":
        return cls([np.zeros_like(p) for p in params], **kw)


def sgd_momentum_step(params, grads, state: OptimState, lr: float):
    """In place: v <- mu*v - lr*(g + decay*theta); theta <- theta + v. Returns ``params``."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    if not state.velocity:
        state.velocity = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.velocity):
        raise ShapeMismatchError("params, grads and velocity lists differ in length")
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeMismatchError(f"shape mismatch {p.shape} / {g.shape} / {v.shape}")
        v *= state.momentum
        v -= lr * (g + state.weight_decay * p)
        p += v
    return params
