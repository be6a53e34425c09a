"""SGD with momentum, weight decay, and the poly learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ConfigError, ContractError
from .tensor import Array, Tensor

NamedParams = Iterable[tuple[str, Tensor]]


@dataclass
class SgdState:
    """Optimizer state: per-parameter velocities plus schedule constants.

    lr(iter) = base_lr * (1 - iter/max_iter) ** power, which equals
    base_lr at iter 0 and decreases strictly for power > 0.
    """

    max_iter: int
    base_lr: float = 0.007
    momentum: float = 0.9
    weight_decay: float = 5e-4
    power: float = 0.9
    iter: int = 0
    velocity: dict[str, Array] = field(default_factory=dict)

    def __post_init__(self):
        if self.max_iter <= 0:
            raise ConfigError(f"max_iter must be positive, got {self.max_iter}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0,1), got {self.momentum}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if self.power < 0:
            raise ConfigError(f"power must be nonnegative, got {self.power}")
        if self.iter < 0:
            raise ConfigError(f"iter must be nonnegative, got {self.iter}")


def poly_lr(state: SgdState) -> float:
    return state.base_lr * (1.0 - state.iter / state.max_iter) ** state.power


def sgd_step(params: NamedParams, state: SgdState) -> None:
    """One in-place update: v <- m*v + g + wd*p; p <- p - lr*v.

    Parameters without a populated gradient are treated as zero-gradient
    (their velocity and weight decay still apply).
    """
    lr = poly_lr(state)
    if lr <= 0:
        raise ConfigError(
            f"learning rate is non-positive at iter {state.iter}/{state.max_iter}")
    for name, p in params:
        grad = p.grad if p.grad is not None else np.zeros(p.shape)
        if grad.shape != p.data.shape:
            raise ContractError(
                f"gradient shape {list(grad.shape)} does not match parameter "
                f"'{name}' of shape {list(p.shape)}")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros(p.shape)
        elif v.shape != p.data.shape:
            raise ContractError(
                f"velocity shape {list(v.shape)} does not match parameter "
                f"'{name}' of shape {list(p.shape)}")
        v = state.momentum * v + grad + state.weight_decay * p.data
        state.velocity[name] = v
        p.data = p.data - lr * v
    state.iter += 1


def zero_grads(params: NamedParams) -> None:
    for _, p in params:
        p.grad = None
