"""Momentum SGD and the annealed learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

from .autograd import Parameter


@dataclass(frozen=True)
class LrSchedule:
    """eta(progress) = eta0 / (1 + alpha * progress) ** beta, progress in [0,1]."""

    eta0: float = 0.01
    alpha: float = 10.0
    beta: float = 0.75

    def __post_init__(self):
        if self.eta0 <= 0 or self.alpha < 0 or self.beta < 0:
            raise ValueError(f"invalid schedule parameters: {self}")


def lr_at(schedule: LrSchedule, progress: float) -> float:
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0,1], got {progress}")
    return schedule.eta0 / (1.0 + schedule.alpha * progress) ** schedule.beta


def sgd_step(params: list[Parameter], lr: float, momentum: float):
    """v <- momentum*v + grad; value <- value - lr*v; gradients zeroed."""
    for p in params:
        p.momentum *= momentum
        p.momentum += p.grad
        p.data -= lr * p.momentum
        p.grad[...] = 0.0
