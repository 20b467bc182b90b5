"""Adam and the learning-rate schedules."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ..exceptions import ShapeError
from ..nets.layers import ParamSet

DEFAULT_BETA1 = 0.9
DECAY_BETA1 = 0.5
DEFAULT_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moments per parameter plus the step counter."""

    lr: float
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, params: ParamSet, lr: float) -> AdamState:
        return cls(
            lr=lr,
            m={name: np.zeros_like(a) for name, a in params.items()},
            v={name: np.zeros_like(a) for name, a in params.items()},
        )


def adam_step(
    params: ParamSet, grads: Mapping[str, np.ndarray], state: AdamState
) -> tuple[ParamSet, AdamState]:
    """One bias-corrected Adam update, using ``state.lr`` and ``state.beta1``.

    Parameters without an entry in ``grads`` are left untouched. Arrays in ``params``
    are replaced, not mutated.
    """
    state.step += 1
    t = state.step
    for name, grad in grads.items():
        if name not in params:
            raise ShapeError(f"Gradient for unknown parameter {name}")
        if grad.shape != params[name].shape:
            raise ShapeError(
                f"Gradient shape {grad.shape} for {name} of shape {params[name].shape}"
            )
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * grad * grad
        m_hat = state.m[name] / (1.0 - state.beta1**t)
        v_hat = state.v[name] / (1.0 - state.beta2**t)
        params[name] = params[name] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


class DecaySchedule(Protocol):
    lr: float
    total_updates: int
    decay_updates: int


def lr_schedule(step: int, cfg: DecaySchedule) -> tuple[float, float]:
    """(learning rate, beta1) at ``step``.

    Constant ``lr`` and beta1 = 0.9 until the last ``decay_updates`` updates; then the
    rate falls linearly to 0 at ``total_updates`` and beta1 drops to 0.5.
    """
    if not 0 <= step <= cfg.total_updates:
        raise ValueError(f"step {step} outside [0, {cfg.total_updates}]")
    decay_start = cfg.total_updates - cfg.decay_updates
    if cfg.decay_updates == 0 or step < decay_start:
        return cfg.lr, DEFAULT_BETA1
    return cfg.lr * (cfg.total_updates - step) / cfg.decay_updates, DECAY_BETA1


def exponential_decay(
    epoch: int, lr: float, decay_rate: float, decay_every: int, decay_start_epoch: int
) -> float:
    """Learning rate at ``epoch``: multiplied by ``decay_rate`` once per ``decay_every``
    epochs elapsed since ``decay_start_epoch``."""
    if decay_every < 1:
        raise ValueError("decay_every must be at least 1")
    return lr * decay_rate ** (max(0, epoch - decay_start_epoch) // decay_every)
