"""Adam with a step-wise exponentially decayed learning rate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamStore
from .errors import NumericalError


def learning_rate(iteration: int, lr: float = 0.005, decay_rate: float = 0.9,
                  decay_every: int = 50) -> float:
    """lr * decay_rate ** floor(iteration / decay_every)."""
    return lr * decay_rate ** (iteration // decay_every)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParamStore, state: AdamState, lr_t: float, frozen=()) -> None:
    """One bias-corrected Adam update of every parameter not listed in ``frozen``."""
    for name in params.names():
        if not np.all(np.isfinite(params.grads[name])):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    frozen = set(frozen)
    for name in params.names():
        if name in frozen:
            continue
        g = params.grads[name]
        m = state.m.get(name, np.zeros_like(g))
        v = state.v.get(name, np.zeros_like(g))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        params[name] = params[name] - lr_t * m_hat / (np.sqrt(v_hat) + state.eps)
