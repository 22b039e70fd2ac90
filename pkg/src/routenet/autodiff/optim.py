"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              weight_decay: float = 0.0, decay_mask: list[bool] | None = None) -> AdamState:
    """Update ``params`` in place.

    ``weight_decay`` adds the gradient of ``decay * ||W||^2`` (coupled L2, not
    decoupled decay) to every parameter flagged in ``decay_mask``; callers that
    already put the L2 term in their loss pass ``weight_decay=0``.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if weight_decay and (decay_mask is None or decay_mask[i]):
            g = g + 2.0 * weight_decay * p
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        p -= lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + eps)
    return state


class Adam:
    def __init__(self, tensors, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.tensors = list(tensors)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self, grads: list[np.ndarray]):
        adam_step([t.value for t in self.tensors], grads, self.state,
                  self.lr, self.beta1, self.beta2, self.eps)
