"""Parameter containers and layers built on the tape primitives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def weight(rng, fan_in, fan_out, name) -> Tensor:
    return Tensor(glorot_uniform(rng, fan_in, fan_out), requires_grad=True, name=name)


def bias(size, name) -> Tensor:
    return Tensor(np.zeros(size), requires_grad=True, name=name)


@dataclass
class GruCell:
    """GRU with gates ordered (update, reset, candidate).

    ``w_input`` maps the input to all three gates, ``w_gates`` maps the state
    to the update/reset gates and ``w_candidate`` maps the reset-gated state to
    the candidate.
    """
    w_input: Tensor      # (d_in, 3 d_h)
    w_gates: Tensor      # (d_h, 2 d_h)
    w_candidate: Tensor  # (d_h, d_h)
    b: Tensor            # (3 d_h,)

    @classmethod
    def init(cls, rng, d_in: int, d_h: int, prefix: str = "gru") -> "GruCell":
        w_in = np.concatenate([glorot_uniform(rng, d_in, d_h) for _ in range(3)], axis=1)
        w_g = np.concatenate([glorot_uniform(rng, d_h, d_h) for _ in range(2)], axis=1)
        return cls(Tensor(w_in, True, f"{prefix}.w_input"), Tensor(w_g, True, f"{prefix}.w_gates"),
                   weight(rng, d_h, d_h, f"{prefix}.w_candidate"), bias(3 * d_h, f"{prefix}.b"))

    @property
    def d_in(self) -> int:
        return self.w_input.shape[0]

    @property
    def d_h(self) -> int:
        return self.w_candidate.shape[0]

    def params(self) -> list[Tensor]:
        return [self.w_input, self.w_gates, self.w_candidate, self.b]

    def weights(self) -> list[Tensor]:
        return [self.w_input, self.w_gates, self.w_candidate]


def gru_step(cell: GruCell, state, inp) -> Tensor:
    """One GRU update for a batch of rows: ``h' = (1 - z) h + z tanh(...)``."""
    state, inp = T.as_tensor(state), T.as_tensor(inp)
    squeeze = state.ndim == 1
    if squeeze:
        state = T.reshape(state, (1, -1))
        inp = T.reshape(inp, (1, -1))
    if state.shape[1] != cell.d_h or inp.shape[1] != cell.d_in:
        raise T.ShapeError(f"gru_step: state {state.shape} / input {inp.shape} do not match "
                           f"cell (d_in={cell.d_in}, d_h={cell.d_h})")
    out = T.gru(state, inp, cell.w_input, cell.w_gates, cell.w_candidate, cell.b)
    return T.reshape(out, (-1,)) if squeeze else out


@dataclass
class Dense:
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng, d_in: int, d_out: int, prefix: str) -> "Dense":
        return cls(weight(rng, d_in, d_out, f"{prefix}.w"), bias(d_out, f"{prefix}.b"))

    def __call__(self, x) -> Tensor:
        return T.add(T.matmul(x, self.w), self.b)

    def params(self) -> list[Tensor]:
        return [self.w, self.b]


def l2_penalty(weights, decay: float) -> Tensor:
    """``decay * sum ||W||^2`` over the given weight matrices."""
    total = None
    for w in weights:
        term = T.sum(T.square(w))
        total = term if total is None else T.add(total, term)
    return T.mul(total, decay)
