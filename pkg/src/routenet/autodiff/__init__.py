"""Minimal float64 reverse-mode autodiff with the layers the model needs."""
from . import tensor as ops
from .nn import Dense, GruCell, gru_step, l2_penalty
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, backward, zero_grad

__all__ = ["ops", "Tensor", "backward", "zero_grad", "GruCell", "gru_step", "Dense",
           "l2_penalty", "Adam", "AdamState", "adam_step"]
