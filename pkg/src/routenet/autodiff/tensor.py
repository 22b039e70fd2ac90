"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy array. Operations on tensors record their inputs
and a closure computing input gradients from the output gradient; calling
``backward`` on a scalar walks that graph once in reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .special import digamma, lgamma

SELU_ALPHA = 1.6732632423543772848170429916717
SELU_SCALE = 1.0507009873554804934193349852946


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False, name: str = "",
                 parents: tuple["Tensor", ...] = (), backward_fn: Callable | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __truediv__ = lambda self, o: div(self, o)
    __rtruediv__ = lambda self, o: div(o, self)
    __matmul__ = lambda self, o: matmul(self, o)
    __neg__ = lambda self: neg(self)
    __getitem__ = lambda self, key: getitem(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents: Sequence[Tensor], backward_fn) -> Tensor:
    parents = tuple(parents)
    if not any(p.requires_grad for p in parents):
        return Tensor(value)
    return Tensor(value, parents=parents, backward_fn=backward_fn)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --- elementwise binary ----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _make(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.value / b.value
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.value, a.shape),
                            _unbroadcast(-g * out / b.value, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,))


# --- linear algebra and shape ----------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _make(a.value @ b.value, (a, b), lambda g: (g @ b.value.T, a.value.T @ g))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(x != y for i, (x, y) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.value for t in tensors], axis=axis), tensors, backward)


def getitem(a, key) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate in the gradient."""
    a = as_tensor(a)
    keys = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (slice, int, np.integer)) or k is None or k is Ellipsis for k in keys)

    def backward(g):
        out = np.zeros_like(a.value)
        if basic:
            out[key] = g
        else:
            np.add.at(out, key, g)
        return (out,)

    return _make(a.value[key], (a,), backward)


def scatter_rows(index: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """``out[index[i]] += values[i]`` for row arrays, via a sparse product."""
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=n)
    m = sparse.csr_matrix((np.ones(index.size), (index, np.arange(index.size))),
                          shape=(n, index.size))
    return np.asarray(m @ values.reshape(index.size, -1)).reshape((n,) + values.shape[1:])


def take_rows(a, index) -> Tensor:
    """Rows of a 2-D tensor selected by an integer array (gather)."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]

    def backward(g):
        return (scatter_rows(index, g, n),)

    if index.size and (index.min() < 0 or index.max() >= n):
        raise ShapeError(f"take_rows: index out of range for {n} rows")
    return _make(a.value[index], (a,), backward)


def segment_sum(a, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets (scatter-add)."""
    a = as_tensor(a)
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.shape[0] != a.shape[0]:
        raise ShapeError(f"segment_sum: {ids.shape[0]} ids for {a.shape[0]} rows")
    return _make(scatter_rows(ids, a.value, num_segments), (a,), lambda g: (g[ids],))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(a.value.sum(axis=axis), (a,), backward)


# --- elementwise unary -----------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.value)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    out = np.logaddexp(0.0, x)
    return _make(out, (a,), lambda g: (g * np.exp(x - out),))


def selu(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    neg_part = SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
    out = SELU_SCALE * np.where(x > 0, x, neg_part)
    dx = SELU_SCALE * np.where(x > 0, 1.0, neg_part + SELU_ALPHA)
    return _make(out, (a,), lambda g: (g * dx,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.value), (a,), lambda g: (g / a.value,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,))


def lgamma_(a) -> Tensor:
    a = as_tensor(a)
    return _make(lgamma(a.value), (a,), lambda g: (g * digamma(a.value),))


def dropout(a, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    a = as_tensor(a)
    if not train or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("train-mode dropout needs an explicit rng")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _make(a.value * keep, (a,), lambda g: (g * keep,))


def gru(state, inp, w_input, w_gates, w_candidate, b) -> Tensor:
    """Fused GRU update for a batch of rows (gate order: update, reset, candidate).

    z = sig(x W_z + h U_z + b_z), r = sig(x W_r + h U_r + b_r),
    c = tanh(x W_c + (r * h) U_c + b_c), h' = h + z (c - h).
    """
    state, inp = as_tensor(state), as_tensor(inp)
    h, xv = state.value, inp.value
    d = h.shape[1]
    if inp.shape[0] != state.shape[0] or w_input.shape != (inp.shape[1], 3 * d) \
            or w_gates.shape != (d, 2 * d) or w_candidate.shape != (d, d):
        raise ShapeError(f"gru: state {state.shape} / input {inp.shape} do not match weights "
                         f"{w_input.shape}, {w_gates.shape}, {w_candidate.shape}")
    x = xv @ w_input.value + b.value
    s = h @ w_gates.value
    zr = _sigmoid(x[:, :2 * d] + s)
    z, r = zr[:, :d], zr[:, d:]
    rh = r * h
    c = np.tanh(x[:, 2 * d:] + rh @ w_candidate.value)
    out = h + z * (c - h)

    def backward(g):
        da_c = g * z * (1.0 - c * c)
        d_rh = da_c @ w_candidate.value.T
        da_zr = np.concatenate([g * (c - h), d_rh * h], axis=1) * zr * (1.0 - zr)
        d_x = np.concatenate([da_zr, da_c], axis=1)
        d_state = g * (1.0 - z) + d_rh * r + da_zr @ w_gates.value.T
        return (d_state, d_x @ w_input.value.T, xv.T @ d_x, h.T @ da_zr, rh.T @ da_c, d_x.sum(axis=0))

    return _make(out, (state, inp, w_input, w_gates, w_candidate, b), backward)


# --- backward --------------------------------------------------------------

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Sequence[Tensor] | None = None) -> dict[int, np.ndarray] | list[np.ndarray]:
    """Reverse-mode sweep from a scalar ``loss``.

    Gradients are accumulated into ``.grad`` of every leaf that requires grad.
    If ``params`` is given, returns their gradients in order (zeros for leaves
    the loss does not depend on).
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    if params is None:
        return {}
    return [p.grad if p.grad is not None else np.zeros_like(p.value) for p in params]


def zero_grad(params: Sequence[Tensor]):
    for p in params:
        p.grad = None
