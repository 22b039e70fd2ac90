import math

import numpy as np
import pytest
from scipy import special as sp

from routenet.autodiff import checkpoint, ops as T
from routenet.autodiff.nn import Dense, GruCell, glorot_uniform, gru_step, l2_penalty
from routenet.autodiff.optim import Adam, AdamState, adam_step
from routenet.autodiff.special import digamma, lgamma
from routenet.autodiff.tensor import ShapeError, Tensor, backward

from _fd import check

SEEDS = range(20)


def leaf(rng, *shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, shape), requires_grad=True)


def weights_for(rng, shape):
    # fixed random projection turns any output into a scalar with a nontrivial gradient
    return rng.normal(size=shape)


def scalarize(out, w):
    return T.sum(T.mul(out, w))


UNARY = {
    "neg": (T.neg, -2, 2),
    "square": (T.square, -2, 2),
    "sigmoid": (T.sigmoid, -4, 4),
    "tanh": (T.tanh, -3, 3),
    "softplus": (T.softplus, -5, 5),
    "selu_pos": (T.selu, 0.05, 3),
    "selu_neg": (T.selu, -3, -0.05),
    "log": (T.log, 0.2, 5),
    "exp": (T.exp, -2, 2),
    "lgamma": (T.lgamma_, 0.3, 8),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@pytest.mark.parametrize("seed", SEEDS)
def test_unary_gradients(name, seed):
    fn, lo, hi = UNARY[name]
    rng = np.random.default_rng(seed)
    x = leaf(rng, 3, 4, lo=lo, hi=hi)
    w = weights_for(rng, (3, 4))
    assert check(lambda: scalarize(fn(x), w), [x]) < 1e-5


BINARY = {
    "add": T.add, "sub": T.sub, "mul": T.mul,
    "div": lambda a, b: T.div(a, T.add(T.square(b), 0.5)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
@pytest.mark.parametrize("seed", SEEDS)
def test_binary_gradients_with_broadcast(name, seed):
    rng = np.random.default_rng(seed)
    a, b = leaf(rng, 3, 4), leaf(rng, 4)
    w = weights_for(rng, (3, 4))
    assert check(lambda: scalarize(BINARY[name](a, b), w), [a, b]) < 1e-5


@pytest.mark.parametrize("seed", SEEDS)
def test_structural_gradients(seed):
    rng = np.random.default_rng(seed)
    a, b = leaf(rng, 5, 3), leaf(rng, 3, 2)
    c = leaf(rng, 2, 3)
    idx = rng.integers(0, 5, 7)
    seg = rng.integers(0, 4, 5)
    w = {k: weights_for(rng, s) for k, s in
         [("mm", (5, 2)), ("cat", (7, 3)), ("take", (7, 3)), ("seg", (4, 3)), ("rs", (15,)), ("gi", (3,)),
          ("fancy", (4, 3))]}
    cases = {
        "matmul": lambda: scalarize(T.matmul(a, b), w["mm"]),
        "concat": lambda: scalarize(T.concat([a, c], axis=0), w["cat"]),
        "take_rows": lambda: scalarize(T.take_rows(a, idx), w["take"]),
        "segment_sum": lambda: scalarize(T.segment_sum(a, seg, 4), w["seg"]),
        "reshape": lambda: scalarize(T.reshape(a, (15,)), w["rs"]),
        "getitem": lambda: scalarize(a[1:4, 1], w["gi"]),
        "getitem_fancy": lambda: scalarize(a[np.array([0, 0, 2, 4])], w["fancy"]),
        "sum_axis": lambda: scalarize(T.sum(a, axis=0), w["gi"]),
    }
    for name, f in cases.items():
        inputs = [a, b] if name == "matmul" else [a, c] if name == "concat" else [a]
        assert check(f, inputs) < 1e-5, name


@pytest.mark.parametrize("seed", SEEDS)
def test_dropout_gradient_with_fixed_mask(seed):
    rng = np.random.default_rng(seed)
    x = leaf(rng, 6, 5)
    w = weights_for(rng, (6, 5))
    f = lambda: scalarize(T.dropout(x, 0.5, True, np.random.default_rng(seed)), w)
    assert check(f, [x]) < 1e-5


@pytest.mark.parametrize("seed", SEEDS)
def test_fused_gru_gradient(seed):
    rng = np.random.default_rng(seed)
    cell = GruCell.init(rng, 3, 4)
    cell.b.value = rng.normal(size=cell.b.shape) * 0.3
    h, x = leaf(rng, 5, 4), leaf(rng, 5, 3)
    w = weights_for(rng, (5, 4))
    assert check(lambda: scalarize(gru_step(cell, h, x), w), [h, x] + cell.params()) < 1e-5


def test_gru_matches_textbook_equations():
    rng = np.random.default_rng(0)
    cell = GruCell.init(rng, 3, 4)
    cell.b.value = rng.normal(size=12)
    h, x = rng.normal(size=(2, 4)), rng.normal(size=(2, 3))
    sig = lambda v: 1 / (1 + np.exp(-v))
    wi, wg, wc, b = (t.value for t in cell.params())
    z = sig(x @ wi[:, :4] + h @ wg[:, :4] + b[:4])
    r = sig(x @ wi[:, 4:8] + h @ wg[:, 4:] + b[4:8])
    c = np.tanh(x @ wi[:, 8:] + (r * h) @ wc + b[8:])
    np.testing.assert_allclose(gru_step(cell, h, x).value, (1 - z) * h + z * c, rtol=1e-12)
    # single row input is accepted as 1-D
    np.testing.assert_allclose(gru_step(cell, h[0], x[0]).value.reshape(-1), ((1 - z) * h + z * c)[0],
                               rtol=1e-12)


def test_shape_errors():
    rng = np.random.default_rng(0)
    cell = GruCell.init(rng, 3, 4)
    with pytest.raises(ShapeError):
        gru_step(cell, np.zeros((2, 4)), np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(4)))
    with pytest.raises(ShapeError):
        backward(T.mul(Tensor(np.ones(3), True), 2.0))


def test_backward_accumulates_and_shared_nodes():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = T.mul(x, x)
    loss = T.sum(T.add(y, y))  # d/dx 2x^2 = 4x
    (g,) = backward(loss, [x])
    assert g[0] == pytest.approx(8.0)
    unused = Tensor(np.ones(2), requires_grad=True)
    assert backward(T.sum(x), [unused])[0].tolist() == [0.0, 0.0]


def test_special_functions_match_scipy():
    x = np.concatenate([np.linspace(0.05, 20, 400), np.geomspace(20, 1e4, 50)])
    np.testing.assert_allclose(lgamma(x), sp.gammaln(x), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(digamma(x), sp.digamma(x), rtol=1e-10, atol=1e-10)
    assert lgamma(np.array([1.0, 2.0])).tolist() == pytest.approx([0.0, 0.0], abs=1e-13)
    assert digamma(np.array([1.0]))[0] == pytest.approx(-0.5772156649015329)


def test_stable_activations():
    big = np.array([-800.0, 0.0, 800.0])
    assert np.all(np.isfinite(T.softplus(Tensor(big)).value))
    assert T.softplus(Tensor(big)).value[2] == 800.0
    s = T.sigmoid(Tensor(big)).value
    assert s[0] == 0.0 and s[1] == 0.5 and s[2] == 1.0
    selu = T.selu(Tensor(np.array([1.0, -1.0]))).value
    assert selu[0] == pytest.approx(1.0507009873554805)
    assert selu[1] == pytest.approx(1.0507009873554805 * 1.6732632423543772 * (math.exp(-1) - 1))


def test_dropout_modes():
    x = Tensor(np.ones((1000, 10)))
    assert T.dropout(x, 0.5, False) is x
    y = T.dropout(x, 0.5, True, np.random.default_rng(0)).value
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert y.mean() == pytest.approx(1.0, abs=0.03)
    with pytest.raises(ValueError):
        T.dropout(x, 0.5, True)
    with pytest.raises(ValueError):
        T.dropout(x, 1.0, True, np.random.default_rng(0))


def test_glorot_bounds():
    w = glorot_uniform(np.random.default_rng(0), 30, 50)
    limit = math.sqrt(6 / 80)
    assert w.shape == (30, 50) and np.abs(w).max() <= limit
    assert w.std() == pytest.approx(limit / math.sqrt(3), rel=0.05)


def test_adam_matches_reference_update():
    rng = np.random.default_rng(0)
    p = rng.normal(size=5)
    grads = [rng.normal(size=5) for _ in range(3)]
    state = AdamState()
    ours = [p.copy()]
    m = v = np.zeros(5)
    ref = p.copy()
    for t, g in enumerate(grads, 1):
        adam_step(ours, [g], state, lr=0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(ours[0], ref, rtol=1e-12)


def test_adam_minimizes_quadratic():
    x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([x], lr=0.1)
    for _ in range(500):
        opt.step(backward(T.sum(T.square(x)), [x]))
        x.grad = None
    assert np.abs(x.value).max() < 1e-2


def test_l2_penalty_gradient():
    rng = np.random.default_rng(1)
    w1, w2 = leaf(rng, 3, 2), leaf(rng, 2, 2)
    pen = l2_penalty([w1, w2], 0.1)
    assert pen.item() == pytest.approx(0.1 * ((w1.value ** 2).sum() + (w2.value ** 2).sum()))
    assert check(lambda: l2_penalty([w1, w2], 0.1), [w1, w2]) < 1e-5


def test_pure_decay_shrinks_weights():
    w = Tensor(np.array([[2.0, -1.5], [0.5, 3.0]]), requires_grad=True)
    opt = Adam([w], lr=1e-2)
    norms = [np.abs(w.value).copy()]
    for _ in range(50):
        opt.step(backward(l2_penalty([w], 0.1), [w]))
        w.grad = None
        norms.append(np.abs(w.value).copy())
    assert all(np.all(b < a) for a, b in zip(norms, norms[1:]))


def test_dense_layer():
    rng = np.random.default_rng(0)
    d = Dense.init(rng, 3, 2, "d")
    x = rng.normal(size=(4, 3))
    np.testing.assert_allclose(d(x).value, x @ d.params()[0].value + d.params()[1].value)


def test_checkpoint_round_trip(tmp_path):
    params = {"a": np.arange(6.0).reshape(2, 3) / 7, "b": np.array([1e-300, -0.0, 3.5])}
    text = checkpoint.dumps(params, {"k": 1})
    back, meta = checkpoint.loads(text)
    assert meta == {"k": 1}
    for k in params:
        np.testing.assert_array_equal(back[k], params[k])
    assert checkpoint.dumps(back, meta) == text
    checkpoint.save(tmp_path / "c.json", params)
    assert set(checkpoint.load(tmp_path / "c.json")[0]) == {"a", "b"}
    with pytest.raises(ValueError):
        checkpoint.loads('{"format": "other"}')
