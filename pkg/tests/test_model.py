import numpy as np
import pytest
from scipy import stats

from routenet import topologies
from routenet.autodiff.tensor import Tensor, backward
from routenet.graph import Schedule, scenario_graph, union
from routenet.model import (FeatureScaling, HeadOutputs, ModelConfig, ModelParams, forward, loss_binomial,
                            loss_gamma, loss_normal, mc_dropout_sample, predict_kpis, total_loss)
from routenet.netcore import (Link, RoutingScheme, Topology, TrafficMatrix, generate_routing_variants,
                              generate_traffic_matrix)

from _fd import numeric_grad, rel_err

HEADS = ("normal-delay", "gamma-delay", "binomial-drops")


def small_graph(seed, topo=None):
    topo = topo or topologies.toy5()
    routing = generate_routing_variants(topo, 3, 6, 0.5, seed)[-1]
    tm = generate_traffic_matrix(topo, 15000.0, seed)
    return topo, routing, tm, scenario_graph(topo, routing, tm)


def random_targets(rng, n_paths):
    n = rng.integers(1, 6, n_paths).astype(float)
    mean = rng.uniform(0.05, 0.5, n_paths)
    return {"n": n, "mean": mean, "var": rng.uniform(0.001, 0.02, n_paths),
            "mean_log": np.log(mean) - rng.uniform(0.01, 0.2, n_paths),
            "dropped": rng.integers(0, 3, n_paths).astype(float)}


def small_params(head, seed, readout=6):
    g = small_graph(0)[3]
    cfg = ModelConfig(hidden_dim=6, iterations=3, readout_hidden=readout, head=head,
                      scaling=FeatureScaling.fit([g]))
    params = ModelParams.init(cfg, seed)
    for t in params.tensors():  # nonzero biases exercise every path of the graph
        if t.ndim == 1:
            t.value = np.random.default_rng(seed).normal(size=t.shape) * 0.1
    return params


def end_to_end_error(seed):
    """Relative error of the full loss gradient on sampled coordinates of every tensor."""
    head = HEADS[seed % 3]
    params = small_params(head, seed, readout=6 if seed % 2 else 5)
    *_, graph = small_graph(seed)
    targets = random_targets(np.random.default_rng(seed), graph.n_paths)
    build = lambda: total_loss(params, graph, targets, weight_decay=0.1, train=True, seed=seed)
    tensors = params.tensors()
    grads = backward(build(), tensors)
    rng = np.random.default_rng(100 + seed)
    analytic, numeric = [], []
    for t, g in zip(tensors, grads):
        coords = rng.choice(t.value.size, size=min(3, t.value.size), replace=False)
        num = numeric_grad(lambda: build().item(), t.value, 1e-6, coords)
        analytic.append(g.reshape(-1)[coords])
        numeric.append(num.reshape(-1)[coords])
    return rel_err(np.concatenate(analytic), np.concatenate(numeric))


@pytest.mark.parametrize("seed", range(20))
def test_end_to_end_gradient(seed):
    assert end_to_end_error(seed) < 1e-4


# --- loss oracles ------------------------------------------------------------

def packets(rng, n_paths):
    """Raw per-packet delays per path, plus their sufficient statistics."""
    raw = [rng.gamma(rng.uniform(1, 5), rng.uniform(0.01, 0.1), rng.integers(1, 40)) for _ in range(n_paths)]
    n = np.array([len(w) for w in raw], float)
    mean = np.array([w.mean() for w in raw])
    var = np.array([w.var() for w in raw])
    mean_log = np.array([np.log(w).mean() for w in raw])
    return raw, n, mean, var, mean_log


def close(a, b):
    return abs(a - b) <= 1e-9 * max(1.0, abs(b))


@pytest.mark.parametrize("seed", range(50))
def test_normal_loss_is_packet_nll(seed):
    rng = np.random.default_rng(seed)
    raw, n, mean, var, _ = packets(rng, 6)
    out = rng.normal(size=(6, 2)) * [0.2, 1.0]
    sigma = np.logaddexp(0.0, out[:, 1])
    nll = -sum(stats.norm.logpdf(w, out[k, 0], sigma[k]).sum() for k, w in enumerate(raw))
    const = 0.5 * np.log(2 * np.pi) * n.sum()  # dropped by the loss
    got = loss_normal(HeadOutputs("normal-delay", Tensor(out)), n, mean, var).item()
    assert close(got, nll - const)


@pytest.mark.parametrize("seed", range(50))
def test_gamma_loss_is_packet_nll(seed):
    rng = np.random.default_rng(seed)
    raw, n, mean, _, mean_log = packets(rng, 6)
    out = rng.normal(size=(6, 2))
    alpha, beta = np.logaddexp(0.0, out[:, 0]), np.logaddexp(0.0, out[:, 1])
    nll = -sum(stats.gamma.logpdf(w, alpha[k], scale=1 / beta[k]).sum() for k, w in enumerate(raw))
    got = loss_gamma(HeadOutputs("gamma-delay", Tensor(out)), n, mean, mean_log).item()
    assert close(got, nll)


@pytest.mark.parametrize("seed", range(50))
def test_binomial_loss_is_packet_nll(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(0, 50, 6).astype(float)
    dropped = rng.integers(0, 10, 6).astype(float)
    logit = rng.normal(size=(6, 1)) * 3
    p = 1 / (1 + np.exp(-logit[:, 0]))
    # one Bernoulli term per packet: dropped ones with p, delivered ones with 1 - p
    nll = -sum(stats.bernoulli.logpmf(1, p[k]) * dropped[k] + stats.bernoulli.logpmf(0, p[k]) * n[k]
               for k in range(6))
    got = loss_binomial(HeadOutputs("binomial-drops", Tensor(logit)), n, dropped).item()
    assert close(got, nll)


@pytest.mark.parametrize("n,l", [(90, 10), (999, 1), (5, 5), (40, 0)])
def test_binomial_mle_on_grid(n, l):
    grid = np.linspace(1e-4, 1 - 1e-4, 9999)
    logits = np.log(grid / (1 - grid))[:, None]
    per = [loss_binomial(HeadOutputs("binomial-drops", Tensor(y[None, :])), [n], [l]).item() for y in logits]
    best = grid[int(np.argmin(per))]
    assert abs(best - max(l / (n + l), 1e-4)) <= 1e-4


def test_zero_delivery_paths_do_not_count():
    out = HeadOutputs("normal-delay", Tensor(np.array([[0.1, 0.2], [5.0, 5.0]])))
    a = loss_normal(out, [3, 0], [0.1, 0.0], [0.01, 0.0]).item()
    b = loss_normal(HeadOutputs("normal-delay", Tensor(np.array([[0.1, 0.2]]))), [3], [0.1], [0.01]).item()
    assert a == pytest.approx(b)
    with pytest.raises(ValueError):
        loss_normal(out, [1, 1], [0.1, 0.1], [-1.0, 0.0])
    with pytest.raises(ValueError):
        loss_gamma(out, [1, 1], [0.0, 0.1], [0.0, 0.0])


# --- structure ---------------------------------------------------------------

def test_batch_loss_is_sum_of_sample_losses():
    params = small_params("normal-delay", 1)
    graphs, targets = [], []
    for s in range(3):
        g = small_graph(s)[3]
        graphs.append(g)
        targets.append(random_targets(np.random.default_rng(s), g.n_paths))
    merged, _, _ = union(graphs)
    cat = {k: np.concatenate([t[k] for t in targets]) for k in targets[0]}
    whole = total_loss(params, merged, cat).item()
    parts = sum(total_loss(params, g, t).item() for g, t in zip(graphs, targets))
    assert whole == pytest.approx(parts, rel=1e-12)


def test_path_order_does_not_matter():
    params = small_params("gamma-delay", 2)
    *_, g = small_graph(3)
    perm = np.random.default_rng(0).permutation(g.n_paths)
    shuffled = type(g)(g.capacity, g.demand[perm], tuple(g.paths[i] for i in perm))
    np.testing.assert_allclose(forward(params, shuffled).value, forward(params, g).value[perm], rtol=1e-12)


def test_node_relabeling_does_not_matter():
    params = small_params("normal-delay", 4)
    topo, routing, tm, g = small_graph(5)
    relabel = np.random.default_rng(1).permutation(topo.node_count)
    link_perm = np.random.default_rng(2).permutation(topo.n_links)  # new id of each old link
    links = sorted((Link(int(link_perm[l.id]), int(relabel[l.src]), int(relabel[l.dst]), l.capacity, l.buffer)
                    for l in topo.links), key=lambda l: l.id)
    topo2 = Topology(topo.node_count, tuple(links), "relabelled")
    pairs = tm.active_pairs()
    new_pair = {p: (int(relabel[p[0]]), int(relabel[p[1]])) for p in pairs}
    routing2 = RoutingScheme({new_pair[p]: tuple(int(link_perm[l]) for l in routing.paths[p]) for p in pairs})
    tm2 = TrafficMatrix({new_pair[p]: tm.demand[p] for p in pairs})
    out1 = forward(params, g).value
    order2 = {p: k for k, p in enumerate(tm2.active_pairs())}
    out2 = forward(params, scenario_graph(topo2, routing2, tm2)).value
    np.testing.assert_allclose(out2[[order2[new_pair[p]] for p in pairs]], out1, rtol=1e-10, atol=1e-12)


def test_schedule_prefix_structure():
    paths = (np.array([0, 1]), np.array([2]), np.array([3, 4, 5]))
    s = Schedule.build(paths)
    assert s.counts == (3, 2, 1)
    np.testing.assert_array_equal(s.order, [2, 0, 1])
    np.testing.assert_array_equal(s.links[1], [4, 1])
    with pytest.raises(ValueError):
        Schedule.build((np.array([], np.int64),))


def test_eval_mode_is_deterministic_and_train_mode_is_seeded():
    params = small_params("normal-delay", 0)
    *_, g = small_graph(0)
    np.testing.assert_array_equal(forward(params, g).value, forward(params, g).value)
    a = forward(params, g, train=True, seed=1).value
    np.testing.assert_array_equal(a, forward(params, g, train=True, seed=1).value)
    assert not np.array_equal(a, forward(params, g, train=True, seed=2).value)


def test_predict_kpis_and_mc_dropout():
    delay, drops = small_params("gamma-delay", 0), small_params("binomial-drops", 1)
    *_, g = small_graph(0)
    pred = predict_kpis(delay, drops, g)
    assert np.all(pred.delay > 0) and np.all(pred.jitter > 0)
    assert np.all((pred.loss > 0) & (pred.loss < 1))
    with pytest.raises(ValueError):
        predict_kpis(delay, delay, g)
    mc = mc_dropout_sample(delay, g, 8, seed=0)
    assert set(mc) == {"alpha", "beta"}
    assert np.all(mc["alpha"][1] > 0)


def test_checkpoint_text_round_trip():
    params = small_params("binomial-drops", 3)
    text = params.to_text({"note": "x"})
    back, meta = ModelParams.from_text(text)
    assert meta["note"] == "x" and back.config == params.config
    assert back.to_text({"note": "x"}) == text
    *_, g = small_graph(1)
    np.testing.assert_array_equal(forward(back, g).value, forward(params, g).value)


def test_config_validation_and_unshared_weights():
    with pytest.raises(ValueError):
        ModelConfig(head="poisson")
    with pytest.raises(ValueError):
        ModelConfig(iterations=0)
    cfg = ModelConfig(hidden_dim=4, iterations=3, readout_hidden=4, share_weights=False)
    params = ModelParams.init(cfg, 0)
    assert len(params.path_cells) == 3
    *_, g = small_graph(0)
    assert forward(params, g).shape == (g.n_paths, 2)
    assert all(t.ndim == 2 for t in params.weights())
    assert len(params.weights()) < len(params.tensors())
