"""Path/link message-passing model with probabilistic readout heads.

Paths read the states of their links in order through a recurrent cell; each
intermediate path state is the message sent to the link just consumed. Links
sum the messages of all paths crossing them and update their own state with a
second recurrent cell. After ``iterations`` rounds a per-path feed-forward
readout (two selu layers with dropout and a residual connection from the path
state) produces the distribution parameters of the selected head.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import tensor as T
from .autodiff.checkpoint import dumps, loads
from .autodiff.nn import Dense, GruCell, gru_step, l2_penalty
from .autodiff.tensor import Tensor
from .graph import PathGraph, Schedule
from .rng import make_rng

HEADS = ("normal-delay", "gamma-delay", "binomial-drops")
HEAD_WIDTH = {"normal-delay": 2, "gamma-delay": 2, "binomial-drops": 1}


@dataclass(frozen=True)
class FeatureScaling:
    demand_mean: float = 0.0
    demand_std: float = 1.0
    capacity_mean: float = 0.0
    capacity_std: float = 1.0

    @classmethod
    def fit(cls, graphs: list[PathGraph]) -> "FeatureScaling":
        d = np.concatenate([g.demand for g in graphs])
        c = np.concatenate([g.capacity for g in graphs])
        return cls(float(d.mean()), float(d.std()) or 1.0, float(c.mean()), float(c.std()) or 1.0)


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 32
    iterations: int = 8
    readout_hidden: int = 32
    dropout_rate: float = 0.5
    head: str = "normal-delay"
    share_weights: bool = True
    scaling: FeatureScaling = field(default_factory=FeatureScaling)

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}; choose from {HEADS}")
        if self.hidden_dim < 2:
            raise ValueError("hidden_dim must leave room for the input feature plus padding")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["scaling"] = FeatureScaling(**d.get("scaling", {}))
        return cls(**d)


@dataclass
class ModelParams:
    config: ModelConfig
    path_cells: list[GruCell]
    link_cells: list[GruCell]
    readout1: Dense
    readout2: Dense
    projection: Dense | None
    out: Dense

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        rng = make_rng(seed)
        h, r = config.hidden_dim, config.readout_hidden
        n_cells = 1 if config.share_weights else config.iterations
        path_cells = [GruCell.init(rng, h, h, f"path_gru.{t}") for t in range(n_cells)]
        link_cells = [GruCell.init(rng, h, h, f"link_gru.{t}") for t in range(n_cells)]
        readout1 = Dense.init(rng, h, r, "readout1")
        readout2 = Dense.init(rng, r, r, "readout2")
        projection = None if h == r else Dense.init(rng, h, r, "projection")
        out = Dense.init(rng, r, HEAD_WIDTH[config.head], "out")
        return cls(config, path_cells, link_cells, readout1, readout2, projection, out)

    def tensors(self) -> list[Tensor]:
        ts = []
        for c in self.path_cells + self.link_cells:
            ts += c.params()
        ts += self.readout1.params() + self.readout2.params()
        if self.projection is not None:
            ts += self.projection.params()
        ts += self.out.params()
        return ts

    def weights(self) -> list[Tensor]:
        """Weight matrices (no biases); these carry the L2 penalty."""
        return [t for t in self.tensors() if t.ndim == 2]

    def named(self) -> dict[str, Tensor]:
        return {t.name: t for t in self.tensors()}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.named().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        named = self.named()
        if set(named) != set(state):
            raise ValueError(f"parameter names differ: {sorted(set(named) ^ set(state))}")
        for k, t in named.items():
            if t.value.shape != state[k].shape:
                raise ValueError(f"shape mismatch for {k}: {t.value.shape} vs {state[k].shape}")
            t.value = np.array(state[k], dtype=float)

    def copy(self) -> "ModelParams":
        other = ModelParams.init(self.config)
        other.load_state_dict(self.state_dict())
        return other

    def to_text(self, meta: dict | None = None) -> str:
        full = {"config": self.config.to_dict(), **(meta or {})}
        return dumps(self.state_dict(), full)

    @classmethod
    def from_text(cls, text: str) -> tuple["ModelParams", dict]:
        state, meta = loads(text)
        config = ModelConfig.from_dict(meta["config"])
        params = cls.init(config)
        params.load_state_dict(state)
        return params, meta


def _initial_state(feature: np.ndarray, width: int) -> Tensor:
    h = np.zeros((feature.shape[0], width))
    h[:, 0] = feature
    return Tensor(h)


def forward(params: ModelParams, graph: PathGraph, train: bool = False, seed: int = 0,
            schedule: Schedule | None = None) -> Tensor:
    """Raw head outputs, one row per path of ``graph`` in its own order."""
    cfg = params.config
    sc = cfg.scaling
    sched = schedule or graph.schedule()
    n_links = graph.n_links
    h_link = _initial_state((graph.capacity - sc.capacity_mean) / sc.capacity_std, cfg.hidden_dim)
    h_path = _initial_state(((graph.demand - sc.demand_mean) / sc.demand_std)[sched.order], cfg.hidden_dim)
    all_links = np.concatenate(sched.links) if sched.links else np.zeros(0, np.int64)
    n_paths = graph.n_paths

    for t in range(cfg.iterations):
        path_cell = params.path_cells[0 if cfg.share_weights else t]
        link_cell = params.link_cells[0 if cfg.share_weights else t]
        h = h_path
        messages = []
        for n_active, links in zip(sched.counts, sched.links):
            x = T.take_rows(h_link, links)
            if n_active == n_paths:
                h = gru_step(path_cell, h, x)
                messages.append(h)
            else:
                new = gru_step(path_cell, h[:n_active], x)
                messages.append(new)
                h = T.concat([new, h[n_active:]], axis=0)
        h_path = h
        aggregated = T.segment_sum(T.concat(messages, axis=0), all_links, n_links)
        h_link = gru_step(link_cell, h_link, aggregated)

    rng = make_rng(seed) if train else None
    z = T.dropout(T.selu(params.readout1(h_path)), cfg.dropout_rate, train, rng)
    z = T.dropout(T.selu(params.readout2(z)), cfg.dropout_rate, train, rng)
    residual = h_path if params.projection is None else params.projection(h_path)
    out = params.out(T.add(z, residual))
    return T.take_rows(out, sched.inverse)


@dataclass
class HeadOutputs:
    head: str
    raw: Tensor

    def _col(self, i) -> Tensor:
        return self.raw[:, i]

    # normal head
    @property
    def mu(self) -> Tensor:
        return self._col(0)

    @property
    def sigma(self) -> Tensor:
        return T.softplus(self._col(1))

    # gamma head
    @property
    def alpha(self) -> Tensor:
        return T.softplus(self._col(0))

    @property
    def beta(self) -> Tensor:
        return T.softplus(self._col(1))

    # binomial head
    @property
    def logit(self) -> Tensor:
        return self._col(0)

    @property
    def p(self) -> Tensor:
        return T.sigmoid(self._col(0))


def outputs(params: ModelParams, graph: PathGraph, train: bool = False, seed: int = 0,
            schedule: Schedule | None = None) -> HeadOutputs:
    return HeadOutputs(params.config.head, forward(params, graph, train, seed, schedule))


# --- losses ----------------------------------------------------------------

def loss_normal(out: HeadOutputs, n, mean, var) -> Tensor:
    """``sum n (log sigma + (s^2 + (mean - mu)^2) / (2 sigma^2))`` over paths with n > 0."""
    n, mean, var = (np.asarray(a, float) for a in (n, mean, var))
    if np.any(var < 0):
        raise ValueError("negative sample variance")
    sigma = out.sigma
    sq = T.square(T.sub(mean, out.mu))
    term = T.add(T.log(sigma), T.div(T.add(sq, var), T.mul(T.square(sigma), 2.0)))
    return T.sum(T.mul(term, np.where(n > 0, n, 0.0)))


def loss_gamma(out: HeadOutputs, n, mean, mean_log) -> Tensor:
    """``sum n (lgamma(a) + b mean + (1 - a) mean_log - a log b)``."""
    n, mean, mean_log = (np.asarray(a, float) for a in (n, mean, mean_log))
    if np.any((n > 0) & (mean <= 0)):
        raise ValueError("gamma loss needs positive mean delay where packets were delivered")
    alpha, beta = out.alpha, out.beta
    term = T.add(T.lgamma_(alpha), T.mul(beta, mean))
    term = T.add(term, T.mul(T.sub(1.0, alpha), mean_log))
    term = T.sub(term, T.mul(alpha, T.log(beta)))
    return T.sum(T.mul(term, np.where(n > 0, n, 0.0)))


def loss_binomial(out: HeadOutputs, n, dropped) -> Tensor:
    """``-sum (l log p + n log(1 - p))`` computed from logits for stability."""
    n, dropped = np.asarray(n, float), np.asarray(dropped, float)
    logit = out.logit
    # -log p = softplus(-y); -log(1-p) = softplus(y)
    return T.sum(T.add(T.mul(T.softplus(T.neg(logit)), dropped), T.mul(T.softplus(logit), n)))


def head_loss(out: HeadOutputs, targets: dict[str, np.ndarray]) -> Tensor:
    if out.head == "normal-delay":
        return loss_normal(out, targets["n"], targets["mean"], targets["var"])
    if out.head == "gamma-delay":
        return loss_gamma(out, targets["n"], targets["mean"], targets["mean_log"])
    return loss_binomial(out, targets["n"], targets["dropped"])


def total_loss(params: ModelParams, graph: PathGraph, targets, weight_decay: float = 0.0,
               train: bool = False, seed: int = 0, schedule: Schedule | None = None) -> Tensor:
    loss = head_loss(outputs(params, graph, train, seed, schedule), targets)
    if weight_decay:
        loss = T.add(loss, l2_penalty(params.weights(), weight_decay))
    return loss


# --- inference -------------------------------------------------------------

@dataclass
class KpiPrediction:
    delay: np.ndarray
    jitter: np.ndarray
    loss: np.ndarray


def head_values(out: HeadOutputs) -> dict[str, np.ndarray]:
    if out.head == "normal-delay":
        return {"mu": out.mu.value, "sigma": out.sigma.value}
    if out.head == "gamma-delay":
        return {"alpha": out.alpha.value, "beta": out.beta.value}
    return {"p": out.p.value}


def delay_jitter(out: HeadOutputs) -> tuple[np.ndarray, np.ndarray]:
    v = head_values(out)
    if out.head == "normal-delay":
        return v["mu"], v["sigma"] ** 2
    if out.head == "gamma-delay":
        return v["alpha"] / v["beta"], v["alpha"] / v["beta"] ** 2
    raise ValueError("binomial head has no delay prediction")


def predict_kpis(delay_params: ModelParams | None, drops_params: ModelParams | None,
                 graph: PathGraph) -> KpiPrediction:
    """Per-path (mean delay, jitter as variance, loss ratio) in eval mode."""
    if delay_params is None or drops_params is None:
        raise ValueError("predict_kpis needs both a delay head and a drops head")
    if drops_params.config.head != "binomial-drops":
        raise ValueError("drops model must use the binomial head")
    sched = graph.schedule()
    delay, jitter = delay_jitter(outputs(delay_params, graph, schedule=sched))
    loss = outputs(drops_params, graph, schedule=sched).p.value
    return KpiPrediction(delay, jitter, loss)


def mc_dropout_sample(params: ModelParams, graph: PathGraph, samples: int,
                      seed: int = 0) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Mean and standard deviation of head outputs under train-mode dropout."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sched = graph.schedule()
    draws: dict[str, list[np.ndarray]] = {}
    for i in range(samples):
        out = outputs(params, graph, train=True, seed=int(make_rng(seed, i).integers(2**62)),
                      schedule=sched)
        for k, v in head_values(out).items():
            draws.setdefault(k, []).append(v)
    return {k: (np.mean(v, axis=0), np.std(v, axis=0)) for k, v in draws.items()}
