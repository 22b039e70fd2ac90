"""Routing selection and link placement driven by a KPI provider.

A provider maps ``(topology, routing, traffic matrix)`` to per-pair
``(delay, jitter, loss)``. Three are available: a trained model pair, the
queuing-theory baseline and the packet simulator (the "optimal" oracle).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from . import queueing
from .graph import scenario_graph
from .model import ModelParams, predict_kpis
from .netcore import (PAPER_CAPACITIES, Pair, RoutingScheme, Topology, TrafficMatrix,
                      generate_routing_variants, generate_traffic_matrix)
from .rng import derive_seed
from .simulator import SimConfig, simulate, summarize

log = logging.getLogger(__name__)

LOSS_FLOOR = 1e-7

Kpis = Mapping[Pair, tuple[float, float, float]]


class KpiProvider(Protocol):
    kind: str

    def __call__(self, topo: Topology, routing: RoutingScheme, tm: TrafficMatrix) -> Kpis: ...


@dataclass
class ModelProvider:
    delay_params: ModelParams
    drops_params: ModelParams
    kind: str = "model"

    def __call__(self, topo, routing, tm) -> Kpis:
        pairs = tm.active_pairs()
        pred = predict_kpis(self.delay_params, self.drops_params, scenario_graph(topo, routing, tm, pairs))
        return {p: (float(pred.delay[k]), float(pred.jitter[k]), float(pred.loss[k]))
                for k, p in enumerate(pairs)}


@dataclass
class BaselineProvider:
    kind: str = "baseline"

    def __call__(self, topo, routing, tm) -> Kpis:
        return queueing.predict(topo, routing, tm)


@dataclass
class SimulatorProvider:
    config: SimConfig = SimConfig()
    kind: str = "simulator"

    def __call__(self, topo, routing, tm) -> Kpis:
        stats = simulate(topo, routing, tm, self.config)
        out = {}
        for p in tm.active_pairs():
            m = summarize(stats[p])
            out[p] = (m.mean_delay, m.delay_variance, m.loss_ratio)
        return out


@dataclass(frozen=True)
class OptimizationPolicy:
    loss_threshold: float = 1e-3
    jitter_delay_threshold: float = 0.2

    def __post_init__(self):
        if not (self.loss_threshold > 0 and self.jitter_delay_threshold > 0):
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class Score:
    delay: float
    loss: float
    jitter_delay: float


def score(kpis: Kpis) -> Score:
    """Averages over pairs: delay, loss ratio and per-pair jitter/delay."""
    vals = np.array(list(kpis.values()), dtype=float).reshape(-1, 3)
    d, j, l = vals[:, 0], vals[:, 1], vals[:, 2]
    ratio = np.divide(j, d, out=np.zeros_like(j), where=d > 0)
    return Score(float(d.mean()), float(l.mean()), float(ratio.mean()))


@dataclass
class DecisionTrace:
    branch: int                      # 1: both constraints, 2: loss infeasible, 3: jitter infeasible
    chosen: int
    scores: dict[int, Score]
    failures: dict[int, str] = field(default_factory=dict)


def cascade(scores: Mapping[int, Score], policy: OptimizationPolicy) -> tuple[int, int]:
    """(branch, candidate index) chosen by the loss -> jitter/delay -> delay cascade.

    Ties go to the lowest candidate index.
    """
    if not scores:
        raise ValueError("no scored candidates")
    idx = sorted(scores)
    loss_ok = [i for i in idx if scores[i].loss < policy.loss_threshold]
    if not loss_ok:
        return 2, min(idx, key=lambda i: (scores[i].loss, i))
    both = [i for i in loss_ok if scores[i].jitter_delay < policy.jitter_delay_threshold]
    if both:
        return 1, min(both, key=lambda i: (scores[i].delay, i))
    return 3, min(loss_ok, key=lambda i: (scores[i].delay, i))


def select_routing(candidates: Sequence[RoutingScheme], topo: Topology, tm: TrafficMatrix,
                   provider: Callable, policy: OptimizationPolicy = OptimizationPolicy(),
                   use_cascade: bool = True) -> tuple[RoutingScheme, DecisionTrace]:
    if not candidates:
        raise ValueError("need at least one candidate routing")
    scores: dict[int, Score] = {}
    failures: dict[int, str] = {}
    for i, routing in enumerate(candidates):
        try:
            scores[i] = score(provider(topo, routing, tm))
        except Exception as exc:  # a failing candidate is skipped, not fatal
            failures[i] = f"{type(exc).__name__}: {exc}"
            log.warning("candidate %d failed: %s", i, failures[i])
    if use_cascade:
        branch, chosen = cascade(scores, policy)
    else:
        branch, chosen = 0, min(sorted(scores), key=lambda i: (scores[i].delay, i))
    return candidates[chosen], DecisionTrace(branch, chosen, scores, failures)


def link_utilization(topo: Topology, routing: RoutingScheme, tm: TrafficMatrix) -> np.ndarray:
    """Fluid (lossless) utilization of every link."""
    load = np.zeros(topo.n_links)
    for p in tm.active_pairs():
        for lid in routing.paths[p]:
            load[lid] += tm.demand[p]
    return load / topo.capacities


def utilization_provider(topo: Topology, routing: RoutingScheme, tm: TrafficMatrix) -> float:
    """Variance of link utilization; lower means a more balanced network."""
    return float(np.var(link_utilization(topo, routing, tm)))


def select_by_utilization(candidates: Sequence[RoutingScheme], topo: Topology,
                          tm: TrafficMatrix) -> tuple[RoutingScheme, int]:
    scores = [utilization_provider(topo, r, tm) for r in candidates]
    best = int(np.argmin(scores))
    return candidates[best], best


# --- routing study ---------------------------------------------------------

@dataclass(frozen=True)
class CandidateFamily:
    count: int = 40
    perturbed_links: int | None = None   # default: half of the directed links
    delta: float = 0.5

    def generate(self, topo: Topology, seed: int) -> list[RoutingScheme]:
        k = self.perturbed_links or max(1, topo.n_links // 2)
        return generate_routing_variants(topo, self.count, k, self.delta, seed)


@dataclass
class Outcome:
    delay: float
    loss: float
    jitter_delay: float


@dataclass
class StudyRow:
    ti: float
    tm_index: int
    strategy: str
    outcome: Outcome
    chosen: int | None = None
    branch: int | None = None


@dataclass
class StudyReport:
    rows: list[StudyRow] = field(default_factory=list)
    failures: list[tuple[float, int, str]] = field(default_factory=list)

    def strategies(self) -> list[str]:
        return list(dict.fromkeys(r.strategy for r in self.rows))

    def values(self, strategy: str, metric: str, ti: float | None = None) -> np.ndarray:
        return np.array([getattr(r.outcome, metric) for r in self.rows
                         if r.strategy == strategy and (ti is None or r.ti == ti)])

    def mean(self, strategy: str, metric: str) -> float:
        return float(np.mean(self.values(strategy, metric)))

    def loss_satisfaction(self, strategy: str, threshold: float = 1e-3) -> float:
        return float(np.mean(self.values(strategy, "loss") < threshold))

    def boxplot_csv(self, metric: str) -> str:
        lines = ["ti,tm_index,strategy,value"]
        for r in self.rows:
            v = getattr(r.outcome, metric)
            if metric == "loss":
                v = max(v, LOSS_FLOOR)
            lines.append(f"{r.ti!r},{r.tm_index},{r.strategy},{v!r}")
        return "\n".join(lines) + "\n"


def _outcome(kpis: Kpis) -> Outcome:
    s = score(kpis)
    return Outcome(s.delay, s.loss, s.jitter_delay)


def run_routing_study(topo: Topology, ti_list: Sequence[float], tms_per_ti: int,
                      providers: Mapping[str, Callable], policy: OptimizationPolicy = OptimizationPolicy(),
                      seed: int = 0, family: CandidateFamily = CandidateFamily(),
                      sim: SimConfig = SimConfig()) -> StudyReport:
    """Compare routing strategies on the same candidate sets.

    Every candidate is simulated once per scenario; those ground-truth runs
    provide the "optimal" selection, the shortest-path average ("SP") and the
    outcome of whatever routing each provider selects. ``providers`` maps a
    strategy name to a KPI provider, or to ``"utilization"`` for the
    link-balance optimizer.
    """
    report = StudyReport()
    candidates = family.generate(topo, derive_seed(seed, 0))
    for ti in ti_list:
        for m in range(tms_per_ti):
            try:
                tm = generate_traffic_matrix(topo, ti, derive_seed(seed, 1, int(ti), m))
                truth_cfg = SimConfig(sim.duration, sim.warmup_fraction, derive_seed(seed, 2, int(ti), m),
                                      sim.buffer_includes_in_service, sim.packet_sizes)
                truth = [SimulatorProvider(truth_cfg)(topo, r, tm) for r in candidates]
                outcomes = [_outcome(k) for k in truth]
                true_scores = {i: score(k) for i, k in enumerate(truth)}
                branch, best = cascade(true_scores, policy)
                report.rows.append(StudyRow(ti, m, "optimal", outcomes[best], best, branch))
                report.rows.append(StudyRow(ti, m, "SP", Outcome(
                    float(np.mean([o.delay for o in outcomes])),
                    float(np.mean([o.loss for o in outcomes])),
                    float(np.mean([o.jitter_delay for o in outcomes])))))
                for name, provider in providers.items():
                    if provider == "utilization":
                        _, idx = select_by_utilization(candidates, topo, tm)
                        report.rows.append(StudyRow(ti, m, name, outcomes[idx], idx))
                    else:
                        _, trace = select_routing(candidates, topo, tm, provider, policy)
                        report.rows.append(StudyRow(ti, m, name, outcomes[trace.chosen], trace.chosen,
                                                    trace.branch))
            except Exception as exc:
                log.warning("scenario ti=%s tm=%d failed: %s", ti, m, exc)
                report.failures.append((ti, m, f"{type(exc).__name__}: {exc}"))
    return report


# --- link planning ---------------------------------------------------------

def next_capacity(capacity: float, ladder: Sequence[float]) -> float:
    """10k -> 40k -> 100k; beyond the largest known capacity, double it."""
    bigger = [c for c in sorted(set(ladder)) if c > capacity]
    return bigger[0] if bigger else 2.0 * capacity


def upgrade_most_loaded(topo: Topology, routing: RoutingScheme, tm: TrafficMatrix) -> tuple[Topology, int]:
    """Raise the capacity of the most utilized link (lowest id on ties)."""
    util = link_utilization(topo, routing, tm)
    lid = int(np.flatnonzero(util == util.max())[0])
    ladder = set(PAPER_CAPACITIES) | {l.capacity for l in topo.links}
    return topo.with_capacity(lid, next_capacity(topo.links[lid].capacity, ladder)), lid


@dataclass
class PlanResult:
    placement: tuple[int, int]
    topology: Topology
    routing: RoutingScheme
    predicted: Score
    candidates: dict[tuple[int, int], Score] = field(default_factory=dict)


def non_adjacent_pairs(topo: Topology) -> list[tuple[int, int]]:
    return [(u, v) for u in range(topo.node_count) for v in range(u + 1, topo.node_count)
            if not topo.has_edge(u, v) and not topo.has_edge(v, u)]


def plan_link(topo: Topology, tm: TrafficMatrix, capacity: float, family: CandidateFamily,
              provider: Callable, policy: OptimizationPolicy = OptimizationPolicy(),
              use_cascade: bool = False, seed: int = 0) -> PlanResult:
    """Try every new bidirectional link and keep the best (placement, routing).

    Each placement gets its own candidate family over the augmented topology;
    the unit-weight shortest path is always the first candidate. By default
    the choice minimizes predicted mean delay; ``use_cascade`` applies the
    loss/jitter constraints first.
    """
    pairs = non_adjacent_pairs(topo)
    if not pairs:
        raise ValueError("topology is fully connected; no link to add")
    best: PlanResult | None = None
    per: dict[tuple[int, int], Score] = {}
    best_key = None
    for u, v in pairs:
        augmented = topo.with_link(u, v, capacity)
        cands = family.generate(augmented, derive_seed(seed, u, v))
        routing, trace = select_routing(cands, augmented, tm, provider, policy, use_cascade)
        s = trace.scores[trace.chosen]
        per[(u, v)] = s
        # under the cascade a placement meeting both constraints beats one meeting only
        # the loss bound, which beats one meeting neither
        key = (0, s.delay)
        if use_cascade:
            key = ({1: 0, 3: 1, 2: 2}[trace.branch], s.loss if trace.branch == 2 else s.delay)
        if best is None or key < best_key:
            best, best_key = PlanResult((u, v), augmented, routing, s), key
    best.candidates = per
    return best


@dataclass
class PlanReport:
    placement: tuple[int, int]
    original: Outcome
    planned: Outcome
    upgraded_link: tuple[int, int]
    baseline: Outcome

    @property
    def delay_reduction(self) -> float:
        return (self.baseline.delay - self.planned.delay) / self.baseline.delay

    @property
    def jitter_delay_reduction(self) -> float:
        return (self.baseline.jitter_delay - self.planned.jitter_delay) / self.baseline.jitter_delay

    def row(self, label: str) -> dict:
        return {"tm": label, "delay": self.original.delay, "jitter_delay": self.original.jitter_delay,
                "placement": f"{self.placement[0]}-{self.placement[1]}", "new_delay": self.planned.delay,
                "new_jitter_delay": self.planned.jitter_delay,
                "most_loaded_link": f"{self.upgraded_link[0]}-{self.upgraded_link[1]}",
                "baseline_delay": self.baseline.delay, "baseline_jitter_delay": self.baseline.jitter_delay,
                "rel_delay_pct": 100 * self.delay_reduction,
                "rel_jitter_delay_pct": 100 * self.jitter_delay_reduction}


def plan_and_compare(topo: Topology, tm: TrafficMatrix, capacity: float, family: CandidateFamily,
                     provider: Callable, policy: OptimizationPolicy = OptimizationPolicy(),
                     sim: SimConfig = SimConfig(), use_cascade: bool = False, seed: int = 0) -> PlanReport:
    """Plan one link, then simulate original, planned and most-loaded-upgrade scenarios."""
    truth = SimulatorProvider(sim)
    cands = family.generate(topo, derive_seed(seed, 0))
    original_routing, _ = select_routing(cands, topo, tm, provider, policy, use_cascade)
    plan = plan_link(topo, tm, capacity, family, provider, policy, use_cascade, seed)
    upgraded, lid = upgrade_most_loaded(topo, original_routing, tm)
    link = topo.links[lid]
    return PlanReport(
        plan.placement,
        _outcome(truth(topo, original_routing, tm)),
        _outcome(truth(plan.topology, plan.routing, tm)),
        (link.src, link.dst),
        _outcome(truth(upgraded, original_routing, tm)),
    )
