"""Scenario records, dataset generation, splitting and minibatching.

Shard format (``*.samples.gz``): gzip-compressed UTF-8, one JSON object per
line, at most 1000 records per shard. Each record::

    {"topology": {"name", "node_count", "links": [[src, dst, capacity, buffer], ...]},
     "routing_id": int, "routing": [[src, dst, [link ids]], ...],
     "ti": float, "tm": [[src, dst, demand], ...],
     "targets": [[src, dst, n, mean_delay, delay_variance, mean_log_delay, dropped], ...],
     "meta": {"seed", "duration", "warmup_fraction", "simulator_version", "rng", "scenario"}}

``targets`` cover exactly the pairs with positive demand, in (src, dst) order.
"""
from __future__ import annotations

import gzip
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .graph import PathGraph, scenario_graph, union
from .netcore import (RoutingScheme, Topology, TrafficMatrix, generate_routing_variants,
                      generate_traffic_matrix, topology_from_dict, topology_to_dict)
from .rng import ALGORITHM, derive_seed, make_rng
from .simulator import SIMULATOR_VERSION, SimConfig, simulate, summarize

log = logging.getLogger(__name__)

SHARD_SIZE = 1000
TARGET_FIELDS = ("n", "mean", "var", "mean_log", "dropped")


@dataclass
class Sample:
    topology: Topology
    routing: RoutingScheme
    tm: TrafficMatrix
    targets: dict[str, np.ndarray]
    routing_id: int = 0
    meta: dict = field(default_factory=dict)
    _graph: PathGraph | None = field(default=None, repr=False, compare=False)

    @property
    def pairs(self):
        return self.tm.active_pairs()

    @property
    def graph(self) -> PathGraph:
        if self._graph is None:
            self._graph = scenario_graph(self.topology, self.routing, self.tm)
        return self._graph

    @property
    def loss_ratio(self) -> np.ndarray:
        n, l = self.targets["n"], self.targets["dropped"]
        tot = n + l
        return np.divide(l, tot, out=np.zeros_like(l), where=tot > 0)


def targets_from_stats(pairs, stats) -> dict[str, np.ndarray]:
    rows = []
    for p in pairs:
        s = stats[p]
        m = summarize(s)
        rows.append((s.delivered, m.mean_delay, m.delay_variance, m.mean_log_delay, s.dropped))
    arr = np.array(rows, dtype=float).reshape(-1, 5)
    return {k: arr[:, i].copy() for i, k in enumerate(TARGET_FIELDS)}


# --- serialization ---------------------------------------------------------

def sample_to_json(s: Sample) -> str:
    pairs = s.pairs
    t = s.targets
    rec = {
        "topology": topology_to_dict(s.topology),
        "routing_id": s.routing_id,
        "routing": [[a, b, list(p)] for (a, b), p in s.routing.paths.items()],
        "ti": s.tm.ti,
        "tm": [[a, b, v] for (a, b), v in s.tm.demand.items()],
        "targets": [[a, b, int(t["n"][k]), float(t["mean"][k]), float(t["var"][k]),
                     float(t["mean_log"][k]), int(t["dropped"][k])] for k, (a, b) in enumerate(pairs)],
        "meta": s.meta,
    }
    return json.dumps(rec, sort_keys=True)


def sample_from_json(line: str) -> Sample:
    rec = json.loads(line)
    topo = topology_from_dict(rec["topology"])
    routing = RoutingScheme({(a, b): tuple(p) for a, b, p in rec["routing"]})
    tm = TrafficMatrix({(a, b): v for a, b, v in rec["tm"]}, rec.get("ti", 0.0))
    by_pair = {(r[0], r[1]): r[2:] for r in rec["targets"]}
    pairs = tm.active_pairs()
    if set(by_pair) != set(pairs):
        raise ValueError("targets must cover exactly the pairs with positive demand")
    arr = np.array([by_pair[p] for p in pairs], dtype=float).reshape(-1, 5)
    targets = {k: arr[:, i].copy() for i, k in enumerate(TARGET_FIELDS)}
    return Sample(topo, routing, tm, targets, rec.get("routing_id", 0), rec.get("meta", {}))


def _gzip_bytes(text: str) -> bytes:
    buf = io.BytesIO()
    with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as f:
        f.write(text.encode("utf-8"))
    return buf.getvalue()


def write_dataset(samples: Sequence[Sample], prefix, shard_size: int = SHARD_SIZE) -> list[Path]:
    """Write ``<prefix>-NNNNN.samples.gz`` shards; output bytes depend only on content."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(0, max(len(samples), 1), shard_size):
        chunk = samples[i:i + shard_size]
        path = prefix.parent / f"{prefix.name}-{i // shard_size:05d}.samples.gz"
        text = "".join(sample_to_json(s) + "\n" for s in chunk)
        path.write_bytes(_gzip_bytes(text))
        paths.append(path)
    return paths


def shard_paths(source) -> list[Path]:
    source = Path(source)
    if source.is_dir():
        return sorted(source.glob("*.samples.gz"))
    if source.exists():
        return [source]
    found = sorted(source.parent.glob(f"{source.name}-*.samples.gz"))
    if not found:
        raise FileNotFoundError(f"no dataset shards at {source}")
    return found


def read_dataset(source) -> list[Sample]:
    samples = []
    for path in shard_paths(source):
        with gzip.open(path, "rt", encoding="utf-8") as f:
            samples.extend(sample_from_json(line) for line in f if line.strip())
    return samples


def fingerprint(samples: Sequence[Sample]) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(sample_to_json(s).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()[:16]


# --- generation ------------------------------------------------------------

@dataclass(frozen=True)
class GenConfig:
    ti_range: tuple[float, float] = (6000.0, 24000.0)
    schemes_per_topo: int = 20
    tms_per_scheme: int = 40
    perturbed_links: int | None = None   # default: half of the directed links
    delta: float = 0.5
    duration: float = 16000.0
    warmup_fraction: float = 0.10
    seed: int = 0


@dataclass(frozen=True)
class _Job:
    index: int
    topo: Topology
    routing: RoutingScheme
    routing_id: int
    ti: float
    tm_seed: int
    sim_seed: int
    cfg: GenConfig


def _run_job(job: _Job) -> tuple[int, Sample | None, str]:
    try:
        tm = generate_traffic_matrix(job.topo, job.ti, job.tm_seed)
        sim = SimConfig(job.cfg.duration, job.cfg.warmup_fraction, job.sim_seed)
        stats = simulate(job.topo, job.routing, tm, sim)
        meta = {"seed": job.sim_seed, "tm_seed": job.tm_seed, "duration": job.cfg.duration,
                "warmup_fraction": job.cfg.warmup_fraction, "simulator_version": SIMULATOR_VERSION,
                "rng": ALGORITHM, "scenario": job.index}
        return job.index, Sample(job.topo, job.routing, tm, targets_from_stats(tm.active_pairs(), stats),
                                 job.routing_id, meta), ""
    except Exception as exc:  # one bad scenario must not sink the whole run
        return job.index, None, f"{type(exc).__name__}: {exc}"


def plan_jobs(topologies: Sequence[Topology], cfg: GenConfig) -> list[_Job]:
    jobs = []
    lo, hi = cfg.ti_range
    for ti_idx, topo in enumerate(topologies):
        k = cfg.perturbed_links or max(1, topo.n_links // 2)
        schemes = generate_routing_variants(topo, cfg.schemes_per_topo, k, cfg.delta,
                                            derive_seed(cfg.seed, ti_idx, 0))
        for r_idx, routing in enumerate(schemes):
            for m_idx in range(cfg.tms_per_scheme):
                rng = make_rng(cfg.seed, ti_idx, r_idx, m_idx)
                ti = float(rng.uniform(lo, hi))
                jobs.append(_Job(len(jobs), topo, routing, r_idx, ti,
                                 derive_seed(cfg.seed, ti_idx, r_idx, m_idx, 1),
                                 derive_seed(cfg.seed, ti_idx, r_idx, m_idx, 2), cfg))
    return jobs


def generate_dataset(topologies: Sequence[Topology], cfg: GenConfig = GenConfig(),
                     jobs: int = 1, progress: bool = False) -> tuple[list[Sample], list[tuple[int, str]]]:
    """Simulate every topology x routing variant x traffic matrix scenario.

    Returns the samples in scenario order and the list of failed scenarios.
    """
    if not topologies:
        raise ValueError("need at least one topology")
    planned = plan_jobs(topologies, cfg)
    results: dict[int, Sample] = {}
    failures: list[tuple[int, str]] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = pool.map(_run_job, planned, chunksize=8)
            for idx, sample, err in outcomes:
                _collect(idx, sample, err, results, failures, len(planned), progress)
    else:
        for job in planned:
            _collect(*_run_job(job), results, failures, len(planned), progress)
    return [results[i] for i in sorted(results)], failures


def _collect(idx, sample, err, results, failures, total, progress):
    if sample is None:
        log.warning("scenario %d failed: %s", idx, err)
        failures.append((idx, err))
    else:
        results[idx] = sample
    if progress and (idx + 1) % 100 == 0:
        log.info("simulated %d/%d scenarios", idx + 1, total)


# --- splitting -------------------------------------------------------------

SPLIT_MODES = ("random", "hold-out-topology", "hold-out-routing")


def split(samples: Sequence[Sample], test_fraction: float = 0.3, mode: str = "random",
          seed: int = 0, holdout: Sequence[str] = ()) -> tuple[list[Sample], list[Sample]]:
    if not samples:
        raise ValueError("cannot split an empty dataset")
    if mode not in SPLIT_MODES:
        raise ValueError(f"unknown split mode {mode!r}")
    rng = make_rng(seed)
    if mode == "random":
        n_test = int(round(test_fraction * len(samples)))
        test_idx = set(rng.permutation(len(samples))[:n_test].tolist())
        is_test = [i in test_idx for i in range(len(samples))]
    elif mode == "hold-out-topology":
        names = set(holdout)
        if not names:
            raise ValueError("hold-out-topology needs at least one topology name")
        is_test = [s.topology.name in names for s in samples]
    else:
        held: set[tuple[str, int]] = set()
        for name in sorted({s.topology.name for s in samples}):
            ids = sorted({s.routing_id for s in samples if s.topology.name == name})
            k = int(round(test_fraction * len(ids)))
            held.update((name, int(r)) for r in rng.permutation(ids)[:k])
        is_test = [(s.topology.name, s.routing_id) in held for s in samples]
    train = [s for s, t in zip(samples, is_test) if not t]
    test = [s for s, t in zip(samples, is_test) if t]
    if not train or not test:
        raise ValueError(f"split produced an empty side (train={len(train)}, test={len(test)})")
    return train, test


# --- batching --------------------------------------------------------------

@dataclass
class Batch:
    graph: PathGraph
    targets: dict[str, np.ndarray]
    link_offsets: np.ndarray
    path_offsets: np.ndarray
    indices: list[int]


def assemble(samples: Sequence[Sample], indices: Sequence[int] | None = None) -> Batch:
    """One disconnected graph holding every sample; no path crosses samples."""
    indices = list(range(len(samples))) if indices is None else list(indices)
    chosen = [samples[i] for i in indices]
    graph, link_off, path_off = union([s.graph for s in chosen])
    targets = {k: np.concatenate([s.targets[k] for s in chosen]) for k in TARGET_FIELDS}
    return Batch(graph, targets, link_off, path_off, indices)


def make_batches(samples: Sequence[Sample], batch_size: int, seed: int = 0,
                 epochs: int | None = None) -> Iterator[Batch]:
    """Shuffled minibatches, reshuffled every epoch; the short final batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    epoch = 0
    while epochs is None or epoch < epochs:
        order = make_rng(seed, epoch).permutation(len(samples))
        for i in range(0, len(order), batch_size):
            yield assemble(samples, order[i:i + batch_size].tolist())
        epoch += 1


def default_jobs() -> int:
    return max(1, os.cpu_count() or 1)
