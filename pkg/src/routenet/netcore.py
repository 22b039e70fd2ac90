"""Topologies, routing schemes and traffic matrices.

Links are directed. A physical bidirectional link is two ``Link`` records with
independent queues. Capacities are in bits per time unit, buffers in packets.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rng import make_rng

Pair = tuple[int, int]

DEFAULT_BUFFER = 32
PAPER_CAPACITIES = (10000.0, 40000.0, 100000.0)


class TopologyError(ValueError):
    pass


class RoutingError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    id: int
    src: int
    dst: int
    capacity: float
    buffer: int = DEFAULT_BUFFER


@dataclass(frozen=True)
class Topology:
    node_count: int
    links: tuple[Link, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if self.node_count < 2:
            raise TopologyError(f"node_count must be >= 2, got {self.node_count}")
        for i, link in enumerate(self.links):
            if link.id != i:
                raise TopologyError(f"link ids must be dense 0..n-1; position {i} has id {link.id}")
            if not (0 <= link.src < self.node_count and 0 <= link.dst < self.node_count):
                raise TopologyError(f"link {i} endpoint outside [0, {self.node_count})")
            if link.src == link.dst:
                raise TopologyError(f"link {i} is a self-loop on node {link.src}")
            if not link.capacity > 0:
                raise TopologyError(f"link {i} capacity must be > 0")
            if link.buffer < 1:
                raise TopologyError(f"link {i} buffer must be >= 1")

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([l.capacity for l in self.links], dtype=float)

    @property
    def buffers(self) -> np.ndarray:
        return np.array([l.buffer for l in self.links], dtype=np.int64)

    def pairs(self) -> list[Pair]:
        n = self.node_count
        return [(i, j) for i in range(n) for j in range(n) if i != j]

    def out_links(self) -> list[list[Link]]:
        out: list[list[Link]] = [[] for _ in range(self.node_count)]
        for link in self.links:
            out[link.src].append(link)
        return out

    def has_edge(self, u: int, v: int) -> bool:
        return any(l.src == u and l.dst == v for l in self.links)

    def with_link(self, u: int, v: int, capacity: float, buffer: int = DEFAULT_BUFFER,
                  bidirectional: bool = True) -> "Topology":
        links = list(self.links)
        links.append(Link(len(links), u, v, float(capacity), buffer))
        if bidirectional:
            links.append(Link(len(links), v, u, float(capacity), buffer))
        return Topology(self.node_count, tuple(links), self.name)

    def with_capacity(self, link_id: int, capacity: float) -> "Topology":
        links = [
            Link(l.id, l.src, l.dst, float(capacity), l.buffer) if l.id == link_id else l
            for l in self.links
        ]
        return Topology(self.node_count, tuple(links), self.name)


def build_topology(node_count: int, edges: Iterable[tuple[int, int, float]], name: str = "",
                   buffer: int = DEFAULT_BUFFER) -> Topology:
    """Build a topology from undirected ``(u, v, capacity)`` edges.

    Each edge becomes two directed links, ``u->v`` then ``v->u``.
    """
    links = []
    for u, v, cap in edges:
        links.append(Link(len(links), u, v, float(cap), buffer))
        links.append(Link(len(links), v, u, float(cap), buffer))
    return Topology(node_count, tuple(links), name)


@dataclass(frozen=True)
class RoutingScheme:
    paths: Mapping[Pair, tuple[int, ...]]
    provenance: tuple[float, ...] | None = None

    def __post_init__(self):
        frozen = {tuple(k): tuple(int(x) for x in v) for k, v in dict(self.paths).items()}
        object.__setattr__(self, "paths", dict(sorted(frozen.items())))
        if self.provenance is not None:
            object.__setattr__(self, "provenance", tuple(float(w) for w in self.provenance))

    def __eq__(self, other):
        return isinstance(other, RoutingScheme) and self.paths == other.paths

    def __hash__(self):
        return hash(tuple(self.paths.items()))

    def path(self, src: int, dst: int) -> tuple[int, ...]:
        return self.paths[(src, dst)]


@dataclass(frozen=True)
class TrafficMatrix:
    demand: Mapping[Pair, float]
    ti: float = 0.0

    def __post_init__(self):
        d = {tuple(k): float(v) for k, v in dict(self.demand).items()}
        for (i, j), v in d.items():
            if v < 0:
                raise ValueError(f"negative demand on pair ({i}, {j})")
            if i == j and v != 0:
                raise ValueError(f"self-demand on node {i} must be zero")
        object.__setattr__(self, "demand", dict(sorted(d.items())))

    def active_pairs(self) -> list[Pair]:
        return [p for p, v in self.demand.items() if v > 0 and p[0] != p[1]]

    def total(self) -> float:
        return float(sum(self.demand.values()))


def generate_traffic_matrix(topo: Topology, ti: float, seed: int) -> TrafficMatrix:
    """Uniform random matrix: each ordered pair gets ``U(0.1, 1) * ti / (N - 1)``."""
    if not ti > 0:
        raise ValueError(f"traffic intensity must be positive, got {ti}")
    rng = make_rng(seed)
    pairs = topo.pairs()
    u = rng.uniform(0.1, 1.0, size=len(pairs))
    scale = ti / (topo.node_count - 1)
    return TrafficMatrix({p: float(x * scale) for p, x in zip(pairs, u)}, ti=float(ti))


def _distances_to(topo: Topology, weights: np.ndarray, dst: int) -> np.ndarray:
    """Reverse Dijkstra: shortest distance from every node to ``dst``."""
    inc: list[list[Link]] = [[] for _ in range(topo.node_count)]
    for link in topo.links:
        inc[link.dst].append(link)
    dist = np.full(topo.node_count, np.inf)
    dist[dst] = 0.0
    heap = [(0.0, dst)]
    done = np.zeros(topo.node_count, dtype=bool)
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for link in inc[v]:
            nd = d + weights[link.id]
            if nd < dist[link.src]:
                dist[link.src] = nd
                heapq.heappush(heap, (nd, link.src))
    return dist


def shortest_path_routing(topo: Topology, weights: Sequence[float] | None = None) -> RoutingScheme:
    """Minimum-weight path for every ordered pair.

    Among equal-cost paths the lexicographically smallest node sequence wins;
    among parallel links the lowest link id wins. Costs within a relative 1e-9
    are treated as equal so that float summation order cannot break ties.
    """
    w = np.ones(topo.n_links) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (topo.n_links,):
        raise ValueError(f"expected {topo.n_links} weights, got shape {w.shape}")
    if np.any(w <= 0):
        raise ValueError("link weights must be positive")
    out = topo.out_links()
    paths: dict[Pair, tuple[int, ...]] = {}
    for dst in range(topo.node_count):
        dist = _distances_to(topo, w, dst)
        for src in range(topo.node_count):
            if src == dst:
                continue
            if not np.isfinite(dist[src]):
                raise RoutingError(f"no path from {src} to {dst}")
            seq = []
            u = src
            while u != dst:
                best = None
                for link in out[u]:
                    d = w[link.id] + dist[link.dst]
                    if abs(d - dist[u]) <= 1e-9 * max(1.0, dist[u]):
                        if best is None or (link.dst, link.id) < (best.dst, best.id):
                            best = link
                seq.append(best.id)
                u = best.dst
            paths[(src, dst)] = tuple(seq)
    return RoutingScheme(paths, provenance=tuple(w))


def generate_routing_variants(topo: Topology, count: int, perturbed_links: int = 21,
                              delta: float = 0.05, seed: int = 0) -> list[RoutingScheme]:
    """Unit-weight shortest paths plus ``count - 1`` randomly perturbed variants.

    Every variant draws a fresh set of ``perturbed_links`` directed links with
    replacement and adds ``delta`` once per draw. Duplicates are kept.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = make_rng(seed)
    schemes = [shortest_path_routing(topo, np.ones(topo.n_links))]
    for _ in range(count - 1):
        w = np.ones(topo.n_links)
        picks = rng.integers(0, topo.n_links, size=perturbed_links)
        np.add.at(w, picks, delta)
        schemes.append(shortest_path_routing(topo, w))
    return schemes


@dataclass
class RoutingReport:
    ok: bool
    pair: Pair | None = None
    reason: str = ""
    violations: list[tuple[Pair, str]] = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate_routing(topo: Topology, routing: RoutingScheme,
                     tm: TrafficMatrix | None = None) -> RoutingReport:
    """Check every routing invariant; never raises on bad input."""
    violations: list[tuple[Pair, str]] = []
    try:
        for (src, dst), path in routing.paths.items():
            if not path:
                violations.append(((src, dst), "empty path"))
                continue
            if any(not (0 <= lid < topo.n_links) for lid in path):
                violations.append(((src, dst), "unknown link id"))
                continue
            links = [topo.links[lid] for lid in path]
            if links[0].src != src:
                violations.append(((src, dst), f"path starts at node {links[0].src}"))
            elif links[-1].dst != dst:
                violations.append(((src, dst), f"path ends at node {links[-1].dst}"))
            elif any(a.dst != b.src for a, b in zip(links, links[1:])):
                violations.append(((src, dst), "consecutive links are not adjacent"))
            elif len(set(path)) != len(path):
                violations.append(((src, dst), "repeated link"))
        needed = tm.active_pairs() if tm is not None else topo.pairs()
        for pair in needed:
            if pair not in routing.paths:
                violations.append((pair, "missing path"))
    except Exception as exc:  # malformed input is reported, not raised
        violations.append(((-1, -1), f"malformed routing: {exc}"))
    if not violations:
        return RoutingReport(True)
    pair, reason = violations[0]
    return RoutingReport(False, pair, reason, violations)


# --- serialization -------------------------------------------------------

def _dump(records: list[dict], meta: dict | None) -> str:
    lines = []
    if meta is not None:
        lines.append(json.dumps({"record": "meta", **meta}, sort_keys=True))
    lines.extend(json.dumps(r) for r in records)
    return "\n".join(lines) + "\n"


def _load(text: str) -> tuple[list[dict], dict]:
    meta: dict = {}
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("record") == "meta":
            meta = {k: v for k, v in rec.items() if k != "record"}
        else:
            records.append(rec)
    return records, meta


def topology_to_text(topo: Topology, meta: dict | None = None) -> str:
    records = [{"record": "Topology", "name": topo.name, "node_count": topo.node_count}]
    records += [{"record": "Link", "id": l.id, "src": l.src, "dst": l.dst,
                 "capacity": l.capacity, "buffer": l.buffer} for l in topo.links]
    return _dump(records, meta)


def topology_from_text(text: str) -> Topology:
    records, _ = _load(text)
    head = [r for r in records if r["record"] == "Topology"]
    if len(head) != 1:
        raise ValueError("expected exactly one Topology record")
    links = tuple(Link(r["id"], r["src"], r["dst"], float(r["capacity"]), int(r["buffer"]))
                  for r in records if r["record"] == "Link")
    return Topology(head[0]["node_count"], links, head[0].get("name", ""))


def routing_to_text(routing: RoutingScheme, meta: dict | None = None) -> str:
    head = {"record": "RoutingScheme",
            "provenance": list(routing.provenance) if routing.provenance is not None else None}
    records = [head] + [{"record": "Path", "src": s, "dst": d, "links": list(p)}
                        for (s, d), p in routing.paths.items()]
    return _dump(records, meta)


def routing_from_text(text: str) -> RoutingScheme:
    records, _ = _load(text)
    head = next((r for r in records if r["record"] == "RoutingScheme"), None)
    if head is None:
        raise ValueError("missing RoutingScheme record")
    paths = {(r["src"], r["dst"]): tuple(r["links"]) for r in records if r["record"] == "Path"}
    return RoutingScheme(paths, head.get("provenance"))


def tm_to_text(tm: TrafficMatrix, meta: dict | None = None) -> str:
    records = [{"record": "TrafficMatrix", "ti": tm.ti}]
    records += [{"record": "Demand", "src": s, "dst": d, "demand": v}
                for (s, d), v in tm.demand.items()]
    return _dump(records, meta)


def tm_from_text(text: str) -> TrafficMatrix:
    records, _ = _load(text)
    head = next((r for r in records if r["record"] == "TrafficMatrix"), None)
    if head is None:
        raise ValueError("missing TrafficMatrix record")
    demand = {(r["src"], r["dst"]): float(r["demand"]) for r in records if r["record"] == "Demand"}
    return TrafficMatrix(demand, float(head.get("ti", 0.0)))


def topology_to_dict(topo: Topology) -> dict:
    return {"name": topo.name, "node_count": topo.node_count,
            "links": [[l.src, l.dst, l.capacity, l.buffer] for l in topo.links]}


def topology_from_dict(d: dict) -> Topology:
    links = tuple(Link(i, int(s), int(t), float(c), int(b)) for i, (s, t, c, b) in enumerate(d["links"]))
    return Topology(int(d["node_count"]), links, d.get("name", ""))
