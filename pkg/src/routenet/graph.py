"""Index structures for running message passing over one or many scenarios.

A ``PathGraph`` holds link features, path features and path->link sequences
for a set of paths. Paths are internally sorted by decreasing length so that
the paths still active at position ``j`` form a prefix; ``order`` maps sorted
rows back to the caller's path order. Several graphs can be merged into one
disconnected graph with ``union``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netcore import Pair, RoutingScheme, Topology, TrafficMatrix


@dataclass(frozen=True)
class PathGraph:
    capacity: np.ndarray            # (L,) link capacities
    demand: np.ndarray              # (P,) path bandwidth, caller order
    paths: tuple[np.ndarray, ...]   # link ids per path, caller order

    @property
    def n_links(self) -> int:
        return int(self.capacity.shape[0])

    @property
    def n_paths(self) -> int:
        return int(self.demand.shape[0])

    def schedule(self) -> "Schedule":
        return Schedule.build(self.paths)


@dataclass(frozen=True)
class Schedule:
    order: np.ndarray               # sorted row -> caller row
    inverse: np.ndarray             # caller row -> sorted row
    counts: tuple[int, ...]         # active sorted paths at each position
    links: tuple[np.ndarray, ...]   # link ids of the active paths at each position

    @classmethod
    def build(cls, paths) -> "Schedule":
        lengths = np.array([len(p) for p in paths], dtype=np.int64)
        if np.any(lengths == 0):
            raise ValueError("empty path")
        order = np.argsort(-lengths, kind="stable")
        inverse = np.empty_like(order)
        inverse[order] = np.arange(order.size)
        sorted_paths = [paths[i] for i in order]
        max_len = int(lengths.max()) if lengths.size else 0
        counts, links = [], []
        for j in range(max_len):
            n = int(np.sum(lengths > j))
            counts.append(n)
            links.append(np.array([sorted_paths[i][j] for i in range(n)], dtype=np.int64))
        return cls(order, inverse, tuple(counts), tuple(links))


def scenario_graph(topo: Topology, routing: RoutingScheme, tm: TrafficMatrix,
                   pairs: list[Pair] | None = None) -> PathGraph:
    """Graph for the pairs with positive demand (sorted), or an explicit pair list."""
    pairs = tm.active_pairs() if pairs is None else pairs
    for p in pairs:
        path = routing.paths.get(p)
        if not path:
            raise ValueError(f"pair {p} has no path")
        if any(not (0 <= l < topo.n_links) for l in path):
            raise ValueError(f"pair {p} references an unknown link")
    return PathGraph(
        topo.capacities,
        np.array([tm.demand[p] for p in pairs], dtype=float),
        tuple(np.asarray(routing.paths[p], dtype=np.int64) for p in pairs),
    )


def union(graphs: list[PathGraph]) -> tuple[PathGraph, np.ndarray, np.ndarray]:
    """Disconnected union; returns the graph and per-member link/path offsets."""
    link_off = np.zeros(len(graphs) + 1, dtype=np.int64)
    path_off = np.zeros(len(graphs) + 1, dtype=np.int64)
    paths: list[np.ndarray] = []
    for i, g in enumerate(graphs):
        link_off[i + 1] = link_off[i] + g.n_links
        path_off[i + 1] = path_off[i] + g.n_paths
        paths.extend(p + link_off[i] for p in g.paths)
    merged = PathGraph(
        np.concatenate([g.capacity for g in graphs]),
        np.concatenate([g.demand for g in graphs]),
        tuple(paths),
    )
    return merged, link_off, path_off
