"""Packet-level discrete-event simulator.

Each ordered pair emits packets as a Poisson process at ``demand / 1000``
packets per time unit. Every directed link is a FIFO drop-tail server with
transmission time ``size / capacity`` and at most ``buffer`` packets in the
system. There is no propagation delay, so a packet leaving one link arrives at
the next one at the same instant.

Arrival times and sizes are drawn up front with numpy (one PCG64 stream per
pair); the event loop itself is compiled with numba.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .netcore import Pair, RoutingError, RoutingScheme, Topology, TrafficMatrix
from .rng import make_rng

SIMULATOR_VERSION = "1"
MEAN_PACKET_BITS = 1000.0
SMALL_PACKET_BITS = 300.0
LARGE_PACKET_BITS = 1700.0


@dataclass(frozen=True)
class SimConfig:
    duration: float = 16000.0
    warmup_fraction: float = 0.10
    seed: int = 0
    buffer_includes_in_service: bool = True
    # "mixture": 300/1700 bits with equal probability; "exponential": test mode
    packet_sizes: str = "mixture"

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if self.packet_sizes not in ("mixture", "exponential"):
            raise ValueError(f"unknown packet size model {self.packet_sizes!r}")

    @property
    def mean_packet_bits(self) -> float:
        return MEAN_PACKET_BITS


@dataclass
class PairStats:
    delivered: int = 0
    dropped: int = 0
    sum_delay: float = 0.0
    sum_delay_sq: float = 0.0
    sum_log_delay: float = 0.0


@dataclass
class Summary:
    mean_delay: float
    delay_variance: float
    mean_log_delay: float
    loss_ratio: float
    no_packets: bool = False


def summarize(stats: PairStats) -> Summary:
    n, l = stats.delivered, stats.dropped
    loss = l / (n + l) if n + l > 0 else 0.0
    if n == 0:
        return Summary(0.0, 0.0, 0.0, loss, no_packets=True)
    mean = stats.sum_delay / n
    var = max(stats.sum_delay_sq / n - mean * mean, 0.0)
    return Summary(mean, var, stats.sum_log_delay / n, loss)


@dataclass
class LinkCounters:
    arrived: np.ndarray
    departed: np.ndarray
    dropped: np.ndarray
    in_system: np.ndarray


@dataclass
class SimResult:
    pairs: dict[Pair, PairStats]
    links: LinkCounters = field(repr=False)


@numba.njit(cache=True)
def _heap_push(ht, hs, hp, hh, n, t, s, p, h):
    i = n
    ht[i] = t
    hs[i] = s
    hp[i] = p
    hh[i] = h
    while i > 0:
        parent = (i - 1) >> 1
        if ht[parent] < ht[i] or (ht[parent] == ht[i] and hs[parent] < hs[i]):
            break
        ht[parent], ht[i] = ht[i], ht[parent]
        hs[parent], hs[i] = hs[i], hs[parent]
        hp[parent], hp[i] = hp[i], hp[parent]
        hh[parent], hh[i] = hh[i], hh[parent]
        i = parent
    return n + 1


@numba.njit(cache=True)
def _heap_pop(ht, hs, hp, hh, n):
    n -= 1
    ht[0] = ht[n]
    hs[0] = hs[n]
    hp[0] = hp[n]
    hh[0] = hh[n]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= n:
            break
        c = left
        right = left + 1
        if right < n and (ht[right] < ht[left] or (ht[right] == ht[left] and hs[right] < hs[left])):
            c = right
        if ht[i] < ht[c] or (ht[i] == ht[c] and hs[i] < hs[c]):
            break
        ht[c], ht[i] = ht[i], ht[c]
        hs[c], hs[i] = hs[i], hs[c]
        hp[c], hp[i] = hp[i], hp[c]
        hh[c], hh[i] = hh[i], hh[c]
        i = c
    return n


@numba.njit(cache=True)
def _run(t0, size, pair, path_off, path_links, cap, limit, warmup, horizon, n_pairs):
    n_links = cap.shape[0]
    delivered = np.zeros(n_pairs, np.int64)
    dropped = np.zeros(n_pairs, np.int64)
    sum_d = np.zeros(n_pairs)
    sum_d2 = np.zeros(n_pairs)
    sum_log = np.zeros(n_pairs)
    arrived = np.zeros(n_links, np.int64)
    departed = np.zeros(n_links, np.int64)
    ldrop = np.zeros(n_links, np.int64)
    insys = np.zeros(n_links, np.int64)
    last_dep = np.zeros(n_links)

    capacity = 1024
    ht = np.empty(capacity)
    hs = np.empty(capacity, np.int64)
    hp = np.empty(capacity, np.int64)
    hh = np.empty(capacity, np.int64)
    n = 0
    seq = 0
    nxt = 0
    n_pkts = t0.shape[0]

    while True:
        take_emission = False
        if nxt < n_pkts:
            if n == 0 or t0[nxt] < ht[0]:
                take_emission = True
        elif n == 0:
            break
        if take_emission:
            now = t0[nxt]
            pkt = nxt
            hop = 0
            nxt += 1
        else:
            now = ht[0]
            if now >= horizon:
                break
            pkt = hp[0]
            hop = hh[0]
            n = _heap_pop(ht, hs, hp, hh, n)
            k = pair[pkt]
            lid = path_links[path_off[k] + hop]
            insys[lid] -= 1
            departed[lid] += 1
            hop += 1
            if path_off[k] + hop == path_off[k + 1]:
                if t0[pkt] >= warmup:
                    d = now - t0[pkt]
                    delivered[k] += 1
                    sum_d[k] += d
                    sum_d2[k] += d * d
                    sum_log[k] += math.log(d)
                continue
        if now >= horizon:
            break
        # arrival of pkt at hop
        k = pair[pkt]
        lid = path_links[path_off[k] + hop]
        arrived[lid] += 1
        if insys[lid] >= limit[lid]:
            ldrop[lid] += 1
            if t0[pkt] >= warmup:
                dropped[k] += 1
            continue
        insys[lid] += 1
        start = now if now > last_dep[lid] else last_dep[lid]
        dep = start + size[pkt] / cap[lid]
        last_dep[lid] = dep
        if n == capacity:
            capacity *= 2
            ht2 = np.empty(capacity)
            hs2 = np.empty(capacity, np.int64)
            hp2 = np.empty(capacity, np.int64)
            hh2 = np.empty(capacity, np.int64)
            ht2[:n] = ht[:n]
            hs2[:n] = hs[:n]
            hp2[:n] = hp[:n]
            hh2[:n] = hh[:n]
            ht, hs, hp, hh = ht2, hs2, hp2, hh2
        n = _heap_push(ht, hs, hp, hh, n, dep, seq, pkt, hop)
        seq += 1
    return delivered, dropped, sum_d, sum_d2, sum_log, arrived, departed, ldrop, insys


def _draw_packets(rate: float, horizon: float, cfg: SimConfig, src: int, dst: int):
    rng = make_rng(cfg.seed, src, dst)
    count = rng.poisson(rate * horizon)
    times = np.sort(rng.uniform(0.0, horizon, size=count))
    if cfg.packet_sizes == "mixture":
        sizes = np.where(rng.random(count) < 0.5, SMALL_PACKET_BITS, LARGE_PACKET_BITS)
    else:
        sizes = rng.exponential(MEAN_PACKET_BITS, size=count)
    return times, sizes


def simulate_full(topo: Topology, routing: RoutingScheme, tm: TrafficMatrix,
                  cfg: SimConfig = SimConfig()) -> SimResult:
    pairs = tm.active_pairs()
    for p in pairs:
        if p not in routing.paths or not routing.paths[p]:
            raise RoutingError(f"pair {p} has demand but no path")
        if any(not (0 <= lid < topo.n_links) for lid in routing.paths[p]):
            raise RoutingError(f"pair {p} references an unknown link")

    path_off = np.zeros(len(pairs) + 1, np.int64)
    flat: list[int] = []
    times, sizes, owners = [], [], []
    for k, (s, d) in enumerate(pairs):
        flat.extend(routing.paths[(s, d)])
        path_off[k + 1] = len(flat)
        t, z = _draw_packets(tm.demand[(s, d)] / MEAN_PACKET_BITS, cfg.duration, cfg, s, d)
        times.append(t)
        sizes.append(z)
        owners.append(np.full(t.shape[0], k, np.int64))

    if pairs:
        t0 = np.concatenate(times)
        order = np.argsort(t0, kind="stable")
        t0 = t0[order]
        size = np.concatenate(sizes)[order]
        owner = np.concatenate(owners)[order]
    else:
        t0 = np.zeros(0)
        size = np.zeros(0)
        owner = np.zeros(0, np.int64)

    limit = topo.buffers.copy()
    if not cfg.buffer_includes_in_service:
        limit += 1
    out = _run(t0, size, owner, path_off, np.asarray(flat, np.int64), topo.capacities, limit,
               cfg.warmup_fraction * cfg.duration, float(cfg.duration), len(pairs))
    delivered, dropped, sum_d, sum_d2, sum_log, arrived, departed, ldrop, insys = out
    stats = {
        p: PairStats(int(delivered[k]), int(dropped[k]), float(sum_d[k]), float(sum_d2[k]),
                     float(sum_log[k]))
        for k, p in enumerate(pairs)
    }
    for p in tm.demand:
        if p[0] != p[1] and p not in stats:
            stats[p] = PairStats()
    stats = dict(sorted(stats.items()))
    return SimResult(stats, LinkCounters(arrived, departed, ldrop, insys))


def simulate(topo: Topology, routing: RoutingScheme, tm: TrafficMatrix,
             cfg: SimConfig = SimConfig()) -> dict[Pair, PairStats]:
    """Per-pair delay and drop statistics for one scenario."""
    return simulate_full(topo, routing, tm, cfg).pairs
