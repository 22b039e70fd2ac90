"""Queuing-theory baseline: lossy-network fixed point over M/M/1/b links.

Each link is an independent M/M/1/b queue (b = packets in system, including
the one in service). Offered load on a link is thinned by the blocking
probabilities of the upstream links of every path crossing it, and the
blocking probabilities are iterated to a fixed point. Path statistics assume
independent links.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netcore import Pair, RoutingScheme, Topology, TrafficMatrix
from .simulator import MEAN_PACKET_BITS

RHO_ONE_TOL = 1e-9


def blocking_probability(rho, b):
    """M/M/1/b blocking probability ``(1-rho) rho^b / (1 - rho^(b+1))``.

    Vectorized over ``rho`` and ``b``. Uses the ``1/(b+1)`` limit at rho=1 and a
    rescaled form for rho>1 so large buffers do not overflow.
    """
    rho = np.asarray(rho, dtype=float)
    b = np.asarray(b, dtype=float)
    rho, b = np.broadcast_arrays(rho, b)
    out = np.zeros(rho.shape)
    one = np.abs(rho - 1.0) < RHO_ONE_TOL
    low = (rho < 1.0) & ~one & (rho > 0)
    high = (rho > 1.0) & ~one
    out[one] = 1.0 / (b[one] + 1.0)
    if np.any(low):
        r, bb = rho[low], b[low]
        lr = np.log(r)
        out[low] = (1.0 - r) * np.exp(bb * lr) / -np.expm1((bb + 1.0) * lr)
    if np.any(high):
        r, bb = rho[high], b[high]
        lr = np.log(r)
        # divide numerator and denominator by rho^(b+1)
        out[high] = (1.0 - 1.0 / r) / -np.expm1(-(bb + 1.0) * lr)
    return out if out.ndim else float(out)


def _stationary(rho: float, b: int) -> np.ndarray:
    k = np.arange(b + 1, dtype=float)
    if abs(rho - 1.0) < RHO_ONE_TOL:
        return np.full(b + 1, 1.0 / (b + 1))
    if rho == 0.0:
        pi = np.zeros(b + 1)
        pi[0] = 1.0
        return pi
    # work relative to the largest term to avoid overflow/underflow
    logw = k * math.log(rho)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def link_mm1b_stats(rho: float, service_rate: float, b: int) -> tuple[float, float, float]:
    """Blocking probability and sojourn mean/variance of an accepted packet.

    An accepted arrival that finds ``k`` packets waits for ``k + 1``
    exponential services, so the sojourn time is a mixture of Erlang(k+1, mu)
    weighted by the arrival-time distribution conditioned on acceptance.
    """
    if rho < 0 or b < 1 or not service_rate > 0:
        raise ValueError("need rho >= 0, b >= 1 and service_rate > 0")
    pi = _stationary(rho, b)
    pb = float(blocking_probability(rho, b))
    accepted = pi[:-1] / pi[:-1].sum()
    k1 = np.arange(1, b + 1, dtype=float)
    mean = float(np.dot(accepted, k1)) / service_rate
    second = float(np.dot(accepted, k1 * (k1 + 1.0))) / service_rate**2
    return pb, mean, max(second - mean * mean, 0.0)


@dataclass
class QtSolution:
    pairs: list[Pair]
    load: np.ndarray          # carried bits/time into each link
    rho: np.ndarray
    blocking: np.ndarray
    link_delay: np.ndarray
    link_variance: np.ndarray
    path_delay: np.ndarray
    path_variance: np.ndarray
    path_loss: np.ndarray
    iterations: int
    converged: bool

    def per_pair(self) -> dict[Pair, tuple[float, float, float]]:
        return {p: (float(self.path_delay[k]), float(self.path_variance[k]), float(self.path_loss[k]))
                for k, p in enumerate(self.pairs)}


def _incidence(topo: Topology, routing: RoutingScheme, pairs: list[Pair]):
    max_len = max((len(routing.paths[p]) for p in pairs), default=0)
    idx = np.zeros((len(pairs), max_len), dtype=np.int64)
    mask = np.zeros((len(pairs), max_len), dtype=bool)
    for k, p in enumerate(pairs):
        path = routing.paths[p]
        idx[k, :len(path)] = path
        mask[k, :len(path)] = True
    return idx, mask


def carried_loads(demand: np.ndarray, idx: np.ndarray, mask: np.ndarray, pb: np.ndarray,
                  n_links: int) -> np.ndarray:
    """Traffic entering each link after upstream blocking."""
    survive = np.where(mask, 1.0 - pb[idx], 1.0)
    # offered to position j = demand * prod of survival over positions < j
    upstream = np.cumprod(np.concatenate([np.ones((len(demand), 1)), survive[:, :-1]], axis=1), axis=1)
    lam = demand[:, None] * upstream * mask
    load = np.zeros(n_links)
    np.add.at(load, idx[mask], lam[mask])
    return load


def solve_fixed_point(topo: Topology, routing: RoutingScheme, tm: TrafficMatrix,
                      tol: float = 1e-9, max_iter: int = 1000, damping: float = 0.5) -> QtSolution:
    if not tol > 0:
        raise ValueError("tol must be positive")
    pairs = tm.active_pairs()
    demand = np.array([tm.demand[p] for p in pairs], dtype=float)
    idx, mask = _incidence(topo, routing, pairs)
    cap = topo.capacities
    buf = topo.buffers
    pb = np.zeros(topo.n_links)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        rho = carried_loads(demand, idx, mask, pb, topo.n_links) / cap
        target = blocking_probability(rho, buf)
        new = (1.0 - damping) * pb + damping * target
        # relative change: blocking probabilities of 1e-10 are common and an
        # absolute test would stop before they settle
        delta = np.max(np.abs(new - pb) / np.maximum(np.abs(new), 1e-300), initial=0.0)
        pb = new
        if delta < tol:
            converged = True
            break
    load = carried_loads(demand, idx, mask, pb, topo.n_links)
    rho = load / cap
    mu = cap / MEAN_PACKET_BITS
    stats = [link_mm1b_stats(float(r), float(m), int(b)) for r, m, b in zip(rho, mu, buf)]
    link_delay = np.array([s[1] for s in stats])
    link_var = np.array([s[2] for s in stats])
    path_delay, path_var, path_loss = aggregate_paths(link_delay, link_var, pb, idx, mask)
    return QtSolution(pairs, load, rho, pb, link_delay, link_var, path_delay, path_var, path_loss,
                      it, converged)


def aggregate_paths(link_delay, link_variance, link_blocking, idx, mask):
    """Sum delays and variances along each path; losses combine as 1 - prod(1 - Pb)."""
    link_delay = np.asarray(link_delay, float)
    link_variance = np.asarray(link_variance, float)
    link_blocking = np.asarray(link_blocking, float)
    delay = np.where(mask, link_delay[idx], 0.0).sum(axis=1)
    var = np.where(mask, link_variance[idx], 0.0).sum(axis=1)
    loss = 1.0 - np.where(mask, 1.0 - link_blocking[idx], 1.0).prod(axis=1)
    return delay, var, loss


def predict(topo: Topology, routing: RoutingScheme, tm: TrafficMatrix) -> dict[Pair, tuple[float, float, float]]:
    """Per-pair (mean delay, jitter, loss ratio) from the fixed-point solution."""
    return solve_fixed_point(topo, routing, tm).per_pair()
