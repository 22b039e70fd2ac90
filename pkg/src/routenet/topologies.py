"""Built-in topologies.

The toy networks are small enough to simulate thousands of scenarios on one
core. ``nsfnet`` reproduces the 14-node/21-edge NSF shape with a 10/40 kbps
capacity mix; it is provided for paper-shaped runs, not used by default.
"""
from .netcore import Topology, build_topology

LOW, HIGH = 10000.0, 40000.0


def toy5() -> Topology:
    edges = [(0, 1, LOW), (1, 2, LOW), (2, 3, LOW), (3, 4, LOW), (4, 0, HIGH), (0, 2, LOW)]
    return build_topology(5, edges, "toy5")


def toy6() -> Topology:
    edges = [(0, 1, LOW), (1, 2, HIGH), (2, 3, LOW), (3, 4, LOW), (4, 5, HIGH), (5, 0, LOW),
             (0, 3, LOW), (1, 4, LOW)]
    return build_topology(6, edges, "toy6")


def toy7() -> Topology:
    edges = [(0, 1, LOW), (1, 2, LOW), (2, 3, HIGH), (3, 4, LOW), (4, 5, LOW), (5, 6, HIGH),
             (6, 0, LOW), (0, 3, LOW), (1, 5, LOW), (3, 6, LOW)]
    return build_topology(7, edges, "toy7")


def toy8() -> Topology:
    edges = [(0, 1, LOW), (1, 2, HIGH), (2, 3, LOW), (3, 4, LOW), (4, 5, HIGH), (5, 6, LOW),
             (6, 7, LOW), (7, 0, HIGH), (0, 4, LOW), (2, 6, LOW), (1, 5, LOW)]
    return build_topology(8, edges, "toy8")


_NSF_EDGES = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 7), (2, 5), (3, 4), (3, 8), (4, 5), (4, 6),
              (5, 12), (5, 13), (6, 7), (7, 10), (8, 9), (8, 11), (9, 10), (9, 12), (10, 11),
              (10, 13), (11, 12)]


def nsfnet() -> Topology:
    edges = [(u, v, HIGH if i % 3 == 0 else LOW) for i, (u, v) in enumerate(_NSF_EDGES)]
    return build_topology(14, edges, "nsfnet")


BUILTIN = {"toy5": toy5, "toy6": toy6, "toy7": toy7, "toy8": toy8, "nsfnet": nsfnet}


def get(name: str) -> Topology:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise KeyError(f"unknown topology {name!r}; choose from {sorted(BUILTIN)}") from None
