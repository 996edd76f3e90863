"""Small hand-built topologies used by tests, demos and the ``build`` smoke run."""

from __future__ import annotations

from fractions import Fraction

from .asgraph import AsGraph

# Five-level tree: AS1 on top, AS8 holding the two deepest leaves.
TREE_EDGES = [
    (1, 2), (1, 3), (1, 4),
    (2, 5), (2, 6), (2, 7),
    (3, 8), (3, 9), (3, 10),
    (4, 11), (4, 12),
    (8, 13), (8, 14),
]
TREE_LEAVES = [5, 6, 7, 9, 10, 11, 12, 13, 14]


def tree_graph() -> AsGraph:
    return AsGraph(TREE_EDGES)


def tree_guards(bw_per_as: float = 10.0) -> dict:
    """One guard per leaf AS, fingerprint ``G<asn>``."""
    return {f"G{a:02d}": (a, bw_per_as) for a in TREE_LEAVES}


# Seven interior cones under one superset root; pairs below share a guard AS.
PACK_ROOT = 100
PACK_CONES = [1, 2, 3, 4, 5, 6, 7]
PACK_CONFLICTS = [(1, 2), (1, 4), (1, 5), (2, 3), (2, 5), (2, 6), (3, 6), (3, 7)]
PACK_PRIVATE_BW = 20.0
PACK_SHARED_BW = 5.0


def _shared_asn(i, j):
    return 1000 + 10 * i + j


def _private_asns(c):
    return (200 + 10 * c, 201 + 10 * c)


def pack_graph() -> AsGraph:
    edges = [(PACK_ROOT, c) for c in PACK_CONES]
    for c in PACK_CONES:
        edges += [(c, a) for a in _private_asns(c)]
    for i, j in PACK_CONFLICTS:
        s = _shared_asn(i, j)
        edges += [(i, s), (j, s)]
    return AsGraph(edges)


def pack_guards() -> dict:
    guards = {}
    for c in PACK_CONES:
        for a in _private_asns(c):
            guards[f"P{a}"] = (a, PACK_PRIVATE_BW)
    for i, j in PACK_CONFLICTS:
        s = _shared_asn(i, j)
        guards[f"S{s}"] = (s, PACK_SHARED_BW)
    return guards


# Three guard ASes in one set; the shuffle visits them in this order.
FILL_ORDER = [
    ("GAS2", [25.0, 20.0]),
    ("GAS1", [30.0, 15.0, 10.0]),
    ("GAS3", [20.0, 25.0, 30.0, 15.0]),
]


def fill_sequence():
    """(fingerprint, bandwidth) in fill order, fingerprints ``<as>-<k>``."""
    return [(f"{name}-{k}", bw) for name, bws in FILL_ORDER for k, bw in enumerate(bws)]


# four-client path fixture: suspects 3356/1299 are the only ASes seen on both sides
PATH_CLIENTS = (10, 11, 12, 13)
PATH_ENTRY = {
    (10, 20): (10, 3356, 20), (10, 21): (10, 500, 21), (10, 22): (10, 500, 22),
    (11, 20): (11, 500, 20), (11, 21): (11, 1299, 21), (21, 11): (21, 502, 11), (11, 22): (11, 500, 22),
    (12, 20): (12, 3356, 20), (12, 21): (12, 500, 21), (12, 22): (12, 1299, 22),
    (13, 20): (13, 500, 20), (13, 21): (13, 500, 21),
}
PATH_EXIT = {
    (30, 40): (30, 3356, 40), (30, 41): (30, 600, 41),
    (31, 40): (31, 600, 40), (31, 41): (31, 1299, 41), (41, 31): (41, 600, 31),
}
PATH_STREAMS = ((0, 40), (0, 41), (1, 40), (1, 41), (2, 40), (2, 41), (3, 40))
PATH_EXITS = ((30, Fraction(3)), (31, Fraction(1)))
PATH_TABLE_SUSPECTS = (1299, 3356, 6939)
PATH_TABLE_ROWS = {30: (0.0, 0.2, 0.0), 31: (0.0, 0.0, 0.05)}


def path_guard_sets():
    from .pathsec import GuardSetOption
    return [GuardSetOption(Fraction(2), ((20, Fraction(3)), (21, Fraction(1)))),
            GuardSetOption(Fraction(1), ((22, Fraction(2)),))]


def path_oracle():
    from .pathsec import AsPathOracle
    return AsPathOracle({**PATH_ENTRY, **PATH_EXIT})
