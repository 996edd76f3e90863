"""AS relationship graph and customer cones.

Reads CAIDA serial-1 style relationship files (``A|B|-1`` for
provider-to-customer, ``A|B|0`` for peers) and answers cone queries.
Cones follow p2c links only; peers never contribute members.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable


P2C = -1
P2P = 0


class AsRelParseError(ValueError):
    """Malformed line in an AS relationship file."""

    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno


class UnknownAsError(KeyError):
    pass


@dataclass(frozen=True)
class CustomerCone:
    root: int
    members: frozenset

    @property
    def size(self) -> int:
        return len(self.members)


class AsGraph:
    """Immutable provider/customer/peer graph.

    Cones, ancestor sets and cone sizes are memoised on the instance; loading
    a new relationship file means building a new graph, which drops the cache.
    """

    def __init__(self, p2c_edges: Iterable[tuple[int, int]] = (),
                 p2p_edges: Iterable[tuple[int, int]] = (),
                 nodes: Iterable[int] = ()):
        customers: dict[int, set[int]] = defaultdict(set)
        providers: dict[int, set[int]] = defaultdict(set)
        peers: dict[int, set[int]] = defaultdict(set)
        allnodes = set()
        for a in nodes:
            _check_asn(a)
            allnodes.add(a)
        for p, c in p2c_edges:
            _check_asn(p)
            _check_asn(c)
            if p == c:
                raise ValueError(f"self-loop p2c edge on AS{p}")
            customers[p].add(c)
            providers[c].add(p)
            allnodes.update((p, c))
        for a, b in p2p_edges:
            _check_asn(a)
            _check_asn(b)
            if a == b:
                raise ValueError(f"self-loop p2p edge on AS{a}")
            peers[a].add(b)
            peers[b].add(a)
            allnodes.update((a, b))
        self._nodes = frozenset(allnodes)
        self._customers = {a: frozenset(s) for a, s in customers.items()}
        self._providers = {a: frozenset(s) for a, s in providers.items()}
        self._peers = {a: frozenset(s) for a, s in peers.items()}
        self._cones: dict[int, frozenset] = {}
        self._ancestors: dict[int, frozenset] = {}
        self._footprints: dict = {}

    # -- basic structure -------------------------------------------------
    @property
    def nodes(self) -> frozenset:
        return self._nodes

    def __contains__(self, asn) -> bool:
        return asn in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def p2c_edges(self) -> set[tuple[int, int]]:
        return {(p, c) for p, cs in self._customers.items() for c in cs}

    @property
    def p2p_edges(self) -> set[tuple[int, int]]:
        return {(min(a, b), max(a, b)) for a, bs in self._peers.items() for b in bs}

    def customers_of(self, asn: int) -> list[int]:
        self._require(asn)
        return sorted(self._customers.get(asn, ()))

    def providers_of(self, asn: int) -> list[int]:
        """Direct providers of ``asn`` in ascending AS order."""
        self._require(asn)
        return sorted(self._providers.get(asn, ()))

    def peers_of(self, asn: int) -> list[int]:
        self._require(asn)
        return sorted(self._peers.get(asn, ()))

    # -- cones -----------------------------------------------------------
    def cone(self, asn: int) -> frozenset:
        """Members of the customer cone of ``asn`` (including ``asn``)."""
        cached = self._cones.get(asn)
        if cached is not None:
            return cached
        self._require(asn)
        seen = {asn}
        stack = [asn]
        while stack:
            a = stack.pop()
            for c in self._customers.get(a, ()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        members = frozenset(seen)
        self._cones[asn] = members
        return members

    def cone_size(self, asn: int) -> int:
        return len(self.cone(asn))

    def ancestors(self, asn: int) -> frozenset:
        """All transitive providers of ``asn``, excluding ``asn`` itself."""
        cached = self._ancestors.get(asn)
        if cached is not None:
            return cached
        self._require(asn)
        seen = set()
        stack = [asn]
        while stack:
            a = stack.pop()
            for p in self._providers.get(a, ()):
                if p not in seen and p != asn:
                    seen.add(p)
                    stack.append(p)
        result = frozenset(seen)
        self._ancestors[asn] = result
        return result

    def interior_footprints(self, root: int, members: frozenset) -> dict:
        """For every AS strictly inside cone(root): which of ``members`` its cone holds."""
        key = (root, members)
        cached = self._footprints.get(key)
        if cached is not None:
            return cached
        root_cone = self.cone(root)
        out: dict[int, set] = {}
        for a in members:
            if a not in root_cone:
                continue
            for x in self.ancestors(a) | {a}:
                if x != root and x in root_cone:
                    out.setdefault(x, set()).add(a)
        result = {x: frozenset(v) for x, v in out.items()}
        if len(self._footprints) > 4096:
            self._footprints.clear()
        self._footprints[key] = result
        return result

    def _require(self, asn):
        if asn not in self._nodes:
            raise UnknownAsError(f"AS{asn} not in graph")

    def __eq__(self, other):
        if not isinstance(other, AsGraph):
            return NotImplemented
        return (self._nodes == other._nodes and self.p2c_edges == other.p2c_edges
                and self.p2p_edges == other.p2p_edges)

    def __repr__(self):
        return (f"AsGraph(nodes={len(self._nodes)}, p2c={sum(map(len, self._customers.values()))}, "
                f"p2p={len(self.p2p_edges)})")


def _check_asn(a):
    if not isinstance(a, int) or isinstance(a, bool) or a <= 0:
        raise ValueError(f"invalid AS number {a!r}")


def parse_as_rel(text: str) -> AsGraph:
    """Parse ``A|B|code`` lines; '#' lines are comments.

    Extra trailing fields (serial-2 adds a source column) are rejected so the
    input contract stays exact.
    """
    p2c = set()
    p2p = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("|")
        if len(fields) != 3:
            raise AsRelParseError(lineno, line, f"expected 3 fields, got {len(fields)}")
        try:
            a, b, code = (int(f) for f in fields)
        except ValueError:
            raise AsRelParseError(lineno, line, "non-integer field") from None
        if a <= 0 or b <= 0:
            raise AsRelParseError(lineno, line, "AS numbers must be positive")
        if a == b:
            raise AsRelParseError(lineno, line, "self-loop")
        if code == P2C:
            p2c.add((a, b))
        elif code == P2P:
            p2p.add((min(a, b), max(a, b)))
        else:
            raise AsRelParseError(lineno, line, f"unknown relationship code {code}")
    return AsGraph(p2c, p2p)


def format_as_rel(graph: AsGraph) -> str:
    lines = [f"{p}|{c}|{P2C}" for p, c in sorted(graph.p2c_edges)]
    lines += [f"{a}|{b}|{P2P}" for a, b in sorted(graph.p2p_edges)]
    return "".join(line + "\n" for line in lines)


def load_as_rel(path) -> AsGraph:
    with open(path) as fh:
        return parse_as_rel(fh.read())


def customer_cone(graph: AsGraph, root: int) -> CustomerCone:
    return CustomerCone(root, graph.cone(root))


def providers_of(graph: AsGraph, asn: int) -> list[int]:
    return graph.providers_of(asn)


def cone_ranking(graph: AsGraph) -> list[tuple[int, int]]:
    """(asn, cone size) pairs, largest cone first, ties by ascending AS."""
    return sorted(((a, graph.cone_size(a)) for a in graph.nodes), key=lambda t: (-t[1], t[0]))
