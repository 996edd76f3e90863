"""AS-design guard-set hierarchy: supersets, sets and subsets.

Supersets are merged customer cones of guard ASes, sets are pairwise
independent interior cones of a superset, and subsets (the guard sets clients
actually use) are bandwidth-filled groups of guards inside one set.

Guards are fed in as a mapping ``fingerprint -> (asn, bandwidth_mbps)``;
unlabelled guards must be filtered out by the caller.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .asgraph import AsGraph
from .ids import make_id

logger = logging.getLogger(__name__)

RESIDUAL = None  # root marker of a superset's catch-all set


@dataclass
class Thresholds:
    tau_up: float = 40.0
    tau_down: float = 20.0
    n_supersets: int = 50
    exact_pack_limit: int = 20

    def __post_init__(self):
        if not self.tau_down < self.tau_up:
            raise ValueError("tau_down must be below tau_up")
        if self.n_supersets < 1:
            raise ValueError("n_supersets must be positive")

    @classmethod
    def scaled(cls, tau_up: float, **kw) -> "Thresholds":
        return cls(tau_up=tau_up, tau_down=tau_up / 2, **kw)


@dataclass
class GuardAs:
    asn: int
    guards: list
    bandwidth_mbps: float


def group_guard_ases(guards: Mapping[str, tuple]) -> dict[int, GuardAs]:
    fps: dict[int, list] = {}
    bws: dict[int, float] = {}
    for fp in sorted(guards):
        asn, bw = guards[fp]
        if asn is None:
            continue
        if asn in fps:
            fps[asn].append(fp)
            bws[asn] += bw
        else:
            fps[asn] = [fp]
            bws[asn] = bw
    return {a: GuardAs(a, fps[a], float(bws[a])) for a in fps}


@dataclass
class Subset:
    id: int
    guards: list
    bandwidth_mbps: float = 0.0
    deficient: bool = False

    def clone(self):
        return Subset(self.id, list(self.guards), self.bandwidth_mbps, self.deficient)


@dataclass
class ConeSet:
    """Middle level of the hierarchy.  ``root_asn is None`` marks the residual set."""

    id: int
    root_asn: Optional[int]
    guard_ases: set
    subsets: list = field(default_factory=list)
    bandwidth_mbps: float = 0.0

    @property
    def residual(self) -> bool:
        return self.root_asn is RESIDUAL

    def clone(self):
        return ConeSet(self.id, self.root_asn, set(self.guard_ases),
                       [s.clone() for s in self.subsets], self.bandwidth_mbps)


@dataclass
class Superset:
    id: int
    root_asn: int
    guard_ases: set
    sets: list = field(default_factory=list)
    bandwidth_mbps: float = 0.0
    orphan: bool = False

    def clone(self):
        return Superset(self.id, self.root_asn, set(self.guard_ases),
                        [s.clone() for s in self.sets], self.bandwidth_mbps, self.orphan)


@dataclass
class ChangeLog:
    day: int = 0
    supersets_created: int = 0
    supersets_dismantled: int = 0
    sets_created: int = 0
    sets_dismantled: int = 0
    subsets_created: int = 0
    subsets_dismantled: int = 0
    subsets_repaired: int = 0
    events: list = field(default_factory=list)

    COUNTS = ("supersets_created", "supersets_dismantled", "sets_created", "sets_dismantled",
              "subsets_created", "subsets_dismantled", "subsets_repaired")

    @property
    def empty(self) -> bool:
        return not any(getattr(self, k) for k in self.COUNTS)

    def counts(self) -> dict:
        return {k: getattr(self, k) for k in self.COUNTS}


@dataclass
class Hierarchy:
    supersets: list
    thresholds: Thresholds
    day: int = 0

    def clone(self) -> "Hierarchy":
        return Hierarchy([s.clone() for s in self.supersets], self.thresholds, self.day)

    def iter_sets(self):
        for ss in self.supersets:
            for s in ss.sets:
                yield ss, s

    def iter_subsets(self):
        for ss in self.supersets:
            for s in ss.sets:
                for sub in s.subsets:
                    yield ss, s, sub

    def counts(self) -> tuple[int, int, int]:
        n_sets = sum(len(ss.sets) for ss in self.supersets)
        n_sub = sum(len(s.subsets) for ss in self.supersets for s in ss.sets)
        return len(self.supersets), n_sets, n_sub

    def guard_index(self) -> dict:
        """fingerprint -> (superset id, set id, subset id)."""
        return {g: (ss.id, s.id, sub.id) for ss, s, sub in self.iter_subsets() for g in sub.guards}

    def eligible_supersets(self) -> list:
        return [ss for ss in self.supersets if not ss.orphan and ss.bandwidth_mbps > 0]

    def to_dict(self) -> dict:
        return {
            "day": self.day,
            "thresholds": vars(self.thresholds),
            "supersets": [{
                "id": f"{ss.id:016d}", "root_asn": ss.root_asn, "orphan": ss.orphan,
                "bandwidth_mbps": round(ss.bandwidth_mbps, 6),
                "guard_ases": sorted(ss.guard_ases),
                "sets": [{
                    "id": f"{s.id:016d}", "root_asn": s.root_asn,
                    "bandwidth_mbps": round(s.bandwidth_mbps, 6),
                    "guard_ases": sorted(s.guard_ases),
                    "subsets": [{
                        "id": f"{sub.id:016d}", "guards": list(sub.guards),
                        "bandwidth_mbps": round(sub.bandwidth_mbps, 6),
                    } for sub in s.subsets],
                } for s in ss.sets],
            } for ss in self.supersets],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# supersets
# ---------------------------------------------------------------------------

def _merge_order(graph: AsGraph, asn: int):
    # cone size first; among equal cones the more deeply nested AS goes first
    return (graph.cone_size(asn), -len(graph.ancestors(asn)), asn)


def merge_supersets(items: Mapping[int, set], graph: AsGraph, guard_bw: Mapping[int, float],
                    thresholds: Thresholds, events: Optional[list] = None) -> dict[int, tuple]:
    """Iterative cone merging over ``root -> guard ASes``.

    Returns ``root -> (guard ASes, absorbed roots)``.  A popped superset whose
    ancestors' cones hold no other listed superset is finalized.
    """
    def bw(members):
        return sum(guard_bw.get(a, 0.0) for a in members)

    members = {r: set(m) for r, m in items.items()}
    absorbed = {r: {r} for r in members}
    order = {r: _merge_order(graph, r) for r in members}
    active = sorted(members, key=order.__getitem__)
    final = []
    low = sum(1 for r in members if bw(members[r]) < thresholds.tau_up)
    while active:
        if len(active) + len(final) < thresholds.n_supersets or low == 0:
            break
        cur = active.pop(0)
        listed = set(active)
        chosen = None
        for p in sorted(graph.ancestors(cur), key=lambda a: (graph.cone_size(a), a)):
            if not graph.cone(p).isdisjoint(listed):
                chosen = p
                break
        if chosen is None:
            final.append(cur)
            if events is not None:
                events.append(("finalize", cur))
            continue
        cone = graph.cone(chosen)
        taken = [cur] + [r for r in active if r in cone]
        merged, merged_from = set(), set()
        for r in taken:
            low -= bw(members[r]) < thresholds.tau_up
            merged |= members.pop(r)
            merged_from |= absorbed.pop(r)
        taken_set = set(taken)
        active = [r for r in active if r not in taken_set]
        members[chosen] = merged
        absorbed[chosen] = merged_from
        low += bw(merged) < thresholds.tau_up
        order[chosen] = _merge_order(graph, chosen)
        active.append(chosen)
        active.sort(key=order.__getitem__)
        if events is not None:
            events.append(("merge", chosen, tuple(sorted(taken))))
    return {r: (members[r], absorbed[r]) for r in members}


def build_supersets(guard_ases: Mapping[int, GuardAs], graph: AsGraph, thresholds: Thresholds,
                    day: int = 0, events: Optional[list] = None) -> list[Superset]:
    if not guard_ases:
        return []
    missing = [a for a in guard_ases if a not in graph]
    if missing:
        raise KeyError(f"guard ASes missing from AS graph: {missing[:5]}")
    bw = {a: g.bandwidth_mbps for a, g in guard_ases.items()}
    merged = merge_supersets({a: {a} for a in guard_ases}, graph, bw, thresholds, events)
    out = []
    for root in sorted(merged, key=lambda r: _merge_order(graph, r)):
        ms, _ = merged[root]
        out.append(Superset(make_id("superset", root, day), root, ms,
                            bandwidth_mbps=sum(bw[a] for a in ms)))
    return out


def update_supersets(supersets: list, new_guard_ases: Iterable[int], graph: AsGraph,
                     thresholds: Thresholds, guard_bw: Mapping[int, float], day: int = 0,
                     log: Optional[ChangeLog] = None) -> list[Superset]:
    """Place new guard ASes, then rerun the merge over the superset list.

    Supersets whose root survives the merge keep their id and sets; merged
    supersets inherit the sets of everything they absorbed.
    """
    supersets = list(supersets)
    by_root = {ss.root_asn: ss for ss in supersets}
    fresh = {}
    for a in sorted(new_guard_ases):
        hits = [ss for ss in supersets if a in graph.cone(ss.root_asn)]
        if hits:
            target = min(hits, key=lambda ss: (graph.cone_size(ss.root_asn), ss.root_asn))
            target.guard_ases.add(a)
        elif a in fresh or a in by_root:
            (fresh.get(a) or by_root[a]).guard_ases.add(a)
        else:
            fresh[a] = Superset(make_id("superset", a, day), a, {a})
            if log is not None:
                log.supersets_created += 1
    pool = {**by_root, **fresh}
    merged = merge_supersets({r: ss.guard_ases for r, ss in pool.items()}, graph, guard_bw,
                             thresholds, log.events if log is not None else None)
    out = []
    for root in sorted(merged, key=lambda r: _merge_order(graph, r)):
        ms, came_from = merged[root]
        if came_from == {root} and root in pool:
            ss = pool[root]
            ss.guard_ases = ms
            out.append(ss)
            continue
        ss = Superset(make_id("superset", root, day), root, ms)
        for r in sorted(came_from):
            if r in pool:
                ss.sets.extend(s for s in pool[r].sets if not s.residual)
                ss.sets.extend(s for s in pool[r].sets if s.residual)
        if log is not None:
            log.supersets_created += 1
            log.supersets_dismantled += sum(1 for r in came_from if r in by_root)
            log.supersets_created -= sum(1 for r in came_from if r in fresh)
        _merge_residuals(ss)
        out.append(ss)
    return out


def _merge_residuals(ss: Superset):
    residuals = [s for s in ss.sets if s.residual]
    if len(residuals) <= 1:
        return
    keep = residuals[0]
    for s in residuals[1:]:
        keep.guard_ases |= s.guard_ases
        keep.subsets.extend(s.subsets)
    ss.sets = [s for s in ss.sets if not s.residual] + [keep]


# ---------------------------------------------------------------------------
# sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateCone:
    root: int
    guard_ases: frozenset
    size: int
    bandwidth_mbps: float


def candidate_cones(superset: Superset, graph: AsGraph, guard_ases: Mapping[int, GuardAs],
                    tau_up: float, pool: Optional[Iterable[int]] = None) -> list[CandidateCone]:
    """Interior cones of the superset whose guard bandwidth reaches ``tau_up``.

    With ``pool`` given, cones holding any guard AS outside the pool (one
    already owned by a kept set) are not candidates.
    """
    members = frozenset(a for a in superset.guard_ases if a in guard_ases)
    pool = members if pool is None else set(pool)
    out = []
    for x, fp in graph.interior_footprints(superset.root_asn, members).items():
        if not fp <= pool:
            continue
        bw = sum(guard_ases[a].bandwidth_mbps for a in fp)
        if bw >= tau_up:
            out.append(CandidateCone(x, fp, graph.cone_size(x), bw))
    out.sort(key=lambda c: c.root)
    return out


def _family_key(family):
    return (-len(family), sum(c.size for c in family), tuple(sorted(c.root for c in family)))


def _exact_pack(cands: list[CandidateCone]) -> list[CandidateCone]:
    n = len(cands)
    conflict = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if not cands[i].guard_ases.isdisjoint(cands[j].guard_ases):
                conflict[i] |= 1 << j
                conflict[j] |= 1 << i
    best = [()]
    best_key = [_family_key(())]

    def rec(avail, chosen):
        if -(len(chosen) + bin(avail).count("1")) > best_key[0][0]:
            return
        if not avail:
            fam = [cands[i] for i in chosen]
            k = _family_key(fam)
            if k < best_key[0]:
                best_key[0], best[0] = k, tuple(chosen)
            return
        j = (avail & -avail).bit_length() - 1
        bit = 1 << j
        rec(avail & ~bit & ~conflict[j], chosen + (j,))
        rec(avail & ~bit, chosen)

    rec((1 << n) - 1, ())
    return [cands[i] for i in best[0]]


def pack_independent_cones(candidates: list[CandidateCone], exact_limit: int = 20) -> list[CandidateCone]:
    """Maximum-cardinality family of candidates with pairwise-disjoint guard ASes.

    Ties go to the smaller total cone size, then ascending roots.  Exhaustive
    search up to ``exact_limit`` distinct footprints, greedy beyond.
    """
    best_by_fp: dict[frozenset, CandidateCone] = {}
    for c in candidates:
        cur = best_by_fp.get(c.guard_ases)
        if cur is None or (c.size, c.root) < (cur.size, cur.root):
            best_by_fp[c.guard_ases] = c
    cands = sorted(best_by_fp.values(), key=lambda c: (len(c.guard_ases), c.size, c.root))
    if len(cands) <= exact_limit:
        chosen = _exact_pack(cands)
    else:
        chosen, used = [], set()
        for c in cands:
            if used.isdisjoint(c.guard_ases):
                chosen.append(c)
                used |= c.guard_ases
    return sorted(chosen, key=lambda c: c.root)


def build_sets(superset: Superset, graph: AsGraph, guard_ases: Mapping[int, GuardAs],
               thresholds: Thresholds, day: int = 0) -> list[ConeSet]:
    superset.sets = []
    update_sets(superset, guard_ases, graph, thresholds, day)
    return superset.sets


def update_sets(superset: Superset, guard_ases: Mapping[int, GuardAs], graph: AsGraph,
                thresholds: Thresholds, day: int = 0, log: Optional[ChangeLog] = None) -> list[ConeSet]:
    """Refresh the sets of one superset in place.

    New guard ASes inside a surviving set's cone join it, sets under
    ``tau_down`` are dismantled, and everything unplaced is packed again.
    Whatever no packed cone covers lands in the residual set.
    """
    live = {a for a in superset.guard_ases if a in guard_ases}
    survivors, residual = [], None
    for s in superset.sets:
        s.guard_ases &= live
        if s.residual:
            residual = s
        else:
            survivors.append(s)
    placed = set().union(*(s.guard_ases for s in survivors)) if survivors else set()
    unplaced = live - placed - (residual.guard_ases if residual else set())
    for a in sorted(unplaced):
        hits = [s for s in survivors if a in graph.cone(s.root_asn)]
        if hits:
            min(hits, key=lambda s: (graph.cone_size(s.root_asn), s.root_asn)).guard_ases.add(a)
            unplaced.discard(a)

    kept, released = [], set()
    for s in survivors:
        bw = sum(guard_ases[a].bandwidth_mbps for a in s.guard_ases)
        if bw < thresholds.tau_down:
            released |= s.guard_ases
            if log is not None:
                log.sets_dismantled += 1
                log.subsets_dismantled += len(s.subsets)
        else:
            kept.append(s)

    pool = unplaced | released | (residual.guard_ases if residual else set())
    new_sets = []
    if pool:
        cands = candidate_cones(superset, graph, guard_ases, thresholds.tau_up, pool=pool)
        taken_roots = {s.root_asn for s in kept}
        cands = [c for c in cands if c.root not in taken_roots]
        for c in pack_independent_cones(cands, thresholds.exact_pack_limit):
            new_sets.append(ConeSet(make_id("set", superset.id, c.root, day), c.root, set(c.guard_ases)))
            pool -= c.guard_ases
    if log is not None:
        log.sets_created += len(new_sets)
    sets = kept + new_sets
    if pool:
        if residual is None:
            residual = ConeSet(make_id("set", superset.id, "residual", day), RESIDUAL, set())
            if log is not None:
                log.sets_created += 1
        residual.guard_ases = pool
        sets.append(residual)
    elif residual is not None and log is not None:
        log.sets_dismantled += 1
        log.subsets_dismantled += len(residual.subsets)
    superset.sets = sets
    return sets


# ---------------------------------------------------------------------------
# subsets
# ---------------------------------------------------------------------------

def set_rng(seed: int, set_id: int, day: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, set_id, day])


def fill_subsets(ordered_guards: list[tuple[str, float]], tau_up: float, tau_down: float) -> list[list[str]]:
    """Greedy filling: close a subset once it reaches ``tau_up``.

    A trailing subset under ``tau_down`` is folded into the previous one.
    """
    groups, cur, cur_bw = [], [], 0.0
    for fp, bw in ordered_guards:
        cur.append(fp)
        cur_bw += bw
        if cur_bw >= tau_up:
            groups.append(cur)
            cur, cur_bw = [], 0.0
    if cur:
        if cur_bw < tau_down and groups:
            groups[-1].extend(cur)
        else:
            groups.append(cur)
    return groups


def build_subsets(guards_by_as: Mapping[int, list], bandwidth: Mapping[str, float],
                  thresholds: Thresholds, rng: np.random.Generator, set_id: int = 0,
                  day: int = 0) -> list[Subset]:
    """Shuffle guard ASes, then fill subsets AS by AS (fingerprint order inside an AS)."""
    ases = sorted(a for a, gs in guards_by_as.items() if gs)
    if not ases:
        return []
    order = [ases[i] for i in rng.permutation(len(ases))]
    seq = [(fp, bandwidth[fp]) for a in order for fp in sorted(guards_by_as[a])]
    out = []
    for members in fill_subsets(seq, thresholds.tau_up, thresholds.tau_down):
        out.append(Subset(make_id("subset", set_id, day, *members), members,
                          float(sum(bandwidth[g] for g in members))))
    return out


def repair_subsets(subsets: list, new_guards: Iterable[str], guard_asn: Mapping[str, int],
                   bandwidth: Mapping[str, float], thresholds: Thresholds,
                   rng: np.random.Generator, set_id: int = 0, day: int = 0,
                   log: Optional[ChangeLog] = None) -> list[Subset]:
    """Top up subsets under ``tau_down`` with new guards of the same set.

    Deficient subsets are served worst first; each takes new guards from its
    own ASes first, then from the set's other ASes, until it reaches
    ``tau_up``.  Unused new guards form fresh subsets when they add up to
    ``tau_up``; otherwise they join the weakest existing subsets.
    """
    for sub in subsets:
        sub.bandwidth_mbps = float(sum(bandwidth[g] for g in sub.guards))
    by_as: dict[int, list] = {}
    for fp in sorted(new_guards):
        by_as.setdefault(guard_asn[fp], []).append(fp)
    for a in sorted(by_as):
        fps = by_as[a]
        by_as[a] = [fps[i] for i in rng.permutation(len(fps))]
    as_order = sorted(by_as)
    as_order = [as_order[i] for i in rng.permutation(len(as_order))]

    repaired = set()
    for sub in sorted(subsets, key=lambda s: (s.bandwidth_mbps, s.id)):
        if sub.bandwidth_mbps >= thresholds.tau_down:
            continue
        own = {guard_asn[g] for g in sub.guards}
        for a in [x for x in as_order if x in own] + [x for x in as_order if x not in own]:
            fps = by_as.get(a)
            while fps and sub.bandwidth_mbps < thresholds.tau_up:
                g = fps.pop(0)
                sub.guards.append(g)
                sub.bandwidth_mbps += bandwidth[g]
                repaired.add(sub.id)
            if sub.bandwidth_mbps >= thresholds.tau_up:
                break
    leftover = {a: fps for a, fps in by_as.items() if fps}
    spare_bw = sum(bandwidth[g] for fps in leftover.values() for g in fps)
    if leftover and (spare_bw >= thresholds.tau_up or not subsets):
        fresh = build_subsets(leftover, bandwidth, thresholds, rng, set_id, day)
        if log is not None:
            log.subsets_created += len(fresh)
        subsets = subsets + fresh
    elif leftover:
        for a in as_order:
            for g in leftover.get(a, ()):
                weakest = min(subsets, key=lambda s: (s.bandwidth_mbps, s.id))
                weakest.guards.append(g)
                weakest.bandwidth_mbps += bandwidth[g]
                repaired.add(weakest.id)
    for sub in subsets:
        sub.deficient = sub.bandwidth_mbps < thresholds.tau_down
    if log is not None:
        log.subsets_repaired += len(repaired)
    return subsets


def _maintain_subsets(s: ConeSet, guard_ases: Mapping[int, GuardAs], guard_asn, bandwidth,
                      thresholds, seed, day, log):
    current = {g for a in s.guard_ases for g in guard_ases[a].guards}
    if not s.subsets:
        s.subsets = build_subsets({a: guard_ases[a].guards for a in s.guard_ases}, bandwidth,
                                  thresholds, set_rng(seed, s.id, day), s.id, day)
        if log is not None:
            log.subsets_created += len(s.subsets)
    else:
        alive = []
        placed = set()
        for sub in s.subsets:
            if not all(g in current for g in sub.guards):
                sub.guards = [g for g in sub.guards if g in current]
            if sub.guards:
                alive.append(sub)
                placed.update(sub.guards)
            elif log is not None:
                log.subsets_dismantled += 1
        new = current - placed
        if new or not alive:
            alive = repair_subsets(alive, new, guard_asn, bandwidth, thresholds,
                                   set_rng(seed, s.id, day), s.id, day, log)
        s.subsets = alive
    for sub in s.subsets:
        sub.bandwidth_mbps = float(sum(bandwidth[g] for g in sub.guards))
        sub.deficient = sub.bandwidth_mbps < thresholds.tau_down
    s.bandwidth_mbps = float(sum(sub.bandwidth_mbps for sub in s.subsets))


# ---------------------------------------------------------------------------
# whole-hierarchy build / update
# ---------------------------------------------------------------------------

def _finish(h: Hierarchy, guard_ases):
    thr = h.thresholds
    for ss in h.supersets:
        ss.bandwidth_mbps = float(sum(s.bandwidth_mbps for s in ss.sets))
        ss.orphan = ss.bandwidth_mbps < thr.tau_down


def build_hierarchy(guards: Mapping[str, tuple], graph: AsGraph, thresholds: Thresholds = None,
                    seed: int = 0, day: int = 0, events: Optional[list] = None) -> Hierarchy:
    h, _ = full_update(None, guards, graph, thresholds or Thresholds(), seed, day, events=events)
    return h


def full_update(hierarchy: Optional[Hierarchy], guards: Mapping[str, tuple], graph: AsGraph,
                thresholds: Thresholds = None, seed: int = 0, day: int = 0,
                events: Optional[list] = None) -> tuple[Hierarchy, ChangeLog]:
    """One day's update: supersets, then sets, then subsets.

    ``guards`` maps fingerprint -> (asn, bandwidth); guards whose AS is None
    or absent from the graph are ignored.  The input hierarchy is not
    modified.
    """
    thresholds = thresholds or (hierarchy.thresholds if hierarchy else Thresholds())
    log = ChangeLog(day=day)
    if events is not None:
        log.events = events
    usable = {fp: v for fp, v in guards.items() if v[0] is not None and v[0] in graph}
    if len(usable) < len(guards):
        logger.debug("day %d: %d guards without usable AS label", day, len(guards) - len(usable))
    gas = group_guard_ases(usable)
    guard_asn = {fp: v[0] for fp, v in usable.items()}
    bandwidth = {fp: float(v[1]) for fp, v in usable.items()}
    gbw = {a: g.bandwidth_mbps for a, g in gas.items()}

    if hierarchy is None:
        supersets = build_supersets(gas, graph, thresholds, day, log.events)
        log.supersets_created += len(supersets)
    else:
        supersets = []
        for ss in hierarchy.clone().supersets:
            ss.guard_ases = {a for a in ss.guard_ases if a in gas}
            if ss.guard_ases:
                supersets.append(ss)
            else:
                log.supersets_dismantled += 1
                log.sets_dismantled += len(ss.sets)
                log.subsets_dismantled += sum(len(s.subsets) for s in ss.sets)
        known = set().union(*(ss.guard_ases for ss in supersets)) if supersets else set()
        new_ases = sorted(set(gas) - known)
        if new_ases or len(supersets) >= thresholds.n_supersets:
            supersets = update_supersets(supersets, new_ases, graph, thresholds, gbw, day, log)

    h = Hierarchy(supersets, thresholds, day)
    for ss in h.supersets:
        update_sets(ss, gas, graph, thresholds, day, log)
        for s in ss.sets:
            _maintain_subsets(s, gas, guard_asn, bandwidth, thresholds, seed, day, log)
        ss.sets = [s for s in ss.sets if s.subsets]
    _finish(h, gas)
    return h, log


def check_invariants(h: Hierarchy, graph: AsGraph, guards: Optional[Mapping[str, tuple]] = None):
    """Raise AssertionError on any broken containment/disjointness rule."""
    seen_guards = set()
    seen_as = set()
    for ss in h.supersets:
        cone = graph.cone(ss.root_asn)
        assert ss.guard_ases <= cone, f"superset {ss.root_asn} holds ASes outside its cone"
        assert seen_as.isdisjoint(ss.guard_ases), "guard AS in two supersets"
        seen_as |= ss.guard_ases
        set_ases = set()
        for s in ss.sets:
            assert set_ases.isdisjoint(s.guard_ases), "sets overlap"
            set_ases |= s.guard_ases
            if not s.residual:
                assert s.guard_ases <= graph.cone(s.root_asn), "set holds ASes outside its cone"
            for sub in s.subsets:
                assert sub.guards, "empty subset"
                for g in sub.guards:
                    assert g not in seen_guards, f"guard {g} in two subsets"
                    seen_guards.add(g)
                    if guards is not None:
                        assert guards[g][0] in s.guard_ases, f"guard {g} outside its set's ASes"
        assert set_ases <= ss.guard_ases
    if guards is not None:
        expected = {fp for fp, (a, _) in guards.items() if a is not None and a in graph}
        assert seen_guards == expected, "guards missing from or extra in the hierarchy"
