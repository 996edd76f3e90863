"""Bandwidth-quanta guard sets: quantization, greedy set building, candidate-list repair.

Guards are split into equal bandwidth quanta, quanta are sorted and packed
head-first into sets of at least ``tau_up``; sets that drop under
``tau_down`` are topped up from leftover quanta of similar size.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional

from .ids import make_id


class Quantum(NamedTuple):
    guard: str
    bandwidth_mbps: float
    index: int = 0


@dataclass
class BwSet:
    id: int
    quanta: list
    bandwidth_mbps: float = 0.0
    created_day: int = 0

    @property
    def guards(self) -> list:
        seen = []
        for q in self.quanta:
            if q.guard not in seen:
                seen.append(q.guard)
        return seen

    def recompute(self):
        self.bandwidth_mbps = float(sum(q.bandwidth_mbps for q in self.quanta))


@dataclass
class BwChangeLog:
    day: int = 0
    sets_created: int = 0
    sets_dismantled: int = 0
    sets_repaired: int = 0
    sets_damaged: int = 0
    repairs: dict = field(default_factory=dict)  # set id -> quanta added


@dataclass
class BwSetState:
    sets: list = field(default_factory=list)
    leftover: list = field(default_factory=list)
    quantum_count: dict = field(default_factory=dict)  # guard in a set -> its quantum count
    tau_up: float = 40.0
    tau_down: float = 20.0
    day: int = 0

    def clone(self) -> "BwSetState":
        # quanta are immutable tuples, so copying the lists is enough
        return BwSetState([BwSet(s.id, list(s.quanta), s.bandwidth_mbps, s.created_day) for s in self.sets],
                          list(self.leftover), dict(self.quantum_count), self.tau_up, self.tau_down, self.day)

    def set_of_guard(self) -> dict:
        return {q.guard: s.id for s in self.sets for q in s.quanta}

    def set_by_id(self) -> dict:
        return {s.id: s for s in self.sets}

    def damaged(self) -> list:
        return [s for s in self.sets if s.bandwidth_mbps < self.tau_down]

    def to_json(self) -> str:
        return json.dumps({
            "day": self.day, "tau_up": self.tau_up, "tau_down": self.tau_down,
            "sets": [{"id": f"{s.id:016d}", "bandwidth_mbps": round(s.bandwidth_mbps, 6),
                      "quanta": [[q.guard, q.index, round(q.bandwidth_mbps, 6)] for q in s.quanta]}
                     for s in self.sets],
            "leftover": [[q.guard, q.index, round(q.bandwidth_mbps, 6)] for q in self.leftover],
        }, indent=1, sort_keys=True)


def quanta_count(bw: float, quantum_threshold: float = 40.0) -> int:
    if bw >= 2 * quantum_threshold:
        return int(math.floor(bw / quantum_threshold))
    return 1


def _sort_quanta(quanta):
    return sorted(quanta, key=lambda q: (-q.bandwidth_mbps, q.guard, q.index))


def quantize(guards: Mapping[str, float], quantum_threshold: float = 40.0) -> list[Quantum]:
    """Split every guard into equal quanta, largest first (ties by fingerprint)."""
    out = []
    for fp, bw in guards.items():
        if bw < 0:
            raise ValueError(f"{fp}: negative bandwidth")
        if bw == 0:
            continue
        k = quanta_count(bw, quantum_threshold)
        out.extend(Quantum(fp, bw / k, i) for i in range(k))
    return _sort_quanta(out)


def build_bw_sets(quanta: list, tau_up: float = 40.0, tau_down: float = 20.0, day: int = 0,
                  salt: int = 0) -> BwSetState:
    """Head-first greedy packing of sorted quanta; the final partial set is leftover."""
    state = BwSetState(tau_up=tau_up, tau_down=tau_down, day=day)
    cur, cur_bw = [], 0.0
    for q in quanta:
        cur.append(q)
        cur_bw += q.bandwidth_mbps
        if cur_bw >= tau_up:
            state.sets.append(_new_set(cur, day, salt + len(state.sets)))
            cur, cur_bw = [], 0.0
    state.leftover = cur
    _record_counts(state, quanta)
    return state


def _record_counts(state, quanta):
    per_guard = {}
    for q in quanta:
        per_guard[q.guard] = per_guard.get(q.guard, 0) + 1
    for s in state.sets:
        for q in s.quanta:
            state.quantum_count.setdefault(q.guard, per_guard.get(q.guard, 1))


def _new_set(quanta, day, k):
    s = BwSet(make_id("bwset", day, k, *(f"{q.guard}/{q.index}" for q in quanta)), list(quanta), created_day=day)
    s.recompute()
    return s


def candidate_list(bwset: BwSet, leftover: list) -> list[Quantum]:
    """Leftover quanta within [M/2, M], M the largest quantum in the set; largest first."""
    if not bwset.quanta:
        raise ValueError("cannot repair an empty set")
    m = max(q.bandwidth_mbps for q in bwset.quanta)
    return _sort_quanta(q for q in leftover if 0.5 * m <= q.bandwidth_mbps <= m)


def refresh_bw_state(state: BwSetState, guards: Mapping[str, float], day: Optional[int] = None,
                     log: Optional[BwChangeLog] = None) -> BwSetState:
    """Apply today's guard bandwidths in place.

    Guards inside sets keep their quantum count; departed guards are dropped
    and sets left with no quanta die.  Everything else (old leftover and new
    guards) is re-quantized into the leftover pool.
    """
    if day is not None:
        state.day = day
    live_sets = []
    counts = state.quantum_count
    held: set = set()
    split: dict = {}   # guards with several quanta -> indices already inside sets
    for s in state.sets:
        kept = []
        for q in s.quanta:
            g = q[0]
            bw = guards.get(g)
            if not bw or bw <= 0:
                continue
            k = counts.get(g, 1)
            if k == 1:
                kept.append(Quantum(g, bw, q[2]))
            else:
                kept.append(Quantum(g, bw / k, q[2]))
                split.setdefault(g, set()).add(q[2])
            held.add(g)
        s.quanta = kept
        s.bandwidth_mbps = float(sum(q[1] for q in kept))
        if kept:
            live_sets.append(s)
        elif log is not None:
            log.sets_dismantled += 1
    state.sets = live_sets
    state.quantum_count = {g: c for g, c in counts.items() if g in held}
    rest = quantize({fp: bw for fp, bw in guards.items() if fp not in held}, state.tau_up)
    for g, idx in split.items():
        k = state.quantum_count[g]
        rest.extend(Quantum(g, guards[g] / k, i) for i in range(k) if i not in idx)
    state.leftover = _sort_quanta(rest)
    return state


def plan_repairs(state: BwSetState) -> dict:
    """set id -> quanta that repair would add, without touching ``state``."""
    trial = state.clone()
    log = BwChangeLog()
    _repair_damaged(trial, log)
    return log.repairs


def _repair_damaged(state: BwSetState, log: BwChangeLog):
    pool = list(state.leftover)
    counts = {}
    for q in pool:
        counts[q.guard] = counts.get(q.guard, 0) + 1
    for g, k in state.quantum_count.items():
        counts[g] = k
    damaged = sorted(state.damaged(), key=lambda s: (s.bandwidth_mbps, s.id))
    log.sets_damaged += len(damaged)
    for s in damaged:
        added = []
        for q in candidate_list(s, pool):
            if s.bandwidth_mbps >= state.tau_up:
                break
            s.quanta.append(q)
            s.bandwidth_mbps += q.bandwidth_mbps
            added.append(q)
        if added:
            taken = {(q.guard, q.index) for q in added}
            pool = [q for q in pool if (q.guard, q.index) not in taken]
            for q in added:
                state.quantum_count.setdefault(q.guard, counts[q.guard])
            log.repairs[s.id] = added
            log.sets_repaired += 1
        s.recompute()
    state.leftover = pool


def repair_bw_sets(state: BwSetState, guards: Optional[Mapping[str, float]] = None,
                   day: Optional[int] = None, dissolve_unrepaired: bool = False,
                   log: Optional[BwChangeLog] = None) -> BwSetState:
    """One day's maintenance: refresh (if ``guards`` given), repair, build new sets.

    With ``dissolve_unrepaired`` a set still under ``tau_down`` after repair is
    broken up and its quanta return to the leftover pool.
    """
    log = log if log is not None else BwChangeLog(day=state.day if day is None else day)
    if guards is not None:
        refresh_bw_state(state, guards, day, log)
    _repair_damaged(state, log)
    if dissolve_unrepaired:
        alive, freed = [], []
        for s in state.sets:
            if s.bandwidth_mbps < state.tau_down:
                log.sets_dismantled += 1
                freed.extend(s.quanta)
            else:
                alive.append(s)
        state.sets = alive
        if freed:
            still_in = {q.guard for s in alive for q in s.quanta}
            for q in freed:
                if q.guard not in still_in:
                    state.quantum_count.pop(q.guard, None)
            state.leftover = _sort_quanta(state.leftover + freed)
    if sum(q.bandwidth_mbps for q in state.leftover) >= state.tau_up:
        fresh = build_bw_sets(_sort_quanta(state.leftover), state.tau_up, state.tau_down,
                              state.day, salt=len(state.sets))
        state.sets.extend(fresh.sets)
        counts = {}
        for q in state.leftover:
            counts[q.guard] = counts.get(q.guard, 0) + 1
        for g in fresh.quantum_count:
            state.quantum_count.setdefault(g, max(counts[g], fresh.quantum_count[g]))
        state.leftover = fresh.leftover
        log.sets_created += len(fresh.sets)
    return state


def initial_bw_state(guards: Mapping[str, float], tau_up: float = 40.0, tau_down: float = 20.0,
                     day: int = 0) -> BwSetState:
    return build_bw_sets(quantize(guards, tau_up), tau_up, tau_down, day)
