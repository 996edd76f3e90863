"""Relay-level adversaries: guard injection, BW-design bandwidth tuning, targeted attacks."""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .bwsets import BwSetState, plan_repairs, quanta_count
from .hierarchy import Hierarchy
from .ingest import GUARD_BW_FLOOR_MBPS, NetworkSnapshot, PrefixMap

logger = logging.getLogger(__name__)

BW_TUNING_HIGH = "bw-tuning-high"
BW_TUNING_LOW = "bw-tuning-low"
LOW_RESOURCE = "low-resource"
CENTRALIZED = "centralized"
BOTNET = "botnet"
TARGETED = "targeted"
STRATEGIES = (BW_TUNING_HIGH, BW_TUNING_LOW, LOW_RESOURCE, CENTRALIZED, BOTNET, TARGETED)
INJECTING = (LOW_RESOURCE, CENTRALIZED, BOTNET)

MALICIOUS_PREFIX = "ADV"


@dataclass
class MaliciousGuard:
    fingerprint: str
    asn: Optional[int]
    offered_bandwidth_mbps: float
    active: bool = True
    address: Optional[str] = None

    def __post_init__(self):
        if self.active and self.offered_bandwidth_mbps < GUARD_BW_FLOOR_MBPS:
            raise ValueError(f"{self.fingerprint}: active guard below {GUARD_BW_FLOOR_MBPS} MBps")


@dataclass
class AdversaryConfig:
    strategy: str = CENTRALIZED
    bandwidth_fraction: float = 0.05
    epsilon_mbps: float = 0.1
    main_provider_fraction: float = 0.9
    reentry_cooldown_days: int = 7
    foresight: str = "perfect"   # or "forecast"
    forecast_margin_mbps: float = 2.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 0.0 <= self.bandwidth_fraction <= 1.0:
            raise ValueError("bandwidth_fraction must lie in [0, 1]")
        if self.foresight not in ("perfect", "forecast"):
            raise ValueError(f"unknown foresight mode {self.foresight!r}")


def is_malicious(fp: str) -> bool:
    return fp.startswith(MALICIOUS_PREFIX)


def _guard_bandwidths(snapshot) -> np.ndarray:
    if isinstance(snapshot, NetworkSnapshot):
        vals = [r.bandwidth_mbps for r in snapshot.relays if r.is_guard] or \
               [r.bandwidth_mbps for r in snapshot.relays]
    else:
        vals = [v[1] if isinstance(v, tuple) else v for v in snapshot.values()]
    vals = np.asarray(vals, dtype=float)
    vals = vals[vals > 0]
    if len(vals) == 0:
        raise ValueError("no guard bandwidths to sample from")
    return np.sort(vals)


def _random_ip(pmap: PrefixMap, asn: int, rng) -> Optional[str]:
    nets = pmap.prefixes_of(asn)
    if not nets:
        return None
    net = nets[int(rng.integers(len(nets)))]
    off = int(rng.integers(net.num_addresses)) if net.num_addresses > 1 else 0
    return str(ipaddress.IPv4Address(int(net.network_address) + off))


def inject_low_resource(snapshot, prefix_map: PrefixMap, rng: np.random.Generator,
                        tag: str = "0") -> MaliciousGuard:
    """A single guard in a uniformly random AS with an empirically drawn bandwidth."""
    asns = prefix_map.asns()
    if not asns:
        raise ValueError("prefix map is empty")
    asn = asns[int(rng.integers(len(asns)))]
    bws = _guard_bandwidths(snapshot)
    bw = max(float(bws[int(rng.integers(len(bws)))]), GUARD_BW_FLOOR_MBPS)
    return MaliciousGuard(f"{MALICIOUS_PREFIX}-{tag}-00000", asn, bw, address=_random_ip(prefix_map, asn, rng))


def _inject(snapshot, fraction, rng, pick_as, tag):
    bws = _guard_bandwidths(snapshot)
    target = fraction * float(bws.sum())
    out, total = [], 0.0
    while total < target:
        bw = max(float(bws[int(rng.integers(len(bws)))]), GUARD_BW_FLOOR_MBPS)
        out.append(MaliciousGuard(f"{MALICIOUS_PREFIX}-{tag}-{len(out):05d}", pick_as(), bw))
        total += bw
    return out


def inject_centralized(snapshot, guard_ases: Sequence[int], fraction: float,
                       rng: np.random.Generator, tag: str = "0") -> list[MaliciousGuard]:
    """Guards in one random guard AS until their bandwidth reaches ``fraction`` of the total."""
    ases = sorted(guard_ases)
    asn = ases[int(rng.integers(len(ases)))]
    return _inject(snapshot, fraction, rng, lambda: asn, tag)


def inject_botnet(snapshot, guard_ases: Sequence[int], fraction: float,
                  rng: np.random.Generator, tag: str = "0") -> list[MaliciousGuard]:
    """Like :func:`inject_centralized`, but every guard draws its own AS."""
    ases = sorted(guard_ases)
    return _inject(snapshot, fraction, rng, lambda: ases[int(rng.integers(len(ases)))], tag)


# ---------------------------------------------------------------------------
# bandwidth tuning against the BW design
# ---------------------------------------------------------------------------

@dataclass
class TuningActions:
    additions: dict = field(default_factory=dict)   # fp -> offer for guards activated today
    retunes: dict = field(default_factory=dict)     # fp -> new offer for guards already active
    withdrawals: list = field(default_factory=list)


class BwTuningAdversary:
    """Stateful bandwidth-tuning attacker.

    ``offers`` holds the bandwidth each active malicious guard announces.  The
    attacker sees the day's set bandwidths before repair (perfect foresight)
    and picks offers that land its quanta in the candidate lists of broken
    sets or complete a new set from leftover quanta.
    """

    def __init__(self, config: AdversaryConfig, tag: str = "0", target_set: Optional[int] = None):
        self.config = config
        self.tag = tag
        self.offers: dict[str, float] = {}
        self.cooldown: dict[int, int] = {}
        self._next = 0
        self.target_set = target_set  # focus on one client's set (targeted attack)
        self.spent_history: list = []

    @property
    def low(self) -> bool:
        return self.config.strategy == BW_TUNING_LOW

    def _new_fp(self):
        fp = f"{MALICIOUS_PREFIX}-{self.tag}-{self._next:05d}"
        self._next += 1
        return fp

    def budget(self, honest_total: float) -> float:
        """Bandwidth that makes the attacker ``bandwidth_fraction`` of all guard bandwidth."""
        f = self.config.bandwidth_fraction
        return f / (1.0 - f) * honest_total if f < 1.0 else float("inf")

    def _guards_in_sets(self, state: BwSetState):
        where = {}
        for s in state.sets:
            for q in s.quanta:
                if q.guard in self.offers:
                    where.setdefault(s.id, []).append(q.guard)
        return where

    def plan(self, state: BwSetState, honest_total: float, day: int,
             repairs: Optional[dict] = None) -> TuningActions:
        """Decide today's additions/retunes given the refreshed, unrepaired state.

        ``repairs`` is a precomputed ``plan_repairs(state)``, shared when several
        attackers plan against the same state.
        """
        cfg, eps = self.config, self.config.epsilon_mbps
        act = TuningActions()
        budget = self.budget(honest_total)
        where = self._guards_in_sets(state)
        placed = {g for gs in where.values() for g in gs}
        # idle guards (not in any set) are recycled instead of kept online
        for g in sorted(set(self.offers) - placed):
            act.withdrawals.append(g)
        spent = sum(self.offers[g] for g in placed)
        by_id = state.set_by_id()
        threshold = state.tau_down + (cfg.forecast_margin_mbps if cfg.foresight == "forecast" else 0.0)

        # (a) keep compromised sets alive
        for sid, gs in sorted(where.items()):
            s = by_id[sid]
            if s.bandwidth_mbps < threshold:
                g = gs[0]
                k = state.quantum_count.get(g, 1)
                need = (state.tau_down + eps - s.bandwidth_mbps) * k
                if need > 0 and spent + need <= budget:
                    act.retunes[g] = self.offers[g] + need
                    spent += need

        # (b) slip into broken, uncompromised sets
        plan = plan_repairs(state) if repairs is None else repairs
        broken = sorted((s for s in state.damaged() if s.id not in where),
                        key=lambda s: (s.bandwidth_mbps, s.id))
        if self.target_set is not None:
            broken = [s for s in broken if s.id == self.target_set]
        for s in broken:
            if self.cooldown.get(s.id, -1) > day:
                continue
            m = max(q.bandwidth_mbps for q in s.quanta)
            added = plan.get(s.id, [])
            fixed = s.bandwidth_mbps + sum(q.bandwidth_mbps for q in added) >= state.tau_up
            offer = min(added[-1].bandwidth_mbps + eps, m) if (added and fixed) else m
            offer = max(offer, GUARD_BW_FLOOR_MBPS)
            if not 0.5 * m <= offer <= m or quanta_count(offer, state.tau_up) != 1:
                continue
            if spent + offer > budget:
                continue
            act.additions[self._new_fp()] = offer
            spent += offer
        if self.target_set is not None:
            return act

        # (c) complete a new set out of the leftover pool
        repaired_away = {(q.guard, q.index) for qs in plan.values() for q in qs}
        spare = sum(q.bandwidth_mbps for q in state.leftover if (q.guard, q.index) not in repaired_away)
        if spare < state.tau_up:
            need = max(GUARD_BW_FLOOR_MBPS, state.tau_up - spare + eps)
            share_ok = not self.low or need / (spare + need) <= cfg.main_provider_fraction
            if share_ok and spent + need <= budget and quanta_count(need, state.tau_up) == 1:
                act.additions[self._new_fp()] = need
                spent += need
        if not self.low:
            single = state.tau_up + eps
            while spent + single <= budget:
                act.additions[self._new_fp()] = single
                spent += single
        return act

    def apply(self, act: TuningActions):
        for g in act.withdrawals:
            self.offers.pop(g, None)
        self.offers.update(act.retunes)
        self.offers.update(act.additions)

    def settle(self, state: BwSetState, honest_total: float, day: int) -> TuningActions:
        """After repair: decay offers, withdraw dominant or duplicate guards, respect budget."""
        cfg, eps = self.config, self.config.epsilon_mbps
        act = TuningActions()
        where = self._guards_in_sets(state)
        by_id = state.set_by_id()
        for sid, gs in sorted(where.items()):
            s = by_id[sid]
            gs = sorted(gs, key=lambda g: (-self.offers[g], g))
            for extra in gs[1:]:                     # one malicious guard per set
                act.withdrawals.append(extra)
            g = gs[0]
            others = s.bandwidth_mbps - sum(q.bandwidth_mbps for q in s.quanta if q.guard in gs)
            k = state.quantum_count.get(g, 1)
            own = self.offers[g] / k
            if self.low and own / max(own + others, 1e-9) > cfg.main_provider_fraction:
                act.withdrawals.append(g)
                self.cooldown[sid] = day + cfg.reentry_cooldown_days
                continue
            room = s.bandwidth_mbps - (state.tau_down + eps)
            if room > 0:
                new = max(GUARD_BW_FLOOR_MBPS, self.offers[g] - room * k)
                if new < self.offers[g]:
                    act.retunes[g] = new
        self.apply(act)
        budget = self.budget(honest_total)
        spent = sum(self.offers.values())
        cap = budget + (max(self.offers.values()) if self.offers else 0.0)
        for g in sorted(self.offers, key=lambda g: (-self.offers[g], g)):
            if spent <= cap:
                break
            spent -= self.offers.pop(g)
            act.withdrawals.append(g)
        self.spent_history.append(spent)
        return act


def bw_attack_step(state: BwSetState, adv: BwTuningAdversary, honest_total: float,
                   day: int) -> tuple[dict, dict]:
    """One planning step: returns (additions, retunes) as fingerprint -> offered MBps."""
    act = adv.plan(state, honest_total, day)
    adv.apply(act)
    return act.additions, act.retunes


# ---------------------------------------------------------------------------
# compromise bookkeeping
# ---------------------------------------------------------------------------

def compromised_subsets(h: Hierarchy, malicious: set) -> np.ndarray:
    return np.array([sub.id for _, _, sub in h.iter_subsets()
                     if not malicious.isdisjoint(sub.guards)], dtype=np.int64)


def compromised_bw_sets(state: BwSetState, malicious: set) -> np.ndarray:
    if not malicious:
        return np.zeros(0, dtype=np.int64)
    return np.array([s.id for s in state.sets if not malicious.isdisjoint([q[0] for q in s.quanta])],
                    dtype=np.int64)


def compromise_scan(design_state, malicious: set, clients, day: int = 0):
    """Latch compromise on every client whose guard set holds a malicious guard."""
    from .assignment import AS, BW
    if clients.design == AS:
        bad = compromised_subsets(design_state, malicious)
    elif clients.design == BW:
        bad = compromised_bw_sets(design_state, malicious)
    else:
        bad = np.array([clients.guard_code(g) for g in sorted(malicious) if g in design_state],
                       dtype=np.int64)
    clients.scan(bad, day)
    return clients


# ---------------------------------------------------------------------------
# targeted attack on the AS design
# ---------------------------------------------------------------------------

@dataclass
class AsTargetedAttack:
    """Attacker chasing one client's subset in the AS design."""

    rng: np.random.Generator
    bandwidth_pool: np.ndarray
    tag: str = "t"
    guards: dict = field(default_factory=dict)   # fp -> (asn, bw)
    cost_mbps: float = 0.0
    compromised_day: Optional[int] = None
    _n: int = 0

    def plan(self, prev: Hierarchy, target_subset: int, today_bw: Mapping[str, float],
             guard_asn: Mapping[str, int], tau_up: float, tau_down: float) -> dict:
        """New malicious guards to announce today (fp -> (asn, bw))."""
        subs = {sub.id: sub for _, _, sub in prev.iter_subsets()}
        target = subs.get(target_subset)
        if target is None:
            return {}
        live = [g for g in target.guards if g in today_bw]
        bw = sum(today_bw[g] for g in live)
        if self.compromised_day is not None:
            return self._hold(target, today_bw, tau_down)
        if bw >= tau_down or not live:
            return {}
        ases = sorted({guard_asn[g] for g in live})
        asn = ases[int(self.rng.integers(len(ases)))]
        deficit = 0.0
        for sub in subs.values():
            here = [g for g in sub.guards if g in today_bw]
            if not here or asn not in {guard_asn.get(g) for g in here}:
                continue
            sbw = sum(today_bw[g] for g in here)
            if sbw < tau_down:
                deficit += tau_up - sbw
        new, total = {}, 0.0
        while total < deficit:
            b = max(float(self.bandwidth_pool[int(self.rng.integers(len(self.bandwidth_pool)))]),
                    GUARD_BW_FLOOR_MBPS)
            fp = f"{MALICIOUS_PREFIX}-{self.tag}-{self._n:05d}"
            self._n += 1
            new[fp] = (asn, b)
            total += b
        self.cost_mbps += total
        self.guards.update(new)
        return new

    def _hold(self, target, today_bw, tau_down):
        bw = sum(today_bw.get(g, 0.0) for g in target.guards)
        if bw >= tau_down:
            return {}
        mine = [g for g in target.guards if g in self.guards]
        if not mine:
            return {}
        g = mine[0]
        asn, b = self.guards[g]
        extra = tau_down - bw + 0.1
        self.guards[g] = (asn, b + extra)
        self.cost_mbps += extra
        return {g: self.guards[g]}
