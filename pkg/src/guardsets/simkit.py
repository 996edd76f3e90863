"""Day-stepped simulation driver and the per-day metrics it records."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import __version__
from .adversary import (BOTNET, BW_TUNING_HIGH, BW_TUNING_LOW, CENTRALIZED, INJECTING, LOW_RESOURCE,
                        TARGETED, AdversaryConfig, AsTargetedAttack, BwTuningAdversary,
                        compromise_scan, compromised_bw_sets, compromised_subsets, inject_botnet,
                        inject_centralized, inject_low_resource, is_malicious)
from .assignment import AS, BW, DESIGNS, SINGLE, ClientPopulation
from .bwsets import BwChangeLog, initial_bw_state, plan_repairs, refresh_bw_state, repair_bw_sets
from .hierarchy import ChangeLog, Thresholds, full_update
from .trace import Trace

logger = logging.getLogger(__name__)

METRIC_FIELDS = [
    "day", "date", "design", "n_supersets", "n_sets", "n_subsets", "repairs", "created", "dismantled",
    "compromised_sets", "compromised_set_fraction", "compromised_client_fraction",
    "compromised_now_fraction", "anon_median", "anon_q1", "anon_q3", "set_bw_median",
    "honest_guard_bw", "adversary_bw", "adversary_bw_fraction", "clients_moved",
]


@dataclass
class SimulationConfig:
    design: str = AS
    tau_up: float = 40.0
    tau_down: float = 20.0
    n_supersets: int = 50
    clients: int = 100_000
    seed: int = 0
    adversary: Optional[AdversaryConfig] = None
    guard_pick_policy: str = "weighted"
    compromise_accounting: str = "latched"
    bw_dissolve_unrepaired: bool = True
    client_arrivals_per_day: float = 0.0
    days: Optional[int] = None

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        if self.clients < 1:
            raise ValueError("clients must be at least 1")
        if self.compromise_accounting not in ("latched", "instantaneous"):
            raise ValueError("compromise_accounting must be latched or instantaneous")
        Thresholds(self.tau_up, self.tau_down, self.n_supersets)

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.tau_up, self.tau_down, self.n_supersets)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d


@dataclass
class MetricsSeries:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    def at(self, day: int) -> dict:
        return self.records[day]

    def to_csv(self, manifest_ref: Optional[str] = None) -> str:
        buf = io.StringIO()
        if manifest_ref:
            buf.write(f"# manifest={manifest_ref}\n")
        w = csv.DictWriter(buf, fieldnames=METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.records:
            w.writerow({k: _fmt(r[k]) for k in METRIC_FIELDS})
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


@dataclass
class SimulationResult:
    config: SimulationConfig
    metrics: MetricsSeries
    state: object
    clients: ClientPopulation
    malicious: dict
    changelogs: list


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def anonymity_sets(clients: ClientPopulation) -> np.ndarray:
    """Client count of every guard set (or guard) with at least one client."""
    _, counts = np.unique(clients.group, return_counts=True)
    return counts


def set_bandwidth_distribution(state) -> np.ndarray:
    if hasattr(state, "supersets"):
        return np.array([sub.bandwidth_mbps for ss in state.eligible_supersets()
                         for s in ss.sets for sub in s.subsets])
    if hasattr(state, "sets"):
        return np.array([s.bandwidth_mbps for s in state.sets])
    return np.array(sorted(state.values()))


def repairs_per_day(changelogs: Iterable) -> np.ndarray:
    out = []
    for log in changelogs:
        out.append(log.subsets_repaired if isinstance(log, ChangeLog) else log.sets_repaired)
    return np.array(out, dtype=int)


def _quartiles(x):
    if len(x) == 0:
        return (0.0, 0.0, 0.0)
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return float(med), float(q1), float(q3)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _rng(config, *stream):
    return np.random.default_rng([config.seed, *stream])


def _injected_guards(config, trace: Trace) -> dict:
    """fp -> (asn, bw) for strategies that place their guards once, on day 0."""
    adv = config.adversary
    if adv is None or adv.strategy not in INJECTING:
        return {}
    rng = _rng(config, 31)
    day0 = trace.guards_as(0)
    if adv.strategy == LOW_RESOURCE:
        gs = [inject_low_resource(day0, trace.prefix_map, rng, tag=str(config.seed))]
    elif adv.strategy == CENTRALIZED:
        gs = inject_centralized(day0, trace.guard_ases(0), adv.bandwidth_fraction, rng, tag=str(config.seed))
    else:
        gs = inject_botnet(day0, trace.guard_ases(0), adv.bandwidth_fraction, rng, tag=str(config.seed))
    return {g.fingerprint: (g.asn, g.offered_bandwidth_mbps) for g in gs}


def run_simulation(config: SimulationConfig, trace: Trace,
                   observer: Optional[Callable] = None) -> SimulationResult:
    """Run one design over the trace, one record per day.

    ``observer(day, state, malicious)`` is called once per day after the
    design update and client maintenance; it must not modify the state.
    """
    n_days = trace.n_days if config.days is None else min(config.days, trace.n_days)
    if n_days < 1:
        raise ValueError("empty trace")
    thr = config.thresholds
    clients = ClientPopulation(config.design, config.clients)
    client_rng = _rng(config, 11)
    arrivals_rng = _rng(config, 13)
    injected = _injected_guards(config, trace)
    tuner = None
    if config.adversary is not None and config.adversary.strategy in (BW_TUNING_HIGH, BW_TUNING_LOW):
        if config.design != BW:
            raise ValueError("bandwidth tuning targets the BW design")
        tuner = BwTuningAdversary(config.adversary, tag=str(config.seed))
    if config.adversary is not None and config.adversary.strategy == TARGETED:
        raise ValueError("use run_targeted for the targeted attack")

    state = None
    metrics = MetricsSeries()
    logs = []
    malicious_seen: dict = dict(injected)
    for day in range(n_days):
        honest = trace.guards_as(day)
        honest_total = float(sum(b for _, b in honest.values()))
        guards = {**honest, **injected}
        if config.design == AS:
            state, log = full_update(state, guards, trace.graph, thr, config.seed, day)
            created = log.subsets_created
            dismantled = log.subsets_dismantled
            repairs = log.subsets_repaired
        elif config.design == BW:
            gbw = {fp: b for fp, (_, b) in guards.items()}
            log = BwChangeLog(day=day)
            if state is None:
                state = initial_bw_state(gbw, thr.tau_up, thr.tau_down, day)
                log.sets_created = len(state.sets)
            else:
                if tuner is not None:
                    refresh_bw_state(state, {**gbw, **tuner.offers}, day)
                    act = tuner.plan(state, honest_total, day)
                    tuner.apply(act)
                gbw = {**gbw, **(tuner.offers if tuner else {})}
                repair_bw_sets(state, gbw, day, config.bw_dissolve_unrepaired, log)
            if tuner is not None:
                tuner.settle(state, honest_total, day)
                for g, b in tuner.offers.items():
                    malicious_seen[g] = (None, b)
            created, dismantled, repairs = log.sets_created, log.sets_dismantled, log.sets_repaired
        else:
            state = {fp: b for fp, (_, b) in guards.items()}
            log = None
            created = dismantled = repairs = 0
        logs.append(log)

        if config.client_arrivals_per_day > 0 and day > 0:
            clients.add_clients(int(arrivals_rng.poisson(config.client_arrivals_per_day)))
        moved = clients.maintain(state, client_rng)
        if day == 0:
            moved = 0   # first assignment, nobody moved

        malicious = set(injected) | (set(tuner.offers) if tuner else set())
        if observer is not None:
            observer(day, state, malicious)
        bad = _bad_groups(config.design, state, malicious, clients)
        clients.scan(bad, day)
        metrics.records.append(_record(config, trace, day, state, clients, bad, honest_total,
                                       repairs, created, dismantled, moved,
                                       sum(tuner.offers.values()) if tuner else
                                       sum(b for _, b in injected.values())))
    return SimulationResult(config, metrics, state, clients, malicious_seen, logs)


def _bad_groups(design, state, malicious, clients) -> np.ndarray:
    if design == AS:
        return compromised_subsets(state, malicious)
    if design == BW:
        return compromised_bw_sets(state, malicious)
    return np.array([clients.guard_code(g) for g in sorted(malicious) if g in state], dtype=np.int64)


def _record(config, trace, day, state, clients, bad, honest_total, repairs, created,
            dismantled, moved, adv_bw):
    if config.design == AS:
        n_ss, n_sets, n_sub = state.counts()
        n_groups = n_sub
    elif config.design == BW:
        n_ss, n_sets, n_sub = 0, len(state.sets), len(state.sets)
        n_groups = n_sets
    else:
        n_ss, n_sets, n_sub = 0, 0, len(state)
        n_groups = len(state)
    anon = anonymity_sets(clients)
    med, q1, q3 = _quartiles(anon)
    bw_med = float(np.median(set_bandwidth_distribution(state))) if n_groups else 0.0
    latched = float(clients.compromised_ever.mean())
    now = float(clients.compromised_now.mean())
    return {
        "day": day, "date": trace.date(day).isoformat(), "design": config.design,
        "n_supersets": n_ss, "n_sets": n_sets, "n_subsets": n_sub,
        "repairs": int(repairs), "created": int(created), "dismantled": int(dismantled),
        "compromised_sets": len(bad),
        "compromised_set_fraction": len(bad) / n_groups if n_groups else 0.0,
        "compromised_client_fraction": latched if config.compromise_accounting == "latched" else now,
        "compromised_now_fraction": now,
        "anon_median": med, "anon_q1": q1, "anon_q3": q3, "set_bw_median": bw_med,
        "honest_guard_bw": honest_total, "adversary_bw": float(adv_bw),
        "adversary_bw_fraction": float(adv_bw) / honest_total if honest_total else 0.0,
        "clients_moved": int(moved),
    }


# ---------------------------------------------------------------------------
# targeted attack
# ---------------------------------------------------------------------------

@dataclass
class TargetOutcome:
    target: int
    compromise_day: Optional[int]
    cost_mbps: float


def run_targeted(config: SimulationConfig, trace: Trace, n_targets: int,
                 first_target: int = 0, batch: int = 25) -> list[TargetOutcome]:
    """Targeted attacks on ``n_targets`` seeded clients.

    Targets are simulated ``batch`` at a time over one shared network; each
    attacker chases its own client and only its own guards count as a hit.
    ``batch=1`` gives fully independent runs.
    """
    if config.design not in (AS, BW):
        raise ValueError("targeted attack runs against the AS or BW design")
    out = []
    targets = list(range(first_target, first_target + n_targets))
    for i in range(0, len(targets), max(1, batch)):
        chunk = targets[i:i + max(1, batch)]
        run = _targets_as if config.design == AS else _targets_bw
        out.extend(run(config, trace, chunk))
    return out


def _n_days(config, trace):
    return trace.n_days if config.days is None else min(config.days, trace.n_days)


def _targets_as(config, trace, targets) -> list[TargetOutcome]:
    thr = config.thresholds
    pool = np.sort(np.array([b for _, b in trace.guards_as(0).values()]))
    seed = config.seed * 1_000_003 + targets[0]
    h, _ = full_update(None, trace.guards_as(0), trace.graph, thr, seed, 0)
    rngs = [_rng(config, 41, t) for t in targets]
    attacks = [AsTargetedAttack(r, pool, tag=f"{config.seed}-{t}") for r, t in zip(rngs, targets)]
    clients = []
    for t, r in zip(targets, rngs):
        me = ClientPopulation(AS, 1, first_id=t)
        me.maintain(h, r)
        clients.append(me)
    injected: dict = {}
    for day in range(1, _n_days(config, trace)):
        honest = trace.guards_as(day)
        today = {**honest, **injected}
        today_bw = {fp: b for fp, (_, b) in today.items()}
        asn_of = {fp: a for fp, (a, _) in today.items()}
        for atk, me in zip(attacks, clients):
            if atk.compromised_day is None:
                injected.update(atk.plan(h, int(me.subset[0]), today_bw, asn_of, thr.tau_up, thr.tau_down))
        h, _ = full_update(h, {**honest, **injected}, trace.graph, thr, seed, day)
        subs = {sub.id: sub for _, _, sub in h.iter_subsets()}
        for atk, me, r in zip(attacks, clients, rngs):
            if atk.compromised_day is not None:
                continue
            me.maintain(h, r)
            if any(g in atk.guards for g in subs[int(me.subset[0])].guards):
                atk.compromised_day = day
        if all(a.compromised_day is not None for a in attacks):
            break
    return [TargetOutcome(t, a.compromised_day, a.cost_mbps) for t, a in zip(targets, attacks)]


def _targets_bw(config, trace, targets) -> list[TargetOutcome]:
    thr = config.thresholds
    adv_cfg = config.adversary or AdversaryConfig(strategy=TARGETED, bandwidth_fraction=1.0)
    tcfg = dataclasses.replace(adv_cfg, strategy=BW_TUNING_HIGH)
    state = initial_bw_state(trace.guards_bw(0), thr.tau_up, thr.tau_down, 0)
    rngs = [_rng(config, 41, t) for t in targets]
    clients, tuners = [], []
    for t, r in zip(targets, rngs):
        me = ClientPopulation(BW, 1, first_id=t)
        me.maintain(state, r)
        clients.append(me)
        tuners.append(BwTuningAdversary(tcfg, tag=f"{config.seed}-{t}", target_set=int(me.subset[0])))
    days: list = [None] * len(targets)
    costs = [0.0] * len(targets)
    kept: dict = {}   # guards of attackers that already won stay online
    for day in range(1, _n_days(config, trace)):
        honest = trace.guards_bw(day)
        total = float(sum(honest.values()))
        refresh_bw_state(state, {**honest, **kept}, day)
        offers: dict = {}
        shared = plan_repairs(state)
        for i, (tuner, me) in enumerate(zip(tuners, clients)):
            if days[i] is not None:
                continue
            tuner.offers = {}
            tuner.target_set = int(me.subset[0])
            act = tuner.plan(state, total, day, shared)
            act.withdrawals = []
            tuner.apply(act)
            costs[i] += sum(act.additions.values())
            offers.update(tuner.offers)
        repair_bw_sets(state, {**honest, **kept, **offers}, day, config.bw_dissolve_unrepaired)
        by_id = state.set_by_id()
        for i, (tuner, me, r) in enumerate(zip(tuners, clients, rngs)):
            if days[i] is not None:
                continue
            me.maintain(state, r)
            if any(q.guard in tuner.offers for q in by_id[int(me.subset[0])].quanta):
                days[i] = day
                kept.update(tuner.offers)
        if all(d is not None for d in days):
            break
    return [TargetOutcome(t, d, c) for t, d, c in zip(targets, days, costs)]


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def manifest(config: SimulationConfig, trace_config: Optional[dict] = None, extra: Optional[dict] = None) -> dict:
    m = {"tool": "guardsets", "version": __version__, "config": config.to_dict()}
    if trace_config is not None:
        m["trace"] = trace_config
    if extra:
        m.update(extra)
    return m


def manifest_digest(m: dict) -> str:
    return hashlib.sha256(json.dumps(m, sort_keys=True, default=str).encode()).hexdigest()[:16]
