"""Synthetic multi-day relay traces over a generated tiered AS topology.

The real consensus archives are external data, so desk-scale runs use this
generator: a tiered AS graph, Zipf-distributed guard placement across ASes,
log-normal guard bandwidths with AR(1) daily noise, Bernoulli departures,
Poisson arrivals, and optional scripted bandwidth shocks.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import ipaddress
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .asgraph import AsGraph, format_as_rel, load_as_rel
from .ingest import (NetworkSnapshot, PrefixMap, Relay, format_prefix_table, format_snapshot_csv,
                     parse_prefix_table, parse_snapshot_csv)

ADDRESS_BASE = int(ipaddress.IPv4Address("16.0.0.0"))
PREFIX_LEN = 20


@dataclass
class Shock:
    day: int
    duration: int = 5
    fraction: float = 0.4      # share of live guards hit
    factor: float = 0.3        # bandwidth multiplier while the shock lasts


@dataclass
class TraceConfig:
    n_guards: int = 2000
    n_days: int = 365
    seed: int = 0
    n_tier1: int = 10
    n_tier2: int = 80
    n_tier3: int = 400
    n_stubs: int = 2500
    guard_as_pool: int = 800
    zipf_exponent: float = 1.1
    bw_median_mbps: float = 4.0
    bw_sigma: float = 1.1
    bw_max_mbps: float = 400.0
    leave_prob: float = 0.003
    noise_sigma: float = 0.08
    noise_phi: float = 0.95
    n_exits: int = 300
    shocks: list = field(default_factory=list)
    start_date: str = "2015-01-01"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TraceConfig":
        d = dict(d)
        d["shocks"] = [Shock(**s) for s in d.get("shocks", [])]
        return cls(**d)


def generate_as_graph(cfg: TraceConfig, rng: np.random.Generator) -> tuple[AsGraph, dict]:
    """Tiered topology; returns the graph and ``tier -> [asn]``."""
    asn = iter(range(1, 10 ** 6))
    tiers = {
        1: [next(asn) for _ in range(cfg.n_tier1)],
        2: [next(asn) for _ in range(cfg.n_tier2)],
        3: [next(asn) for _ in range(cfg.n_tier3)],
        4: [next(asn) for _ in range(cfg.n_stubs)],
    }
    p2c, p2p = set(), set()
    t1 = tiers[1]
    for i, a in enumerate(t1):
        for b in t1[i + 1:]:
            p2p.add((a, b))

    def providers(cands, lo, hi, weights=None):
        k = int(rng.integers(lo, hi + 1))
        k = min(k, len(cands))
        p = None if weights is None else weights / weights.sum()
        return rng.choice(cands, size=k, replace=False, p=p)

    for a in tiers[2]:
        for p in providers(np.array(t1), 1, 3):
            p2c.add((int(p), a))
    t2 = np.array(tiers[2])
    for i in range(len(t2)):
        for j in range(i + 1, len(t2)):
            if rng.random() < 0.05:
                p2p.add((int(t2[i]), int(t2[j])))
    # preferential attachment: a few big transit providers get most customers
    t2_w = rng.pareto(1.5, len(t2)) + 1.0
    for a in tiers[3]:
        for p in providers(t2, 1, 2, t2_w):
            p2c.add((int(p), a))
        if rng.random() < 0.1:
            p2c.add((int(rng.choice(t1)), a))
    upper = np.array(tiers[2] + tiers[3])
    up_w = np.concatenate((t2_w, rng.pareto(1.5, len(tiers[3])) + 1.0))
    for a in tiers[4]:
        for p in providers(upper, 1, 2, up_w):
            p2c.add((int(p), a))
    nodes = [a for t in tiers.values() for a in t]
    return AsGraph(p2c, p2p, nodes), tiers


def _prefix_of(index: int) -> str:
    return f"{ipaddress.IPv4Address(ADDRESS_BASE + index * (1 << (32 - PREFIX_LEN)))}/{PREFIX_LEN}"


def _fingerprints(rng, n) -> list:
    raw = rng.integers(0, 16, size=(n, 40))
    raw[:, 0] = rng.integers(1, 16, size=n)   # never starts with 0; keeps clear of test ids
    digits = np.array(list("0123456789ABCDEF"))
    return ["".join(row) for row in digits[raw]]


@dataclass
class Trace:
    """Guard population over days, stored as dense arrays.

    ``bw[i, d]`` is guard i's bandwidth on day d (0 when absent).
    """

    config: TraceConfig
    graph: AsGraph
    prefix_map: PrefixMap
    fingerprints: list
    asn: np.ndarray
    address: list
    bw: np.ndarray
    exits: list = field(default_factory=list)   # (fp, asn, address, bw)

    @property
    def n_days(self) -> int:
        return self.bw.shape[1]

    def date(self, day: int) -> dt.date:
        return dt.date.fromisoformat(self.config.start_date) + dt.timedelta(days=day)

    def present(self, day: int) -> np.ndarray:
        return np.nonzero(self.bw[:, day] > 0)[0]

    def guards_as(self, day: int) -> dict:
        """fingerprint -> (asn, bandwidth) for the day's guards."""
        idx = np.nonzero(self.bw[:, day] > 0)[0]
        fps = [self.fingerprints[i] for i in idx.tolist()]
        return dict(zip(fps, zip(self.asn[idx].tolist(), self.bw[idx, day].tolist())))

    def guards_bw(self, day: int) -> dict:
        idx = np.nonzero(self.bw[:, day] > 0)[0]
        return dict(zip([self.fingerprints[i] for i in idx.tolist()], self.bw[idx, day].tolist()))

    def total_guard_bw(self, day: int) -> float:
        return float(self.bw[:, day].sum())

    def guard_ases(self, day: int) -> list:
        return sorted({int(a) for a in self.asn[self.bw[:, day] > 0]})

    def snapshot(self, day: int) -> NetworkSnapshot:
        col = self.bw[:, day]
        relays = []
        for i in np.nonzero(col > 0)[0]:
            first = int(np.argmax(self.bw[i] > 0))
            relays.append(Relay(self.fingerprints[i], self.address[i], round(float(col[i]), 6),
                                frozenset({"Guard", "Fast", "Running", "Stable"}),
                                float(day - first + 8), 0.99))
        for fp, _, addr, b in self.exits:
            relays.append(Relay(fp, addr, b, frozenset({"Exit", "Fast", "Running"}), 30.0, 0.97))
        return NetworkSnapshot(self.date(day), tuple(relays))

    # -- files --------------------------------------------------------------
    def write(self, out_dir: str):
        os.makedirs(os.path.join(out_dir, "snapshots"), exist_ok=True)
        with open(os.path.join(out_dir, "as-rel.txt"), "w") as fh:
            fh.write(format_as_rel(self.graph))
        with open(os.path.join(out_dir, "prefixes.txt"), "w") as fh:
            fh.write(format_prefix_table(self.prefix_map))
        with open(os.path.join(out_dir, "trace.json"), "w") as fh:
            json.dump({"config": self.config.to_dict(), "n_days": self.n_days}, fh, indent=1, sort_keys=True)
        for d in range(self.n_days):
            with open(os.path.join(out_dir, "snapshots", f"{self.date(d).isoformat()}.csv"), "w") as fh:
                fh.write(format_snapshot_csv(self.snapshot(d)))

    @classmethod
    def load(cls, in_dir: str) -> "Trace":
        """Rebuild a trace from files written by :meth:`write` (or hand-made ones)."""
        graph = load_as_rel(os.path.join(in_dir, "as-rel.txt"))
        with open(os.path.join(in_dir, "prefixes.txt")) as fh:
            pmap = parse_prefix_table(fh.read())
        meta_path = os.path.join(in_dir, "trace.json")
        cfg = TraceConfig()
        if os.path.exists(meta_path):
            with open(meta_path) as fh:
                cfg = TraceConfig.from_dict(json.load(fh)["config"])
        snap_dir = os.path.join(in_dir, "snapshots")
        files = sorted(f for f in os.listdir(snap_dir) if f.endswith(".csv"))
        if not files:
            raise ValueError(f"no snapshots in {snap_dir}")
        cfg.start_date = files[0][:-4]
        index, fps, asns, addrs, cols, exits = {}, [], [], [], [], {}
        for d, name in enumerate(files):
            with open(os.path.join(snap_dir, name)) as fh:
                snap = parse_snapshot_csv(fh.read(), dt.date.fromisoformat(name[:-4]))
            col = {}
            for r in snap.relays:
                if not r.is_guard:
                    if r.is_exit and r.fingerprint not in exits:
                        exits[r.fingerprint] = (r.fingerprint, pmap.lookup(r.address), r.address, r.bandwidth_mbps)
                    continue
                a = pmap.lookup(r.address)
                if r.fingerprint not in index:
                    index[r.fingerprint] = len(fps)
                    fps.append(r.fingerprint)
                    asns.append(a if a is not None else 0)
                    addrs.append(r.address)
                col[index[r.fingerprint]] = r.bandwidth_mbps
            cols.append(col)
        bw = np.zeros((len(fps), len(files)), dtype=float)
        for d, col in enumerate(cols):
            for i, b in col.items():
                bw[i, d] = b
        cfg.n_days = len(files)
        return cls(cfg, graph, pmap, fps, np.array(asns, dtype=np.int64), addrs, bw, list(exits.values()))


def generate_trace(cfg: Optional[TraceConfig] = None) -> Trace:
    cfg = cfg or TraceConfig()
    rng = np.random.default_rng([cfg.seed, 7919])
    graph, tiers = generate_as_graph(cfg, rng)
    all_ases = sorted(graph.nodes)
    pmap = PrefixMap((_prefix_of(i), a) for i, a in enumerate(all_ases))
    index_of = {a: i for i, a in enumerate(all_ases)}

    # hosting-heavy placement: a Zipf ranking over a pool of edge and transit ASes
    pool_src = np.array(tiers[4] + tiers[3] + tiers[2][: max(1, cfg.n_tier2 // 4)])
    pool = rng.choice(pool_src, size=min(cfg.guard_as_pool, len(pool_src)), replace=False)
    weights = 1.0 / np.arange(1, len(pool) + 1) ** cfg.zipf_exponent
    weights /= weights.sum()

    n_days = cfg.n_days
    joins = rng.poisson(cfg.leave_prob * cfg.n_guards, size=n_days)
    joins[0] = cfg.n_guards
    total = int(joins.sum())
    fps = _fingerprints(rng, total)
    asn = pool[rng.choice(len(pool), size=total, p=weights)].astype(np.int64)
    base = np.clip(cfg.bw_median_mbps * np.exp(cfg.bw_sigma * rng.standard_normal(total)),
                   2.05, cfg.bw_max_mbps)
    start = np.repeat(np.arange(n_days), joins)
    life = rng.geometric(cfg.leave_prob, size=total) if cfg.leave_prob > 0 else np.full(total, n_days + 1)
    end = np.minimum(start + life, n_days)          # exclusive
    noise = np.zeros(total)
    noise_sd0 = cfg.noise_sigma / np.sqrt(max(1e-9, 1 - cfg.noise_phi ** 2))
    noise[:] = noise_sd0 * rng.standard_normal(total)
    bw = np.zeros((total, n_days))
    for d in range(n_days):
        if d:
            noise = cfg.noise_phi * noise + cfg.noise_sigma * rng.standard_normal(total)
        alive = (start <= d) & (d < end)
        bw[alive, d] = np.clip(base[alive] * np.exp(noise[alive]), 2.05, cfg.bw_max_mbps * 2)
    for sh in cfg.shocks:
        srng = np.random.default_rng([cfg.seed, 104729, sh.day])
        alive = np.nonzero(bw[:, sh.day] > 0)[0]
        hit = alive[srng.random(len(alive)) < sh.fraction]
        span = slice(sh.day, min(n_days, sh.day + sh.duration))
        bw[hit, span] = np.where(bw[hit, span] > 0, np.maximum(bw[hit, span] * sh.factor, 2.05), 0.0)
    bw = np.round(bw, 3)
    addresses = []
    for a in asn:
        net = ADDRESS_BASE + index_of[int(a)] * (1 << (32 - PREFIX_LEN))
        addresses.append(str(ipaddress.IPv4Address(net + int(rng.integers(1, 1 << (32 - PREFIX_LEN))))))
    exits = []
    exit_fps = _fingerprints(rng, cfg.n_exits)
    for fp in exit_fps:
        a = int(pool[rng.choice(len(pool), p=weights)])
        net = ADDRESS_BASE + index_of[a] * (1 << (32 - PREFIX_LEN))
        addr = str(ipaddress.IPv4Address(net + int(rng.integers(1, 1 << (32 - PREFIX_LEN)))))
        exits.append((fp, a, addr, round(float(np.clip(cfg.bw_median_mbps * np.exp(cfg.bw_sigma * rng.standard_normal()), 1.0, 200.0)), 3)))
    return Trace(cfg, graph, pmap, fps, asn, addresses, bw, exits)
