"""AS-level stream vulnerability and the DeNASA guard/exit filter.

AS paths are data here: an ``AsPathOracle`` answers (src, dst) lookups and a
miss is explicit.  A stream is vulnerable when some AS sits on both the
client-guard side and the exit-destination side, either direction counted.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .assignment import AS, BW, SINGLE, weighted_pick

ENTRY_SUSPECTS = frozenset({1299, 3356})
EXIT_SUSPECTS = frozenset({1299, 3356, 6939, 174, 2914, 3257, 9002, 6453})
SKIPPED = None  # stream_vulnerable result when a whole side is unknown


class PathTableError(ValueError):
    pass


class AsPathOracle:
    """(src_asn, dst_asn) -> AS path, each direction stored on its own."""

    def __init__(self, paths: Optional[Mapping[tuple, Sequence[int]]] = None):
        self._paths: dict = {}
        for (src, dst), path in (paths or {}).items():
            self.add(src, dst, path)

    def add(self, src: int, dst: int, path: Sequence[int]):
        path = tuple(int(a) for a in path)
        if not path or path[0] != src or path[-1] != dst:
            raise PathTableError(f"path {path} does not run from AS{src} to AS{dst}")
        self._paths[(src, dst)] = path

    def path(self, src: int, dst: int) -> Optional[tuple]:
        return self._paths.get((src, dst))

    def side(self, a: int, b: int) -> Optional[frozenset]:
        """ASes on a<->b in either direction, None when both are missing."""
        fwd, rev = self._paths.get((a, b)), self._paths.get((b, a))
        if fwd is None and rev is None:
            return None
        return frozenset((fwd or ()) + (rev or ()))

    def __len__(self):
        return len(self._paths)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("src_asn,dst_asn,path\n")
        for (s, d), p in sorted(self._paths.items()):
            buf.write(f"{s},{d},{' '.join(map(str, p))}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "AsPathOracle":
        o = cls()
        rows = csv.reader(io.StringIO(text))
        for n, row in enumerate(rows, 1):
            if not row or row[0].startswith("#") or (n == 1 and row[0] == "src_asn"):
                continue
            if len(row) != 3:
                raise PathTableError(f"line {n}: expected src_asn,dst_asn,path")
            try:
                o.add(int(row[0]), int(row[1]), [int(a) for a in row[2].split()])
            except ValueError as e:
                raise PathTableError(f"line {n}: {e}") from None
        return o


@dataclass(frozen=True)
class SuspectConfig:
    entry_suspects: frozenset = ENTRY_SUSPECTS
    exit_suspects: frozenset = EXIT_SUSPECTS
    threshold: float = 0.1
    aggregator: str = "max"      # or "sum"
    miss_closed: bool = True     # a guard with no known path fails the set check

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")
        if self.aggregator not in ("max", "sum"):
            raise ValueError(f"unknown aggregator {self.aggregator!r}")


class ExitProbabilityTable:
    """Rows are exit ASes, columns suspect ASes, cells a probability."""

    def __init__(self, suspects: Sequence[int], rows: Mapping[int, Sequence[float]]):
        self.suspects = tuple(int(s) for s in suspects)
        self.rows: dict = {}
        for asn, vals in rows.items():
            vals = tuple(float(v) for v in vals)
            if len(vals) != len(self.suspects):
                raise PathTableError(f"AS{asn}: {len(vals)} values for {len(self.suspects)} suspects")
            if any(not 0.0 <= v <= 1.0 for v in vals):
                raise PathTableError(f"AS{asn}: probabilities must lie in [0, 1]")
            self.rows[int(asn)] = vals

    def aggregate(self, exit_asn: int, suspects: Iterable[int], how: str = "max") -> float:
        if exit_asn not in self.rows:
            raise KeyError(f"exit AS{exit_asn} not in probability table")
        want = set(suspects)
        vals = [v for s, v in zip(self.suspects, self.rows[exit_asn]) if s in want]
        if not vals:
            return 0.0
        return max(vals) if how == "max" else sum(vals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("exit_asn," + ",".join(map(str, self.suspects)) + "\n")
        for asn, vals in sorted(self.rows.items()):
            buf.write(f"{asn}," + ",".join(repr(v) for v in vals) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ExitProbabilityTable":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if not rows:
            raise PathTableError("empty probability table")
        try:
            suspects = [int(x) for x in rows[0][1:]]
            body = {int(r[0]): [float(x) for x in r[1:]] for r in rows[1:]}
        except ValueError as e:
            raise PathTableError(str(e)) from None
        return cls(suspects, body)


def stream_vulnerable(client_asn: int, guard_asn: int, exit_asn: int, dest_asn: int,
                      oracle: AsPathOracle) -> Optional[bool]:
    """True if one AS sees both sides; None (skipped) if a side has no path at all.

    Endpoints count: a client AS that shows up on the exit side is an observer.
    """
    entry = oracle.side(client_asn, guard_asn)
    exit_ = oracle.side(exit_asn, dest_asn)
    if entry is None or exit_ is None:
        return SKIPPED
    return not entry.isdisjoint(exit_)


def denasa_guardset_ok(client_asn: int, guardset: Iterable[int], oracle: AsPathOracle,
                       suspects: SuspectConfig = SuspectConfig()) -> bool:
    """No entry suspect between the client and any guard AS of the set."""
    for g in guardset:
        side = oracle.side(client_asn, g)
        if side is None:
            if suspects.miss_closed:
                return False
            continue
        if not side.isdisjoint(suspects.entry_suspects):
            return False
    return True


def denasa_exit_ok(table: ExitProbabilityTable, exit_asn: int,
                   suspects: SuspectConfig = SuspectConfig(), threshold: Optional[float] = None) -> bool:
    t = suspects.threshold if threshold is None else threshold
    return table.aggregate(exit_asn, suspects.exit_suspects, suspects.aggregator) < t


# ---------------------------------------------------------------------------
# stream rates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GuardSetOption:
    """One guard set a client may end up with, and the weight of picking it."""
    weight: object                 # float or Fraction
    guards: tuple                  # ((guard_asn, bandwidth), ...)


@dataclass
class PathSecConfig:
    exits: Sequence[tuple] = ()    # ((exit_asn, bandwidth), ...)
    denasa: bool = False
    suspects: SuspectConfig = SuspectConfig()
    table: Optional[ExitProbabilityTable] = None
    mode: str = "exact"            # or "sampled"
    samples: int = 100             # draws per stream in sampled mode
    seed: int = 0


@dataclass
class StreamRates:
    rates: dict                    # client index -> vulnerable fraction (None if all skipped)
    skipped: dict                  # client index -> skipped weight (exact) or count (sampled)

    def values(self) -> np.ndarray:
        return np.array([float(r) for r in self.rates.values() if r is not None])

    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.sort(self.values())
        return x, np.arange(1, len(x) + 1) / max(len(x), 1)

    def median(self) -> float:
        v = self.values()
        return float(np.median(v)) if len(v) else 0.0


def guard_set_options(design: str, state, guard_asn: Mapping[str, int]) -> list[GuardSetOption]:
    """Every guard set of a design state with its client-level pick probability."""
    out = []
    if design == AS:
        supers = state.eligible_supersets()
        tot = sum(ss.bandwidth_mbps for ss in supers)
        for ss in supers:
            st = sum(s.bandwidth_mbps for s in ss.sets)
            for s in ss.sets:
                bt = sum(sub.bandwidth_mbps for sub in s.subsets)
                for sub in s.subsets:
                    w = (ss.bandwidth_mbps / tot) * (s.bandwidth_mbps / st) * (sub.bandwidth_mbps / bt)
                    out.append(GuardSetOption(w, tuple(
                        (guard_asn[g], sub.bandwidth_mbps / len(sub.guards)) for g in sub.guards)))
    elif design == BW:
        for s in state.sets:
            per = {}
            for q in s.quanta:
                per[q.guard] = per.get(q.guard, 0.0) + q.bandwidth_mbps
            out.append(GuardSetOption(s.bandwidth_mbps, tuple((guard_asn[g], b) for g, b in sorted(per.items()))))
    elif design == SINGLE:
        for g, b in sorted(state.items()):
            out.append(GuardSetOption(b, ((guard_asn[g], b),)))
    else:
        raise ValueError(f"unknown design {design!r}")
    return out


def _normalize(pairs):
    total = sum(w for _, w in pairs)
    return [(x, w / total) for x, w in pairs if w > 0]


def _entry_options(client_asn, options, oracle, config):
    opts = [(o.guards, o.weight) for o in options]
    if config.denasa:
        ok = [(g, w) for g, w in opts if denasa_guardset_ok(client_asn, [a for a, _ in g], oracle, config.suspects)]
        opts = ok or opts   # nothing passes: keep the ordinary choice
    return _normalize(opts)


def _exit_options(config):
    opts = [(asn, bw) for asn, bw in config.exits]
    if config.denasa:
        if config.table is None:
            raise ValueError("DeNASA mode needs an exit probability table")
        ok = [(a, b) for a, b in opts if denasa_exit_ok(config.table, a, config.suspects)]
        opts = ok or opts
    return _normalize(opts)


def vulnerable_stream_rate(clients: Sequence[int], streams: Sequence[tuple], design_state,
                           oracle: AsPathOracle, config: PathSecConfig) -> StreamRates:
    """Per-client fraction of vulnerable streams.

    ``clients`` are client ASNs; ``streams`` are (client index, destination ASN)
    pairs; ``design_state`` is a list of ``GuardSetOption``.  Exact mode returns
    the expected fraction over all guard-set, guard and exit draws (exact when
    weights are ``Fraction``); sampled mode fixes one guard set per client and
    draws guard and exit per stream.
    """
    if not config.exits:
        raise ValueError("no exit relays")
    exits = _exit_options(config)
    by_client: dict = {}
    for c, d in streams:
        by_client.setdefault(c, []).append(d)
    rates, skipped = {}, {}
    rng = np.random.default_rng(config.seed)
    for c in range(len(clients)):
        dests = by_client.get(c, [])
        entries = _entry_options(clients[c], design_state, oracle, config)
        if config.mode == "exact":
            vuln = seen = skip = 0
            for d in dests:
                for guards, pw in entries:
                    gs = _normalize(list(guards))
                    for g, gw in gs:
                        for e, ew in exits:
                            p = pw * gw * ew
                            v = stream_vulnerable(clients[c], g, e, d, oracle)
                            if v is None:
                                skip += p
                            else:
                                seen += p
                                vuln += p if v else 0
        elif config.mode == "sampled":
            vuln = seen = skip = 0
            guards = weighted_pick(entries, float(rng.random()))
            gs = _normalize(list(guards))
            for d in dests:
                for _ in range(config.samples):
                    g = weighted_pick(gs, float(rng.random()))
                    e = weighted_pick(exits, float(rng.random()))
                    v = stream_vulnerable(clients[c], g, e, d, oracle)
                    if v is None:
                        skip += 1
                    else:
                        seen += 1
                        vuln += int(v)
        else:
            raise ValueError(f"unknown mode {config.mode!r}")
        rates[c] = vuln / seen if seen else None
        skipped[c] = skip
    return StreamRates(rates, skipped)

