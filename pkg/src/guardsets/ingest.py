"""Relay snapshots: consensus and CSV parsing, IP-to-AS lookup, guard eligibility."""

from __future__ import annotations

import csv
import datetime as dt
import io
import ipaddress
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional

import numpy as np

logger = logging.getLogger(__name__)

GUARD_BW_FLOOR_MBPS = 2.0
GUARD_WFU_FLOOR = 0.98
GUARD_UPTIME_DAYS = 8.0
GUARD_UPTIME_RANK = 0.875

SNAPSHOT_HEADER = ["fingerprint", "ip", "bandwidth_mbps", "flags", "uptime_days", "wfu"]


class SnapshotParseError(ValueError):
    pass


class DuplicateRelayError(SnapshotParseError):
    def __init__(self, fingerprint):
        super().__init__(f"duplicate fingerprint {fingerprint}")
        self.fingerprint = fingerprint


@dataclass(frozen=True)
class Relay:
    fingerprint: str
    address: str
    bandwidth_mbps: float
    flags: frozenset = frozenset()
    uptime_days: Optional[float] = None
    wfu: Optional[float] = None

    def __post_init__(self):
        if self.bandwidth_mbps < 0:
            raise ValueError(f"{self.fingerprint}: negative bandwidth")
        if self.wfu is not None and not 0.0 <= self.wfu <= 1.0:
            raise ValueError(f"{self.fingerprint}: wfu {self.wfu} outside [0, 1]")
        if self.uptime_days is not None and self.uptime_days < 0:
            raise ValueError(f"{self.fingerprint}: negative uptime")

    @property
    def is_guard(self) -> bool:
        return "Guard" in self.flags

    @property
    def is_exit(self) -> bool:
        return "Exit" in self.flags


@dataclass(frozen=True)
class NetworkSnapshot:
    date: Optional[dt.date]
    relays: tuple
    skipped: int = 0

    def __post_init__(self):
        seen = set()
        for r in self.relays:
            if r.fingerprint in seen:
                raise DuplicateRelayError(r.fingerprint)
            seen.add(r.fingerprint)

    def __len__(self):
        return len(self.relays)

    def by_fingerprint(self) -> dict:
        return {r.fingerprint: r for r in self.relays}

    def total_bandwidth(self, guards_only=False) -> float:
        return float(sum(r.bandwidth_mbps for r in self.relays if r.is_guard or not guards_only))

    def with_relays(self, extra: Iterable[Relay]) -> "NetworkSnapshot":
        return replace(self, relays=self.relays + tuple(extra))


# ---------------------------------------------------------------------------
# consensus subset
# ---------------------------------------------------------------------------

def parse_consensus(text: str) -> NetworkSnapshot:
    """Parse the r/s/w lines of a v3 consensus.

    Bandwidth weights are KBps and are converted to MBps (divide by 1000).
    Router entries missing any of the three lines are skipped and counted.
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("network-status-version"):
        raise SnapshotParseError("missing network-status-version header")
    date = None
    entries: list[dict] = []
    cur: Optional[dict] = None
    for ln in lines:
        kw, _, rest = ln.partition(" ")
        if kw == "valid-after" and date is None:
            try:
                date = dt.date.fromisoformat(rest.split()[0])
            except (ValueError, IndexError):
                raise SnapshotParseError(f"bad valid-after line {ln!r}") from None
        elif kw == "r":
            toks = ln.split()
            if len(toks) < 8:
                raise SnapshotParseError(f"truncated router line {ln!r}")
            cur = {"id": toks[2], "ip": toks[-3]}
            entries.append(cur)
        elif kw == "s" and cur is not None:
            cur["flags"] = frozenset(rest.split())
        elif kw == "w" and cur is not None:
            for item in rest.split():
                k, _, v = item.partition("=")
                if k == "Bandwidth":
                    try:
                        cur["bw"] = int(v) / 1000.0
                    except ValueError:
                        raise SnapshotParseError(f"bad bandwidth in {ln!r}") from None
        elif kw == "directory-footer":
            cur = None
    relays = []
    skipped = 0
    for e in entries:
        if "flags" not in e or "bw" not in e:
            skipped += 1
            continue
        relays.append(Relay(e["id"], e["ip"], e["bw"], e["flags"]))
    if skipped:
        logger.warning("skipped %d router entries lacking s/w lines", skipped)
    return NetworkSnapshot(date, tuple(relays), skipped)


def format_consensus(snapshot: NetworkSnapshot, g_lines: Optional[Mapping[str, str]] = None) -> str:
    """Minimal consensus rendering, optionally with a guard-set ``g`` line per router."""
    out = ["network-status-version 3"]
    if snapshot.date is not None:
        out.append(f"valid-after {snapshot.date.isoformat()} 00:00:00")
    for r in snapshot.relays:
        out.append(f"r relay {r.fingerprint} digest 2015-01-01 00:00:00 {r.address} 9001 0")
        out.append("s " + " ".join(sorted(r.flags)))
        out.append(f"w Bandwidth={int(round(r.bandwidth_mbps * 1000))}")
        if g_lines and r.fingerprint in g_lines:
            out.append(g_lines[r.fingerprint].rstrip("\n"))
    out.append("directory-footer")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# snapshot CSV
# ---------------------------------------------------------------------------

def parse_snapshot_csv(text: str, date: Optional[dt.date] = None) -> NetworkSnapshot:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SnapshotParseError("empty snapshot CSV") from None
    if [h.strip() for h in header] != SNAPSHOT_HEADER:
        raise SnapshotParseError(f"bad header {header}")
    relays = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(SNAPSHOT_HEADER):
            raise SnapshotParseError(f"line {lineno}: expected {len(SNAPSHOT_HEADER)} fields")
        fp, ip, bw, flags, uptime, wfu = (c.strip() for c in row)
        if fp in seen:
            raise DuplicateRelayError(fp)
        seen.add(fp)
        try:
            relays.append(Relay(
                fp, ip, float(bw),
                frozenset(f for f in flags.split("|") if f),
                float(uptime) if uptime else None,
                float(wfu) if wfu else None,
            ))
        except ValueError as exc:
            raise SnapshotParseError(f"line {lineno}: {exc}") from None
    return NetworkSnapshot(date, tuple(relays))


def format_snapshot_csv(snapshot: NetworkSnapshot) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SNAPSHOT_HEADER)
    for r in snapshot.relays:
        w.writerow([
            r.fingerprint, r.address, f"{r.bandwidth_mbps:.6g}", "|".join(sorted(r.flags)),
            "" if r.uptime_days is None else f"{r.uptime_days:.6g}",
            "" if r.wfu is None else f"{r.wfu:.6g}",
        ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# prefix -> AS
# ---------------------------------------------------------------------------

class PrefixMap:
    """Longest-prefix-match IPv4 table."""

    def __init__(self, entries: Iterable[tuple[str, int]] = ()):
        self._by_len: dict[int, dict[int, int]] = {}
        self._entries: list[tuple[ipaddress.IPv4Network, int]] = []
        for prefix, asn in entries:
            self.add(prefix, asn)

    def add(self, prefix, asn: int):
        net = ipaddress.IPv4Network(prefix, strict=False)
        self._by_len.setdefault(net.prefixlen, {})[int(net.network_address)] = int(asn)
        self._entries.append((net, int(asn)))
        self._lens = sorted(self._by_len, reverse=True)

    @property
    def entries(self) -> list:
        return list(self._entries)

    def asns(self) -> list[int]:
        return sorted({a for _, a in self._entries})

    def prefixes_of(self, asn: int) -> list:
        return [n for n, a in self._entries if a == asn]

    def lookup(self, ip) -> Optional[int]:
        try:
            x = int(ipaddress.IPv4Address(ip))
        except (ipaddress.AddressValueError, ValueError):
            return None
        for ln in getattr(self, "_lens", ()):
            mask = (0xFFFFFFFF << (32 - ln)) & 0xFFFFFFFF if ln else 0
            asn = self._by_len[ln].get(x & mask)
            if asn is not None:
                return asn
        return None

    def __len__(self):
        return len(self._entries)


def parse_prefix_table(text: str) -> PrefixMap:
    pm = PrefixMap()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SnapshotParseError(f"prefix table line {lineno}: expected '<prefix> <asn>'")
        try:
            pm.add(parts[0], int(parts[1]))
        except ValueError as exc:
            raise SnapshotParseError(f"prefix table line {lineno}: {exc}") from None
    return pm


def format_prefix_table(pm: PrefixMap) -> str:
    return "".join(f"{net} {asn}\n" for net, asn in pm.entries)


def ip_to_as(pmap: PrefixMap, ip) -> Optional[int]:
    return pmap.lookup(ip)


def label_snapshot(snapshot: NetworkSnapshot, pmap: PrefixMap) -> dict:
    """fingerprint -> ASN (or None when no prefix covers the address)."""
    return {r.fingerprint: pmap.lookup(r.address) for r in snapshot.relays}


# ---------------------------------------------------------------------------
# guard eligibility
# ---------------------------------------------------------------------------

def eligible_guards(snapshot: NetworkSnapshot, relay_history: Optional[Mapping[str, tuple]] = None,
                    mode: str = "consensus", medians: Optional[tuple] = None) -> list[Relay]:
    """Relays usable as guards.

    ``consensus`` mode trusts the Guard flag.  ``synthetic`` mode applies the
    directory-authority rules: uptime at least 8 days or above the uptime of
    87.5% of relays; bandwidth above min(median, 2 MBps); WFU above
    min(median, 98%).  ``relay_history`` maps fingerprint -> (uptime_days, wfu)
    for relays whose snapshot row lacks those fields.  ``medians`` overrides
    the (bandwidth, wfu) medians computed from the snapshot.
    """
    if mode == "consensus":
        return [r for r in snapshot.relays if r.is_guard]
    if mode != "synthetic":
        raise ValueError(f"unknown eligibility mode {mode!r}")
    history = relay_history or {}
    rows = []
    for r in snapshot.relays:
        up, wfu = r.uptime_days, r.wfu
        if (up is None or wfu is None) and r.fingerprint in history:
            hu, hw = history[r.fingerprint]
            up = hu if up is None else up
            wfu = hw if wfu is None else wfu
        rows.append((r, up, wfu))
    if not rows:
        return []
    bws = np.array([r.bandwidth_mbps for r, _, _ in rows])
    ups = np.array([np.nan if u is None else u for _, u, _ in rows])
    wfus = np.array([np.nan if w is None else w for _, _, w in rows])
    if medians is None:
        med_bw = float(np.median(bws))
        med_wfu = float(np.nanmedian(wfus)) if np.isfinite(wfus).any() else GUARD_WFU_FLOOR
    else:
        med_bw, med_wfu = medians
    bw_bar = min(med_bw, GUARD_BW_FLOOR_MBPS)
    wfu_bar = min(med_wfu, GUARD_WFU_FLOOR)
    known_up = np.sort(ups[np.isfinite(ups)])
    out = []
    for r, up, wfu in rows:
        if up is None or wfu is None:
            continue
        beaten = np.searchsorted(known_up, up, side="left")
        up_ok = up >= GUARD_UPTIME_DAYS or beaten >= GUARD_UPTIME_RANK * len(known_up)
        if up_ok and r.bandwidth_mbps > bw_bar and wfu > wfu_bar:
            out.append(r)
    return out
