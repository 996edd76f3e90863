"""Client-to-guard-set assignment, stickiness and recovery.

The scalar helpers mirror the per-client rules; ``ClientPopulation`` applies
the same rules to whole client arrays with numpy.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .bwsets import BwSetState
from .hierarchy import Hierarchy

AS, BW, SINGLE = "as", "bw", "single"
DESIGNS = (AS, BW, SINGLE)
NONE_ID = -1


class NoEligibleChoice(ValueError):
    pass


@dataclass(frozen=True)
class WeightedChoice:
    items: tuple  # ((id, weight), ...)

    @property
    def total(self) -> float:
        return float(sum(w for _, w in self.items))


def weighted_pick(choice, u: float):
    """Item where the running weight sum first exceeds ``u * total``."""
    items = choice.items if isinstance(choice, WeightedChoice) else tuple(choice)
    total = sum(w for _, w in items)
    if not items or total <= 0:
        raise NoEligibleChoice("no positive weight to draw from")
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    r = u * total
    acc = 0.0
    for item, w in items:
        acc += w
        if acc > r:
            return item
    return items[-1][0]


def draw_indices(weights, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent weighted picks, returned as indices into ``weights``."""
    w = np.asarray(weights, dtype=float)
    cum = np.cumsum(w)
    if len(w) == 0 or cum[-1] <= 0:
        raise NoEligibleChoice("no positive weight to draw from")
    r = rng.random(n) * cum[-1]
    return np.minimum(np.searchsorted(cum, r, side="right"), len(w) - 1)


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------

@dataclass
class ClientState:
    client_id: int
    design: str
    superset_id: Optional[int] = None
    set_id: Optional[int] = None
    subset_id: Optional[int] = None
    bw_set_id: Optional[int] = None
    guard_fingerprint: Optional[str] = None
    compromised_ever: bool = False
    compromise_day: Optional[int] = None


def _pick(rng, items):
    return weighted_pick(items, float(rng.random()))


def _subset_choice(s):
    return [(sub, sub.bandwidth_mbps) for sub in s.subsets]


def assign_client_as(hierarchy: Hierarchy, rng: np.random.Generator) -> tuple[int, int, int]:
    supers = hierarchy.eligible_supersets()
    if not supers:
        raise NoEligibleChoice("hierarchy has no eligible superset")
    ss = _pick(rng, [(x, x.bandwidth_mbps) for x in supers])
    s = _pick(rng, [(x, x.bandwidth_mbps) for x in ss.sets])
    sub = _pick(rng, _subset_choice(s))
    return ss.id, s.id, sub.id


def assign_client_bw(state: BwSetState, rng: np.random.Generator) -> int:
    if not state.sets:
        raise NoEligibleChoice("no guard sets")
    return _pick(rng, [(s.id, s.bandwidth_mbps) for s in state.sets])


def assign_client_single(guards: Mapping[str, float], rng: np.random.Generator) -> str:
    if not guards:
        raise NoEligibleChoice("no guards")
    return _pick(rng, sorted(guards.items()))


def recover_client(client: ClientState, state, rng: np.random.Generator) -> ClientState:
    """Move a client whose guard set vanished, staying as local as the state allows."""
    if client.design == AS:
        h: Hierarchy = state
        eligible = {ss.id: ss for ss in h.eligible_supersets()}
        for ss in eligible.values():
            for s in ss.sets:
                for sub in s.subsets:
                    if sub.id == client.subset_id:
                        client.superset_id, client.set_id = ss.id, s.id
                        return client
        for ss in eligible.values():
            for s in ss.sets:
                if s.id == client.set_id:
                    client.superset_id = ss.id
                    client.subset_id = _pick(rng, _subset_choice(s)).id
                    return client
        ss = eligible.get(client.superset_id)
        if ss is not None:
            s = _pick(rng, [(x, x.bandwidth_mbps) for x in ss.sets])
            client.set_id, client.subset_id = s.id, _pick(rng, _subset_choice(s)).id
            return client
        client.superset_id, client.set_id, client.subset_id = assign_client_as(h, rng)
        return client
    if client.design == BW:
        if client.bw_set_id not in {s.id for s in state.sets}:
            client.bw_set_id = assign_client_bw(state, rng)
        return client
    if client.guard_fingerprint not in state:
        client.guard_fingerprint = assign_client_single(state, rng)
    return client


def pick_guard(guards: Sequence[tuple[str, float]], policy: str = "weighted",
               rng: Optional[np.random.Generator] = None) -> str:
    """One guard out of a guard set, uniformly or bandwidth-weighted."""
    if not guards:
        raise NoEligibleChoice("empty guard set")
    rng = rng if rng is not None else np.random.default_rng()
    if policy == "uniform":
        return guards[int(rng.integers(len(guards)))][0]
    if policy != "weighted":
        raise ValueError(f"unknown guard pick policy {policy!r}")
    return _pick(rng, list(guards))


# ---------------------------------------------------------------------------
# vectorized population
# ---------------------------------------------------------------------------

class _AsIndex:
    """Flat arrays over the subsets of a hierarchy, for vectorized draws."""

    def __init__(self, h: Hierarchy):
        sub_ids, sub_set, sub_ss, sub_bw = [], [], [], []
        set_ids, set_ss, set_bw = [], [], []
        ss_ids, ss_bw = [], []
        for ss in h.eligible_supersets():
            ss_ids.append(ss.id)
            ss_bw.append(ss.bandwidth_mbps)
            for s in ss.sets:
                set_ids.append(s.id)
                set_ss.append(ss.id)
                set_bw.append(s.bandwidth_mbps)
                for sub in s.subsets:
                    sub_ids.append(sub.id)
                    sub_set.append(s.id)
                    sub_ss.append(ss.id)
                    sub_bw.append(sub.bandwidth_mbps)
        self.sub_ids = np.array(sub_ids, dtype=np.int64)
        self.sub_set = np.array(sub_set, dtype=np.int64)
        self.sub_ss = np.array(sub_ss, dtype=np.int64)
        self.sub_bw = np.array(sub_bw, dtype=float)
        self.set_ids = np.array(set_ids, dtype=np.int64)
        self.set_ss = np.array(set_ss, dtype=np.int64)
        self.set_bw = np.array(set_bw, dtype=float)
        self.ss_ids = np.array(ss_ids, dtype=np.int64)
        self.ss_bw = np.array(ss_bw, dtype=float)
        # children of each parent are contiguous in these arrays
        self._set_slices = _slices(self.sub_set)
        self._ss_slices = _slices(self.set_ss)

    def pick_subsets(self, set_ids: np.ndarray, rng) -> np.ndarray:
        out = np.empty(len(set_ids), dtype=np.int64)
        for sid in np.unique(set_ids):
            rows = np.nonzero(set_ids == sid)[0]
            lo, hi = self._set_slices[sid]
            out[rows] = self.sub_ids[lo + draw_indices(self.sub_bw[lo:hi], len(rows), rng)]
        return out

    def pick_sets(self, ss_ids: np.ndarray, rng) -> np.ndarray:
        out = np.empty(len(ss_ids), dtype=np.int64)
        for sid in np.unique(ss_ids):
            rows = np.nonzero(ss_ids == sid)[0]
            lo, hi = self._ss_slices[sid]
            out[rows] = self.set_ids[lo + draw_indices(self.set_bw[lo:hi], len(rows), rng)]
        return out

    def pick_supersets(self, n, rng) -> np.ndarray:
        return self.ss_ids[draw_indices(self.ss_bw, n, rng)]

    def parents_of_subsets(self, sub_ids):
        pos = _positions(self.sub_ids, sub_ids)
        return self.sub_set[pos], self.sub_ss[pos]


def _slices(parent: np.ndarray) -> dict:
    out = {}
    if len(parent) == 0:
        return out
    change = np.nonzero(np.diff(parent))[0] + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(parent)]))
    for lo, hi in zip(starts, ends):
        out[int(parent[lo])] = (int(lo), int(hi))
    return out


def _positions(keys: np.ndarray, values: np.ndarray) -> np.ndarray:
    order = np.argsort(keys, kind="stable")
    idx = np.searchsorted(keys[order], values)
    return order[np.minimum(idx, len(keys) - 1)]


class ClientPopulation:
    """All clients of one design.

    AS design keeps (superset, set, subset) ids per client, BW design a set
    id, single-guard an index into ``guard_names``.
    """

    def __init__(self, design: str, n: int, first_id: int = 0):
        if design not in DESIGNS:
            raise ValueError(f"unknown design {design!r}")
        if n < 1:
            raise ValueError("need at least one client")
        self.design = design
        self.ids = np.arange(first_id, first_id + n, dtype=np.int64)
        self.superset = np.full(n, NONE_ID, dtype=np.int64)
        self.set = np.full(n, NONE_ID, dtype=np.int64)
        self.subset = np.full(n, NONE_ID, dtype=np.int64)  # BW set id / guard code live here too
        self.compromised_ever = np.zeros(n, dtype=bool)
        self.compromised_now = np.zeros(n, dtype=bool)
        self.compromise_day = np.full(n, NONE_ID, dtype=np.int64)
        self.guard_names: list = []
        self._guard_code: dict = {}

    def __len__(self):
        return len(self.ids)

    @property
    def group(self) -> np.ndarray:
        """Guard-set key per client (subset, BW set or guard code)."""
        return self.subset

    def add_clients(self, n: int):
        start = int(self.ids[-1]) + 1 if len(self.ids) else 0
        self.ids = np.concatenate((self.ids, np.arange(start, start + n, dtype=np.int64)))
        for name in ("superset", "set", "subset", "compromise_day"):
            setattr(self, name, np.concatenate((getattr(self, name), np.full(n, NONE_ID, dtype=np.int64))))
        self.compromised_ever = np.concatenate((self.compromised_ever, np.zeros(n, dtype=bool)))
        self.compromised_now = np.concatenate((self.compromised_now, np.zeros(n, dtype=bool)))

    def guard_code(self, fp: str) -> int:
        code = self._guard_code.get(fp)
        if code is None:
            code = len(self.guard_names)
            self._guard_code[fp] = code
            self.guard_names.append(fp)
        return code

    # -- maintenance ------------------------------------------------------
    def maintain(self, state, rng: np.random.Generator) -> int:
        """Keep clients whose guard set survived; recover the rest.  Returns moved count."""
        if self.design == AS:
            return self._maintain_as(state, rng)
        if self.design == BW:
            ids = np.array([s.id for s in state.sets], dtype=np.int64)
            bws = np.array([s.bandwidth_mbps for s in state.sets], dtype=float)
            lost = ~np.isin(self.subset, ids)
            if lost.any():
                self.subset[lost] = ids[draw_indices(bws, int(lost.sum()), rng)]
            return int(lost.sum())
        names = sorted(state)
        codes = np.array([self.guard_code(fp) for fp in names], dtype=np.int64)
        bws = np.array([state[fp] for fp in names], dtype=float)
        lost = ~np.isin(self.subset, codes)
        if lost.any():
            self.subset[lost] = codes[draw_indices(bws, int(lost.sum()), rng)]
        return int(lost.sum())

    def _maintain_as(self, h: Hierarchy, rng) -> int:
        idx = _AsIndex(h)
        if len(idx.ss_ids) == 0:
            raise NoEligibleChoice("hierarchy has no eligible superset")
        keep = np.isin(self.subset, idx.sub_ids)
        if keep.any():
            self.set[keep], self.superset[keep] = idx.parents_of_subsets(self.subset[keep])
        lost = np.nonzero(~keep)[0]
        if len(lost) == 0:
            return 0
        in_set = np.isin(self.set[lost], idx.set_ids)
        rows = lost[in_set]
        if len(rows):
            pos = _positions(idx.set_ids, self.set[rows])
            self.superset[rows] = idx.set_ss[pos]
            self.subset[rows] = idx.pick_subsets(self.set[rows], rng)
        rest = lost[~in_set]
        in_ss = np.isin(self.superset[rest], idx.ss_ids)
        rows = rest[in_ss]
        if len(rows):
            self.set[rows] = idx.pick_sets(self.superset[rows], rng)
            self.subset[rows] = idx.pick_subsets(self.set[rows], rng)
        rows = rest[~in_ss]
        if len(rows):
            self.superset[rows] = idx.pick_supersets(len(rows), rng)
            self.set[rows] = idx.pick_sets(self.superset[rows], rng)
            self.subset[rows] = idx.pick_subsets(self.set[rows], rng)
        return len(lost)

    # -- compromise -------------------------------------------------------
    def scan(self, bad_groups, day: int) -> int:
        """Flag clients whose guard-set key is in ``bad_groups``; returns newly latched count."""
        bad = np.fromiter(bad_groups, dtype=np.int64) if not isinstance(bad_groups, np.ndarray) else bad_groups
        hit = np.isin(self.subset, bad) if len(bad) else np.zeros(len(self), dtype=bool)
        fresh = hit & ~self.compromised_ever
        self.compromise_day[fresh] = day
        self.compromised_ever |= hit
        self.compromised_now = hit
        return int(fresh.sum())

    def client(self, i: int) -> ClientState:
        c = ClientState(int(self.ids[i]), self.design,
                        compromised_ever=bool(self.compromised_ever[i]),
                        compromise_day=int(self.compromise_day[i]) if self.compromised_ever[i] else None)
        if self.design == AS:
            c.superset_id, c.set_id, c.subset_id = int(self.superset[i]), int(self.set[i]), int(self.subset[i])
        elif self.design == BW:
            c.bw_set_id = int(self.subset[i])
        else:
            c.guard_fingerprint = self.guard_names[int(self.subset[i])]
        return c

    def to_csv(self, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["client_id", "design", "superset_id", "set_id", "subset_id", "compromise_day"])
        for i in range(len(self)):
            c = self.client(i)
            if self.design == AS:
                ids = [f"{c.superset_id:016d}", f"{c.set_id:016d}", f"{c.subset_id:016d}"]
            elif self.design == BW:
                ids = ["", "", f"{c.bw_set_id:016d}"]
            else:
                ids = ["", "", c.guard_fingerprint]
            w.writerow([c.client_id, c.design, *ids, "" if c.compromise_day is None else c.compromise_day])
        return buf.getvalue()
