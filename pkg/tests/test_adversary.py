import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guardsets.adversary import (BW_TUNING_HIGH, BW_TUNING_LOW, CENTRALIZED, AdversaryConfig,
                                 AsTargetedAttack, BwTuningAdversary, MaliciousGuard, bw_attack_step,
                                 compromise_scan, compromised_bw_sets, compromised_subsets,
                                 inject_botnet, inject_centralized, inject_low_resource, is_malicious)
from guardsets.assignment import AS, BW, SINGLE, ClientPopulation
from guardsets.bwsets import BwSet, BwSetState, Quantum, plan_repairs, repair_bw_sets
from guardsets.hierarchy import ConeSet, Hierarchy, Subset, Superset, Thresholds
from guardsets.ingest import PrefixMap


def _state(sets, leftover):
    st_ = BwSetState([BwSet(i + 1, list(qs)) for i, qs in enumerate(sets)], list(leftover))
    for s in st_.sets:
        s.recompute()
    st_.quantum_count = {q.guard: 1 for s in st_.sets for q in s.quanta}
    return st_


def _tuner(strategy=BW_TUNING_HIGH, fraction=0.5, **kw):
    return BwTuningAdversary(AdversaryConfig(strategy=strategy, bandwidth_fraction=fraction), **kw)


class _Scripted:
    """Stands in for a Generator: ``integers`` replays a fixed index list."""

    def __init__(self, picks):
        self.picks = list(picks)

    def integers(self, n):
        return self.picks.pop(0)


# -- configuration ----------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        AdversaryConfig(strategy="stealthy")
    with pytest.raises(ValueError):
        AdversaryConfig(bandwidth_fraction=1.5)
    with pytest.raises(ValueError):
        AdversaryConfig(foresight="psychic")
    with pytest.raises(ValueError):
        MaliciousGuard("ADV-x", 1, 1.5)
    MaliciousGuard("ADV-x", 1, 1.5, active=False)
    assert is_malicious("ADV-0-00001") and not is_malicious("ABCDEF")


def test_budget_is_share_of_all_guard_bandwidth():
    t = _tuner(fraction=0.2)
    assert t.budget(800.0) == pytest.approx(200.0)   # 200 / (800 + 200) = 0.2
    assert _tuner(fraction=1.0).budget(5.0) == float("inf")


# -- bandwidth tuning -------------------------------------------------------

def test_joins_broken_set_just_above_last_fixing_quantum():
    # set at 16 (M = 16); repair would add 14 then 12, 12 completes it
    st_ = _state([[Quantum("a", 16.0)]], [Quantum("n", 14.0), Quantum("m", 12.0)])
    assert [q.bandwidth_mbps for q in plan_repairs(st_)[1]] == [14.0, 12.0]
    t = _tuner(target_set=1)
    adds, retunes = bw_attack_step(st_, t, honest_total=1000.0, day=1)
    assert list(adds.values()) == [pytest.approx(12.1)] and retunes == {}
    fp = next(iter(adds))
    gbw = {"a": 16.0, "n": 14.0, "m": 12.0, **t.offers}
    repair_bw_sets(st_, gbw, day=1)
    assert fp in st_.sets[0].guards and "m" not in st_.sets[0].guards
    assert st_.sets[0].bandwidth_mbps == pytest.approx(42.1)


def test_offer_outside_window_is_skipped():
    # no leftover at all: the offer would be M = 6, and 6 is a legal candidate
    st_ = _state([[Quantum("a", 6.0)]], [])
    t = _tuner(target_set=1)
    act = t.plan(st_, 1000.0, 1)
    assert list(act.additions.values()) == [6.0]
    # M below the 2 MBps guard floor: floor exceeds M, nothing offered
    st_ = _state([[Quantum("a", 1.5)]], [])
    assert t.plan(st_, 1000.0, 1).additions == {}


def test_holds_compromised_set_alive():
    # compromised set was 20.5 = 10 + 5.5(adv) + 5; the honest 5 left today
    t = _tuner(fraction=0.5)
    t.offers = {"ADV-0-x": 5.5}
    st_ = _state([[Quantum("h", 10.0), Quantum("ADV-0-x", 5.5)]], [])
    act = t.plan(st_, 1000.0, 3)
    new = act.retunes["ADV-0-x"]
    assert new == pytest.approx(5.5 + (20.1 - 15.5))
    assert 10.0 + new > 20.0


def test_hold_respects_budget():
    t = _tuner(fraction=0.001)     # budget 1 MBps on 1000
    t.offers = {"ADV-0-x": 5.5}
    st_ = _state([[Quantum("h", 10.0), Quantum("ADV-0-x", 5.5)]], [])
    assert t.plan(st_, 1000.0, 3).retunes == {}


def test_low_variant_withdraws_dominant_guard():
    t = _tuner(BW_TUNING_LOW, fraction=0.5)
    t.offers = {"ADV-0-x": 19.0}
    st_ = _state([[Quantum("ADV-0-x", 19.0), Quantum("h", 1.0)]], [])
    act = t.settle(st_, 1000.0, day=4)
    assert act.withdrawals == ["ADV-0-x"] and t.offers == {}
    assert t.cooldown[1] == 4 + 7


def test_low_variant_excludes_set_in_cooldown():
    t = _tuner(BW_TUNING_LOW, fraction=0.5, target_set=1)
    t.cooldown[1] = 10
    st_ = _state([[Quantum("h", 10.0)]], [])
    assert t.plan(st_, 1000.0, 6).additions == {}
    assert t.plan(st_, 1000.0, 10).additions != {}


def test_one_malicious_guard_per_set_and_decay():
    t = _tuner(fraction=0.5)
    t.offers = {"ADV-0-a": 20.0, "ADV-0-b": 8.0}
    st_ = _state([[Quantum("ADV-0-a", 20.0), Quantum("ADV-0-b", 8.0), Quantum("h", 25.0)]], [])
    act = t.settle(st_, 1000.0, day=2)
    assert act.withdrawals == ["ADV-0-b"]
    # set at 53 leaves 32.9 MBps of room above tau_down + eps: decays to the floor
    assert t.offers == {"ADV-0-a": 2.0}


def test_settle_trims_to_budget():
    t = _tuner(fraction=0.01)     # budget ~10.1 on 1000
    t.offers = {f"ADV-0-{i}": 8.0 for i in range(4)}
    st_ = _state([[Quantum(f"ADV-0-{i}", 8.0), Quantum(f"h{i}", 14.0)] for i in range(4)], [])
    t.settle(st_, 1000.0, day=1)
    assert sum(t.offers.values()) <= t.budget(1000.0) + max(t.offers.values())


def test_high_seeds_new_sets_with_spare_budget():
    st_ = _state([[Quantum("h", 45.0)]], [Quantum("l", 10.0)])
    t = _tuner(fraction=0.1)        # budget 100 on 900
    act = t.plan(st_, 900.0, 1)
    offers = sorted(act.additions.values())
    assert offers[0] == pytest.approx(30.1)          # completes the leftover 10 into a set
    assert offers[1:] == [pytest.approx(40.1)]       # one singleton set fits what is left
    assert sum(offers) <= t.budget(900.0)


def test_low_variant_respects_main_provider_share():
    # completing leftover 2 needs 38.1: 95% of the new set, so LOW stays out
    st_ = _state([[Quantum("h", 45.0)]], [Quantum("l", 2.0)])
    t = _tuner(BW_TUNING_LOW, fraction=0.5)
    assert t.plan(st_, 900.0, 1).additions == {}


def test_idle_guards_withdrawn():
    t = _tuner(fraction=0.5, target_set=99)
    t.offers = {"ADV-0-idle": 10.0}
    st_ = _state([[Quantum("h", 45.0)]], [Quantum("ADV-0-idle", 10.0)])
    assert t.plan(st_, 1000.0, 1).withdrawals == ["ADV-0-idle"]


# -- injection --------------------------------------------------------------

def _snap(bws):
    return {f"g{i}": (100 + i, b) for i, b in enumerate(bws)}


def test_centralized_stopping_rule():
    # total 1000, fraction 0.05: draws 5, 20, 30 reach 55 >= 50 and stop
    snap = _snap([5.0, 20.0, 30.0, 945.0])
    rng = _Scripted([1, 0, 1, 2, 3])   # AS pick, then bandwidth indices into sorted pool
    gs = inject_centralized(snap, [100, 101, 102], 0.05, rng)
    assert [g.offered_bandwidth_mbps for g in gs] == [5.0, 20.0, 30.0]
    assert {g.asn for g in gs} == {101}
    # 30 then 20 reaches exactly 50 already
    gs = inject_centralized(snap, [100], 0.05, _Scripted([0, 2, 1, 0]))
    assert [g.offered_bandwidth_mbps for g in gs] == [30.0, 20.0]


def test_injection_fraction_zero():
    snap = _snap([10.0, 20.0])
    assert inject_centralized(snap, [100], 0.0, np.random.default_rng(0)) == []
    assert inject_botnet(snap, [100], 0.0, np.random.default_rng(0)) == []


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 0.3))
def test_injection_budget_overshoot_by_one_guard(seed, frac):
    snap = _snap(np.random.default_rng(seed).lognormal(1.4, 1.0, 60).clip(2.0, 300).tolist())
    total = sum(b for _, b in snap.values())
    gs = inject_botnet(snap, [1, 2, 3], frac, np.random.default_rng(seed))
    s = sum(g.offered_bandwidth_mbps for g in gs)
    assert s >= frac * total
    assert s - gs[-1].offered_bandwidth_mbps < frac * total
    assert all(g.offered_bandwidth_mbps >= 2.0 for g in gs)


def test_botnet_single_as_degenerates():
    gs = inject_botnet(_snap([10.0] * 20), [7], 0.5, np.random.default_rng(1))
    assert {g.asn for g in gs} == {7}


def test_botnet_distinct_ases_coupon_collector():
    k, bws = 20, [10.0] * 100
    distinct = []
    for seed in range(200):
        gs = inject_botnet(_snap(bws), list(range(k)), 0.3, np.random.default_rng(seed))
        m = len(gs)
        distinct.append(len({g.asn for g in gs}))
    assert m == 30
    expect = k * (1 - (1 - 1 / k) ** m)
    sd = np.std(distinct) / np.sqrt(len(distinct))
    assert abs(np.mean(distinct) - expect) < 4 * sd + 0.05


def test_low_resource_placement():
    pm = PrefixMap([("16.0.0.0/24", 64500), ("16.0.1.0/24", 64501)])
    snap = _snap([10.0] * 5)
    a = inject_low_resource(snap, pm, np.random.default_rng(3))
    b = inject_low_resource(snap, pm, np.random.default_rng(3))
    assert (a.asn, a.offered_bandwidth_mbps, a.address) == (b.asn, b.offered_bandwidth_mbps, b.address)
    assert a.offered_bandwidth_mbps == 10.0
    assert pm.lookup(a.address) == a.asn
    placements = {inject_low_resource(snap, pm, np.random.default_rng(s)).asn for s in range(50)}
    assert placements == {64500, 64501}


# -- compromise bookkeeping ---------------------------------------------------

def _hier():
    subs_a = [Subset(11, ["h1", "h2"], 40.0), Subset(12, ["h3"], 40.0)]
    subs_b = [Subset(21, ["h4", "ADV-1"], 45.0)]
    ss = Superset(1, 1, {1, 2}, [ConeSet(101, 1, {1}, subs_a, 80.0), ConeSet(102, 2, {2}, subs_b, 45.0)], 125.0)
    return Hierarchy([ss], Thresholds(40, 20, 50))


def test_compromise_scan_as():
    h = _hier()
    pop = ClientPopulation(AS, 300)
    pop.maintain(h, np.random.default_rng(0))
    compromise_scan(h, set(), pop, 0)
    assert not pop.compromised_ever.any()
    assert compromised_subsets(h, {"ADV-1"}).tolist() == [21]
    compromise_scan(h, {"ADV-1"}, pop, 1)
    assert (pop.compromised_ever == (pop.subset == 21)).all()
    latched = pop.compromised_ever.copy()
    compromise_scan(h, set(), pop, 2)
    assert (pop.compromised_ever == latched).all() and not pop.compromised_now.any()


def test_compromise_scan_bw_and_single():
    st_ = _state([[Quantum("h", 45.0)], [Quantum("ADV-1", 40.0)]], [])
    assert compromised_bw_sets(st_, {"ADV-1"}).tolist() == [2]
    assert compromised_bw_sets(st_, set()).tolist() == []
    pop = ClientPopulation(SINGLE, 200)
    guards = {"h": 30.0, "ADV-1": 10.0}
    pop.maintain(guards, np.random.default_rng(1))
    compromise_scan(guards, {"ADV-1"}, pop, 0)
    names = np.array(pop.guard_names)[pop.subset]
    assert (pop.compromised_ever == (names == "ADV-1")).all()


# -- targeted, AS design --------------------------------------------------------

def _target_hier(bw_target):
    subs = [Subset(11, ["t1", "t2"], bw_target), Subset(12, ["o1"], 45.0)]
    ss = Superset(1, 1, {5, 6}, [ConeSet(101, 1, {5, 6}, subs, bw_target + 45.0)], bw_target + 45.0)
    return Hierarchy([ss], Thresholds(40, 20, 50))


def test_targeted_as_never_broken():
    h = _target_hier(40.0)
    atk = AsTargetedAttack(np.random.default_rng(0), np.array([10.0]))
    bw = {"t1": 20.0, "t2": 20.0, "o1": 45.0}
    assert atk.plan(h, 11, bw, {"t1": 5, "t2": 5, "o1": 6}, 40, 20) == {}
    assert atk.cost_mbps == 0 and atk.guards == {}


def test_targeted_as_injects_deficit_from_member_as():
    h = _target_hier(30.0)
    atk = AsTargetedAttack(np.random.default_rng(0), np.array([22.0]))
    bw = {"t1": 9.0, "t2": 9.0, "o1": 45.0}     # target now 18: deficit 40 - 18 = 22
    new = atk.plan(h, 11, bw, {"t1": 5, "t2": 5, "o1": 6}, 40, 20)
    assert list(new.values()) == [(5, 22.0)]
    assert atk.cost_mbps == 22.0


def test_targeted_as_holds_after_compromise():
    h = _target_hier(30.0)
    h.supersets[0].sets[0].subsets[0].guards.append("ADV-t-00000")
    atk = AsTargetedAttack(np.random.default_rng(0), np.array([22.0]))
    atk.guards = {"ADV-t-00000": (5, 5.0)}
    atk.compromised_day = 3
    bw = {"t1": 6.0, "t2": 6.0, "ADV-t-00000": 5.0, "o1": 45.0}   # 17 < 20
    out = atk.plan(h, 11, bw, {"t1": 5, "t2": 5, "o1": 6, "ADV-t-00000": 5}, 40, 20)
    assert out["ADV-t-00000"][1] == pytest.approx(5.0 + 3.1)
