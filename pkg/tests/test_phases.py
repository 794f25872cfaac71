import numpy as np
import pytest

from gaitmpc import phases
from gaitmpc.phases import FootTimeline, HorizonPlan, INJECTED, NO_REQUEST, REJECTED_OVERLAP


def make_tl(**kw):
    args = dict(N=30, dt=0.03, injection_node=4, flight_duration=0.6,
                clearance=0.1, landing=0.0)
    args.update(kw)
    return FootTimeline(**args)


# brute-force oracle over node occupancy
def occupancy(tl):
    occ = np.zeros(tl.N, dtype=int)
    for ph in tl.flights:
        assert ph.d >= 0 and ph.end <= tl.N and ph.s > 0
        occ[ph.d:ph.end] += 1
    return occ


# ------------------------------------------------------------- swing profile

def test_profile_zero():
    assert np.allclose(phases.swing_velocity_profile(0.0, 0.0, 20, 0.03), 0)


def test_profile_peak_closed_form():
    v = phases.swing_velocity_profile(0.1, 0.0, 20, 0.03)
    assert v.max() == pytest.approx(3 * 0.1 / 0.6, abs=1e-9)


def test_profile_displacement_exact():
    v = phases.swing_velocity_profile(0.1, -0.05, 20, 0.03)
    assert np.sum(v) * 0.03 == pytest.approx(-0.05, abs=1e-9)


def test_profile_short_span_rejected():
    with pytest.raises(ValueError):
        phases.swing_velocity_profile(0.1, 0.0, 1, 0.03)


def test_profile_matches_phase_invariant():
    ph = phases.FlightPhase.create(4, 20, 0.12, -0.02, 0.03)
    assert np.array_equal(ph.v_ref, phases.swing_velocity_profile(0.12, -0.02, 20, 0.03))
    assert ph.p_ref[-1] == pytest.approx(-0.02, abs=1e-9)


# ---------------------------------------------------------------- try_inject

def test_inject_no_request():
    tl = make_tl()
    assert tl.try_inject(0.3) == NO_REQUEST
    assert tl.flights == []
    assert tl.try_inject(0.0) == NO_REQUEST  # trigger is strictly chi < 0


def test_inject_paper_defaults():
    tl = make_tl()
    assert tl.try_inject(-0.1) == INJECTED
    assert tl.flights[0].d == 4 and tl.flights[0].s == 20


def test_second_consecutive_inject_rejected():
    tl = make_tl()
    assert tl.try_inject(-0.1) == INJECTED
    tl.shift()
    assert tl.try_inject(-0.1) == REJECTED_OVERLAP
    assert len(tl.flights) == 1 and tl.flights[0].d == 3


def test_inject_after_phase_clears_window():
    tl = make_tl()
    tl.try_inject(-1.0)
    for _ in range(20):
        tl.shift()
    # old phase now at [0, 4): window [4, 24) is free again
    assert tl.try_inject(-1.0) == INJECTED
    assert occupancy(tl).max() == 1


def test_inject_truncation_rejected():
    tl = make_tl(N=20)  # window [4, 24) exceeds N
    assert tl.try_inject(-1.0) == REJECTED_OVERLAP


# --------------------------------------------------------------------- shift

def test_shift_decrements():
    tl = make_tl()
    tl.try_inject(-1.0)
    tl.shift()
    assert tl.flights[0].d == 3 and tl.flights[0].s == 20


def test_shift_consumes_at_node_zero():
    tl = make_tl()
    tl.try_inject(-1.0)
    for _ in range(4):
        tl.shift()
    assert tl.flights[0].d == 0 and tl.flights[0].s == 20
    tl.shift()
    assert tl.flights[0].d == 0 and tl.flights[0].s == 19
    assert len(tl.flights[0].v_ref) == 19


def test_shift_expiry_to_all_contact():
    tl = make_tl()
    tl.try_inject(-1.0)
    for _ in range(tl.N):
        tl.shift()
    assert tl.flights == []
    assert tl.phases() == [("contact", 0, tl.N)]


def test_unit_contact_appended():
    tl = make_tl()
    tl.try_inject(-1.0)
    ph = tl.phases()
    assert ph == [("contact", 0, 4), ("flight", 4, 20), ("contact", 24, 6)]
    tl.shift()
    assert tl.phases() == [("contact", 0, 3), ("flight", 3, 20), ("contact", 23, 7)]


# ---------------------------------------------------------------- term sets

def test_active_terms():
    plan = HorizonPlan([make_tl(), make_tl(wheel=True)])
    plan.timelines[0].try_inject(-1.0)
    assert phases.active_terms_at(plan, 0, 10) == phases.FLIGHT_TERMS
    assert phases.active_terms_at(plan, 0, 2) == phases.CONTACT_TERMS_POINT
    assert phases.active_terms_at(plan, 1, 10) == phases.CONTACT_TERMS_WHEEL
    with pytest.raises(IndexError):
        phases.active_terms_at(plan, 0, 30)


def test_exactly_one_term_set_per_node():
    plan = HorizonPlan([make_tl() for _ in range(4)])
    rng = np.random.default_rng(0)
    for _ in range(40):
        plan.try_inject(rng.uniform(-1, 1, 4))
        plan.shift()
        for f in range(4):
            for node in range(plan.N):
                terms = phases.active_terms_at(plan, f, node)
                assert terms in (phases.FLIGHT_TERMS, phases.CONTACT_TERMS_POINT)


# ----------------------------------------------------------------- snapshot

def test_snapshot_all_contact_sentinel():
    plan = HorizonPlan([make_tl() for _ in range(4)])
    d, s = phases.schedule_snapshot(plan)
    assert np.array_equal(s, [0, 0, 0, 0])
    assert np.array_equal(d, [4, 4, 4, 4])


def test_snapshot_readback_and_shift():
    plan = HorizonPlan([make_tl() for _ in range(4)])
    plan.timelines[2].try_inject(-1.0)
    d, s = phases.schedule_snapshot(plan)
    assert (d[2], s[2]) == (4, 20)
    for _ in range(3):
        plan.shift()
    d, s = phases.schedule_snapshot(plan)
    assert (d[2], s[2]) == (1, 20)


def test_snapshot_ranges():
    # d stays within [0, i*], s within [0, N] under any action sequence
    tl = make_tl()
    rng = np.random.default_rng(5)
    for _ in range(300):
        tl.try_inject(rng.uniform(-1, 0.5))
        d, s = tl.snapshot()
        assert 0 <= d <= tl.injection_node
        assert 0 <= s <= tl.N
        tl.shift()


# ------------------------------------------------------- property-style suite

def test_random_interleaving_properties():
    rng = np.random.default_rng(42)
    for trial in range(60):
        tl = make_tl()
        for _ in range(80):
            if rng.random() < 0.5:
                before = [(p.d, p.s) for p in tl.flights]
                res = tl.try_inject(rng.uniform(-1, 1))
                if res != INJECTED:
                    assert [(p.d, p.s) for p in tl.flights] == before
            else:
                tl.shift()
            occ = occupancy(tl)
            assert occ.max() <= 1  # disjoint flights
            # materialized phases tile 0..N-1 exactly, no gaps, in order
            ph = tl.phases()
            assert sum(s for _, _, s in ph) == tl.N
            node = 0
            for _, d, s in ph:
                assert d == node and s > 0
                node += s
            # contact phases never touch, flights may be back-to-back
            kinds = [k for k, _, _ in ph]
            assert all(not (a == b == "contact") for a, b in zip(kinds, kinds[1:]))


def test_injection_latency():
    """An accepted injection becomes the node-0 active flight exactly i* shifts later."""
    tl = make_tl()
    assert tl.try_inject(-1.0) == INJECTED
    for k in range(tl.injection_node):
        assert tl.in_flight(0) is None
        tl.shift()
    assert tl.in_flight(0) is not None
