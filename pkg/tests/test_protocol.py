import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ralab import protocol
from ralab.estimator import TrafficEstimate
from ralab.protocol import (
    AllocationError,
    BsRegistry,
    ContextId,
    FourStepState,
    UeRecord,
    allocate_context_id,
    cell_id,
    filter_candidates,
    rar_grant_decision,
    select_offset_index,
    select_preamble,
)


def make_registry(ids=(), n_total=64, n_cr=4, t_p=3):
    reg = BsRegistry(n_total=n_total, n_cr=n_cr, t_p=t_p)
    for id_ in ids:
        reg.add(
            UeRecord(
                id=id_,
                pid=select_preamble(id_, n_total, n_cr),
                t_ind=select_offset_index(id_, n_cr, t_p),
                traffic_kind="event",
            )
        )
    return reg


class TestSelectPreamble:
    def test_shared_top_preamble(self):
        assert select_preamble(13, 64, 4) == 63
        assert select_preamble(1, 64, 4) == 63

    def test_cycles_down_the_pool(self):
        assert select_preamble(4, 64, 4) == 60

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            select_preamble(0, 64, 4)
        with pytest.raises(ValueError):
            select_preamble(1, 64, 0)

    @given(id_=st.integers(min_value=1, max_value=10**6), n_cr=st.integers(min_value=1, max_value=54))
    def test_stays_in_pool(self, id_, n_cr):
        pid = select_preamble(id_, 64, n_cr)
        assert 64 - n_cr <= pid <= 63


class TestSelectOffsetIndex:
    def test_examples(self):
        assert select_offset_index(13, 4, 3) == 1
        assert select_offset_index(5, 4, 3) == 2

    @given(id_=st.integers(min_value=1, max_value=10**6), n_cr=st.integers(min_value=1, max_value=54))
    def test_period_one_forces_first_class(self, id_, n_cr):
        assert select_offset_index(id_, n_cr, 1) == 1

    @given(
        id_=st.integers(min_value=1, max_value=10**6),
        n_cr=st.integers(min_value=1, max_value=54),
        t_p=st.integers(min_value=1, max_value=3),
    )
    def test_range(self, id_, n_cr, t_p):
        assert 1 <= select_offset_index(id_, n_cr, t_p) <= t_p


class TestIdMapProperties:
    @given(
        id_=st.integers(min_value=1, max_value=10**6),
        mult=st.integers(min_value=1, max_value=100),
        n_cr=st.integers(min_value=1, max_value=54),
        t_p=st.integers(min_value=1, max_value=3),
    )
    def test_ids_apart_by_cell_stride_collide(self, id_, mult, n_cr, t_p):
        other = id_ + mult * n_cr * t_p
        assert select_preamble(id_, 64, n_cr) == select_preamble(other, 64, n_cr)
        assert select_offset_index(id_, n_cr, t_p) == select_offset_index(other, n_cr, t_p)

    @given(
        n_cr=st.integers(min_value=1, max_value=54),
        t_p=st.integers(min_value=1, max_value=3),
        t_ind=st.integers(min_value=1, max_value=3),
        offset=st.integers(min_value=0, max_value=53),
        k=st.integers(min_value=0, max_value=40),
    )
    def test_cell_id_round_trip(self, n_cr, t_p, t_ind, offset, k):
        if t_ind > t_p:
            t_ind = t_p
        pid = 63 - (offset % n_cr)
        id_ = cell_id(pid, t_ind, k, 64, n_cr, t_p)
        assert select_preamble(id_, 64, n_cr) == pid
        assert select_offset_index(id_, n_cr, t_p) == t_ind


class TestFilterCandidates:
    def test_registry_shortlist(self):
        # ids 1 and 13 share preamble 63 and slot class 1; ids 5 and 9 share
        # the preamble but sit in classes 2 and 3.
        reg = make_registry(ids=(1, 13, 5, 9, 2))
        assert filter_candidates(reg, 63, rx_slot=1) == [1, 13]

    def test_empty_registry(self):
        reg = make_registry()
        assert filter_candidates(reg, 63, rx_slot=1) == []

    def test_slot_class_mismatch(self):
        reg = make_registry(ids=(5,))  # pid 63, class 2 = slots {2, 5, 8}
        assert filter_candidates(reg, 63, rx_slot=1) == []
        assert filter_candidates(reg, 63, rx_slot=2) == [5]

    def test_transmitter_never_missed(self):
        rng = random.Random(7)
        reg = make_registry(ids=range(1, 37))
        for _ in range(200):
            id_ = rng.randint(1, 36)
            rec = reg.records[id_]
            slot = protocol.core.next_tx_slot(rng.randrange(1000), reg.t_p, rec.t_ind)
            assert id_ in filter_candidates(reg, rec.pid, slot)


class TestRarGrantDecision:
    def make_periodic(self, t0, period, margin):
        rec = UeRecord(id=1, pid=63, t_ind=1, traffic_kind="periodic", t0_last=t0)
        rec.estimate = TrafficEstimate(kind="periodic", period_ms=period, margin_ms=margin)
        return rec

    def test_window_boundary_inclusive(self):
        rec = self.make_periodic(t0=100.0, period=50.0, margin=1.0)
        assert rar_grant_decision(rec, 149.0) is True
        assert rar_grant_decision(rec, 148.5) is False

    @given(t=st.floats(min_value=0, max_value=1e9, allow_nan=False))
    def test_event_always_granted(self, t):
        rec = UeRecord(id=2, pid=62, t_ind=1, traffic_kind="event")
        assert rar_grant_decision(rec, t) is True

    def test_periodic_without_estimate_granted(self):
        rec = UeRecord(id=1, pid=63, t_ind=1, traffic_kind="periodic")
        assert rar_grant_decision(rec, 0.0) is True

    def test_periodic_before_first_success_granted(self):
        rec = self.make_periodic(t0=None, period=50.0, margin=0.0)
        rec.t0_last = None
        assert rar_grant_decision(rec, 0.0) is True


class TestAllocateContextId:
    def test_periodic_takes_reserved_preamble(self):
        reg = make_registry()
        cid = allocate_context_id(reg, "periodic", preferred_offset=1)
        rec = reg.records[cid.id]
        assert rec.pid == 63
        assert rec.t_ind == 1
        assert cid.id % 12 == 1  # every id of the (63, 1) cell
        assert cid.uses_twostep

    def test_first_allocation_takes_smallest_id(self):
        reg = make_registry()
        cid = allocate_context_id(reg, "periodic", preferred_offset=1)
        assert cid.id == 1

    def test_event_avoids_reserved_preamble(self):
        reg = make_registry()
        rng = random.Random(3)
        for _ in range(30):
            cid = allocate_context_id(reg, "event", rng=rng, policy="uniform")
            assert reg.records[cid.id].pid in {60, 61, 62}

    def test_balanced_policy_spreads_cells(self):
        reg = make_registry()
        for _ in range(9):
            allocate_context_id(reg, "event", policy="balanced")
        loads = [reg.cell_load(p, k) for p in (60, 61, 62) for k in (1, 2, 3)]
        assert loads == [1] * 9
        reg.check_consistent()

    def test_round_trip_invariant(self):
        reg = make_registry()
        rng = random.Random(11)
        ids = [allocate_context_id(reg, "event", rng=rng, policy="uniform").id for _ in range(50)]
        ids.append(allocate_context_id(reg, "periodic", preferred_offset=2).id)
        for id_ in ids:
            rec = reg.records[id_]
            assert select_preamble(id_, reg.n_total, reg.n_cr) == rec.pid
            assert select_offset_index(id_, reg.n_cr, reg.t_p) == rec.t_ind
        reg.check_consistent()

    def test_full_cell_fails_without_growth(self):
        reg = BsRegistry(n_cr=4, t_p=3, ids_per_cell=1)
        allocate_context_id(reg, "periodic", preferred_offset=1)
        with pytest.raises(AllocationError):
            allocate_context_id(reg, "periodic", preferred_offset=1, allow_grow=False)

    def test_growth_is_flagged(self):
        reg = BsRegistry(n_cr=4, t_p=3, ids_per_cell=1)
        allocate_context_id(reg, "periodic", preferred_offset=1)
        assert not reg.grew_capacity
        allocate_context_id(reg, "periodic", preferred_offset=1)
        assert reg.grew_capacity

    def test_needs_two_preambles_for_event_devices(self):
        reg = BsRegistry(n_cr=1, t_p=3)
        with pytest.raises(AllocationError):
            allocate_context_id(reg, "event", policy="balanced")


class TestContextId:
    def test_zero_never_assigned(self):
        with pytest.raises(ValueError):
            ContextId(id=0)

    def test_flag_selects_procedure(self):
        assert ContextId(id=1, flag=0).uses_twostep
        assert not ContextId(id=1, flag=1).uses_twostep


class TestFourStepState:
    def test_attempt_cap(self):
        state = FourStepState(max_attempts=10)
        for m in range(1, 11):
            assert state.start_attempt() == m
        assert state.exhausted
        with pytest.raises(ValueError):
            state.start_attempt()

    def test_reset(self):
        state = FourStepState(max_attempts=2)
        state.start_attempt()
        state.reset()
        assert state.attempt == 0
        assert not state.exhausted
