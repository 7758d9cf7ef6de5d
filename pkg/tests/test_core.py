import pytest
from hypothesis import given
from hypothesis import strategies as st

from ralab import core


class TestAllowedSlots:
    def test_period_three_first_class(self):
        assert core.allowed_slots(3, 1) == {1, 4, 7}

    def test_period_one_covers_frame(self):
        assert core.allowed_slots(1, 1) == set(range(10))

    def test_period_two_second_class(self):
        assert core.allowed_slots(2, 2) == {1, 3, 5, 7, 9}

    @pytest.mark.parametrize("t_p,t_ind", [(0, 1), (4, 1), (3, 0), (3, 4), (2, 3)])
    def test_out_of_range_rejected(self, t_p, t_ind):
        with pytest.raises(ValueError):
            core.allowed_slots(t_p, t_ind)

    def test_union_coverage(self):
        for t_p in (1, 2):
            union = set()
            for t_ind in range(1, t_p + 1):
                union |= core.allowed_slots(t_p, t_ind)
            assert union == set(range(10))
        union3 = set()
        for t_ind in (1, 2, 3):
            union3 |= core.allowed_slots(3, t_ind)
        assert union3 == set(range(1, 10))

    def test_classes_disjoint_within_period(self):
        for t_p in (1, 2, 3):
            sets = [core.allowed_slots(t_p, k) for k in range(1, t_p + 1)]
            for i in range(len(sets)):
                for j in range(i + 1, len(sets)):
                    assert not (sets[i] & sets[j])


class TestNextTxSlot:
    def test_generation_slot_allowed_is_kept(self):
        assert core.next_tx_slot(17, 3, 1) == 17  # frame slot 7

    def test_wraps_to_next_frame(self):
        assert core.next_tx_slot(18, 3, 1) == 21  # frame slot 8 -> 1

    def test_period_one_never_waits(self):
        assert core.next_tx_slot(20, 1, 1) == 20

    @given(
        gen=st.integers(min_value=0, max_value=10**9),
        t_p=st.integers(min_value=1, max_value=3),
        data=st.data(),
    )
    def test_result_allowed_and_close(self, gen, t_p, data):
        t_ind = data.draw(st.integers(min_value=1, max_value=t_p))
        s = core.next_tx_slot(gen, t_p, t_ind)
        assert gen <= s <= gen + core.FRAME_LEN
        assert s % core.FRAME_LEN in core.allowed_slots(t_p, t_ind)
        assert core.next_tx_slot(s, t_p, t_ind) == s  # idempotent

    def test_negative_slot_rejected(self):
        with pytest.raises(ValueError):
            core.next_tx_slot(-1, 1, 1)


class TestLatencyBudget:
    def test_fourstep_constants(self):
        assert core.latency_components("fourstep") == (8.5, 3.0, 11.5)

    def test_twostep_constants(self):
        assert core.latency_components("twostep") == (3.5, 3.0, 6.5)

    def test_unknown_procedure_rejected(self):
        with pytest.raises(ValueError):
            core.latency_components("threestep")

    def test_component_sums(self):
        table = core.LatencyTable()
        assert sum(table.components_ms) == 8.5
        assert sum(table.components_ms[:4]) == 3.5
        assert table.cp_fourstep_ms == 8.5
        assert table.cp_twostep_ms == 3.5
        assert table.total_fourstep_ms == 11.5
        assert table.total_twostep_ms == 6.5

    def test_quarter_ms_grid(self):
        for c in core.LATENCY_COMPONENTS_MS:
            assert (c / 0.25) == int(c / 0.25)


class TestSlotClock:
    def test_frame_slot(self):
        clock = core.SlotClock(slot_index=27)
        assert clock.frame_slot == 7
        assert clock.time_ms == 13.5

    def test_validation(self):
        with pytest.raises(ValueError):
            core.SlotClock(t_tti=0.0)
        with pytest.raises(ValueError):
            core.SlotClock(slot_index=-1)


class TestPreambleSpace:
    def test_default_partition(self):
        space = core.PreambleSpace()
        assert space.n_cb == 50
        assert space.n_cf + space.n_cr + space.n_cb == space.n_total

    def test_split_helper(self):
        space = core.PreambleSpace.split(n_cr=4)
        assert space.n_cb == 50
        assert list(space.twostep_pids) == [60, 61, 62, 63]
        assert space.is_twostep_pid(63)
        assert not space.is_twostep_pid(59)

    def test_inconsistent_partition_rejected(self):
        with pytest.raises(ValueError):
            core.PreambleSpace(n_total=64, n_cf=10, n_cr=4, n_cb=49)

    @given(n_cr=st.integers(min_value=0, max_value=54))
    def test_split_always_consistent(self, n_cr):
        space = core.PreambleSpace.split(n_cr=n_cr)
        assert space.n_cf + space.n_cr + space.n_cb == space.n_total
        assert space.n_cb + space.n_cr == 54
        assert len(space.twostep_pids) == n_cr


class TestTrafficModel:
    def test_periodic(self):
        model = core.TrafficModel(kind="periodic", period_ms=50.0)
        assert model.period_ms == 50.0

    def test_event(self):
        model = core.TrafficModel(kind="event", rate_per_s=6.8)
        assert model.rate_per_s == 6.8

    def test_validation(self):
        with pytest.raises(ValueError):
            core.TrafficModel(kind="periodic", period_ms=0.0)
        with pytest.raises(ValueError):
            core.TrafficModel(kind="event", rate_per_s=0.0)
        with pytest.raises(ValueError):
            core.TrafficModel(kind="bursty", rate_per_s=1.0)


class TestRachSchedule:
    def test_table_rows(self):
        sched = core.RachSchedule(t_p=3)
        assert sched.table == (
            frozenset({1, 4, 7}),
            frozenset({2, 5, 8}),
            frozenset({3, 6, 9}),
        )
        assert sched.allowed(2) == {2, 5, 8}

    def test_invalid_period(self):
        with pytest.raises(ValueError):
            core.RachSchedule(t_p=5)
