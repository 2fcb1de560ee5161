"""Replaying recorded days against candidate designs."""

import pytest

from fleetsizing.ingest import DaySequence, RentalEvent
from fleetsizing.model import RebalancingPlan, SystemDesign
from fleetsizing.replay import (
    ReplayOutcome,
    baseline_design,
    failure_rate,
    replay_all,
    replay_day,
    sweep,
)
from fleetsizing.synth import sample_day_sequences, synthetic_imbalanced_model


def day(events, date="2016-05-02"):
    return DaySequence(date, tuple(events))


def no_plan(k):
    return RebalancingPlan(k, 24.0, {})


class TestReplayDay:
    def test_empty_day_changes_nothing(self):
        design = SystemDesign((2, 3), (4, 4))
        out = replay_day(day(()), no_plan(2), design)
        assert not out.day_failed
        assert out.final_stocks == (2, 3)

    def test_successful_rental_moves_one_vehicle(self):
        design = SystemDesign((2, 3), (4, 4))
        out = replay_day(
            day([RentalEvent(8.0, 1, 2, 0.25)]), no_plan(2), design
        )
        assert out.final_stocks == (1, 4)
        assert (out.availability_failures, out.capacity_failures) == (0, 0)

    def test_rental_from_empty_station_is_skipped(self):
        design = SystemDesign((0, 3), (4, 4))
        out = replay_day(
            day([RentalEvent(8.0, 1, 2, 0.25)]), no_plan(2), design
        )
        assert out.availability_failures == 1
        assert out.final_stocks == (0, 3)  # trip never happened

    def test_full_station_overflow_docks_and_counts(self):
        design = SystemDesign((1, 2), (4, 2))
        out = replay_day(
            day([RentalEvent(8.0, 1, 2, 0.25)]), no_plan(2), design
        )
        assert out.capacity_failures == 1
        assert out.final_stocks == (0, 3)

    def test_full_station_strict_discards(self):
        design = SystemDesign((1, 2), (4, 2))
        out = replay_day(
            day([RentalEvent(8.0, 1, 2, 0.25)]), no_plan(2), design, overflow=False
        )
        assert out.capacity_failures == 1
        assert out.final_stocks == (0, 2)

    def test_day_keeps_running_after_a_failure(self):
        design = SystemDesign((1, 0), (4, 4))
        events = [
            RentalEvent(8.0, 2, 1, 0.1),  # fails: station 2 empty
            RentalEvent(9.0, 1, 2, 0.1),  # still goes through
            RentalEvent(10.0, 2, 1, 0.1),  # uses the vehicle that just docked
        ]
        out = replay_day(day(events), no_plan(2), design)
        assert out.availability_failures == 1
        assert out.final_stocks == (1, 0)

    def test_docking_vehicle_serves_same_instant_request(self):
        # the 2 -> 1 trip lands at exactly t=2; the t=2 request from
        # station 1 must see it
        design = SystemDesign((0, 1), (2, 2))
        events = [
            RentalEvent(1.0, 2, 1, 1.0),
            RentalEvent(2.0, 1, 2, 0.5),
        ]
        out = replay_day(day(events), no_plan(2), design)
        assert out.availability_failures == 0
        assert out.final_stocks == (0, 1)

    def test_relocations_move_vehicles_with_travel_time(self):
        design = SystemDesign((2, 0), (4, 4))
        plan = RebalancingPlan(2, 24.0, {(1, 2): (7.0,)})
        eta = ((0.0, 0.5), (0.5, 0.0))
        # request at station 2 before the relocation lands fails; a later
        # one is served
        events = [
            RentalEvent(7.2, 2, 1, 0.1),
            RentalEvent(8.0, 2, 1, 0.1),
        ]
        out = replay_day(day(events), plan, design, eta=eta)
        assert out.availability_failures == 1
        # station 1 sent one vehicle out and got one back via the rental
        assert out.final_stocks == (2, 0)

    def test_relocation_from_empty_station_fails(self):
        design = SystemDesign((0, 1), (2, 2))
        plan = RebalancingPlan(2, 24.0, {(1, 2): (7.0,)})
        out = replay_day(day(()), plan, design)
        assert out.availability_failures == 1
        assert out.final_stocks == (0, 1)

    def test_vehicles_are_conserved_at_every_event(self):
        model = synthetic_imbalanced_model(6, seed=4)
        (seq,) = sample_day_sequences(model, 1, seed=9)
        design = SystemDesign((3,) * 6, (8,) * 6)
        trace = []
        out = replay_day(seq, no_plan(6), design, trace=trace)
        assert len(trace) >= 10
        for t, kind, station, stocks_sum, in_transit in trace:
            assert stocks_sum + in_transit == design.fleet_size
        assert sum(out.final_stocks) == design.fleet_size

    def test_replay_is_deterministic(self):
        model = synthetic_imbalanced_model(5, seed=1)
        (seq,) = sample_day_sequences(model, 1, seed=2)
        design = SystemDesign((2,) * 5, (5,) * 5)
        rho = {(1, 2): (9.0,), (3, 1): (10.0, 15.0)}
        plan_fwd = RebalancingPlan(5, 24.0, rho)
        plan_rev = RebalancingPlan(5, 24.0, dict(reversed(list(rho.items()))))
        eta = model.eta
        first = replay_day(seq, plan_fwd, design, eta=eta)
        second = replay_day(seq, plan_rev, design, eta=eta)
        assert first == second

    def test_station_label_bounds_checked(self):
        design = SystemDesign((1,), (2,))
        with pytest.raises(ValueError):
            replay_day(day([RentalEvent(1.0, 1, 2, 0.1)]), no_plan(1), design)

    def test_plan_and_design_sizes_must_agree(self):
        design = SystemDesign((1, 1), (2, 2))
        with pytest.raises(ValueError):
            replay_day(day(()), no_plan(3), design)


class TestFailureRate:
    def outcome(self, failed, i):
        return ReplayOutcome(f"d{i}", int(failed), 0, (0,))

    def test_fractions(self):
        outs = [self.outcome(i < 11, i) for i in range(22)]
        assert failure_rate(outs) == 0.5
        assert failure_rate([self.outcome(False, 0)] * 22) == 0.0
        assert failure_rate([self.outcome(True, 0)] * 22) == 1.0

    def test_empty_input_is_an_error(self):
        with pytest.raises(ValueError):
            failure_rate([])


class TestBaselineDesign:
    def test_even_capacity_half_stocked(self):
        d = baseline_design(3, 10)
        assert d.v == (5, 5, 5)
        assert d.c == (10, 10, 10)

    def test_odd_capacity_rounds_stock_down(self):
        assert baseline_design(2, 7).v == (3, 3)

    def test_zero_capacity(self):
        d = baseline_design(2, 0)
        assert d.v == (0, 0) and d.c == (0, 0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            baseline_design(2, -1)


class TestSweep:
    def test_rows_and_monotone_trend(self):
        from scipy.stats import spearmanr

        model = synthetic_imbalanced_model(8, seed=5)
        sequences = sample_day_sequences(model, 22, seed=6)
        grid = [2, 4, 8, 16, 24]
        designs = [(f"C{c}", baseline_design(8, c)) for c in grid]
        rows = sweep(designs, sequences, no_plan(8), eta=model.eta)
        assert [r[0] for r in rows] == [f"C{c}" for c in grid]
        assert rows[-1][1] == 8 * 12 and rows[-1][2] == 8 * 24
        rates = [r[3] for r in rows]
        assert all(0.0 <= r <= 1.0 for r in rates)
        # more capacity should not hurt, up to sampling noise
        rho, _ = spearmanr(grid, rates)
        assert rho <= 0.0

    def test_all_days_replayed(self):
        model = synthetic_imbalanced_model(4, seed=8)
        sequences = sample_day_sequences(model, 5, seed=3)
        outs = replay_all(sequences, no_plan(4), baseline_design(4, 6))
        assert [o.day for o in outs] == [s.date for s in sequences]
