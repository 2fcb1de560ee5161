"""Deterministic replay of recorded rental days against a candidate design.

Each day is replayed as a discrete-event pass: rental departures take a
vehicle (or record an availability failure and skip the trip), the
matching arrival docks it after the trip's riding time, and scheduled
relocations move one vehicle with the same rules.  Unlike the analytic
model, the day keeps running after a failure -- the metric is the
fraction of days with at least one failure, so every failure must be
observed, not only the first.

Simultaneous events process arrivals before departures (a vehicle that
docks at time t is available to a request at time t); remaining ties
fall back on scheduling order, which is itself deterministic.
"""

import heapq
from dataclasses import dataclass

from .model import SystemDesign

_ARRIVAL, _DEPARTURE = 1, 2


@dataclass(frozen=True)
class ReplayOutcome:
    day: str
    availability_failures: int
    capacity_failures: int
    final_stocks: tuple

    @property
    def day_failed(self):
        return self.availability_failures + self.capacity_failures > 0


def replay_day(seq, plan, design, eta=None, overflow=True, trace=None):
    """Replay one day's rentals plus the plan's relocations against a design.

    eta supplies relocation travel times as a k x k matrix of hours (zero
    when omitted; rentals always ride for their recorded duration).  In
    overflow mode a vehicle arriving at a full station docks anyway and
    the violation is counted; with overflow=False it is discarded
    instead.  trace, when a list, receives
    (t, kind, station, stocks_sum, in_transit) after every event.
    """
    k = design.k
    if plan.k != k:
        raise ValueError(f"plan is for {plan.k} stations, design for {k}")
    stocks = list(design.v)
    in_transit = 0
    availability = 0
    capacity = 0

    heap = []
    order = 0
    for event in seq.events:
        if not (1 <= event.o <= k and 1 <= event.d <= k):
            raise ValueError(f"event names station outside 1..{k}")
        heapq.heappush(heap, (event.t, _DEPARTURE, order, event.o, event.d, event.eta))
        order += 1
    for t, o, d in plan.instants():
        delay = eta[o - 1][d - 1] if eta is not None else 0.0
        heapq.heappush(heap, (t, _DEPARTURE, order, o, d, delay))
        order += 1

    while heap:
        t, kind, _, o, d, ride = heapq.heappop(heap)
        if kind == _DEPARTURE:
            if stocks[o - 1] == 0:
                availability += 1
            else:
                stocks[o - 1] -= 1
                in_transit += 1
                heapq.heappush(heap, (t + ride, _ARRIVAL, order, o, d, 0.0))
                order += 1
            station = o
        else:
            in_transit -= 1
            if stocks[d - 1] >= design.c[d - 1]:
                capacity += 1
                if overflow:
                    stocks[d - 1] += 1
            else:
                stocks[d - 1] += 1
            station = d
        if trace is not None:
            trace.append((t, kind, station, sum(stocks), in_transit))

    return ReplayOutcome(seq.date, availability, capacity, tuple(stocks))


def failure_rate(outcomes):
    """Fraction of replayed days that saw at least one failure."""
    if not outcomes:
        raise ValueError("no replay outcomes to aggregate")
    return sum(1 for o in outcomes if o.day_failed) / len(outcomes)


def replay_all(sequences, plan, design, eta=None, overflow=True):
    return [replay_day(seq, plan, design, eta=eta, overflow=overflow) for seq in sequences]


def baseline_design(k, per_station_capacity):
    """Equal capacity everywhere, half of it (rounded down) stocked."""
    if per_station_capacity < 0:
        raise ValueError("capacity must be non-negative")
    return SystemDesign(
        tuple(per_station_capacity // 2 for _ in range(k)),
        tuple(per_station_capacity for _ in range(k)),
    )


def sweep(designs, sequences, plan, eta=None, overflow=True):
    """Failure rate for each labelled design, as rows ready for a curve table."""
    rows = []
    for label, design in designs:
        outcomes = replay_all(sequences, plan, design, eta=eta, overflow=overflow)
        rows.append(
            (label, design.fleet_size, design.total_capacity, failure_rate(outcomes))
        )
    return rows
