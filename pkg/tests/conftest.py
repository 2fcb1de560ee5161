"""Shared helpers: random small instances and independent brute-force oracles."""

import itertools

import numpy as np
import pytest

from fleetsizing.model import (
    DemandModel,
    PiecewiseConstantIntensity,
    RebalancingPlan,
    StationFlowProfile,
    SystemDesign,
)


def make_pci(rng, horizon, max_rate=2.0, max_pieces=3):
    """Random piecewise-constant rate on [0, horizon]."""
    n = int(rng.integers(1, max_pieces + 1))
    if n == 1:
        bps = (0.0,)
    else:
        interior = np.sort(rng.uniform(0.05 * horizon, 0.95 * horizon, n - 1))
        bps = (0.0, *np.round(interior, 6))
    values = tuple(np.round(rng.uniform(0.0, max_rate, n), 6))
    return PiecewiseConstantIntensity(bps, values, horizon)


def random_small_instance(rng, k_max=3, c_max=4, max_rebalances=5, horizon=2.0):
    """Random tiny system: model, plan, and design exactly representable jointly."""
    k = int(rng.integers(2, k_max + 1))
    intensities = {}
    for o in range(1, k + 1):
        for d in range(1, k + 1):
            if o != d and rng.random() < 0.8:
                intensities[(o, d)] = make_pci(rng, horizon)
    eta = tuple(
        tuple(0.0 if o == d else round(float(rng.uniform(0.05, 0.3)), 6) for d in range(k))
        for o in range(k)
    )
    model = DemandModel(k, intensities, eta, horizon)

    rho = {}
    n_reb = int(rng.integers(0, max_rebalances + 1))
    for _ in range(n_reb):
        o = int(rng.integers(1, k + 1))
        d = int(rng.integers(1, k + 1))
        if o == d:
            continue
        t = round(float(rng.uniform(0.05 * horizon, 0.95 * horizon)), 6)
        times = set(rho.get((o, d), ()))
        times.add(t)
        rho[(o, d)] = tuple(sorted(times))
    plan = RebalancingPlan(k, horizon, rho)

    c = tuple(int(rng.integers(1, c_max + 1)) for _ in range(k))
    v = tuple(int(rng.integers(0, ci + 1)) for ci in c)
    return model, plan, SystemDesign(v, c)


def brute_force_transport(supply, demand, cost):
    """Minimum-cost integral transport by exhaustive enumeration.

    supply/demand are small integer vectors with equal sums; cost[i][j]
    is the unit cost from supply node i to demand node j.  Returns
    (min_cost, flows) with flows a tuple-of-tuples matrix.
    """
    n, m = len(supply), len(demand)
    best = (float("inf"), None)

    def feasible_rows(remaining_demand, s):
        # all ways to split s units across the demand nodes within remaining capacity
        if len(remaining_demand) == 1:
            if s <= remaining_demand[0]:
                yield (s,)
            return
        for first in range(min(s, remaining_demand[0]) + 1):
            for rest in feasible_rows(remaining_demand[1:], s - first):
                yield (first, *rest)

    def walk(i, remaining, rows, acc):
        nonlocal best
        if acc >= best[0]:
            return
        if i == n:
            if all(r == 0 for r in remaining):
                best = (acc, tuple(rows))
            return
        for row in feasible_rows(remaining, supply[i]):
            walk(
                i + 1,
                [r - x for r, x in zip(remaining, row)],
                rows + [row],
                acc + sum(x * cost[i][j] for j, x in enumerate(row)),
            )

    walk(0, list(demand), [], 0.0)
    return best


def mc_station_failure(profile, v, c, T, n_runs, seed):
    """Monte Carlo estimate of one station's failure probability.

    Independent arrival/departure Poisson streams plus the profile's
    forced jump instants, replayed until the first refused event:
    a departure (or departure jump) from stock 0, or an arrival (or
    arrival jump) at stock c.  Returns (p_hat, stderr).
    """
    rng = np.random.default_rng(seed)
    grid = sorted(
        {0.0, T}
        | {b for b in profile.lambda_a.breakpoints if b < T}
        | {b for b in profile.lambda_d.breakpoints if b < T}
    )
    failures = 0
    for _ in range(n_runs):
        events = []
        for t0, t1 in zip(grid[:-1], grid[1:]):
            mid = 0.5 * (t0 + t1)
            for pci, kind in ((profile.lambda_a, +1), (profile.lambda_d, -1)):
                rate = pci.value_at(mid)
                n = rng.poisson(rate * (t1 - t0))
                events.extend((float(t), 0, kind) for t in rng.uniform(t0, t1, n))
        events.extend((t, 1, +1) for t in profile.rho_a if t <= T)
        events.extend((t, 1, -1) for t in profile.rho_d if t <= T)
        # at equal times: arrivals before departures (rank by -kind)
        events.sort(key=lambda e: (e[0], -e[2]))
        stock = v
        for _, _, kind in events:
            if kind > 0:
                if stock == c:
                    failures += 1
                    break
                stock += 1
            else:
                if stock == 0:
                    failures += 1
                    break
                stock -= 1
    p = failures / n_runs
    return p, float(np.sqrt(p * (1.0 - p) / n_runs))


def mc_station_failure_fast(profile, v, c, T, n_runs, seed):
    """Vectorized version of mc_station_failure for constant-rate profiles.

    Pads every run's event list to the maximum count and finds the first
    refused event from cumulative stock sums (before the first refusal
    every event succeeds, so plain cumulative bookkeeping is exact).
    """
    assert len(profile.lambda_a.values) == 1 and len(profile.lambda_d.values) == 1
    rng = np.random.default_rng(seed)
    lam_a = profile.lambda_a.values[0]
    lam_d = profile.lambda_d.values[0]
    jumps_t = np.array(
        [t for t in profile.rho_a if t <= T] + [t for t in profile.rho_d if t <= T]
    )
    jumps_kind = np.array(
        [1] * sum(t <= T for t in profile.rho_a) + [-1] * sum(t <= T for t in profile.rho_d),
        dtype=np.int32,
    )
    n_a = rng.poisson(lam_a * T, n_runs)
    n_d = rng.poisson(lam_d * T, n_runs)
    width = int((n_a + n_d).max()) + len(jumps_t)
    times = np.full((n_runs, width), np.inf)
    kinds = np.zeros((n_runs, width), dtype=np.int32)
    for counts, offsets, kind in ((n_a, np.zeros(n_runs, int), 1), (n_d, n_a, -1)):
        total = int(counts.sum())
        if total == 0:
            continue
        draws = rng.uniform(0.0, T, total)
        rows = np.repeat(np.arange(n_runs), counts)
        idx = np.concatenate([np.arange(n) for n in counts])
        col = np.repeat(offsets, counts) + idx
        times[rows, col] = draws
        kinds[rows, col] = kind
    if len(jumps_t):
        base = width - len(jumps_t)
        times[:, base:] = jumps_t[np.newaxis, :]
        kinds[:, base:] = jumps_kind[np.newaxis, :]
    # arrivals before departures on (measure-zero) ties, then pad to the end
    order = np.lexsort((-kinds, times), axis=1)
    rows = np.arange(n_runs)[:, np.newaxis]
    t_s = times[rows, order]
    k_s = kinds[rows, order]
    k_s[~np.isfinite(t_s)] = 0
    cum = np.cumsum(k_s, axis=1)
    before = v + cum - k_s
    bad = ((k_s < 0) & (before == 0)) | ((k_s > 0) & (before == c))
    failures = int(bad.any(axis=1).sum())
    p = failures / n_runs
    return p, float(np.sqrt(p * (1.0 - p) / n_runs))


def all_states(caps):
    """Every stock vector within the per-station capacities."""
    return list(itertools.product(*[range(ci + 1) for ci in caps]))


@pytest.fixture
def rng():
    return np.random.default_rng(20160502)


def constant_profile(lam_a, lam_d, horizon, rho_a=(), rho_d=()):
    return StationFlowProfile(
        PiecewiseConstantIntensity.constant(lam_a, horizon),
        PiecewiseConstantIntensity.constant(lam_d, horizon),
        rho_a,
        rho_d,
    )
