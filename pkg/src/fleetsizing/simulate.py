"""Monte Carlo estimation of the joint failure probability.

Request streams are sampled per origin-destination pair by thinning: a
homogeneous candidate stream at the pair's maximum rate is generated
over [0, T] (Poisson count, then i.i.d. uniform times), and each
candidate is kept with probability rate(t)/max_rate.

Reproducibility contract: run i of an estimate seeded with ``seed`` uses
the stream ``numpy.random.default_rng(seed + i)``, and each run draws,
in this fixed order: (1) one Poisson candidate count per pair, pairs
sorted by (o, d); (2) all candidate times in one uniform block, laid out
pair-by-pair in the same order; (3) one uniform thinning mark per
candidate, aligned with the times.  Runs are therefore independent of
scheduling and may be evaluated in parallel (set FLEETSIZING_WORKERS)
without changing any result.

Within a run, events are replayed in time order.  Until the first
unserved request the trajectory coincides with unconstrained stock
bookkeeping (every earlier event succeeded), so the run is vectorized:
cumulative stock sums locate the first event that hits an empty origin
or a full destination, which is where the run enters the failed state.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import RebalancingPlan

_WORKERS_ENV = "FLEETSIZING_WORKERS"


@dataclass(frozen=True)
class EstimateWithCI:
    """Binomial mean with its standard error sqrt(mean*(1-mean)/n)."""

    mean: float
    stderr: float
    n: int


@dataclass
class SimulationRun:
    """One sampled trajectory.

    ``failed_at`` is the time of the first unserved request, or None.
    ``occupancy[s]`` holds the per-station stocks at ``sample_times[s]``;
    rows at or after ``failed_at`` are flagged invalid (the system is in
    the failed state, not in any stock state).
    """

    seed: int
    failed_at: float
    sample_times: np.ndarray
    occupancy: np.ndarray
    occupancy_valid: np.ndarray


@dataclass
class MarginalEstimate:
    """Estimated P(station holds j vehicles, not failed) per sample time."""

    times: np.ndarray
    mean: np.ndarray  # (len(times), c_i + 1)
    stderr: np.ndarray
    n: int


@dataclass
class _Tables:
    """Demand model compiled to flat arrays for fast per-run sampling."""

    k: int
    horizon: float
    pair_o: np.ndarray
    pair_d: np.ndarray
    pair_eta: np.ndarray
    grid: np.ndarray
    rates: np.ndarray  # (n_pairs, n_bins)
    max_rate: np.ndarray


def _compile_tables(model):
    pairs = model.pairs()
    edges = sorted({b for pci in model.intensities.values() for b in pci.breakpoints})
    if not edges:
        edges = [0.0]
    grid = np.asarray(edges + [model.horizon], dtype=float)
    mids = 0.5 * (grid[:-1] + grid[1:])
    rates = np.zeros((len(pairs), len(mids)))
    for r, (o, d) in enumerate(pairs):
        pci = model.intensities[(o, d)]
        rates[r] = [pci.value_at(t) for t in mids]
    return _Tables(
        k=model.k,
        horizon=model.horizon,
        pair_o=np.asarray([o for o, _ in pairs], dtype=np.int64),
        pair_d=np.asarray([d for _, d in pairs], dtype=np.int64),
        pair_eta=np.asarray([model.eta_hours(o, d) for o, d in pairs], dtype=float),
        grid=grid,
        rates=rates,
        max_rate=rates.max(axis=1) if len(pairs) else np.zeros(0),
    )


def _plan_arrays(model, plan):
    if plan is None:
        plan = RebalancingPlan.empty(model.k, model.horizon)
    if plan.k != model.k or plan.horizon != model.horizon:
        raise ValueError("plan and model disagree on stations or horizon")
    inst = plan.instants()
    t = np.asarray([e[0] for e in inst], dtype=float)
    o = np.asarray([e[1] for e in inst], dtype=np.int64)
    d = np.asarray([e[2] for e in inst], dtype=np.int64)
    eta = np.asarray([model.eta_hours(oo, dd) for _, oo, dd in inst], dtype=float)
    return t, o, d, eta


def _sample_requests(tables, T, rng):
    """Thinned request events over [0, T]: (times, origins, dests, etas), unsorted."""
    n_pairs = len(tables.max_rate)
    if n_pairs == 0:
        z = np.zeros(0)
        return z, z.astype(np.int64), z.astype(np.int64), z
    counts = rng.poisson(tables.max_rate * T)
    total = int(counts.sum())
    times = rng.uniform(0.0, T, total)
    marks = rng.uniform(0.0, 1.0, total)
    pair_idx = np.repeat(np.arange(n_pairs), counts)
    bins = np.searchsorted(tables.grid, times, side="right") - 1
    keep = marks * tables.max_rate[pair_idx] < tables.rates[pair_idx, bins]
    times = times[keep]
    pair_idx = pair_idx[keep]
    return (
        times,
        tables.pair_o[pair_idx],
        tables.pair_d[pair_idx],
        tables.pair_eta[pair_idx],
    )


def _first_failure(t_sorted, station_rows, delta_rows, check_o, check_d, v, c):
    """Locate the first event that would be refused, given free evolution.

    ``station_rows``/``delta_rows`` are (n, 2): each event touches up to
    two stations (0-based; -1 = unused slot).  ``check_o[n]`` is the
    station whose emptiness fails the event (-1 = no check), ``check_d``
    likewise for fullness.
    """
    n = len(t_sorted)
    k = len(v)
    delta = np.zeros((n, k), dtype=np.int32)
    rows = np.arange(n)
    for slot in range(station_rows.shape[1]):
        st = station_rows[:, slot]
        used = st >= 0
        np.add.at(delta, (rows[used], st[used]), delta_rows[used, slot])
    cum = np.cumsum(delta, axis=0)
    before = v[np.newaxis, :] + cum - delta
    bad = np.zeros(n, dtype=bool)
    m = check_o >= 0
    bad[m] |= before[rows[m], check_o[m]] == 0
    m = check_d >= 0
    bad[m] |= before[rows[m], check_d[m]] == c[check_d[m]]
    if bad.any():
        first = int(bad.argmax())
        return float(t_sorted[first]), cum
    return None, cum


def _simulate_prepared(tables, plan_arrays, v, c, T, seed, with_delay, sample_times):
    rng = np.random.default_rng(seed)
    t_req, o_req, d_req, eta_req = _sample_requests(tables, T, rng)
    t_pl, o_pl, d_pl, eta_pl = plan_arrays
    keep = t_pl <= T
    t_all = np.concatenate([t_req, t_pl[keep]])
    o_all = np.concatenate([o_req, o_pl[keep]]).astype(np.int64)
    d_all = np.concatenate([d_req, d_pl[keep]]).astype(np.int64)
    eta_all = np.concatenate([eta_req, eta_pl[keep]])

    if not with_delay:
        order = np.lexsort((d_all, o_all, t_all))
        t_s = t_all[order]
        o_s = o_all[order] - 1
        d_s = d_all[order] - 1
        station_rows = np.stack([o_s, d_s], axis=1)
        delta_rows = np.tile(np.array([-1, 1], dtype=np.int32), (len(t_s), 1))
        failed_at, cum = _first_failure(
            t_s, station_rows, delta_rows, o_s.copy(), d_s.copy(), v, c
        )
    else:
        arr_keep = t_all + eta_all <= T
        t_ev = np.concatenate([t_all, (t_all + eta_all)[arr_keep]])
        st_ev = np.concatenate([o_all, d_all[arr_keep]]) - 1
        # kind rank: arrivals (1) before departures (2) at equal times
        kind = np.concatenate(
            [np.full(len(t_all), 2, np.int8), np.ones(int(arr_keep.sum()), np.int8)]
        )
        sign = np.where(kind == 2, -1, 1).astype(np.int32)
        order = np.lexsort((st_ev, kind, t_ev))
        t_s = t_ev[order]
        st_s = st_ev[order]
        sign_s = sign[order]
        station_rows = np.stack([st_s, np.full_like(st_s, -1)], axis=1)
        delta_rows = np.stack([sign_s, np.zeros_like(sign_s)], axis=1)
        check_o = np.where(sign_s < 0, st_s, -1)
        check_d = np.where(sign_s > 0, st_s, -1)
        failed_at, cum = _first_failure(
            t_s, station_rows, delta_rows, check_o, check_d, v, c
        )

    if sample_times is None:
        occ = None
        valid = None
    else:
        sample_times = np.asarray(sample_times, dtype=float)
        pos = np.searchsorted(t_s, sample_times, side="right")
        padded = np.vstack([np.zeros((1, len(v)), dtype=cum.dtype), cum])
        occ = v[np.newaxis, :] + padded[pos]
        valid = (
            np.ones(len(sample_times), dtype=bool)
            if failed_at is None
            else sample_times < failed_at
        )
    return failed_at, occ, valid


def simulate_run(model, plan, design, T, seed, with_delay=False, sample_times=None):
    """Sample one trajectory; see the module docstring for the RNG contract."""
    if design.k != model.k:
        raise ValueError(f"design is for {design.k} stations, model has {model.k}")
    if T < 0.0 or T > model.horizon + 1e-9:
        raise ValueError(f"simulation end {T} outside [0, {model.horizon}]")
    tables = _compile_tables(model)
    plan_arrays = _plan_arrays(model, plan)
    v = np.asarray(design.v, dtype=np.int32)
    c = np.asarray(design.c, dtype=np.int32)
    failed_at, occ, valid = _simulate_prepared(
        tables, plan_arrays, v, c, T, seed, with_delay, sample_times
    )
    st = None if sample_times is None else np.asarray(sample_times, dtype=float)
    return SimulationRun(seed, failed_at, st, occ, valid)


def _worker_count():
    raw = os.environ.get(_WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_batch(args):
    tables, plan_arrays, v, c, T, seeds, with_delay, sample_times, station0 = args
    failed = np.full(len(seeds), np.inf)
    occs = []
    for j, s in enumerate(seeds):
        failed_at, occ, valid = _simulate_prepared(
            tables, plan_arrays, v, c, T, int(s), with_delay, sample_times
        )
        if failed_at is not None:
            failed[j] = failed_at
        if sample_times is not None:
            col = occ[:, station0].copy()
            col[~valid] = -1  # sentinel: run already failed at this time
            occs.append(col)
    return failed, occs


def _collect(model, plan, design, T, n_runs, seed, with_delay, sample_times, station):
    if n_runs < 1:
        raise ValueError("need at least one run")
    if design.k != model.k:
        raise ValueError(f"design is for {design.k} stations, model has {model.k}")
    if T < 0.0 or T > model.horizon + 1e-9:
        raise ValueError(f"simulation end {T} outside [0, {model.horizon}]")
    tables = _compile_tables(model)
    plan_arrays = _plan_arrays(model, plan)
    v = np.asarray(design.v, dtype=np.int32)
    c = np.asarray(design.c, dtype=np.int32)
    seeds = np.arange(seed, seed + n_runs)
    station0 = 0 if station is None else station - 1
    workers = _worker_count()
    if workers == 1:
        batches = [_run_batch((tables, plan_arrays, v, c, T, seeds, with_delay, sample_times, station0))]
    else:
        chunks = np.array_split(seeds, workers * 4)
        args = [
            (tables, plan_arrays, v, c, T, chunk, with_delay, sample_times, station0)
            for chunk in chunks
            if len(chunk)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_batch, args))
    failed = np.concatenate([b[0] for b in batches])
    occ_cols = [col for b in batches for col in b[1]]
    return failed, occ_cols


def estimate_failure_curve(
    model, plan, design, T, n_runs, sample_times, with_delay=False, seed=0
):
    """Empirical failure probability at each sample time, with standard errors.

    Run i uses seed ``seed + i``; the estimate at t is the fraction of
    runs whose first unserved request happened at or before t.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    failed, _ = _collect(model, plan, design, T, n_runs, seed, with_delay, None, None)
    failed_sorted = np.sort(failed)
    out = []
    for t in sample_times:
        hits = int(np.searchsorted(failed_sorted, t, side="right"))
        p = hits / n_runs
        out.append((float(t), EstimateWithCI(p, math.sqrt(p * (1.0 - p) / n_runs), n_runs)))
    return out


def estimate_marginals(
    model, plan, design, T, n_runs, station, sample_times, with_delay=False, seed=0
):
    """Empirical stock distribution of one station at each sample time.

    Failed runs contribute to no stock state, so the distribution sums to
    one minus the failure estimate.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    if not 1 <= station <= model.k:
        raise ValueError(f"station label {station} outside 1..{model.k}")
    _, occ_cols = _collect(
        model, plan, design, T, n_runs, seed, with_delay, sample_times, station
    )
    c_i = design.c[station - 1]
    counts = np.zeros((len(sample_times), c_i + 1), dtype=np.int64)
    t_idx = np.arange(len(sample_times))
    for col in occ_cols:
        ok = (col >= 0) & (col <= c_i)
        np.add.at(counts, (t_idx[ok], col[ok]), 1)
    mean = counts / n_runs
    stderr = np.sqrt(mean * (1.0 - mean) / n_runs)
    return MarginalEstimate(sample_times, mean, stderr, n_runs)
