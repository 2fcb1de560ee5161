"""Per-station failure probabilities for an independent-streams relaxation.

Each station is analyzed in isolation: vehicle arrivals and rental
departures are independent Poisson streams with the station's aggregate
rates, scheduled relocations shift the whole stock distribution by one,
and the first unserved request (departure from an empty station, arrival
at a full one) moves all affected mass into an absorbing failed state.
Summing the resulting failure probabilities over stations upper-bounds
the failure probability of the true joint system, where the same request
streams couple the stations.

Between events the stock distribution solves a linear ODE with a
tridiagonal generator whose exit rate is the same in every state, so the
matrix exponential is computed by uniformization: a Poisson mixture of
powers of a substochastic one-step kernel.  All terms are non-negative,
which keeps the vector non-negative, and the Poisson tail that is cut
off is re-assigned to the highest computed power, so probability mass is
conserved to floating-point rounding (far inside the 1e-9 contract
enforced after every piece).
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import InvariantViolationError, merged_event_timeline

_POISSON_TAIL = 1e-13
_MAX_RATE_STEP = 30.0  # uniformization substep cap on (rate * dt)
_MASS_TOL = 1e-9
_NEG_CLIP = -1e-12


@dataclass
class StationDistribution:
    """Stock distribution of one station at time t.

    ``q[j]`` is the probability of holding j vehicles, ``qF`` the
    accumulated probability of having failed by t.
    """

    q: np.ndarray
    qF: float
    t: float

    @property
    def capacity(self):
        return len(self.q) - 1


def initial_distribution(v, c):
    if not 0 <= v <= c:
        raise ValueError("initial stock must satisfy 0 <= v <= c")
    q = np.zeros(c + 1)
    q[v] = 1.0
    return StationDistribution(q, 0.0, 0.0)


def _advance(q, qF, lost, lam_a, lam_d, dt, cap_absorbs):
    """Propagate (q, qF, lost) over dt hours of constant rates.

    ``cap_absorbs`` selects where mass that tries to pass the top state
    goes: the failed state (finite capacity) or the ``lost`` accumulator
    (working truncation of an infinite-capacity station).
    """
    if dt < 0.0:
        raise ValueError("cannot advance backwards in time")
    lam = lam_a + lam_d
    if lam == 0.0 or dt == 0.0:
        return q, qF, lost
    pa = lam_a / lam
    pd = lam_d / lam
    n_sub = max(1, math.ceil(lam * dt / _MAX_RATE_STEP))
    x = lam * (dt / n_sub)
    for _ in range(n_sub):
        cur, cur_f, cur_l = q, qF, lost
        w = math.exp(-x)
        acc = w * cur
        acc_f = w * cur_f
        acc_l = w * cur_l
        wsum = w
        n = 0
        while wsum < 1.0 - _POISSON_TAIL:
            n += 1
            if n > 100_000:
                raise InvariantViolationError("uniformization series did not converge")
            nxt = np.zeros_like(cur)
            if pa:
                nxt[1:] += pa * cur[:-1]
            if pd:
                nxt[:-1] += pd * cur[1:]
            top_flux = pa * cur[-1]
            nxt_f = cur_f + pd * cur[0] + (top_flux if cap_absorbs else 0.0)
            nxt_l = cur_l + (0.0 if cap_absorbs else top_flux)
            w *= x / n
            acc += w * nxt
            acc_f += w * nxt_f
            acc_l += w * nxt_l
            wsum += w
            cur, cur_f, cur_l = nxt, nxt_f, nxt_l
        rem = 1.0 - wsum
        q = acc + rem * cur
        qF = acc_f + rem * cur_f
        lost = acc_l + rem * cur_l
    return q, qF, lost


def _guard(q, qF, lost, where):
    """Clamp rounding negatives and verify mass conservation per piece."""
    if q.min() < 0.0:
        if q.min() <= _NEG_CLIP:
            raise InvariantViolationError(
                f"negative probability {q.min():.3e} {where}"
            )
        q = np.maximum(q, 0.0)
        total = q.sum() + qF + lost
        q = q / total
        qF /= total
        lost /= total
    drift = abs(q.sum() + qF + lost - 1.0)
    if drift >= _MASS_TOL:
        raise InvariantViolationError(f"probability mass drifted by {drift:.3e} {where}")
    return q, qF, lost


def _arrival_shift(q, qF, lost, cap_absorbs):
    out = np.empty_like(q)
    out[0] = 0.0
    out[1:] = q[:-1]
    top = q[-1]
    if cap_absorbs:
        return out, qF + top, lost
    return out, qF, lost + top


def _departure_shift(q, qF, lost):
    out = np.empty_like(q)
    out[-1] = 0.0
    out[:-1] = q[1:]
    return out, qF + q[0], lost


def step_smooth(dist, profile, t0, t1):
    """Advance a distribution across an event-free piece [t0, t1]."""
    if abs(dist.t - t0) > 1e-12:
        raise ValueError(f"distribution is at t={dist.t}, piece starts at {t0}")
    if t1 < t0:
        raise ValueError("piece must not run backwards")
    if t1 > profile.horizon + 1e-9:
        raise ValueError("piece extends past the profile horizon")
    for t, _kind in merged_event_timeline(profile):
        if t0 < t < t1:
            raise ValueError(f"piece [{t0}, {t1}] straddles an event at t={t}")
    mid = 0.5 * (t0 + t1)
    lam_a = profile.lambda_a.value_at(mid)
    lam_d = profile.lambda_d.value_at(mid)
    q, qF, _ = _advance(dist.q, dist.qF, 0.0, lam_a, lam_d, t1 - t0, True)
    q, qF, _ = _guard(q, qF, 0.0, f"in piece [{t0}, {t1}]")
    return StationDistribution(q, qF, t1)


def apply_jump(dist, kind):
    """Apply an instantaneous relocation shift ("arrival" or "departure")."""
    if kind == "arrival":
        q, qF, _ = _arrival_shift(dist.q, dist.qF, 0.0, True)
    elif kind == "departure":
        q, qF, _ = _departure_shift(dist.q, dist.qF, 0.0)
    else:
        raise ValueError(f"unknown jump kind {kind!r}")
    return StationDistribution(q, qF, dist.t)


_RECORD = "record"


def _evolve(profile, v, c_eff, T, cap_absorbs, record_times=None, record_full=False):
    """Run one station from its point-mass start to T.

    Returns (q, qF, lost, recorded) where ``recorded`` is a list with one
    entry per requested record time: qF, or (q copy, qF) if record_full.
    Record times coinciding with an event see the post-event state.
    """
    schedule = [
        (t, 0 if kind == "breakpoint" else (1 if kind == "arrival" else 2), kind)
        for t, kind in merged_event_timeline(profile)
        if t <= T
    ]
    if record_times is not None:
        for idx, t in enumerate(record_times):
            if t < 0.0 or t > T + 1e-9:
                raise ValueError("record times must lie within [0, T]")
            schedule.append((min(t, T), 3, idx))
    schedule.sort(key=lambda e: (e[0], e[1]))

    q = np.zeros(c_eff + 1)
    q[v] = 1.0
    qF = 0.0
    lost = 0.0
    t = 0.0
    lam_a = profile.lambda_a
    lam_d = profile.lambda_d
    recorded = [None] * (len(record_times) if record_times is not None else 0)

    def run_to(t_next):
        nonlocal q, qF, lost, t
        if t_next > t:
            la = lam_a.value_at(0.5 * (t + t_next))
            ld = lam_d.value_at(0.5 * (t + t_next))
            q, qF, lost = _advance(q, qF, lost, la, ld, t_next - t, cap_absorbs)
            q, qF, lost = _guard(q, qF, lost, f"at t={t_next}")
            t = t_next

    for ev_t, rank, payload in schedule:
        run_to(ev_t)
        if rank == 1:
            q, qF, lost = _arrival_shift(q, qF, lost, cap_absorbs)
        elif rank == 2:
            q, qF, lost = _departure_shift(q, qF, lost)
        elif rank == 3:
            recorded[payload] = (q.copy(), qF) if record_full else qF
    run_to(T)
    return q, qF, lost, recorded


def _validate_vcT(profile, v, c, T):
    if not isinstance(v, (int, np.integer)) or v < 0:
        raise ValueError("initial stock v must be a non-negative integer")
    if c is not None:
        if not isinstance(c, (int, np.integer)) or c < 0:
            raise ValueError("capacity c must be a non-negative integer or None")
        if v > c:
            raise ValueError("initial stock cannot exceed capacity")
    if T < 0.0 or T > profile.horizon + 1e-9:
        raise ValueError(f"evaluation time {T} outside [0, {profile.horizon}]")


def _unbounded_start(profile, v, T):
    arrivals = profile.lambda_a.integral(0.0, T) + sum(1 for t in profile.rho_a if t <= T)
    return int(v + math.ceil(arrivals + 10.0 * math.sqrt(v + arrivals))) + 1


def station_failure_probability(profile, v, c, T, tail_tolerance=1e-9):
    """Probability that the station has failed by T.

    ``c=None`` evaluates the station with unlimited parking: capacity
    failures are disabled and only availability failures count.  That
    case is computed on a working truncation of the state space, doubled
    until the probability mass escaping through the top is below
    ``tail_tolerance`` (so the returned value is exact to within it).
    """
    _validate_vcT(profile, v, c, T)
    v = int(v)
    if c is not None:
        _, qF, _, _ = _evolve(profile, v, int(c), T, cap_absorbs=True)
        return qF
    if tail_tolerance <= 0.0:
        raise ValueError("tail_tolerance must be positive")
    c_w = _unbounded_start(profile, v, T)
    while True:
        _, qF, lost, _ = _evolve(profile, v, c_w, T, cap_absorbs=False)
        if lost < tail_tolerance:
            return qF
        if c_w > 50_000_000:
            raise InvariantViolationError(
                "working truncation for the unlimited-capacity station grew unreasonably"
            )
        c_w *= 2


def station_failure_curve(profile, v, c, times):
    """Failure probability of one finite-capacity station at each time."""
    times = np.asarray(times, dtype=float)
    _validate_vcT(profile, v, c, float(times.max()) if times.size else 0.0)
    T = float(times.max()) if times.size else 0.0
    _, _, _, rec = _evolve(profile, int(v), int(c), T, True, record_times=times)
    return np.array(rec, dtype=float)


def station_transient(profile, v, c, times):
    """Stock distribution snapshots: (len(times) x (c+1) matrix, qF array)."""
    times = np.asarray(times, dtype=float)
    T = float(times.max()) if times.size else 0.0
    _validate_vcT(profile, v, c, T)
    _, _, _, rec = _evolve(
        profile, int(v), int(c), T, True, record_times=times, record_full=True
    )
    qs = np.stack([r[0] for r in rec]) if rec else np.zeros((0, int(c) + 1))
    qfs = np.array([r[1] for r in rec], dtype=float)
    return qs, qfs


def _station_profiles(model, plan, with_delay):
    from .model import aggregate_station_flows

    return [
        aggregate_station_flows(model, plan, i, with_delay=with_delay)
        for i in range(1, model.k + 1)
    ]


def system_failure_upper_bound(model, plan, design, T, with_delay=False):
    """Sum of per-station failure probabilities by T.

    This is an upper bound on the probability that the joint system sees
    any unserved request by T; it is reported unclamped and may exceed 1.
    """
    if design.k != model.k:
        raise ValueError(f"design is for {design.k} stations, model has {model.k}")
    profiles = _station_profiles(model, plan, with_delay)
    return sum(
        station_failure_probability(prof, design.v[i], design.c[i], T)
        for i, prof in enumerate(profiles)
    )


def system_failure_bound_curve(model, plan, design, times, with_delay=False):
    """Per-station failure curves and their sum at each sample time.

    Returns (per_station, total) with shapes (k, len(times)) and (len(times),).
    """
    if design.k != model.k:
        raise ValueError(f"design is for {design.k} stations, model has {model.k}")
    profiles = _station_profiles(model, plan, with_delay)
    per_station = np.stack(
        [
            station_failure_curve(prof, design.v[i], design.c[i], times)
            for i, prof in enumerate(profiles)
        ]
    )
    return per_station, per_station.sum(axis=0)
