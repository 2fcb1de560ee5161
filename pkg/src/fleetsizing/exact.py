"""Exact transient analysis of the joint stock process on small systems.

The state is the vector of per-station stocks.  A rental request or a
scheduled relocation from o to d moves one vehicle instantaneously
(travel times are neglected here), and any request that cannot be served
-- origin empty or destination full -- sends the whole system into an
absorbing failed state F.  Because every move conserves the vehicle
count, only states on the slice sum(m) == sum(v) are reachable, and the
distribution is stored on that slice.

The generator has total exit rate sum(lambda_od) in every state, so the
piecewise propagation uses the same uniformization scheme as the
per-station bound, with mass conservation checked to 1e-8 per piece.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .model import InvariantViolationError, RebalancingPlan

STATE_SPACE_CAP = 2_000_000

_POISSON_TAIL = 1e-13
_MAX_RATE_STEP = 30.0
_MASS_TOL = 1e-8


class StateSpaceTooLargeError(ValueError):
    """The joint state space exceeds the cap; use simulation instead."""


def move_vehicle(m, o, d):
    """One vehicle relocated from station o to station d (1-based labels)."""
    k = len(m)
    if not (1 <= o <= k and 1 <= d <= k):
        raise ValueError(f"station labels must be in 1..{k}")
    if o == d:
        return tuple(m)
    out = list(m)
    out[o - 1] -= 1
    out[d - 1] += 1
    return tuple(out)


def move_vehicle_inverse(m, o, d):
    """Inverse of :func:`move_vehicle`: the state the move started from."""
    return move_vehicle(m, d, o)


def _slice_states(caps, total):
    """All stock vectors with 0 <= m_i <= caps[i] and sum(m) == total, lexicographic."""
    k = len(caps)
    suffix = [0] * (k + 1)
    for i in range(k - 1, -1, -1):
        suffix[i] = suffix[i + 1] + caps[i]
    out = []
    m = [0] * k

    def rec(i, rem):
        if i == k - 1:
            if 0 <= rem <= caps[i]:
                m[i] = rem
                out.append(tuple(m))
            return
        lo = max(0, rem - suffix[i + 1])
        hi = min(caps[i], rem)
        for x in range(lo, hi + 1):
            m[i] = x
            rec(i + 1, rem - x)

    rec(0, total)
    return out


class _JointEngine:
    """State enumeration and per-pair transition tables for one design."""

    def __init__(self, design):
        self.caps = np.asarray(design.c, dtype=np.int64)
        self.total = design.fleet_size
        self.k = design.k
        full_size = 1
        for c in design.c:
            full_size *= c + 1
            if full_size > STATE_SPACE_CAP:
                raise StateSpaceTooLargeError(
                    f"joint state space exceeds {STATE_SPACE_CAP} states; "
                    "use the Monte Carlo estimator instead"
                )
        states = _slice_states(design.c, self.total)
        self.states = np.asarray(states, dtype=np.int64)
        self.n = len(states)
        dims = self.caps + 1
        row_of = np.full(full_size, -1, dtype=np.int64)
        flat = np.ravel_multi_index(self.states.T, dims)
        row_of[flat] = np.arange(self.n)
        self._dims = dims
        self._row_of = row_of
        self._tables = {}

    def state_index(self, m):
        m = tuple(m)
        if len(m) != self.k or any(x < 0 or x > c for x, c in zip(m, self.caps)):
            return -1
        row = self._row_of[np.ravel_multi_index(np.asarray(m), self._dims)]
        return int(row)

    def table(self, o, d):
        """(src_ok, tgt_ok, src_blocked) row index arrays for pair (o, d)."""
        key = (o, d)
        if key not in self._tables:
            oi, di = o - 1, d - 1
            ok = (self.states[:, oi] > 0) & (self.states[:, di] < self.caps[di])
            moved = self.states[ok].copy()
            moved[:, oi] -= 1
            moved[:, di] += 1
            tgt = self._row_of[np.ravel_multi_index(moved.T, self._dims)]
            if np.any(tgt < 0):
                raise InvariantViolationError("vehicle move left the state slice")
            src_ok = np.nonzero(ok)[0]
            src_blocked = np.nonzero(~ok)[0]
            self._tables[key] = (src_ok, tgt, src_blocked)
        return self._tables[key]

    def initial(self, v):
        row = self.state_index(v)
        if row < 0:
            raise ValueError("initial stocks are not a valid state")
        p = np.zeros(self.n)
        p[row] = 1.0
        return p

    def step(self, p, pF, pair_rates, dt):
        """Advance over dt hours with constant per-pair rates."""
        pairs = [(o, d, lam) for (o, d), lam in pair_rates if lam > 0.0]
        lam_tot = sum(lam for _, _, lam in pairs)
        if lam_tot == 0.0 or dt == 0.0:
            return p, pF
        weights = [(self.table(o, d), lam / lam_tot) for o, d, lam in pairs]
        n_sub = max(1, math.ceil(lam_tot * dt / _MAX_RATE_STEP))
        x = lam_tot * (dt / n_sub)
        for _ in range(n_sub):
            cur, cur_f = p, pF
            w = math.exp(-x)
            acc = w * cur
            acc_f = w * cur_f
            wsum = w
            n = 0
            while wsum < 1.0 - _POISSON_TAIL:
                n += 1
                if n > 100_000:
                    raise InvariantViolationError("uniformization series did not converge")
                nxt = np.zeros_like(cur)
                gone = 0.0
                for (src_ok, tgt, src_blocked), wt in weights:
                    nxt += np.bincount(tgt, weights=wt * cur[src_ok], minlength=self.n)
                    if src_blocked.size:
                        gone += wt * cur[src_blocked].sum()
                nxt_f = cur_f + gone
                w *= x / n
                acc += w * nxt
                acc_f += w * nxt_f
                wsum += w
                cur, cur_f = nxt, nxt_f
            rem = 1.0 - wsum
            p = acc + rem * cur
            pF = acc_f + rem * cur_f
        return p, pF

    def rebalance(self, p, pF, o, d):
        """One scheduled relocation: blocked mass fails, the rest shifts."""
        src_ok, tgt, src_blocked = self.table(o, d)
        out = np.zeros_like(p)
        out[tgt] = p[src_ok]
        if src_blocked.size:
            pF += p[src_blocked].sum()
        return out, pF

    def marginal(self, p, station):
        i = station - 1
        return np.bincount(
            self.states[:, i], weights=p, minlength=int(self.caps[i]) + 1
        )


@dataclass
class JointDistribution:
    """Distribution over joint stock states plus absorbed failure mass."""

    p: np.ndarray
    pF: float
    t: float
    engine: _JointEngine = field(repr=False)

    @property
    def states(self):
        return self.engine.states


def initial_joint_distribution(design):
    engine = _JointEngine(design)
    return JointDistribution(engine.initial(design.v), 0.0, 0.0, engine)


def _guard(p, pF, where):
    if p.min() < 0.0:
        if p.min() <= -1e-12:
            raise InvariantViolationError(f"negative probability {p.min():.3e} {where}")
        p = np.maximum(p, 0.0)
    drift = abs(p.sum() + pF - 1.0)
    if drift >= _MASS_TOL:
        raise InvariantViolationError(f"probability mass drifted by {drift:.3e} {where}")
    return p, pF


def _pair_rates_at(model, t):
    return [((o, d), model.intensities[(o, d)].value_at(t)) for (o, d) in model.pairs()]


def joint_step_smooth(dist, model, t0, t1):
    """Advance the joint distribution across an event-free piece [t0, t1]."""
    if abs(dist.t - t0) > 1e-12:
        raise ValueError(f"distribution is at t={dist.t}, piece starts at {t0}")
    if t1 < t0:
        raise ValueError("piece must not run backwards")
    mid = 0.5 * (t0 + t1)
    p, pF = dist.engine.step(dist.p, dist.pF, _pair_rates_at(model, mid), t1 - t0)
    p, pF = _guard(p, pF, f"in piece [{t0}, {t1}]")
    return JointDistribution(p, pF, t1, dist.engine)


def joint_apply_rebalance(dist, o, d):
    """Apply one scheduled relocation from o to d at the current time."""
    p, pF = dist.engine.rebalance(dist.p, dist.pF, o, d)
    return JointDistribution(p, pF, dist.t, dist.engine)


def marginal_distribution(dist, station):
    """P(station holds j vehicles and the system has not failed), j = 0..c_i."""
    return dist.engine.marginal(dist.p, station)


def _schedule(model, plan, T, record_times):
    events = []
    bps = sorted({b for pci in model.intensities.values() for b in pci.breakpoints})
    events += [(t, 0, 0, 0, None) for t in bps if 0.0 < t <= T]
    for t, o, d in plan.instants():
        if t <= T:
            events.append((t, 1, o, d, None))
    if record_times is not None:
        for idx, t in enumerate(record_times):
            if t < 0.0 or t > T + 1e-9:
                raise ValueError("record times must lie within [0, T]")
            events.append((min(float(t), T), 2, 0, 0, idx))
    events.sort(key=lambda e: e[:4])
    return events


def _walk(model, plan, design, T, record_times=None):
    if design.k != model.k:
        raise ValueError(f"design is for {design.k} stations, model has {model.k}")
    if plan is None:
        plan = RebalancingPlan.empty(model.k, model.horizon)
    if plan.k != model.k or plan.horizon != model.horizon:
        raise ValueError("plan and model disagree on stations or horizon")
    if T < 0.0 or T > model.horizon + 1e-9:
        raise ValueError(f"evaluation time {T} outside [0, {model.horizon}]")
    dist = initial_joint_distribution(design)
    snapshots = [None] * (len(record_times) if record_times is not None else 0)
    for ev_t, rank, o, d, payload in _schedule(model, plan, T, record_times):
        if ev_t > dist.t:
            dist = joint_step_smooth(dist, model, dist.t, ev_t)
        if rank == 1:
            dist = joint_apply_rebalance(dist, o, d)
        elif rank == 2:
            snapshots[payload] = JointDistribution(
                dist.p.copy(), dist.pF, ev_t, dist.engine
            )
    if T > dist.t:
        dist = joint_step_smooth(dist, model, dist.t, T)
    return dist, snapshots


def joint_failure_probability(model, plan, design, T):
    """Probability that any request or relocation went unserved by T."""
    dist, _ = _walk(model, plan, design, T)
    return dist.pF


def joint_transient(model, plan, design, times):
    """Joint distribution snapshots at each requested time.

    A snapshot taken exactly at an event time sees the post-event state.
    """
    times = np.asarray(times, dtype=float)
    T = float(times.max()) if times.size else 0.0
    _, snapshots = _walk(model, plan, design, T, record_times=times)
    return snapshots
