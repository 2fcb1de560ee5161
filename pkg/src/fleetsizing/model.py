"""Domain types for station-based vehicle sharing systems.

Time is measured in hours from the start of the planning horizon.
Station labels are dense and 1-based in every public interface and in
every file format; internal arrays are 0-based.
"""

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

_TIME_EPS = 1e-9

#: ordering of simultaneous events: rate breakpoints are processed first,
#: then relocation arrivals, then relocation departures.
KIND_ORDER = {"breakpoint": 0, "arrival": 1, "departure": 2}


class InvariantViolationError(RuntimeError):
    """A numerical invariant (mass conservation, monotone bracket) failed."""


def _float_tuple(xs):
    return tuple(float(x) for x in xs)


@dataclass(frozen=True)
class PiecewiseConstantIntensity:
    """Non-negative piecewise-constant rate (events/hour) on ``[0, horizon_end]``.

    ``breakpoints[j]`` is the start of the j-th interval: the function
    equals ``values[j]`` on ``[breakpoints[j], breakpoints[j+1])`` and
    ``values[-1]`` on ``[breakpoints[-1], horizon_end]``.  The first
    breakpoint must be 0, so the intervals cover the whole horizon.
    Evaluation outside ``[0, horizon_end]`` is an error.
    """

    breakpoints: tuple
    values: tuple
    horizon_end: float

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", _float_tuple(self.breakpoints))
        object.__setattr__(self, "values", _float_tuple(self.values))
        object.__setattr__(self, "horizon_end", float(self.horizon_end))
        bp, vals = self.breakpoints, self.values
        if not bp or len(bp) != len(vals):
            raise ValueError("need exactly one value per interval")
        if bp[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if any(b >= a for b, a in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if not math.isfinite(self.horizon_end) or self.horizon_end <= bp[-1]:
            raise ValueError("horizon_end must exceed the last breakpoint")
        if any(not math.isfinite(v) or v < 0.0 for v in vals):
            raise ValueError("rates must be finite and non-negative")

    @classmethod
    def constant(cls, rate, horizon_end):
        return cls((0.0,), (float(rate),), horizon_end)

    @classmethod
    def zero(cls, horizon_end):
        return cls((0.0,), (0.0,), horizon_end)

    def _check_time(self, t):
        if t < -_TIME_EPS or t > self.horizon_end + _TIME_EPS:
            raise ValueError(
                f"time {t} outside intensity domain [0, {self.horizon_end}]"
            )
        return min(max(t, 0.0), self.horizon_end)

    def value_at(self, t):
        t = self._check_time(t)
        return self.values[bisect_right(self.breakpoints, t) - 1]

    def integral(self, a, b):
        a = self._check_time(a)
        b = self._check_time(b)
        if b < a:
            raise ValueError("integral bounds must satisfy a <= b")
        bp, vals = self.breakpoints, self.values
        ia = bisect_right(bp, a) - 1
        ib = bisect_right(bp, b) - 1
        if ia == ib:
            return vals[ia] * (b - a)
        total = vals[ia] * (bp[ia + 1] - a)
        for j in range(ia + 1, ib):
            total += vals[j] * (bp[j + 1] - bp[j])
        total += vals[ib] * (b - bp[ib])
        return total

    def is_zero(self):
        return all(v == 0.0 for v in self.values)

    def shifted(self, delay):
        """Delay the whole profile by ``delay`` hours within the same horizon.

        The shifted function is 0 on ``[0, delay)`` and whatever falls past
        ``horizon_end`` is discarded.
        """
        delay = float(delay)
        if delay < 0.0:
            raise ValueError("delay must be non-negative")
        if delay == 0.0:
            return self
        if delay >= self.horizon_end:
            return PiecewiseConstantIntensity.zero(self.horizon_end)
        bps = [0.0]
        vals = [0.0]
        for b, v in zip(self.breakpoints, self.values):
            s = b + delay
            if s >= self.horizon_end:
                break
            bps.append(s)
            vals.append(v)
        return PiecewiseConstantIntensity(tuple(bps), tuple(vals), self.horizon_end)

    def __add__(self, other):
        return sum_intensities([self, other], self.horizon_end)


def sum_intensities(items, horizon_end):
    """Pointwise sum of piecewise-constant intensities over a shared horizon."""
    items = list(items)
    horizon_end = float(horizon_end)
    if not items:
        return PiecewiseConstantIntensity.zero(horizon_end)
    for it in items:
        if it.horizon_end != horizon_end:
            raise ValueError("cannot sum intensities with different horizons")
    merged = sorted({b for it in items for b in it.breakpoints})
    values = tuple(sum(it.value_at(s) for it in items) for s in merged)
    return PiecewiseConstantIntensity(tuple(merged), values, horizon_end)


def _check_station(label, k, what="station"):
    if not isinstance(label, int) or isinstance(label, bool):
        raise ValueError(f"{what} label must be an integer, got {label!r}")
    if not 1 <= label <= k:
        raise ValueError(f"{what} label {label} outside 1..{k}")
    return label


@dataclass(frozen=True, eq=False)
class DemandModel:
    """Time-varying demand between k stations.

    ``intensities`` maps ordered station pairs (o, d), o != d, 1-based, to
    the rental request rate from o to d; absent pairs have zero demand.
    ``eta[o-1][d-1]`` is the travel time in hours from o to d.
    """

    k: int
    intensities: dict
    eta: tuple
    horizon: float

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("need at least one station")
        object.__setattr__(self, "horizon", float(self.horizon))
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be a positive finite number of hours")
        cleaned = {}
        for (o, d), pci in dict(self.intensities).items():
            _check_station(o, self.k, "origin")
            _check_station(d, self.k, "destination")
            if o == d:
                raise ValueError("demand between a station and itself is not allowed")
            if pci.horizon_end != self.horizon:
                raise ValueError("all intensities must share the model horizon")
            if not pci.is_zero():
                cleaned[(o, d)] = pci
        object.__setattr__(self, "intensities", cleaned)
        eta = tuple(_float_tuple(row) for row in self.eta)
        if len(eta) != self.k or any(len(row) != self.k for row in eta):
            raise ValueError("eta must be a k x k matrix of hours")
        for i, row in enumerate(eta):
            for j, e in enumerate(row):
                if not math.isfinite(e) or e < 0.0:
                    raise ValueError("travel times must be finite and non-negative")
                if i == j and e != 0.0:
                    raise ValueError("diagonal travel times must be zero")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "_zero", PiecewiseConstantIntensity.zero(self.horizon))

    def rate(self, o, d):
        _check_station(o, self.k, "origin")
        _check_station(d, self.k, "destination")
        return self.intensities.get((o, d), self._zero)

    def eta_hours(self, o, d):
        return self.eta[o - 1][d - 1]

    def pairs(self):
        return sorted(self.intensities)


@dataclass(frozen=True, eq=False)
class RebalancingPlan:
    """Scheduled single-vehicle relocations: (o, d) -> sorted departure instants."""

    k: int
    horizon: float
    rho: dict

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("need at least one station")
        object.__setattr__(self, "horizon", float(self.horizon))
        cleaned = {}
        for (o, d), times in dict(self.rho).items():
            _check_station(o, self.k, "origin")
            _check_station(d, self.k, "destination")
            if o == d:
                raise ValueError("relocating a vehicle to its own station is a no-op")
            ts = _float_tuple(times)
            if any(b >= a for b, a in zip(ts, ts[1:])):
                raise ValueError(f"relocation instants for {(o, d)} must be strictly increasing")
            if ts and (ts[0] <= 0.0 or ts[-1] >= self.horizon):
                raise ValueError("relocation instants must lie strictly inside (0, horizon)")
            if ts:
                cleaned[(o, d)] = ts
        object.__setattr__(self, "rho", cleaned)

    @classmethod
    def empty(cls, k, horizon):
        return cls(k, horizon, {})

    def instants(self):
        """All relocations as (t, o, d), ordered by time then origin then destination."""
        out = [(t, o, d) for (o, d), ts in self.rho.items() for t in ts]
        out.sort()
        return out

    def count(self):
        return sum(len(ts) for ts in self.rho.values())


@dataclass(frozen=True)
class SystemDesign:
    """Per-station initial stock v and dock capacity c (0-based tuples)."""

    v: tuple
    c: tuple

    def __post_init__(self):
        v = tuple(int(x) for x in self.v)
        c = tuple(int(x) for x in self.c)
        if len(v) != len(c) or not v:
            raise ValueError("v and c must be non-empty and the same length")
        for vi, ci in zip(v, c):
            if vi < 0 or ci < 0:
                raise ValueError("stock and capacity must be non-negative")
            if vi > ci:
                raise ValueError("initial stock cannot exceed capacity")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "c", c)

    @property
    def k(self):
        return len(self.v)

    @property
    def fleet_size(self):
        return sum(self.v)

    @property
    def total_capacity(self):
        return sum(self.c)


@dataclass(frozen=True, eq=False)
class StationFlowProfile:
    """Aggregate arrival/departure streams seen by one station.

    ``lambda_a``/``lambda_d`` are the total vehicle arrival and rental
    departure rates; ``rho_a``/``rho_d`` are the instants of scheduled
    relocation arrivals/departures (duplicates mean several vehicles).
    """

    lambda_a: PiecewiseConstantIntensity
    lambda_d: PiecewiseConstantIntensity
    rho_a: tuple
    rho_d: tuple

    def __post_init__(self):
        if self.lambda_a.horizon_end != self.lambda_d.horizon_end:
            raise ValueError("arrival and departure intensities must share a horizon")
        horizon = self.lambda_a.horizon_end
        for name in ("rho_a", "rho_d"):
            ts = _float_tuple(getattr(self, name))
            if any(b > a for b, a in zip(ts, ts[1:])):
                raise ValueError(f"{name} must be sorted")
            if ts and (ts[0] < 0.0 or ts[-1] > horizon):
                raise ValueError(f"{name} instants must lie within [0, horizon]")
            object.__setattr__(self, name, ts)

    @property
    def horizon(self):
        return self.lambda_a.horizon_end


def aggregate_station_flows(model, plan, station, with_delay=False):
    """Fold a demand model and relocation plan into one station's flow profile.

    With ``with_delay`` the arrival stream of station i is the sum of the
    origin streams delayed by the pairwise travel times (vehicles arrive
    eta hours after they depart); otherwise transfers are instantaneous.
    Scheduled relocation arrivals shift the same way; shifted instants
    falling past the horizon are discarded.
    """
    if plan is None:
        plan = RebalancingPlan.empty(model.k, model.horizon)
    _check_station(station, model.k)
    if plan.k != model.k:
        raise ValueError(f"plan is for {plan.k} stations, model has {model.k}")
    if plan.horizon != model.horizon:
        raise ValueError(
            f"inconsistent horizons: model {model.horizon}, plan {plan.horizon}"
        )
    i = station
    dep_items = [pci for (o, d), pci in model.intensities.items() if o == i]
    if with_delay:
        arr_items = [
            pci.shifted(model.eta_hours(o, i))
            for (o, d), pci in model.intensities.items()
            if d == i
        ]
    else:
        arr_items = [pci for (o, d), pci in model.intensities.items() if d == i]
    lambda_d = sum_intensities(dep_items, model.horizon)
    lambda_a = sum_intensities(arr_items, model.horizon)
    rho_d = sorted(t for (o, d), ts in plan.rho.items() if o == i for t in ts)
    if with_delay:
        rho_a = sorted(
            t + model.eta_hours(o, i)
            for (o, d), ts in plan.rho.items()
            if d == i
            for t in ts
            if t + model.eta_hours(o, i) <= model.horizon
        )
    else:
        rho_a = sorted(t for (o, d), ts in plan.rho.items() if d == i for t in ts)
    return StationFlowProfile(lambda_a, lambda_d, tuple(rho_a), tuple(rho_d))


def merged_event_timeline(profile):
    """All instants where a station's smooth evolution is interrupted.

    Returns (time, kind) pairs sorted by time; simultaneous events are
    ordered breakpoint, then arrival, then departure.  Interior rate
    breakpoints only: the horizon endpoints are not events.
    """
    bps = sorted(set(profile.lambda_a.breakpoints) | set(profile.lambda_d.breakpoints))
    events = [(t, "breakpoint") for t in bps if t > 0.0]
    events += [(t, "arrival") for t in profile.rho_a]
    events += [(t, "departure") for t in profile.rho_d]
    events.sort(key=lambda e: (e[0], KIND_ORDER[e[1]]))
    return events


# --- JSON wire format ------------------------------------------------------
#
# One document shape carries demand models and relocation plans:
#   {"k": int, "horizon_hours": float,
#    "lambda": [{"o": int, "d": int, "breakpoints": [...], "values": [...]}, ...],
#    "eta": [[hours]],
#    "rho": [{"o": int, "d": int, "times": [...]}, ...]}
# A model file uses k/horizon_hours/lambda/eta, a plan file k/horizon_hours/rho;
# unknown keys are ignored so both can live in one file.


def model_to_json(model):
    return {
        "k": model.k,
        "horizon_hours": model.horizon,
        "lambda": [
            {
                "o": o,
                "d": d,
                "breakpoints": list(model.intensities[(o, d)].breakpoints),
                "values": list(model.intensities[(o, d)].values),
            }
            for (o, d) in model.pairs()
        ],
        "eta": [list(row) for row in model.eta],
    }


def model_from_json(doc):
    try:
        k = int(doc["k"])
        horizon = float(doc["horizon_hours"])
        entries = doc["lambda"]
        eta = doc["eta"]
    except KeyError as exc:
        raise ValueError(f"demand model document is missing key {exc}") from exc
    intensities = {}
    for entry in entries:
        key = (int(entry["o"]), int(entry["d"]))
        if key in intensities:
            raise ValueError(f"duplicate intensity entry for pair {key}")
        intensities[key] = PiecewiseConstantIntensity(
            tuple(entry["breakpoints"]), tuple(entry["values"]), horizon
        )
    return DemandModel(k, intensities, tuple(tuple(row) for row in eta), horizon)


def plan_to_json(plan):
    return {
        "k": plan.k,
        "horizon_hours": plan.horizon,
        "rho": [
            {"o": o, "d": d, "times": list(ts)}
            for (o, d), ts in sorted(plan.rho.items())
        ],
    }


def plan_from_json(doc):
    try:
        k = int(doc["k"])
        horizon = float(doc["horizon_hours"])
        entries = doc["rho"]
    except KeyError as exc:
        raise ValueError(f"relocation plan document is missing key {exc}") from exc
    rho = {}
    for entry in entries:
        key = (int(entry["o"]), int(entry["d"]))
        if key in rho:
            raise ValueError(f"duplicate plan entry for pair {key}")
        rho[key] = tuple(entry["times"])
    return RebalancingPlan(k, horizon, rho)


def _load_doc(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _save_doc(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    return model_from_json(_load_doc(path))


def save_model(model, path):
    _save_doc(model_to_json(model), path)


def load_plan(path):
    return plan_from_json(_load_doc(path))


def save_plan(plan, path):
    _save_doc(plan_to_json(plan), path)
