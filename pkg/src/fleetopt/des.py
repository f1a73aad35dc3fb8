"""Discrete-event simulator of a three-site, two-vehicle-type trailer yard.

Model summary
-------------
* Orders for vehicle type ``i`` arrive at site ``l`` as a non-homogeneous
  Poisson process with a weekly 7x24 rate profile. Each (type, site) pair has
  its own FIFO order queue.
* An order is linked to an idle owned vehicle of its type at its site if one
  exists. Otherwise it waits for the first of: an owned vehicle returning to
  the site, a diverted owned vehicle getting a parking spot, or an external
  vehicle arriving. External vehicles arrive as a homogeneous Poisson process
  with rate ``ext_base_rate * multiplier``; they take one waiting order (if
  any) and leave, never parking.
* Owned trips last a log-normal time. On return a Bernoulli draw decides
  whether the trip produced a defect. The vehicle then takes the next waiting
  order or parks. If all spots at the site are taken, a full-park event is
  recorded and the vehicle is diverted: it leaves the pool until a spot frees
  (FIFO over diverted vehicles of both types).
* An order waiting more than ``missed_call_wait`` hours counts once as a missed
  call; it stays in the queue.
* Counts only include events whose time falls after the warm-up period; the
  moment of a missed call is ``arrival + missed_call_wait``.

All randomness is drawn up front from per-(type, site) streams derived from
the seed, so configurations simulated with the same seed see the same orders,
trip durations and defect draws (common random numbers). External arrivals
are produced by time-scaling a unit-rate process, so changing a multiplier
stretches the same arrival pattern rather than redrawing it.

Initial state: at time zero vehicles of a site are parked in round-robin
order over the two types (trailer first) until the site is full; the rest
start diverted in that same order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .params import HOURS_PER_WEEK, SimParams
from .solution import N_SITES, N_TYPES, SolutionVector, ValidationError

N_CELLS = N_TYPES * N_SITES

_forced = os.environ.get("FLEETOPT_PURE_PYTHON", "").lower() in ("1", "true", "yes")
if _forced:
    from ._des_py import run_des as _kernel
    BACKEND = "python"
else:
    try:
        from ._des_core import run_des as _kernel
        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._des_py import run_des as _kernel
        BACKEND = "python"


@dataclass(frozen=True)
class SimulationOutcome:
    ext_shipments: tuple[int, int]
    defects: int
    missed_calls: tuple[int, int]
    full_park_events: tuple[int, int]
    orders_served: tuple[int, int]
    orders_generated: tuple[int, int] = (0, 0)
    orders_waiting: tuple[int, int] = (0, 0)

    @classmethod
    def zeros(cls) -> "SimulationOutcome":
        return cls((0, 0), 0, (0, 0), (0, 0), (0, 0))

    def to_dict(self) -> dict:
        return {
            "ext_shipments": list(self.ext_shipments),
            "defects": self.defects,
            "missed_calls": list(self.missed_calls),
            "full_park_events": list(self.full_park_events),
            "orders_served": list(self.orders_served),
            "orders_generated": list(self.orders_generated),
            "orders_waiting": list(self.orders_waiting),
        }


def external_arrival_rate(base: float, multiplier: float) -> float:
    if base < 0:
        raise ValidationError("ext_base_rate", "must be >= 0")
    if multiplier <= 0:
        raise ValidationError("ext_multiplier", "must be > 0")
    return base * multiplier


def generate_order_stream(profile, horizon_days: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted order arrival times (hours) for a weekly 7x24 rate profile.

    Per-hour sampling: the count in each hour of the horizon is Poisson with
    that hour-of-week's rate, and the arrivals are uniform within the hour.
    """
    rates = np.asarray(profile, dtype=float)
    if rates.shape != (7, 24):
        raise ValidationError("demand_profile", f"expected a 7x24 matrix, got {rates.shape}")
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise ValidationError("demand_profile", "rates must be finite and >= 0")
    n_hours = int(horizon_days) * 24
    if n_hours <= 0 or not rates.any():
        return np.empty(0)
    weekly = rates.reshape(HOURS_PER_WEEK)
    hourly = np.resize(weekly, n_hours)
    counts = rng.poisson(hourly)
    total = int(counts.sum())
    starts = np.repeat(np.arange(n_hours, dtype=float), counts)
    return np.sort(starts + rng.random(total))


def unit_rate_arrivals(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson arrivals on [0, horizon) by scaling a unit-rate process."""
    if rate <= 0:
        return np.empty(0)
    target = rate * horizon
    chunk = int(target + 5 * np.sqrt(target) + 16)
    cum = np.cumsum(rng.exponential(size=chunk))
    while cum[-1] < target:
        more = np.cumsum(rng.exponential(size=chunk)) + cum[-1]
        cum = np.concatenate([cum, more])
    return cum[cum < target] / rate


def _initial_yard(owned: np.ndarray, parking: np.ndarray):
    idle = np.zeros(N_CELLS, dtype=np.int64)
    seqs = []
    for s in range(N_SITES):
        a, b = int(owned[0, s]), int(owned[1, s])
        cap = int(parking[s])
        m = min(a, b)
        # round-robin: (0,1) * m, then the larger type's remainder
        order = np.concatenate([
            np.tile(np.array([0, 1], dtype=np.int64), m),
            np.full(a - m, 0, dtype=np.int64),
            np.full(b - m, 1, dtype=np.int64),
        ])
        in_park = order[:cap]
        idle[s] = int(np.count_nonzero(in_park == 0))
        idle[3 + s] = int(np.count_nonzero(in_park == 1))
        seqs.append(order[cap:])
    div_off = np.zeros(N_SITES + 1, dtype=np.int64)
    div_off[1:] = np.cumsum([len(q) for q in seqs])
    div_seq = np.concatenate(seqs) if seqs else np.empty(0, dtype=np.int64)
    parked = np.array([idle[s] + idle[3 + s] for s in range(N_SITES)], dtype=np.int64)
    return idle, parked, div_seq.astype(np.int64), div_off


def _streams(seed: int):
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    children = ss.spawn(4 * N_CELLS)
    return [np.random.default_rng(c) for c in children]


def simulate(x: SolutionVector, p: SimParams, seed: int, kernel=None) -> SimulationOutcome:
    """One replication; ``kernel`` overrides the event-loop backend (benchmarks, tests)."""
    if not isinstance(x, SolutionVector):
        raise ValidationError("x", "expected a SolutionVector")
    if not isinstance(p, SimParams):
        raise ValidationError("params", "expected SimParams")
    horizon = p.horizon_days * 24.0
    warmup = p.warmup_days * 24.0
    rngs = _streams(seed)

    order_times, order_durs, order_us, ev_t, ev_c = [], [], [], [], []
    for c in range(N_CELLS):
        i, s = divmod(c, N_SITES)
        r_order, r_dur, r_def, r_ext = rngs[4 * c: 4 * c + 4]
        t = generate_order_stream(p.demand_profile[i, s], p.horizon_days, r_order)
        n = t.size
        order_times.append(t)
        order_durs.append(p.trip_median[i] * np.exp(p.trip_sigma[i] * r_dur.standard_normal(n)))
        order_us.append(r_def.random(n))
        ev_t.append(t)
        ev_c.append(np.full(n, c, dtype=np.int64))
        rate = external_arrival_rate(p.ext_base_rate[i, s], x.ext_multiplier[i, s])
        e = unit_rate_arrivals(rate, horizon, r_ext)
        ev_t.append(e)
        ev_c.append(np.full(e.size, N_CELLS + c, dtype=np.int64))

    offsets = np.zeros(N_CELLS + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([t.size for t in order_times])
    ev_time = np.concatenate(ev_t)
    ev_code = np.concatenate(ev_c)
    perm = np.argsort(ev_time, kind="stable")
    ev_time = np.ascontiguousarray(ev_time[perm])
    ev_code = np.ascontiguousarray(ev_code[perm])

    idle, parked, div_seq, div_off = _initial_yard(x.owned, x.parking)
    out = (kernel or _kernel)(
        ev_time, ev_code,
        np.concatenate(order_times), np.concatenate(order_durs), np.concatenate(order_us),
        offsets, idle, parked, np.ascontiguousarray(x.parking, dtype=np.int64),
        div_seq, div_off,
        p.defect_prob, warmup, horizon, p.missed_call_wait,
    )
    out = [int(v) for v in out]
    return SimulationOutcome(
        ext_shipments=(out[0], out[1]),
        defects=out[2],
        missed_calls=(out[3], out[4]),
        full_park_events=(out[5], out[6]),
        orders_served=(out[7], out[8]),
        orders_generated=(out[9], out[10]),
        orders_waiting=(out[11], out[12]),
    )
