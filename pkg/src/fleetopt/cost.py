"""Fleet cost objective: fixed fleet and parking costs plus outcome-driven terms."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .des import SimulationOutcome
from .solution import SolutionVector, ValidationError


@dataclass(frozen=True)
class CostParams:
    c_own: tuple[float, float] = (2050.0, 1500.0)
    c_ext: tuple[float, float] = (40.0, 40.0)
    c_park: float = 1500.0
    c_defect: float = 500.0
    c_missed_call: float = 200.0
    c_park_full: float = 200.0

    def __post_init__(self):
        object.__setattr__(self, "c_own", tuple(float(v) for v in self.c_own))
        object.__setattr__(self, "c_ext", tuple(float(v) for v in self.c_ext))
        for name in ("c_own", "c_ext"):
            vals = getattr(self, name)
            if len(vals) != 2:
                raise ValidationError(name, "expected one value per vehicle type")
            if any(not np.isfinite(v) or v < 0 for v in vals):
                raise ValidationError(name, "must be finite and >= 0")
        for name in ("c_park", "c_defect", "c_missed_call", "c_park_full"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ValidationError(name, "must be finite and >= 0")
            object.__setattr__(self, name, v)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c_own"] = list(self.c_own)
        d["c_ext"] = list(self.c_ext)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CostParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"cost.{sorted(unknown)[0]}", "unknown cost parameter")
        return cls(**d)


def default_cost_params() -> CostParams:
    return CostParams()


def _counts(name, values, n):
    vals = tuple(values)
    if len(vals) != n:
        raise ValidationError(name, f"expected {n} values")
    if any(v < 0 for v in vals):
        raise ValidationError(name, "counts must be >= 0")
    return vals


def penalty_cost(missed_calls, full_park, c: CostParams) -> float:
    """Soft-constraint penalty for late orders and full-parking occurrences."""
    mc = _counts("missed_calls", missed_calls, 2)
    fp = _counts("full_park_events", full_park, 2)
    return float(sum(m * c.c_missed_call for m in mc) + sum(f * c.c_park_full for f in fp))


def total_cost(x: SolutionVector, o: SimulationOutcome, c: CostParams) -> float:
    owned_per_type = x.owned.sum(axis=1)
    ext = _counts("ext_shipments", o.ext_shipments, 2)
    if o.defects < 0:
        raise ValidationError("defects", "must be >= 0")
    fleet = sum(float(owned_per_type[i]) * c.c_own[i] + ext[i] * c.c_ext[i] for i in range(2))
    parking = float(x.parking.sum()) * c.c_park
    return float(fleet + parking + o.defects * c.c_defect
                 + penalty_cost(o.missed_calls, o.full_park_events, c))
