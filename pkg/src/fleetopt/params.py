"""Simulator parameters and their JSON representation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solution import N_SITES, N_TYPES, SITES, TYPES, ValidationError

HOURS_PER_WEEK = 7 * 24


@dataclass(frozen=True)
class SimParams:
    """Inputs of the trailer-yard simulator that are not decision variables.

    ``demand_profile[i, l]`` is a 7x24 matrix of mean order arrival rates
    (orders/hour) indexed by (day-of-week, hour-of-day); day 0 of the
    horizon is day-of-week 0.
    """

    demand_profile: np.ndarray  # (2, 3, 7, 24)
    ext_base_rate: np.ndarray  # (2, 3) vehicles/hour
    trip_median: np.ndarray  # (2,) hours
    trip_sigma: np.ndarray  # (2,) log-space std
    defect_prob: float = 0.02
    horizon_days: int = 364
    warmup_days: int = 14
    missed_call_wait: float = 12.0

    def __post_init__(self):
        dp = np.asarray(self.demand_profile, dtype=float)
        if dp.shape != (N_TYPES, N_SITES, 7, 24):
            raise ValidationError("demand_profile", f"expected shape (2, 3, 7, 24), got {dp.shape}")
        ext = np.asarray(self.ext_base_rate, dtype=float)
        if ext.shape != (N_TYPES, N_SITES):
            raise ValidationError("ext_base_rate", f"expected shape (2, 3), got {ext.shape}")
        med = np.asarray(self.trip_median, dtype=float).reshape(-1)
        sig = np.asarray(self.trip_sigma, dtype=float).reshape(-1)
        if med.shape != (N_TYPES,):
            raise ValidationError("trip_duration.median", "expected one value per vehicle type")
        if sig.shape != (N_TYPES,):
            raise ValidationError("trip_duration.sigma", "expected one value per vehicle type")
        if not np.all(np.isfinite(dp)) or np.any(dp < 0):
            raise ValidationError("demand_profile", "rates must be finite and >= 0")
        if not np.all(np.isfinite(ext)) or np.any(ext < 0):
            raise ValidationError("ext_base_rate", "rates must be finite and >= 0")
        if np.any(med <= 0) or not np.all(np.isfinite(med)):
            raise ValidationError("trip_duration.median", "must be > 0")
        if np.any(sig < 0) or not np.all(np.isfinite(sig)):
            raise ValidationError("trip_duration.sigma", "must be >= 0")
        if not 0.0 <= self.defect_prob <= 1.0:
            raise ValidationError("defect_prob", "must lie in [0, 1]")
        if int(self.warmup_days) != self.warmup_days or self.warmup_days < 0:
            raise ValidationError("warmup_days", "must be an integer >= 0")
        if int(self.horizon_days) != self.horizon_days or self.horizon_days <= self.warmup_days:
            raise ValidationError("horizon_days", "must be an integer > warmup_days")
        if not self.missed_call_wait > 0:
            raise ValidationError("missed_call_wait", "must be > 0")
        for name, arr in (("demand_profile", dp), ("ext_base_rate", ext),
                          ("trip_median", med), ("trip_sigma", sig)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "horizon_days", int(self.horizon_days))
        object.__setattr__(self, "warmup_days", int(self.warmup_days))
        object.__setattr__(self, "defect_prob", float(self.defect_prob))
        object.__setattr__(self, "missed_call_wait", float(self.missed_call_wait))

    def replace(self, **changes) -> "SimParams":
        fields = dict(
            demand_profile=self.demand_profile, ext_base_rate=self.ext_base_rate,
            trip_median=self.trip_median, trip_sigma=self.trip_sigma,
            defect_prob=self.defect_prob, horizon_days=self.horizon_days,
            warmup_days=self.warmup_days, missed_call_wait=self.missed_call_wait,
        )
        fields.update(changes)
        return SimParams(**fields)

    def to_dict(self) -> dict:
        return {
            "types": list(TYPES),
            "sites": list(SITES),
            "horizon_days": self.horizon_days,
            "warmup_days": self.warmup_days,
            "missed_call_wait": self.missed_call_wait,
            "defect_prob": self.defect_prob,
            "trip_duration": {
                "median": self.trip_median.tolist(),
                "sigma": self.trip_sigma.tolist(),
            },
            "ext_base_rate": self.ext_base_rate.tolist(),
            "demand_profile": self.demand_profile.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        for key in ("demand_profile", "ext_base_rate", "trip_duration"):
            if key not in d:
                raise ValidationError(key, "missing")
        td = d["trip_duration"]
        for key in ("median", "sigma"):
            if key not in td:
                raise ValidationError(f"trip_duration.{key}", "missing")
        try:
            return cls(
                demand_profile=np.asarray(d["demand_profile"], dtype=float),
                ext_base_rate=np.asarray(d["ext_base_rate"], dtype=float),
                trip_median=np.asarray(td["median"], dtype=float),
                trip_sigma=np.asarray(td["sigma"], dtype=float),
                defect_prob=float(d.get("defect_prob", 0.02)),
                horizon_days=d.get("horizon_days", 364),
                warmup_days=d.get("warmup_days", 14),
                missed_call_wait=float(d.get("missed_call_wait", 12.0)),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError("sim", str(e)) from None


def weekly_profile(mean_rate: float, day_factors, hour_factors) -> np.ndarray:
    """7x24 rate matrix whose average over the week equals ``mean_rate``."""
    day = np.asarray(day_factors, dtype=float)
    hour = np.asarray(hour_factors, dtype=float)
    m = np.outer(day, hour)
    total = m.mean()
    if total == 0:
        return np.zeros((7, 24))
    return mean_rate * m / total
