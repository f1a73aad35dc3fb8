"""Regenerate src/fleetopt/default_params.json (sim, cost, bounds and GA blocks).

The demand profile is a separable weekday x hour-of-day pattern scaled to a
mean rate per (vehicle type, site). External capacity is 60 % of mean demand.
"""

from pathlib import Path

import numpy as np

from fleetopt.config import dumps
from fleetopt.cost import default_cost_params
from fleetopt.ga import GaConfig
from fleetopt.params import SimParams, weekly_profile
from fleetopt.solution import Bounds

DAY = [1.2, 1.2, 1.2, 1.2, 1.2, 0.6, 0.4]
HOUR = [0.3] * 6 + [1.5] * 16 + [0.3] * 2
MEAN_RATE = np.array([[1.2, 1.0, 0.4],     # trailers: leuven, jupille, hoegaarden
                      [0.3, 0.05, 0.1]])   # tankers
EXT_SHARE = 0.6


def build() -> dict:
    profile = np.array([[weekly_profile(MEAN_RATE[i, l], DAY, HOUR) for l in range(3)]
                        for i in range(2)])
    sim = SimParams(
        demand_profile=np.round(profile, 6),
        ext_base_rate=np.round(EXT_SHARE * MEAN_RATE, 6),
        trip_median=[5.0, 8.0],
        trip_sigma=[0.5, 0.5],
        defect_prob=0.005,
        horizon_days=364,
        warmup_days=14,
        missed_call_wait=12.0,
    )
    bounds = Bounds.from_fields(
        owned_lo=[[8, 6, 2], [2, 0, 1]], owned_hi=[[20, 16, 8], [8, 3, 5]],
        mult_lo=0.6, mult_hi=1.6,
        parking_lo=[15, 10, 4], parking_hi=[35, 25, 14],
    )
    return {
        "format": "fleetopt-config",
        "version": 1,
        "sim": sim.to_dict(),
        "cost": default_cost_params().to_dict(),
        "bounds": bounds.to_dict(),
        "ga": GaConfig(bounds=bounds).to_dict(),
    }


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "fleetopt" / "default_params.json"
    out.write_text(dumps(build()))
    print(out)
