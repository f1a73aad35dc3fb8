import numpy as np
import pytest

from fleetopt.config import load_config
from fleetopt.params import SimParams
from fleetopt.solution import SolutionVector


@pytest.fixture(scope="session")
def cfg():
    return load_config()


def flat_params(rate=None, ext=0.0, median=1.0, sigma=0.0, defect=0.0, horizon=28, warmup=0):
    """SimParams with a constant rate per (type, site); ``rate`` is a (2, 3) array."""
    rate = np.zeros((2, 3)) if rate is None else np.asarray(rate, dtype=float)
    profile = np.broadcast_to(rate[:, :, None, None], (2, 3, 7, 24)).copy()
    return SimParams(
        demand_profile=profile,
        ext_base_rate=np.full((2, 3), ext) if np.isscalar(ext) else np.asarray(ext, dtype=float),
        trip_median=[median, median],
        trip_sigma=[sigma, sigma],
        defect_prob=defect,
        horizon_days=horizon,
        warmup_days=warmup,
    )


def solution(owned, parking, mult=1.0):
    return SolutionVector(owned=np.asarray(owned), ext_multiplier=np.full((2, 3), mult),
                          parking=np.asarray(parking))
