"""Timing of the compiled and pure-Python simulator kernels."""

from __future__ import annotations

import importlib
import time

import numpy as np

from . import _des_py, des
from .params import SimParams
from .solution import SolutionVector


def available_backends() -> dict:
    kernels = {"python": _des_py.run_des}
    try:
        kernels["cython"] = importlib.import_module("fleetopt._des_core").run_des
    except ImportError:
        pass
    return kernels


def run_benchmark(params: SimParams, n: int = 20, seed: int = 0, x: SolutionVector | None = None) -> list[dict]:
    """Simulate ``n`` seeds with each available kernel; outputs are checked equal."""
    if x is None:
        x = SolutionVector(owned=[[14, 11, 5], [5, 2, 3]], ext_multiplier=np.ones((2, 3)),
                           parking=[25, 18, 9])
    rows, reference = [], None
    for name, kernel in available_backends().items():
        t0 = time.perf_counter()
        outs = [des.simulate(x, params, seed + k, kernel=kernel) for k in range(n)]
        dt = time.perf_counter() - t0
        if reference is None:
            reference = outs
        elif outs != reference:
            raise RuntimeError(f"backend {name} disagrees with python")
        rows.append({"backend": name, "n": n, "seconds": dt, "ms_per_sim": 1000 * dt / n})
    return rows
