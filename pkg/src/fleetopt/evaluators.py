"""Fitness evaluators: the objects the optimiser calls to "simulate" a candidate."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .cost import CostParams, default_cost_params, total_cost
from .des import SimulationOutcome, simulate
from .params import SimParams
from .solution import SolutionVector

_worker_state: dict = {}


def _worker_init(params: SimParams, cost: CostParams):
    _worker_state["params"] = params
    _worker_state["cost"] = cost


def _worker_eval(args):
    genes, seed = args
    x = SolutionVector.from_genes(genes)
    o = simulate(x, _worker_state["params"], seed)
    return total_cost(x, o, _worker_state["cost"])


class FleetEvaluator:
    """Simulate-then-cost, optionally fanned out over worker processes.

    Results are returned in input order and every simulation uses the seed
    supplied by the caller, so the worker count never changes the numbers.
    """

    def __init__(self, params: SimParams, cost: CostParams | None = None, workers: int = 1):
        self.params = params
        self.cost = cost or default_cost_params()
        self.workers = max(1, int(workers))
        self.n_calls = 0
        self._pool = None

    def outcome(self, x: SolutionVector, seed: int) -> SimulationOutcome:
        return simulate(x, self.params, seed)

    def evaluate(self, xs: Sequence[SolutionVector], seed: int) -> list[float]:
        xs = list(xs)
        self.n_calls += len(xs)
        if self.workers == 1 or len(xs) < 2:
            return [total_cost(x, simulate(x, self.params, seed), self.cost) for x in xs]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(
                self.workers, initializer=_worker_init, initargs=(self.params, self.cost))
        chunk = max(1, len(xs) // (4 * self.workers))
        return list(self._pool.map(_worker_eval, [(x.genes, seed) for x in xs], chunksize=chunk))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class AnalyticEvaluator:
    """Wraps a deterministic function of the 15 genes (tests, toy problems)."""

    def __init__(self, fn: Callable[[np.ndarray], float]):
        self.fn = fn
        self.n_calls = 0

    def evaluate(self, xs: Sequence[SolutionVector], seed: int) -> list[float]:
        xs = list(xs)
        self.n_calls += len(xs)
        return [float(self.fn(x.genes)) for x in xs]

    def close(self):
        pass
