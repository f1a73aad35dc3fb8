"""Genetic algorithm whose simulation calls are gated by the surrogate.

Per generation, every offspring not already in the archive is scored by the
network. It is simulated when the prediction is within ``threshold`` of the
best simulated fitness so far, or, failing that, with probability
``ensure_prob``. Rejected offspring still join the next population, ranked by
their prediction; simulated ones carry their real fitness. At generation end
the archive grows by the new simulations and the network is retrained.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .solution import DIM, INTEGER_GENES, Bounds, SolutionVector, ValidationError
from .surrogate import (
    Hyperparams,
    SurrogateModel,
    TrainingError,
    TrainingSet,
    default_grid,
    fit_surrogate,
    grid_search,
)

log = logging.getLogger(__name__)

INT_STEPS = np.array([-3, -2, -1, 1, 2, 3])


class Decision(enum.Enum):
    SIMULATE = "simulate"
    REJECT = "reject"


@dataclass(frozen=True)
class GaConfig:
    bounds: Bounds
    population_size: int = 100
    ensure_prob: float = 0.01
    threshold: float = 50_000.0
    mutation_prob: float = 0.2
    crossover_prob: float = 0.5
    n_elites: int = 2
    max_generations: int = 10
    max_simulations: int = 300
    initial_random_sims: int = 1000
    crossover: str = "single-point"
    multiplier_sigma: float = 0.05
    regrid_every: int = 5
    cv_folds: int = 10
    holdout_frac: float = 0.2
    hyperparams: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        if not self.population_size >= self.n_elites >= 0:
            raise ValidationError("ga.n_elites", "need population_size >= n_elites >= 0")
        if self.population_size < 1:
            raise ValidationError("ga.population_size", "must be >= 1")
        for name in ("ensure_prob", "mutation_prob", "crossover_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"ga.{name}", "must lie in [0, 1]")
        if not self.threshold >= 0:
            raise ValidationError("ga.threshold", "must be >= 0")
        if self.max_generations < 1:
            raise ValidationError("ga.max_generations", "must be >= 1")
        if self.max_simulations < 0:
            raise ValidationError("ga.max_simulations", "must be >= 0")
        if self.initial_random_sims < 1:
            raise ValidationError("ga.initial_random_sims", "must be >= 1")
        if self.crossover not in ("single-point", "uniform"):
            raise ValidationError("ga.crossover", "must be 'single-point' or 'uniform'")
        if self.regrid_every < 0:
            raise ValidationError("ga.regrid_every", "must be >= 0")
        if not 0.0 <= self.holdout_frac < 1.0:
            raise ValidationError("ga.holdout_frac", "must lie in [0, 1)")

    def replace(self, **changes) -> "GaConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__
             if k not in ("bounds", "hyperparams")}
        d["hyperparams"] = self.hyperparams.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict, bounds: Bounds) -> "GaConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__) - {"bounds"}
        if unknown:
            raise ValidationError(f"ga.{sorted(unknown)[0]}", "unknown GA setting")
        d.pop("bounds", None)
        if "hyperparams" in d:
            d["hyperparams"] = Hyperparams.from_dict(d["hyperparams"])
        return cls(bounds=bounds, **d)


# --------------------------------------------------------------------------
# operators

def initialize_population(pool: TrainingSet, S: int) -> list[SolutionVector]:
    """The ``S`` distinct configurations with the lowest archived fitness."""
    order = np.argsort(pool.y, kind="stable")
    seen, out = set(), []
    for i in order:
        x = pool.solution(int(i))
        if x.key() in seen:
            continue
        seen.add(x.key())
        out.append(x)
        if len(out) == S:
            return out
    raise ValueError(f"pool holds {len(out)} distinct configurations, need {S}")


def filter_decision(f_hat: float, f_star: float, d: float, p_ensure: float, u: float) -> Decision:
    if f_hat <= f_star + d:
        return Decision.SIMULATE
    if u < p_ensure:
        return Decision.SIMULATE
    return Decision.REJECT


def crossover(a: SolutionVector, b: SolutionVector, p_c: float, rng: np.random.Generator,
              kind: str = "single-point") -> tuple[SolutionVector, SolutionVector]:
    """Single-point crossover on the flat gene vector (cut in 1..14) or uniform."""
    u = rng.random()
    if kind == "uniform":
        mask = rng.random(DIM) < 0.5
    else:
        cut = int(rng.integers(1, DIM))
        mask = np.arange(DIM) < cut
    if u >= p_c:
        return a, b
    ga, gb = a.genes, b.genes
    return (SolutionVector.from_genes(np.where(mask, ga, gb)),
            SolutionVector.from_genes(np.where(mask, gb, ga)))


def mutate(x: SolutionVector, p_m: float, bounds: Bounds, rng: np.random.Generator,
           sigma: float = 0.05) -> SolutionVector:
    """Per-gene mutation: integer genes move by +-1..3, multipliers get N(0, sigma) noise.

    Results are clamped to ``bounds``. The draws are made for every gene so
    the stream advances identically whatever ``p_m`` is.
    """
    hit = rng.random(DIM) < p_m
    steps = INT_STEPS[rng.integers(0, INT_STEPS.size, DIM)]
    noise = rng.normal(0.0, sigma, DIM)
    if not hit.any():
        return x
    g = x.genes.copy()
    delta = np.where(INTEGER_GENES, steps, noise)
    g[hit] += delta[hit]
    g = bounds.clip(g)
    return SolutionVector.from_genes(g)


def select_parents(population: list[SolutionVector], values, rng: np.random.Generator,
                   n_pairs: int) -> list[tuple[SolutionVector, SolutionVector]]:
    """Binary tournaments with replacement; the lower value wins, ties go to the first draw."""
    n = len(population)
    if n == 0:
        raise ValueError("empty population")
    values = np.asarray(values, dtype=float)

    def one():
        i, j = rng.integers(0, n, 2)
        return population[i] if values[i] <= values[j] else population[j]

    return [(one(), one()) for _ in range(n_pairs)]


def n_parent_pairs(S: int, n_elites: int) -> int:
    return math.ceil((S - n_elites) / 2)


# --------------------------------------------------------------------------
# the optimisation loop

STREAM_GA, STREAM_ENSURE, STREAM_SIM, STREAM_INIT, STREAM_TRAIN = range(5)


def stream_seed(seed: int, stream: int, *more: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, stream, *more])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def stream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, stream_id]))


@dataclass
class GenerationRecord:
    generation: int
    candidates: int = 0
    cached: int = 0
    threshold_admits: int = 0
    ensure_fires: int = 0
    rejected: int = 0
    budget_skipped: int = 0
    sims: int = 0
    sims_total: int = 0
    f_star: float = math.nan
    gen_best_sim: float = math.nan
    gen_best_pred: float = math.nan

    FIELDS = ("generation", "candidates", "cached", "threshold_admits", "ensure_fires",
              "rejected", "budget_skipped", "sims", "sims_total", "f_star",
              "gen_best_sim", "gen_best_pred")

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class SoRunState:
    population: list
    values: np.ndarray
    simulated: np.ndarray
    archive: TrainingSet
    f_star: float
    x_star: SolutionVector
    sims_used: int = 0
    generation: int = 0


@dataclass
class SoResult:
    best_x: SolutionVector
    best_fitness: float
    history: list[GenerationRecord]
    archive: TrainingSet
    sims_used: int
    generations: int
    n_initial: int
    initial_best: float
    hyperparams: Hyperparams
    sim_seed: int
    model: SurrogateModel | None = None

    def summary(self) -> dict:
        return {
            "best_fitness": self.best_fitness,
            "best_x": self.best_x.to_dict(),
            "best_genes": self.best_x.genes.tolist(),
            "sims_used": self.sims_used,
            "generations": self.generations,
            "n_initial": self.n_initial,
            "initial_best": self.initial_best,
            "sim_seed": self.sim_seed,
            "hyperparams": self.hyperparams.to_dict(),
            "f_star_history": [r.f_star for r in self.history],
        }


def random_archive(bounds: Bounds, n: int, sim, sim_seed: int, sample_seed: int,
                   provenance: str = "random-init") -> TrainingSet:
    """``n`` uniform configurations simulated with the common seed ``sim_seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(sample_seed) & 0xFFFFFFFFFFFFFFFF, STREAM_INIT]))
    xs = [bounds.sample(rng) for _ in range(n)]
    ys = sim.evaluate(xs, sim_seed)
    ts = TrainingSet()
    ts.extend((x, y, sim_seed, provenance) for x, y in zip(xs, ys))
    return ts


def search_seed(archive: TrainingSet) -> int:
    """Seed for grid search derived from the data only, so identical archives
    always select identical hyperparameters."""
    return int(archive.checksum()[:15], 16)


def run_so(cfg: GaConfig, sim, seed: int, archive: TrainingSet | None = None,
           hyperparams: Hyperparams | None = None, sim_seed: int | None = None,
           grid=None, callback: Callable[[SoRunState, GenerationRecord], None] | None = None) -> SoResult:
    """Surrogate-filtered GA.

    ``archive`` supplies the initial random simulations (built from ``seed``
    when omitted); ``hyperparams`` skips the initial grid search. All
    simulations in the run use one common seed (the archive's).
    """
    ga_rng = stream(seed, STREAM_GA)
    ensure_rng = stream(seed, STREAM_ENSURE)

    if archive is None:
        if sim_seed is None:
            sim_seed = stream_seed(seed, STREAM_SIM)
        archive = random_archive(cfg.bounds, cfg.initial_random_sims, sim, sim_seed, seed)
    else:
        archive = archive.copy()
        if sim_seed is None:
            sim_seed = int(archive.seeds[0]) if len(archive) else stream_seed(seed, STREAM_SIM)
    n_initial = len(archive)
    grid = list(default_grid(cfg.hyperparams) if grid is None else grid)

    population = initialize_population(archive, cfg.population_size)
    key_to_fitness = {}
    for i in range(len(archive)):
        if archive.seeds[i] == sim_seed:
            key_to_fitness.setdefault(tuple(archive.X[i].tolist()), float(archive.y[i]))
    values = np.array([key_to_fitness[x.key()] for x in population])
    simulated = np.ones(len(population), dtype=bool)

    i_best = int(np.argmin(archive.y))
    state = SoRunState(population, values, simulated, archive,
                       float(archive.y[i_best]), archive.solution(i_best))
    initial_best = state.f_star
    history: list[GenerationRecord] = []

    if cfg.max_simulations == 0:
        return SoResult(state.x_star, state.f_star, history, archive, 0, 0, n_initial,
                        initial_best, hyperparams or cfg.hyperparams, sim_seed)

    if hyperparams is None:
        hyperparams = grid_search(archive, grid, k=cfg.cv_folds, seed=search_seed(archive))
    model = fit_surrogate(archive, hyperparams, stream_seed(seed, STREAM_TRAIN, 0), cfg.holdout_frac)

    S = cfg.population_size
    for gen in range(1, cfg.max_generations + 1):
        if state.sims_used >= cfg.max_simulations:
            break
        rec = GenerationRecord(gen)

        sim_idx = np.flatnonzero(state.simulated)
        elite_idx = sim_idx[np.argsort(state.values[sim_idx], kind="stable")][:cfg.n_elites]
        elites = [state.population[i] for i in elite_idx]
        elite_vals = [float(state.values[i]) for i in elite_idx]

        n_children = S - len(elites)
        pairs = select_parents(state.population, state.values, ga_rng, math.ceil(n_children / 2))
        children = []
        for a, b in pairs:
            c1, c2 = crossover(a, b, cfg.crossover_prob, ga_rng, cfg.crossover)
            children.append(mutate(c1, cfg.mutation_prob, cfg.bounds, ga_rng, cfg.multiplier_sigma))
            children.append(mutate(c2, cfg.mutation_prob, cfg.bounds, ga_rng, cfg.multiplier_sigma))
        children = children[:n_children]
        rec.candidates = len(children)

        preds = model.predict_many(np.array([c.genes for c in children])) if children else np.empty(0)
        draws = ensure_rng.random(len(children))
        child_vals = np.empty(len(children))
        child_sim = np.zeros(len(children), dtype=bool)
        batch: list[SolutionVector] = []
        batch_pos: dict = {}
        first_seen: dict = {}
        pending = []  # (child index, batch position or None)
        for ci, (x, f_hat, u) in enumerate(zip(children, preds, draws)):
            key = x.key()
            if key in key_to_fitness:
                rec.cached += 1
                child_vals[ci] = key_to_fitness[key]
                child_sim[ci] = True
                continue
            if key in first_seen:
                pending.append((ci, batch_pos.get(key)))
                child_vals[ci] = f_hat
                continue
            first_seen[key] = ci
            child_vals[ci] = f_hat
            decision = filter_decision(float(f_hat), state.f_star, cfg.threshold, cfg.ensure_prob, float(u))
            if decision is Decision.REJECT:
                rec.rejected += 1
                continue
            if f_hat <= state.f_star + cfg.threshold:
                rec.threshold_admits += 1
            else:
                rec.ensure_fires += 1
            if state.sims_used + len(batch) >= cfg.max_simulations:
                rec.budget_skipped += 1
                continue
            batch_pos[key] = len(batch)
            batch.append(x)
            pending.append((ci, batch_pos[key]))

        if batch:
            results = sim.evaluate(batch, sim_seed)
            for x, y in zip(batch, results):
                key_to_fitness[x.key()] = float(y)
            archive.extend((x, y, sim_seed, "so-run") for x, y in zip(batch, results))
            for ci, pos in pending:
                if pos is not None:
                    child_vals[ci] = results[pos]
                    child_sim[ci] = True
            state.sims_used += len(batch)
            rec.gen_best_sim = float(min(results))
        rec.sims = len(batch)
        rec.sims_total = state.sims_used
        if children:
            rec.gen_best_pred = float(preds.min())

        state.population = elites + children
        state.values = np.concatenate([elite_vals, child_vals])
        state.simulated = np.concatenate([np.ones(len(elites), dtype=bool), child_sim])
        i_best = int(np.argmin(archive.y))
        if archive.y[i_best] < state.f_star:
            state.f_star = float(archive.y[i_best])
            state.x_star = archive.solution(i_best)
        rec.f_star = state.f_star
        state.generation = gen
        history.append(rec)
        if callback is not None:
            callback(state, rec)
        log.info("gen %d: sims %d (total %d), rejected %d, f* %.1f",
                 gen, rec.sims, state.sims_used, rec.rejected, state.f_star)

        done = gen == cfg.max_generations or state.sims_used >= cfg.max_simulations
        if not done and batch:
            try:
                if cfg.regrid_every and gen % cfg.regrid_every == 0:
                    hyperparams = grid_search(archive, grid, k=cfg.cv_folds, seed=search_seed(archive))
                model = fit_surrogate(archive, hyperparams, stream_seed(seed, STREAM_TRAIN, gen),
                                      cfg.holdout_frac)
            except TrainingError as e:
                raise TrainingError(e.epoch, f"surrogate retraining failed after generation {gen}") from e

    return SoResult(state.x_star, state.f_star, history, archive, state.sims_used,
                    state.generation, n_initial, initial_best, hyperparams, sim_seed, model)
