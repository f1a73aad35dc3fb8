"""Experiment drivers: datasets, parameter studies, baselines, sensitivity."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .ga import (
    GaConfig,
    crossover,
    initialize_population,
    mutate,
    random_archive,
    run_so,
    search_seed,
    select_parents,
    stream,
    stream_seed,
    STREAM_GA,
    STREAM_SIM,
    STREAM_TRAIN,
)
from .solution import INTEGER_GENES, Bounds, SolutionVector
from .surrogate import Hyperparams, TrainingSet, default_grid, fit_surrogate, grid_search

STUDY_PARAMETERS = ("population_size", "threshold", "ensure_prob", "mutation_prob")

# Value lists studied for each parameter (money values are in the same units
# as the cost constants).
STUDY_VALUES = {
    "population_size": [100, 500, 1000],
    "threshold": [0, 50_000, 100_000, 150_000],
    "ensure_prob": [0.0, 0.01, 0.1],
    "mutation_prob": [0.1, 0.2, 0.3],
}


def base_study_config(bounds: Bounds) -> GaConfig:
    """Base case shared by all parameter studies (note the larger threshold)."""
    return GaConfig(bounds=bounds, population_size=100, ensure_prob=0.01, threshold=100_000,
                    mutation_prob=0.2, crossover_prob=0.5, n_elites=2)


def build_training_pool(n: int, sim, bounds: Bounds, seed: int, sim_seed: int | None = None) -> TrainingSet:
    """``n`` uniformly sampled configurations, simulated and tagged random-init."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if sim_seed is None:
        sim_seed = stream_seed(seed, STREAM_SIM)
    return random_archive(bounds, n, sim, sim_seed, seed)


# --------------------------------------------------------------------------
# parameter studies

@dataclass(frozen=True)
class StudySpec:
    parameter: str
    values: tuple
    base: GaConfig
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    archive_seed: int = 0

    def __post_init__(self):
        if self.parameter not in STUDY_PARAMETERS:
            raise ValueError(f"parameter must be one of {STUDY_PARAMETERS}")
        if not self.values:
            raise ValueError("values must be nonempty")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        for v in self.values:
            self.config_for(v)

    def config_for(self, value) -> GaConfig:
        if self.parameter == "population_size":
            value = int(value)
        else:
            value = float(value)
        return self.base.replace(**{self.parameter: value})


@dataclass
class StudyRow:
    parameter: str
    value: float
    seed: int
    best_fitness: float
    evaluations: int
    generations: int
    initial_best: float

    FIELDS = ("parameter", "value", "seed", "best_fitness", "evaluations", "generations",
              "initial_best")


@dataclass
class StudyResult:
    spec: StudySpec
    rows: list[StudyRow]
    archive_checksum: str
    hyperparams: Hyperparams
    histories: dict = field(default_factory=dict)

    def aggregates(self) -> list[dict]:
        out = []
        for v in self.spec.values:
            sel = [r for r in self.rows if r.value == v]
            fit = np.array([r.best_fitness for r in sel])
            ev = np.array([r.evaluations for r in sel])
            out.append({
                "value": v,
                "median_best_fitness": float(np.median(fit)),
                "min_best_fitness": float(fit.min()),
                "median_evaluations": float(np.median(ev)),
                "min_evaluations": int(ev.min()),
                "max_evaluations": int(ev.max()),
            })
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(StudyRow.FIELDS)
            for r in self.rows:
                w.writerow([r.parameter, _num(r.value), r.seed, _num(r.best_fitness),
                            r.evaluations, r.generations, _num(r.initial_best)])

    def summary(self) -> dict:
        return {
            "parameter": self.spec.parameter,
            "values": list(self.spec.values),
            "seeds": list(self.spec.seeds),
            "archive_checksum": self.archive_checksum,
            "hyperparams": self.hyperparams.to_dict(),
            "aggregates": self.aggregates(),
        }


def _num(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def run_parameter_study(spec: StudySpec, sim, archive: TrainingSet | None = None,
                        hyperparams: Hyperparams | None = None, grid=None) -> StudyResult:
    """One optimisation run per (value, seed), all starting from the same archive.

    The initial grid search depends only on the archive, so it is done once
    and shared by every arm.
    """
    if archive is None:
        archive = build_training_pool(spec.base.initial_random_sims, sim, spec.base.bounds,
                                      spec.archive_seed)
    grid = list(default_grid(spec.base.hyperparams) if grid is None else grid)
    if hyperparams is None:
        hyperparams = grid_search(archive, grid, k=spec.base.cv_folds, seed=search_seed(archive))
    rows, histories = [], {}
    for v in spec.values:
        cfg = spec.config_for(v)
        for s in spec.seeds:
            res = run_so(cfg, sim, s, archive=archive, hyperparams=hyperparams, grid=grid)
            rows.append(StudyRow(spec.parameter, v, s, res.best_fitness, res.sims_used,
                                 res.generations, res.initial_best))
            histories[(v, s)] = res.history
    return StudyResult(spec, rows, archive.checksum(), hyperparams, histories)


# --------------------------------------------------------------------------
# baselines

@dataclass
class RandomBaselineResult:
    budgets: list[int]
    best: dict
    trajectory: np.ndarray  # best-so-far after each evaluation
    sim_seed: int


def run_random_baseline(budgets, sim, bounds: Bounds, seed: int, sim_seed: int) -> RandomBaselineResult:
    """Pure random search; budgets share one sample stream, so they are nested."""
    budgets = sorted(int(b) for b in budgets)
    if not budgets or budgets[0] < 1:
        raise ValueError("budgets must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 7]))
    xs = [bounds.sample(rng) for _ in range(budgets[-1])]
    ys = np.asarray(sim.evaluate(xs, sim_seed), dtype=float)
    traj = np.minimum.accumulate(ys)
    return RandomBaselineResult(budgets, {b: float(traj[b - 1]) for b in budgets}, traj, sim_seed)


@dataclass
class GlobalSurrogateResult:
    n_train: int
    best_x: SolutionVector
    best_fitness: float
    best_predicted: float
    during_run_sims: int
    final_evaluations: int
    pool_best: float
    hyperparams: Hyperparams

    def summary(self) -> dict:
        return {
            "n_train": self.n_train,
            "best_fitness": self.best_fitness,
            "best_predicted": self.best_predicted,
            "best_genes": self.best_x.genes.tolist(),
            "during_run_sims": self.during_run_sims,
            "final_evaluations": self.final_evaluations,
            "pool_best": self.pool_best,
            "hyperparams": self.hyperparams.to_dict(),
        }


def run_global_surrogate(n_train: int, ga: GaConfig, sim, seed: int, pool: TrainingSet | None = None,
                         hyperparams: Hyperparams | None = None, grid=None,
                         final_evals: int | None = None) -> GlobalSurrogateResult:
    """GA driven only by a network trained once; simulations happen only at the end.

    The final population's distinct members are simulated, best prediction
    first, up to ``final_evals`` (default: population size).
    """
    if n_train < ga.population_size:
        raise ValueError("n_train must be >= population size")
    if pool is None:
        pool = build_training_pool(n_train, sim, ga.bounds, seed)
    elif len(pool) < n_train:
        raise ValueError(f"pool has {len(pool)} rows, need {n_train}")
    data = pool.head(n_train)
    sim_seed = int(data.seeds[0])
    grid = list(default_grid(ga.hyperparams) if grid is None else grid)
    if hyperparams is None:
        hyperparams = grid_search(data, grid, k=ga.cv_folds, seed=search_seed(data))
    model = fit_surrogate(data, hyperparams, stream_seed(seed, STREAM_TRAIN, 0), ga.holdout_frac)

    ga_rng = stream(seed, STREAM_GA)
    calls_before = sim.n_calls
    population = initialize_population(data, ga.population_size)
    values = model.predict_many(np.array([x.genes for x in population]))
    S = ga.population_size
    for _ in range(ga.max_generations):
        order = np.argsort(values, kind="stable")[:ga.n_elites]
        elites = [population[i] for i in order]
        elite_vals = values[order]
        n_children = S - len(elites)
        pairs = select_parents(population, values, ga_rng, math.ceil(n_children / 2))
        children = []
        for a, b in pairs:
            c1, c2 = crossover(a, b, ga.crossover_prob, ga_rng, ga.crossover)
            children.append(mutate(c1, ga.mutation_prob, ga.bounds, ga_rng, ga.multiplier_sigma))
            children.append(mutate(c2, ga.mutation_prob, ga.bounds, ga_rng, ga.multiplier_sigma))
        children = children[:n_children]
        child_vals = model.predict_many(np.array([c.genes for c in children])) if children else np.empty(0)
        population = elites + children
        values = np.concatenate([elite_vals, child_vals])
    during = sim.n_calls - calls_before

    limit = S if final_evals is None else min(int(final_evals), S)
    seen, finals, final_preds = set(), [], []
    for i in np.argsort(values, kind="stable"):
        x = population[int(i)]
        if x.key() in seen:
            continue
        seen.add(x.key())
        finals.append(x)
        final_preds.append(float(values[int(i)]))
        if len(finals) == limit:
            break
    ys = sim.evaluate(finals, sim_seed)
    j = int(np.argmin(ys))
    return GlobalSurrogateResult(n_train, finals[j], float(ys[j]), final_preds[0], during,
                                 len(finals), float(data.y.min()), hyperparams)


COMPARISON_FIELDS = ("method", "n_train", "seed", "best_fitness", "during_run_sims",
                     "final_evaluations")


def comparison_rows(seed: int, so, n_initial: int, globals_) -> list[list]:
    """Rows of the SO vs. global-surrogate table for one seed."""
    rows = [["filtered-so", n_initial, seed, _num(so.best_fitness), so.sims_used, 0]]
    for g in globals_:
        rows.append(["global-surrogate", g.n_train, seed, _num(g.best_fitness), g.during_run_sims,
                     g.final_evaluations])
    return rows


def write_comparison(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_FIELDS)
        w.writerows(rows)


# --------------------------------------------------------------------------
# sensitivity

@dataclass
class SensitivityResult:
    base_fitness: float
    candidates: list[SolutionVector]
    changes: list[tuple[int, float]]  # (gene index, delta)
    fitness: np.ndarray
    skipped: int

    @property
    def n(self) -> int:
        return len(self.candidates)

    def summary(self) -> dict:
        f = self.fitness
        return {
            "base_fitness": self.base_fitness,
            "n_solutions": self.n,
            "skipped_infeasible": self.skipped,
            "min": float(f.min()) if f.size else math.nan,
            "max": float(f.max()) if f.size else math.nan,
            "mean": float(f.mean()) if f.size else math.nan,
            "std": float(f.std(ddof=1)) if f.size > 1 else math.nan,
            "improvement_found": bool(f.size and f.min() < self.base_fitness),
        }


def sensitivity_candidates(best_x: SolutionVector, bounds: Bounds, deltas=(-2, -1, 1, 2),
                           multiplier_unit: float = 0.01):
    """One-gene perturbations of ``best_x``; out-of-bounds moves are skipped."""
    base = best_x.genes
    seen = {best_x.key()}
    out, changes, skipped = [], [], 0
    for j in range(base.size):
        unit = 1.0 if INTEGER_GENES[j] else multiplier_unit
        for d in deltas:
            g = base.copy()
            g[j] = base[j] + d * unit
            if not (bounds.lo[j] <= g[j] <= bounds.hi[j]):
                skipped += 1
                continue
            x = SolutionVector.from_genes(g)
            if x.key() in seen:
                continue
            seen.add(x.key())
            out.append(x)
            changes.append((j, d * unit))
    return out, changes, skipped


def sensitivity(best_x: SolutionVector, sim, bounds: Bounds, sim_seed: int, deltas=(-2, -1, 1, 2),
                multiplier_unit: float = 0.01) -> SensitivityResult:
    cands, changes, skipped = sensitivity_candidates(best_x, bounds, deltas, multiplier_unit)
    ys = sim.evaluate([best_x] + cands, sim_seed)
    return SensitivityResult(float(ys[0]), cands, changes, np.asarray(ys[1:], dtype=float), skipped)

