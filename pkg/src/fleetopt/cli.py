"""``fleetopt`` command line: simulate, optimise, run studies and baselines, plot."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, default_dict, dumps, load_config, write_json
from .cost import total_cost
from .des import BACKEND, simulate
from .evaluators import FleetEvaluator
from .ga import STREAM_SIM, STREAM_TRAIN, GenerationRecord, run_so, search_seed, stream_seed
from .harness import (
    STUDY_VALUES,
    STUDY_PARAMETERS,
    StudySpec,
    build_training_pool,
    comparison_rows,
    run_global_surrogate,
    run_parameter_study,
    run_random_baseline,
    sensitivity,
    write_comparison,
)
from .plot import plot_history
from .solution import DIM, GENE_NAMES, SolutionVector, ValidationError
from .surrogate import TrainingError, TrainingSet, fit_surrogate, grid_search, learning_curve

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("fleetopt")


# --------------------------------------------------------------------------
# helpers

def _parse_list(text: str, kind=float) -> list:
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError("values", f"cannot parse {text!r}") from None


def _parse_solution(text: str) -> SolutionVector:
    """Genes as 15 comma-separated numbers, or a JSON file holding a solution."""
    p = Path(text)
    if p.suffix == ".json":
        if not p.is_file():
            raise ValidationError("x", f"file not found: {p}")
        d = json.loads(p.read_text())
        if "best_genes" in d:
            return SolutionVector.from_genes(d["best_genes"])
        return SolutionVector.from_dict(d)
    genes = _parse_list(text)
    if len(genes) != DIM:
        raise ValidationError("x", f"expected {DIM} comma-separated genes, got {len(genes)}")
    return SolutionVector.from_genes(genes)


def _ga_overrides(args) -> dict:
    ga = {}
    for flag, key in (("max_sims", "max_simulations"), ("threshold", "threshold"),
                      ("ensure_prob", "ensure_prob"), ("population", "population_size"),
                      ("generations", "max_generations"), ("initial_sims", "initial_random_sims"),
                      ("mutation_prob", "mutation_prob")):
        v = getattr(args, flag, None)
        if v is not None:
            ga[key] = v
    return {"ga": ga} if ga else {}


def _argv_without_workers(argv: list[str]) -> list[str]:
    """The worker count never changes results, so it is left out of manifests."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--workers":
            skip = True
        elif not a.startswith("--workers="):
            out.append(a)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class OutputDir:
    """Output directory plus its manifest; the manifest is written even on failure."""

    def __init__(self, args, command: str, cfg: Config | None, argv: list[str]):
        if args.out:
            self.path = Path(args.out)
        else:
            stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
            self.path = Path("runs") / f"{command}-{stamp}"
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.manifest = {
            "tool": "fleetopt",
            "version": __version__,
            "command": command,
            "argv": _argv_without_workers(argv),
            "config_path": args.config,
            "seed": args.seed,
            "output_dir": str(args.out) if args.out else str(self.path),
            "config": cfg.to_dict() if cfg is not None else None,
            "status": "incomplete",
            "timestamps": {"started": _dt.datetime.now(_dt.timezone.utc).isoformat()},
        }

    def file(self, name: str) -> Path:
        self.files.append(name)
        return self.path / name

    def finish(self, status: str, error: str | None = None) -> None:
        self.manifest["status"] = status
        if error:
            self.manifest["error"] = error
        self.manifest["files"] = {n: _sha256(self.path / n) for n in sorted(set(self.files))
                                  if (self.path / n).exists()}
        self.manifest["timestamps"]["finished"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        write_json(self.path / "manifest.json", self.manifest)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v):
    v = float(v)
    if not np.isfinite(v):
        return "nan"
    return str(int(v)) if v.is_integer() else repr(v)


def _write_history(path: Path, history: list[GenerationRecord]) -> None:
    _write_rows(path, GenerationRecord.FIELDS,
                [[_num(v) if isinstance(v, float) else v for v in r.row()] for r in history])


# --------------------------------------------------------------------------
# commands

def cmd_simulate(args, cfg: Config, out) -> int:
    x = _parse_solution(args.x)
    seed = args.seed if args.sim_seed is None else args.sim_seed
    o = simulate(x, cfg.sim, seed)
    result = {"seed": seed, "outcome": o.to_dict(), "total_cost": total_cost(x, o, cfg.cost)}
    sys.stdout.write(dumps(result))
    return EXIT_OK


def cmd_dataset(args, cfg: Config, out: OutputDir) -> int:
    with FleetEvaluator(cfg.sim, cfg.cost, args.workers) as sim:
        ts = build_training_pool(args.n, sim, cfg.bounds, args.seed)
    ts.to_csv(out.file("dataset.csv"))
    write_json(out.file("dataset.json"), {"rows": len(ts), "checksum": ts.checksum(),
                                          "sim_seed": int(ts.seeds[0]),
                                          "best_fitness": float(ts.y.min())})
    return EXIT_OK


def cmd_train(args, cfg: Config, out: OutputDir) -> int:
    ts = TrainingSet.from_csv(args.data)
    if len(ts) < 4:
        raise ValidationError("data", f"{args.data}: need at least 4 rows")
    h = cfg.ga.hyperparams
    if args.search:
        h = grid_search(ts, k=min(cfg.ga.cv_folds, len(ts)), seed=search_seed(ts))
    model = fit_surrogate(ts, h, stream_seed(args.seed, STREAM_TRAIN, 0), cfg.ga.holdout_frac)
    model.save(out.file("model.json"))
    write_json(out.file("metrics.json"), {"hyperparams": h.to_dict(), **model.fit_metrics})
    return EXIT_OK


def cmd_curve(args, cfg: Config, out: OutputDir) -> int:
    sizes = _parse_list(args.sizes, int)
    with FleetEvaluator(cfg.sim, cfg.cost, args.workers) as sim:
        pool = build_training_pool(max(sizes), sim, cfg.bounds, args.seed)
    rows = learning_curve(pool, sizes, k=cfg.ga.cv_folds, seed=args.seed,
                          holdout_frac=cfg.ga.holdout_frac)
    _write_rows(out.file("learning_curve.csv"), ["size", "r2", "mae", "alpha", "hidden_layers"],
                [[r.size, _num(r.r2), _num(r.mae), _num(r.hyperparams.alpha),
                  "-".join(map(str, r.hyperparams.hidden_layers))] for r in rows])
    write_json(out.file("learning_curve.json"), {
        "pool_checksum": pool.checksum(),
        "mean_fitness": float(pool.y.mean()),
        "mean_r2": float(np.mean([r.r2 for r in rows])),
        "mean_mae": float(np.mean([r.mae for r in rows])),
        "rows": [r.to_dict() for r in rows],
    })
    return EXIT_OK


def cmd_run(args, cfg: Config, out: OutputDir) -> int:
    with FleetEvaluator(cfg.sim, cfg.cost, args.workers) as sim:
        res = run_so(cfg.ga, sim, args.seed)
    res.archive.to_csv(out.file("archive.csv"))
    _write_history(out.file("history.csv"), res.history)
    write_json(out.file("summary.json"), res.summary())
    if res.history:
        plot_history(out.path / "history.csv", out.file("history.svg"))
    return EXIT_OK


def cmd_study(args, cfg: Config, out: OutputDir) -> int:
    if args.values:
        values = _parse_list(args.values)
    else:
        values = STUDY_VALUES[args.param]
    seeds = tuple(range(args.seed, args.seed + args.seeds))
    base = cfg.ga
    if args.base == "study":
        base = base.replace(threshold=100_000.0)
    spec = StudySpec(args.param, tuple(values), base, seeds, archive_seed=args.seed)
    with FleetEvaluator(cfg.sim, cfg.cost, args.workers) as sim:
        archive = build_training_pool(base.initial_random_sims, sim, base.bounds, args.seed)
        res = run_parameter_study(spec, sim, archive=archive)
    archive.to_csv(out.file("initial_archive.csv"))
    res.to_csv(out.file("study.csv"))
    write_json(out.file("study.json"), res.summary())
    return EXIT_OK


def cmd_baseline(args, cfg: Config, out: OutputDir) -> int:
    budgets = _parse_list(args.budgets, int)
    sim_seed = stream_seed(args.seed, STREAM_SIM)
    with FleetEvaluator(cfg.sim, cfg.cost, args.workers) as sim:
        res = run_random_baseline(budgets, sim, cfg.bounds, args.seed, sim_seed)
    _write_rows(out.file("trajectory.csv"), ["evaluation", "best_so_far"],
                [[i + 1, _num(v)] for i, v in enumerate(res.trajectory)])
    write_json(out.file("baseline.json"), {"sim_seed": sim_seed,
                                           "best": {str(b): v for b, v in res.best.items()}})
    return EXIT_OK


def cmd_compare(args, cfg: Config, out: OutputDir) -> int:
    """Filtered SO versus a once-trained global surrogate, on identical seeds."""
    n_trains = _parse_list(args.n_train, int)
    seeds = range(args.seed, args.seed + args.seeds)
    rows = []
    with FleetEvaluator(cfg.sim, cfg.cost, args.workers) as sim:
        pool = build_training_pool(max(n_trains + [cfg.ga.initial_random_sims]), sim, cfg.bounds, args.seed)
        archive = pool.head(cfg.ga.initial_random_sims)
        h_so = grid_search(archive, k=cfg.ga.cv_folds, seed=search_seed(archive))
        h_glob = {n: grid_search(pool.head(n), k=cfg.ga.cv_folds, seed=search_seed(pool.head(n)))
                  for n in n_trains}
        for s in seeds:
            so = run_so(cfg.ga, sim, s, archive=archive, hyperparams=h_so)
            glob = [run_global_surrogate(n, cfg.ga, sim, s, pool=pool, hyperparams=h_glob[n]) for n in n_trains]
            rows += comparison_rows(s, so, len(archive), glob)
    write_comparison(out.file("comparison.csv"), rows)
    return EXIT_OK


def cmd_sensitivity(args, cfg: Config, out: OutputDir) -> int:
    x = _parse_solution(args.x)
    sim_seed = args.sim_seed
    if sim_seed is None and Path(args.x).suffix == ".json":
        sim_seed = json.loads(Path(args.x).read_text()).get("sim_seed")
    if sim_seed is None:
        sim_seed = stream_seed(args.seed, STREAM_SIM)
    deltas = _parse_list(args.deltas, int)
    with FleetEvaluator(cfg.sim, cfg.cost, args.workers) as sim:
        res = sensitivity(x, sim, cfg.bounds, int(sim_seed), deltas, args.multiplier_unit)
    _write_rows(out.file("sensitivity.csv"), ["gene", "delta", "fitness"],
                [[GENE_NAMES[j], _num(d), _num(f)] for (j, d), f in zip(res.changes, res.fitness)])
    write_json(out.file("sensitivity.json"), {"sim_seed": int(sim_seed), **res.summary()})
    return EXIT_OK


def cmd_plot(args, cfg, out) -> int:
    target = Path(args.svg) if args.svg else Path(args.history).with_suffix(".svg")
    plot_history(args.history, target)
    print(target)
    return EXIT_OK


def cmd_bench(args, cfg: Config, out) -> int:
    from .bench import run_benchmark

    rows = run_benchmark(cfg.sim, n=args.n, seed=args.seed)
    for r in rows:
        print(f"{r['backend']:8s} {r['ms_per_sim']:9.2f} ms/sim  (n={r['n']})")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

COMMANDS = {
    "simulate": (cmd_simulate, False),
    "dataset": (cmd_dataset, True),
    "train": (cmd_train, True),
    "curve": (cmd_curve, True),
    "run": (cmd_run, True),
    "study": (cmd_study, True),
    "baseline": (cmd_baseline, True),
    "compare": (cmd_compare, True),
    "sensitivity": (cmd_sensitivity, True),
    "plot": (cmd_plot, False),
    "bench": (cmd_bench, False),
}


def _common_parser(top: bool) -> argparse.ArgumentParser:
    # Subcommands repeat the shared flags with suppressed defaults, so a value
    # given before the subcommand name is not overwritten by the default.
    def default(v):
        return v if top else argparse.SUPPRESS

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default(None),
                        help="JSON config; missing keys fall back to the packaged defaults")
    common.add_argument("--seed", type=int, default=default(0))
    common.add_argument("--out", default=default(None),
                        help="output directory (default: runs/<command>-<timestamp>)")
    common.add_argument("--workers", type=int, default=default(1), help="simulation worker processes")
    common.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser(top=False)

    ga = argparse.ArgumentParser(add_help=False)
    ga.add_argument("--max-sims", type=int, dest="max_sims")
    ga.add_argument("--threshold", type=float)
    ga.add_argument("--ensure-prob", type=float, dest="ensure_prob")
    ga.add_argument("--population", type=int)
    ga.add_argument("--generations", type=int)
    ga.add_argument("--initial-sims", type=int, dest="initial_sims")
    ga.add_argument("--mutation-prob", type=float, dest="mutation_prob")

    p = argparse.ArgumentParser(prog="fleetopt", description=__doc__, parents=[_common_parser(top=True)])
    p.add_argument("--dump-default-params", action="store_true",
                   help="print the packaged default config and exit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("simulate", parents=[common], help="simulate one configuration")
    s.add_argument("--x", required=True, help="15 comma-separated genes or a solution JSON file")
    s.add_argument("--sim-seed", type=int, dest="sim_seed")

    s = sub.add_parser("dataset", parents=[common], help="random training pool")
    s.add_argument("--n", type=int, default=1000)

    s = sub.add_parser("train", parents=[common, ga], help="fit the surrogate on a dataset CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--search", action="store_true", help="grid-search hyperparameters first")

    s = sub.add_parser("curve", parents=[common, ga], help="surrogate learning curve")
    s.add_argument("--sizes", default="500,750,1000,1250,1500,1750,2000")

    sub.add_parser("run", parents=[common, ga], help="surrogate-filtered optimisation")

    s = sub.add_parser("study", parents=[common, ga], help="parameter study")
    s.add_argument("--param", required=True, choices=STUDY_PARAMETERS)
    s.add_argument("--values", help="comma-separated values (default: the standard list)")
    s.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    s.add_argument("--base", choices=("config", "study"), default="config",
                   help="'study' sets the base threshold to 100000")

    s = sub.add_parser("baseline", parents=[common], help="random-search baseline")
    s.add_argument("--budgets", default="1000,1250,1500,1750,2000")

    s = sub.add_parser("compare", parents=[common, ga], help="filtered SO vs. global surrogate")
    s.add_argument("--n-train", default="1000,2000", dest="n_train")
    s.add_argument("--seeds", type=int, default=5)

    s = sub.add_parser("sensitivity", parents=[common], help="one-gene perturbation analysis")
    s.add_argument("--x", required=True, help="15 genes or a run's summary.json")
    s.add_argument("--sim-seed", type=int, dest="sim_seed")
    s.add_argument("--deltas", default="-2,-1,1,2")
    s.add_argument("--multiplier-unit", type=float, default=0.01, dest="multiplier_unit")

    s = sub.add_parser("plot", parents=[common], help="SVG chart from a history CSV")
    s.add_argument("--history", required=True)
    s.add_argument("--svg")

    s = sub.add_parser("bench", parents=[common], help="time the simulator backends")
    s.add_argument("--n", type=int, default=20)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.dump_default_params:
        sys.stdout.write(dumps(default_dict()))
        return EXIT_OK
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_VALIDATION

    fn, writes = COMMANDS[args.command]
    out = None
    try:
        if args.workers < 1:
            raise ValidationError("workers", "must be >= 1")
        cfg = load_config(args.config, _ga_overrides(args))
        if writes:
            out = OutputDir(args, args.command, cfg, argv)
        log.info("backend %s", BACKEND)
        t0 = time.perf_counter()
        code = fn(args, cfg, out)
        log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
        if out is not None:
            out.finish("complete")
        return code
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        if out is not None:
            out.finish("incomplete", str(e))
        return EXIT_VALIDATION
    except (TrainingError, RuntimeError, OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        if out is not None:
            out.finish("incomplete", f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
