"""Feed-forward ReLU network used as a cheap stand-in for the simulator.

Parameters of all layers live in one flat vector so that Adam updates are a
handful of vectorised operations per mini-batch; per-layer weight and bias
arrays are views into it.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .solution import DIM, GENE_NAMES, SolutionVector, ValidationError

MODEL_FORMAT = "fleetopt-surrogate"
MODEL_VERSION = 1

GRID_ALPHAS = (0.05, 0.01, 0.005, 0.0001, 0.00001)
GRID_LAYERS = ((15,), (25,), (50,), (50, 5), (50, 25, 15), (25, 15))


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 1e-4
    hidden_layers: tuple[int, ...] = (25,)
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 32

    def __post_init__(self):
        layers = tuple(int(w) for w in self.hidden_layers)
        object.__setattr__(self, "hidden_layers", layers)
        if self.alpha < 0:
            raise ValidationError("hyperparams.alpha", "must be >= 0")
        if len(layers) < 1 or any(w < 1 for w in layers):
            raise ValidationError("hyperparams.hidden_layers", "need at least one layer of width >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("hyperparams.learning_rate", "must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("hyperparams.epochs", "epochs and batch_size must be >= 1")

    def n_params(self, n_in: int = DIM) -> int:
        sizes = (n_in,) + self.hidden_layers + (1,)
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**{**d, "hidden_layers": tuple(d.get("hidden_layers", (25,)))})


def default_grid(base: Hyperparams | None = None) -> list[Hyperparams]:
    base = base or Hyperparams()
    return [replace(base, alpha=a, hidden_layers=h)
            for a, h in itertools.product(GRID_ALPHAS, GRID_LAYERS)]


# --------------------------------------------------------------------------
# training data

class TrainingSet:
    """Simulated (configuration, fitness) rows with the seed that produced them."""

    PROVENANCES = ("random-init", "so-run", "sensitivity", "final-eval")

    def __init__(self, X=None, y=None, seeds=None, provenance=None):
        self.X = np.empty((0, DIM)) if X is None else np.asarray(X, dtype=float).reshape(-1, DIM)
        n = self.X.shape[0]
        self.y = np.empty(0) if y is None else np.asarray(y, dtype=float).reshape(n)
        self.seeds = np.zeros(n, dtype=np.int64) if seeds is None else np.asarray(seeds, dtype=np.int64).reshape(n)
        self.provenance = ["random-init"] * n if provenance is None else list(provenance)
        if len(self.provenance) != n:
            raise ValueError("provenance length mismatch")

    def __len__(self):
        return self.X.shape[0]

    def append(self, x: SolutionVector, fitness: float, seed: int, provenance: str) -> None:
        self.X = np.vstack([self.X, x.genes[None, :]])
        self.y = np.append(self.y, float(fitness))
        self.seeds = np.append(self.seeds, np.int64(seed))
        self.provenance.append(provenance)

    def extend(self, rows) -> None:
        rows = list(rows)
        if not rows:
            return
        self.X = np.vstack([self.X] + [r[0].genes[None, :] for r in rows])
        self.y = np.concatenate([self.y, [float(r[1]) for r in rows]])
        self.seeds = np.concatenate([self.seeds, np.array([r[2] for r in rows], dtype=np.int64)])
        self.provenance.extend(r[3] for r in rows)

    def subset(self, idx) -> "TrainingSet":
        idx = np.asarray(idx, dtype=np.int64)
        return TrainingSet(self.X[idx], self.y[idx], self.seeds[idx],
                           [self.provenance[i] for i in idx])

    def head(self, n: int) -> "TrainingSet":
        return self.subset(np.arange(min(n, len(self))))

    def copy(self) -> "TrainingSet":
        return self.subset(np.arange(len(self)))

    def solution(self, i: int) -> SolutionVector:
        return SolutionVector.from_genes(self.X[i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(GENE_NAMES) + ["fitness", "seed", "provenance"])
            for i in range(len(self)):
                w.writerow([_fmt(v) for v in self.X[i]]
                           + [_fmt(self.y[i]), int(self.seeds[i]), self.provenance[i]])

    @classmethod
    def from_csv(cls, path) -> "TrainingSet":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r, None)
            expected = list(GENE_NAMES) + ["fitness", "seed", "provenance"]
            if header != expected:
                raise ValueError(f"{path}: unexpected header")
            rows = list(r)
        if not rows:
            return cls()
        X = np.array([[float(v) for v in row[:DIM]] for row in rows])
        y = np.array([float(row[DIM]) for row in rows])
        seeds = np.array([int(row[DIM + 1]) for row in rows], dtype=np.int64)
        return cls(X, y, seeds, [row[DIM + 2] for row in rows])

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        h.update(np.ascontiguousarray(self.seeds).tobytes())
        return h.hexdigest()


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


# --------------------------------------------------------------------------
# normalisation

@dataclass(frozen=True)
class Normalizer:
    shift: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.shift) / self.scale

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.shift


def _fit_columns(A: np.ndarray) -> Normalizer:
    if A.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on an empty set")
    shift = A.mean(axis=0)
    scale = A.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return Normalizer(shift, scale)


def fit_normalizer(ts) -> Normalizer:
    """Zero-mean, unit-variance (population std) map per feature; constant
    features get scale 1 so they map to 0."""
    X = ts.X if isinstance(ts, TrainingSet) else np.atleast_2d(np.asarray(ts, dtype=float))
    return _fit_columns(X)


# --------------------------------------------------------------------------
# network

def layer_sizes(h: Hyperparams, n_in: int = DIM) -> tuple[int, ...]:
    return (n_in,) + tuple(h.hidden_layers) + (1,)


def unpack(theta: np.ndarray, sizes) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) into the flat parameter vector; W has shape (fan_in, fan_out)."""
    out, k = [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = theta[k:k + a * b].reshape(a, b)
        k += a * b
        out.append((W, theta[k:k + b]))
        k += b
    return out


def weight_mask(sizes) -> np.ndarray:
    mask = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        mask.append(np.ones(a * b, dtype=bool))
        mask.append(np.zeros(b, dtype=bool))
    return np.concatenate(mask)


def init_params(sizes, rng: np.random.Generator) -> np.ndarray:
    """He-style uniform init, W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), for hidden
    layers; the output layer and all biases start at zero, so an untrained
    network predicts the (normalised) training mean."""
    parts = []
    pairs = list(zip(sizes[:-1], sizes[1:]))
    for j, (a, b) in enumerate(pairs):
        lim = math.sqrt(6.0 / a)
        w = rng.uniform(-lim, lim, size=a * b)
        parts.append(w if j < len(pairs) - 1 else np.zeros(a * b))
        parts.append(np.zeros(b))
    return np.concatenate(parts)


def forward(theta, sizes, X) -> np.ndarray:
    a = X
    layers = unpack(theta, sizes)
    for W, b in layers[:-1]:
        a = np.maximum(a @ W + b, 0.0)
    W, b = layers[-1]
    return (a @ W + b)[:, 0]


def loss_and_grad(theta, sizes, X, y, alpha, grad=None):
    """Mean squared error plus ``alpha * sum(W**2)`` and its gradient."""
    layers = unpack(theta, sizes)
    if grad is None:
        grad = np.empty_like(theta)
    glayers = unpack(grad, sizes)
    acts = [X]
    a = X
    for W, b in layers[:-1]:
        a = np.maximum(a @ W + b, 0.0)
        acts.append(a)
    W, b = layers[-1]
    pred = (a @ W + b)[:, 0]
    resid = pred - y
    n = X.shape[0]
    loss = float(resid @ resid) / n
    delta = (2.0 / n) * resid[:, None]
    for j in range(len(layers) - 1, -1, -1):
        W, _ = layers[j]
        gW, gb = glayers[j]
        np.dot(acts[j].T, delta, out=gW)
        gb[:] = delta.sum(axis=0)
        if j > 0:
            delta = (delta @ W.T) * (acts[j] > 0)
    if alpha:
        for W, _ in layers:
            loss += alpha * float(np.vdot(W, W))
        for (W, _), (gW, _) in zip(layers, glayers):
            gW += (2.0 * alpha) * W
    return loss, grad


@dataclass
class SurrogateModel:
    sizes: tuple[int, ...]
    theta: np.ndarray
    x_norm: Normalizer
    y_shift: float
    y_scale: float
    hyperparams: Hyperparams
    fit_metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        expected = sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))
        if self.theta.shape != (expected,):
            raise ValueError("parameter vector does not match layer sizes")
        if self.sizes[-1] != 1:
            raise ValueError("output layer must have width 1")
        if np.any(self.x_norm.scale <= 0) or not self.y_scale > 0:
            raise ValueError("normalizer scales must be > 0")
        self.theta.flags.writeable = False

    @property
    def layers(self):
        return unpack(self.theta, self.sizes)

    def predict_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected {self.sizes[0]} features, got {X.shape[1]}")
        z = forward(self.theta, self.sizes, self.x_norm.transform(X))
        return z * self.y_scale + self.y_shift

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "layer_sizes": list(self.sizes),
            "weights": [float(v) for v in self.theta],
            "x_shift": self.x_norm.shift.tolist(),
            "x_scale": self.x_norm.scale.tolist(),
            "y_shift": self.y_shift,
            "y_scale": self.y_scale,
            "hyperparams": self.hyperparams.to_dict(),
            "fit_metrics": self.fit_metrics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError("not a supported surrogate model document")
        return cls(
            sizes=tuple(d["layer_sizes"]),
            theta=np.asarray(d["weights"], dtype=float),
            x_norm=Normalizer(np.asarray(d["x_shift"]), np.asarray(d["x_scale"])),
            y_shift=float(d["y_shift"]),
            y_scale=float(d["y_scale"]),
            hyperparams=Hyperparams.from_dict(d["hyperparams"]),
            fit_metrics=d.get("fit_metrics", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict(m: SurrogateModel, x) -> float:
    g = x.genes if isinstance(x, SolutionVector) else np.asarray(x, dtype=float)
    if g.shape != (m.sizes[0],):
        raise ValueError(f"expected a {m.sizes[0]}-vector, got shape {g.shape}")
    return float(m.predict_many(g[None, :])[0])


# --------------------------------------------------------------------------
# training

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _adam_fit(theta, sizes, X, y, h: Hyperparams, rng: np.random.Generator):
    n = X.shape[0]
    # small sets get at least two mini-batches per epoch
    bs = max(1, min(h.batch_size, n // 2)) if n >= 2 else 1
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    grad = np.empty_like(theta)
    step = np.empty_like(theta)
    lr = h.learning_rate
    t = 0
    for epoch in range(1, h.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            loss, _ = loss_and_grad(theta, sizes, X[idx], y[idx], h.alpha, grad)
            t += 1
            m *= ADAM_BETA1
            m += (1 - ADAM_BETA1) * grad
            v *= ADAM_BETA2
            v += (1 - ADAM_BETA2) * (grad * grad)
            lr_t = lr * math.sqrt(1 - ADAM_BETA2 ** t) / (1 - ADAM_BETA1 ** t)
            np.sqrt(v, out=step)
            step += ADAM_EPS
            np.divide(m, step, out=step)
            step *= lr_t
            theta -= step
            if not math.isfinite(loss):
                raise TrainingError(epoch)
        if not np.all(np.isfinite(theta)):
            raise TrainingError(epoch)
    return theta


def train(ts: TrainingSet, h: Hyperparams, seed: int, validation: TrainingSet | None = None) -> SurrogateModel:
    """Fit a network on ``ts``; targets are z-scored internally."""
    if len(ts) < 1:
        raise ValueError("empty training set")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))
    x_norm = fit_normalizer(ts)
    y_shift = float(ts.y.mean())
    y_scale = float(ts.y.std())
    if not y_scale > 0:
        y_scale = 1.0
    X = x_norm.transform(ts.X)
    y = (ts.y - y_shift) / y_scale
    sizes = layer_sizes(h, X.shape[1])
    theta = init_params(sizes, rng)
    pred0 = forward(theta, sizes, X)
    theta = _adam_fit(theta, sizes, X, y, h, rng)
    model = SurrogateModel(sizes, theta, x_norm, y_shift, y_scale, h)
    r2, mae = evaluate(model, ts)
    model.fit_metrics = {
        "n_train": len(ts),
        "train_mse_init": float(np.mean((pred0 - y) ** 2)),
        "train_mse": float(np.mean((forward(model.theta, sizes, X) - y) ** 2)),
        "train_r2": r2,
        "train_mae": mae,
    }
    if validation is not None and len(validation):
        vr2, vmae = evaluate(model, validation)
        model.fit_metrics.update(n_val=len(validation), val_r2=vr2, val_mae=vmae)
    return model


def evaluate(m: SurrogateModel, holdout: TrainingSet) -> tuple[float, float]:
    """Coefficient of determination and mean absolute error on ``holdout``.

    A constant-target holdout has no variance to explain: R^2 is 1 when the
    predictions are exact and 0 otherwise.
    """
    if len(holdout) == 0:
        raise ValueError("empty holdout")
    pred = m.predict_many(holdout.X)
    return r2_mae(holdout.y, pred)


def r2_mae(y, pred) -> tuple[float, float]:
    y = np.asarray(y, dtype=float)
    resid = y - np.asarray(pred, dtype=float)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    return r2, float(np.abs(resid).mean())


# --------------------------------------------------------------------------
# model selection

def kfold_indices(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    if k < 2:
        raise ValueError("need at least 2 folds")
    if n < k:
        raise ValueError(f"{n} rows cannot fill {k} folds")
    return [np.sort(f) for f in np.array_split(rng.permutation(n), k)]


def cv_scores(ts: TrainingSet, grid, k: int, seed: int) -> list[float]:
    """Mean validation MSE (original units) of every grid member over k folds."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 1]))
    folds = kfold_indices(len(ts), k, rng)
    all_idx = np.arange(len(ts))
    scores = []
    for gi, h in enumerate(grid):
        errs = []
        for fi, val in enumerate(folds):
            tr = np.setdiff1d(all_idx, val, assume_unique=True)
            model = train(ts.subset(tr), h, seed=_child_seed(seed, gi, fi))
            resid = model.predict_many(ts.X[val]) - ts.y[val]
            errs.append(float(resid @ resid) / val.size)
        scores.append(float(np.mean(errs)))
    return scores


def grid_search(ts: TrainingSet, grid=None, k: int = 10, seed: int = 0) -> Hyperparams:
    """Grid member with the lowest mean k-fold validation MSE.

    Ties go to the smaller parameter count, then to the earlier grid entry.
    """
    grid = list(default_grid() if grid is None else grid)
    if not grid:
        raise ValueError("empty grid")
    if len(grid) == 1:
        return grid[0]
    if len(ts) < k:
        raise ValueError(f"{len(ts)} rows cannot fill {k} folds")
    scores = cv_scores(ts, grid, k, seed)
    best = min(range(len(grid)), key=lambda j: (scores[j], grid[j].n_params(), j))
    return grid[best]


def _child_seed(seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def split_holdout(n: int, frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled (train, holdout) row indices with ``round(frac * n)`` held out."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 2]))
    perm = rng.permutation(n)
    n_hold = int(round(frac * n))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def fit_surrogate(ts: TrainingSet, h: Hyperparams, seed: int, holdout_frac: float = 0.2) -> SurrogateModel:
    """Train on a shuffled (1 - holdout_frac) share; metrics on the rest."""
    tr, val = split_holdout(len(ts), holdout_frac, seed)
    if len(val) == 0:
        return train(ts, h, seed)
    return train(ts.subset(tr), h, seed, validation=ts.subset(val))


@dataclass(frozen=True)
class LearningCurveRow:
    size: int
    r2: float
    mae: float
    hyperparams: Hyperparams

    def to_dict(self) -> dict:
        return {"size": self.size, "r2": self.r2, "mae": self.mae,
                "alpha": self.hyperparams.alpha,
                "hidden_layers": list(self.hyperparams.hidden_layers)}


def learning_curve(pool: TrainingSet, sizes, k: int = 10, seed: int = 0, grid=None,
                   holdout_frac: float = 0.2) -> list[LearningCurveRow]:
    """Holdout accuracy when the first ``size`` pool rows are available.

    Each size draws its own 80/20 split (seeded by the size), grid-searches
    on the 80 %, retrains the winner on all of it and scores the 20 %.
    """
    sizes = [int(s) for s in sizes]
    if sizes and max(sizes) > len(pool):
        raise ValueError(f"pool has {len(pool)} rows, need {max(sizes)}")
    rows = []
    for size in sizes:
        data = pool.head(size)
        tr, val = split_holdout(size, holdout_frac, _child_seed(seed, size))
        train_set, hold = data.subset(tr), data.subset(val)
        h = grid_search(train_set, grid, k=min(k, len(train_set)), seed=_child_seed(seed, size, 1))
        model = train(train_set, h, seed=_child_seed(seed, size, 2))
        r2, mae = evaluate(model, hold)
        rows.append(LearningCurveRow(size, r2, mae, h))
    return rows
