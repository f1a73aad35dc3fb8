"""Decision vector for the trailer-fleet configuration problem.

The 15 genes are laid out as::

    owned[type, site]           6 integers   (trailer, tanker) x (leuven, jupille, hoegaarden)
    ext_multiplier[type, site]  6 reals
    parking[site]               3 integers
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TYPES = ("trailer", "tanker")
SITES = ("leuven", "jupille", "hoegaarden")
N_TYPES = len(TYPES)
N_SITES = len(SITES)
DIM = 2 * N_TYPES * N_SITES + N_SITES

OWNED_SLICE = slice(0, N_TYPES * N_SITES)
MULT_SLICE = slice(N_TYPES * N_SITES, 2 * N_TYPES * N_SITES)
PARKING_SLICE = slice(2 * N_TYPES * N_SITES, DIM)

# True where the gene is integer-valued.
INTEGER_GENES = np.ones(DIM, dtype=bool)
INTEGER_GENES[MULT_SLICE] = False

GENE_NAMES = (
    [f"owned_{t}_{s}" for t in TYPES for s in SITES]
    + [f"mult_{t}_{s}" for t in TYPES for s in SITES]
    + [f"parking_{s}" for s in SITES]
)


class ValidationError(ValueError):
    """Raised when an input fails validation; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Bounds:
    """Per-gene box bounds of the search space."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(DIM)
        hi = np.asarray(self.hi, dtype=float).reshape(DIM)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ValidationError(f"bounds.{GENE_NAMES[bad]}", "lo > hi")
        if np.any(lo[MULT_SLICE] <= 0):
            raise ValidationError("bounds.ext_multiplier", "lower bound must be > 0")
        if np.any(lo[INTEGER_GENES] < 0):
            raise ValidationError("bounds", "integer genes must have lo >= 0")

    @classmethod
    def from_fields(cls, owned_lo, owned_hi, mult_lo, mult_hi, parking_lo, parking_hi):
        lo = np.empty(DIM)
        hi = np.empty(DIM)
        lo[OWNED_SLICE] = np.broadcast_to(owned_lo, (N_TYPES, N_SITES)).ravel()
        hi[OWNED_SLICE] = np.broadcast_to(owned_hi, (N_TYPES, N_SITES)).ravel()
        lo[MULT_SLICE] = np.broadcast_to(mult_lo, (N_TYPES, N_SITES)).ravel()
        hi[MULT_SLICE] = np.broadcast_to(mult_hi, (N_TYPES, N_SITES)).ravel()
        lo[PARKING_SLICE] = np.broadcast_to(parking_lo, (N_SITES,))
        hi[PARKING_SLICE] = np.broadcast_to(parking_hi, (N_SITES,))
        return cls(lo, hi)

    def to_dict(self) -> dict:
        return {
            "owned": {
                "lo": self.lo[OWNED_SLICE].reshape(N_TYPES, N_SITES).astype(int).tolist(),
                "hi": self.hi[OWNED_SLICE].reshape(N_TYPES, N_SITES).astype(int).tolist(),
            },
            "ext_multiplier": {
                "lo": self.lo[MULT_SLICE].reshape(N_TYPES, N_SITES).tolist(),
                "hi": self.hi[MULT_SLICE].reshape(N_TYPES, N_SITES).tolist(),
            },
            "parking": {
                "lo": self.lo[PARKING_SLICE].astype(int).tolist(),
                "hi": self.hi[PARKING_SLICE].astype(int).tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Bounds":
        try:
            return cls.from_fields(
                d["owned"]["lo"], d["owned"]["hi"],
                d["ext_multiplier"]["lo"], d["ext_multiplier"]["hi"],
                d["parking"]["lo"], d["parking"]["hi"],
            )
        except KeyError as e:
            raise ValidationError(f"bounds.{e.args[0]}", "missing") from None

    def contains(self, genes) -> bool:
        g = np.asarray(genes, dtype=float)
        return bool(np.all(g >= self.lo) and np.all(g <= self.hi))

    def clip(self, genes: np.ndarray) -> np.ndarray:
        return np.clip(genes, self.lo, self.hi)

    def sample(self, rng: np.random.Generator) -> "SolutionVector":
        """Uniform draw: integers inclusive of both ends, reals on [lo, hi)."""
        g = np.empty(DIM)
        ints = INTEGER_GENES
        g[ints] = rng.integers(self.lo[ints].astype(np.int64), self.hi[ints].astype(np.int64) + 1)
        g[~ints] = rng.uniform(self.lo[~ints], self.hi[~ints])
        return SolutionVector.from_genes(g)


@dataclass(frozen=True)
class SolutionVector:
    owned: np.ndarray  # (2, 3) int
    ext_multiplier: np.ndarray  # (2, 3) float
    parking: np.ndarray  # (3,) int
    _genes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        owned = np.asarray(self.owned)
        mult = np.asarray(self.ext_multiplier, dtype=float)
        parking = np.asarray(self.parking)
        if owned.shape != (N_TYPES, N_SITES):
            raise ValidationError("owned", f"expected shape (2, 3), got {owned.shape}")
        if mult.shape != (N_TYPES, N_SITES):
            raise ValidationError("ext_multiplier", f"expected shape (2, 3), got {mult.shape}")
        if parking.shape != (N_SITES,):
            raise ValidationError("parking", f"expected shape (3,), got {parking.shape}")
        for name, arr in (("owned", owned), ("parking", parking)):
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise ValidationError(name, "must be integers")
            if np.any(arr < 0):
                raise ValidationError(name, "must be >= 0")
        if not np.all(np.isfinite(mult)) or np.any(mult <= 0):
            raise ValidationError("ext_multiplier", "must be finite and > 0")
        owned = owned.astype(np.int64)
        parking = parking.astype(np.int64)
        for arr in (owned, mult, parking):
            arr.flags.writeable = False
        object.__setattr__(self, "owned", owned)
        object.__setattr__(self, "ext_multiplier", mult)
        object.__setattr__(self, "parking", parking)
        genes = np.concatenate([owned.ravel(), mult.ravel(), parking]).astype(float)
        genes.flags.writeable = False
        object.__setattr__(self, "_genes", genes)

    @classmethod
    def from_genes(cls, genes) -> "SolutionVector":
        g = np.asarray(genes, dtype=float)
        if g.shape != (DIM,):
            raise ValidationError("genes", f"expected {DIM} values, got shape {g.shape}")
        return cls(
            owned=g[OWNED_SLICE].reshape(N_TYPES, N_SITES),
            ext_multiplier=g[MULT_SLICE].reshape(N_TYPES, N_SITES),
            parking=g[PARKING_SLICE],
        )

    @classmethod
    def zeros(cls, multiplier: float = 1.0) -> "SolutionVector":
        return cls(
            owned=np.zeros((N_TYPES, N_SITES), dtype=int),
            ext_multiplier=np.full((N_TYPES, N_SITES), multiplier),
            parking=np.zeros(N_SITES, dtype=int),
        )

    @property
    def genes(self) -> np.ndarray:
        return self._genes

    def key(self) -> tuple:
        return tuple(self._genes.tolist())

    def check_bounds(self, bounds: Bounds) -> None:
        g = self._genes
        bad = np.flatnonzero((g < bounds.lo) | (g > bounds.hi))
        if bad.size:
            i = int(bad[0])
            raise ValidationError(GENE_NAMES[i], f"{g[i]} outside [{bounds.lo[i]}, {bounds.hi[i]}]")

    def to_dict(self) -> dict:
        return {
            "owned": self.owned.tolist(),
            "ext_multiplier": self.ext_multiplier.tolist(),
            "parking": self.parking.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolutionVector":
        try:
            return cls(d["owned"], d["ext_multiplier"], d["parking"])
        except KeyError as e:
            raise ValidationError(str(e.args[0]), "missing") from None

    def __eq__(self, other):
        if not isinstance(other, SolutionVector):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())
