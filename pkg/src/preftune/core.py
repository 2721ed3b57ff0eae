"""Parameter spaces, space-filling sampling and preference bookkeeping.

Candidate tuning vectors live in box-bounded spaces whose dimensions may be
marked integer (rounded only when a controller is actually built from them)
or carry a log10 display hint. All surrogate geometry downstream works on
the [-1, 1]-scaled image of the box, so scaling round-trips are part of the
contract here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class BoundsError(ValueError):
    """A value lies outside its parameter box."""


class InconsistentPreferencesError(RuntimeError):
    """Every sample lost at least one comparison; no best candidate exists."""


@dataclass(frozen=True)
class ParamSpec:
    """One scalar tuning knob.

    log_scale_label, when set, names the underlying quantity of which this
    dimension is the log10 (display hint only; the optimizer always sees
    the raw value).
    """

    name: str
    lower: float
    upper: float
    integer: bool = False
    log_scale_label: str | None = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("parameter name must be non-empty")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError(f"{self.name}: bounds must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower must be strictly below upper")
        if self.integer and self.upper - self.lower < 1.0:
            raise ValueError(f"{self.name}: integer dimension needs a span of at least 1")


@dataclass(frozen=True)
class ParamSpace:
    """An ordered box of ParamSpecs."""

    specs: tuple[ParamSpec, ...]

    def __post_init__(self):
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        if not self.specs:
            raise ValueError("space needs at least one dimension")

    @property
    def n_dims(self) -> int:
        return len(self.specs)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    @property
    def lower(self) -> np.ndarray:
        return np.array([s.lower for s in self.specs])

    @property
    def upper(self) -> np.ndarray:
        return np.array([s.upper for s in self.specs])

    def validate(self, theta) -> np.ndarray:
        """Return theta as a 1-D float array, or raise BoundsError."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_dims,):
            raise BoundsError(f"expected {self.n_dims} values, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise BoundsError("parameter vector contains non-finite values")
        if np.any(theta < self.lower) or np.any(theta > self.upper):
            raise BoundsError(f"value outside box: {theta}")
        return theta

    def scale(self, theta) -> np.ndarray:
        """Map a vector in original units onto [-1, 1] per dimension."""
        theta = self.validate(theta)
        lo, hi = self.lower, self.upper
        return 2.0 * (theta - lo) / (hi - lo) - 1.0

    def unscale(self, z) -> np.ndarray:
        """Inverse of scale; z must lie in [-1, 1] per dimension."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_dims,):
            raise BoundsError(f"expected {self.n_dims} values, got shape {z.shape}")
        if np.any(np.abs(z) > 1.0 + 1e-12):
            raise BoundsError(f"scaled value outside [-1, 1]: {z}")
        z = np.clip(z, -1.0, 1.0)
        lo, hi = self.lower, self.upper
        return lo + (z + 1.0) * 0.5 * (hi - lo)

    def scale_many(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.array([self.scale(t) for t in thetas])

    def materialize(self, theta) -> np.ndarray:
        """Round integer dimensions; continuous ones pass through."""
        theta = self.validate(theta)
        out = theta.copy()
        for d, s in enumerate(self.specs):
            if s.integer:
                out[d] = float(np.clip(round(theta[d]), math.ceil(s.lower), math.floor(s.upper)))
        return out


def latin_hypercube(n: int, space: ParamSpace, seed: int) -> np.ndarray:
    """Draw n points, one per axis-aligned bin in every dimension.

    Returns an (n, n_dims) array in original units. The draw is fully
    determined by the seed.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    d = space.n_dims
    unit = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        unit[:, j] = (perm + rng.random(n)) / n
    lo, hi = space.lower, space.upper
    return lo + unit * (hi - lo)


def preference_from_values(j1: float, j2: float, tol: float = 0.0) -> int:
    """Compare two latent objective values: -1 if the first is better.

    Values within tol of each other count as a tie.
    """
    if tol < 0.0:
        raise ValueError("tol must be non-negative")
    if not (math.isfinite(j1) and math.isfinite(j2)):
        raise ValueError("objective values must be finite")
    if j1 < j2 - tol:
        return -1
    if j1 > j2 + tol:
        return 1
    return 0


@dataclass(frozen=True)
class PreferenceRecord:
    """Outcome of one pairwise comparison: b = -1 means sample i won."""

    i: int
    j: int
    b: int

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("cannot compare a sample with itself")
        if self.b not in (-1, 0, 1):
            raise ValueError(f"preference must be -1, 0 or +1, got {self.b}")


@dataclass
class PreferenceDataset:
    """Samples plus the pairwise comparisons recorded between them.

    The add_* methods enforce the invariants (distinct samples, valid
    indices, no repeated unordered pair); direct attribute construction is
    available to tests that need degenerate datasets.
    """

    samples: list[np.ndarray] = field(default_factory=list)
    prefs: list[PreferenceRecord] = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def n_prefs(self) -> int:
        return len(self.prefs)

    def sample_matrix(self) -> np.ndarray:
        return np.array(self.samples)

    def add_sample(self, theta) -> int:
        theta = np.asarray(theta, dtype=float).copy()
        for existing in self.samples:
            if existing.shape == theta.shape and np.array_equal(existing, theta):
                raise ValueError("duplicate sample")
        self.samples.append(theta)
        return len(self.samples) - 1

    def add_preference(self, i: int, j: int, b: int) -> PreferenceRecord:
        n = self.n_samples
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"preference indices ({i}, {j}) out of range for {n} samples")
        rec = PreferenceRecord(i, j, b)
        pair = frozenset((i, j))
        for old in self.prefs:
            if frozenset((old.i, old.j)) == pair:
                raise ValueError(f"pair ({i}, {j}) already compared")
        self.prefs.append(rec)
        return rec


def best_so_far(ds: PreferenceDataset) -> int:
    """Smallest sample index that never lost a recorded comparison."""
    n = ds.n_samples
    if n == 0:
        raise ValueError("empty dataset")
    lost = [False] * n
    for rec in ds.prefs:
        if rec.b < 0:
            lost[rec.j] = True
        elif rec.b > 0:
            lost[rec.i] = True
    for idx in range(n):
        if not lost[idx]:
            return idx
    raise InconsistentPreferencesError("every sample lost at least one comparison")
