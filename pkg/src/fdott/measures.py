"""Ground costs, finitely supported measures and multinomial covariances.

Points of the ground space are the indices ``0..N-1``; geometry enters only
through :class:`CostMatrix`.  All containers hold read-only numpy arrays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError

TOL_MASS = 1e-9
# inputs this close to a valid mass are renormalized, beyond it they are rejected
TOL_RENORM = 1e-6
TOL_METRIC = 1e-12


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CostMatrix:
    """Square matrix of nonnegative ground costs.

    The metric and identifiability checks are O(N^3) and run once here.
    """

    costs: np.ndarray
    is_identifiable: bool = field(init=False)
    is_metric: bool = field(init=False)

    def __post_init__(self):
        c = _frozen(self.costs)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise InputError(f"cost matrix must be square, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InputError("cost matrix has non-finite entries")
        if np.any(c < 0):
            raise InputError("cost matrix has negative entries")
        object.__setattr__(self, "costs", c)
        zero = c == 0
        identifiable = bool(np.array_equal(zero, np.eye(len(c), dtype=bool)))
        metric = identifiable and bool(np.allclose(c, c.T, rtol=0, atol=TOL_METRIC))
        if metric:
            scale = max(1.0, float(c.max()))
            # c[i, j] <= c[i, r] + c[r, j] for all r, vectorized over r
            via = np.min(c[:, :, None] + c.T[None, :, :], axis=1)
            metric = bool(np.all(c <= via + TOL_METRIC * scale))
        object.__setattr__(self, "is_identifiable", identifiable)
        object.__setattr__(self, "is_metric", metric)

    @property
    def n_points(self) -> int:
        return self.costs.shape[0]

    def restrict(self, idx) -> "CostMatrix":
        """Cost matrix of the sub-space given by the index array ``idx``."""
        idx = np.asarray(idx)
        return CostMatrix(self.costs[np.ix_(idx, idx)])


def _check_vector(weights, name):
    w = np.array(weights, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise InputError(f"{name} weights must be a non-empty vector")
    if not np.all(np.isfinite(w)):
        raise InputError(f"{name} weights must be finite")
    return w


@dataclass(frozen=True)
class NonNegMeasure:
    """Nonnegative vector with total mass ``E`` (the scaled simplex)."""

    weights: np.ndarray

    def __post_init__(self):
        w = _check_vector(self.weights, "nonnegative measure")
        if np.any(w < 0):
            raise InputError("nonnegative measure has negative entries")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True)
class ProbMeasure(NonNegMeasure):
    """Probability vector on ``N`` points."""

    def __post_init__(self):
        w = _check_vector(self.weights, "probability")
        if np.any(w < 0):
            raise InputError("probability vector has negative entries")
        total = w.sum()
        if abs(total - 1.0) > TOL_RENORM:
            raise InputError(f"probability vector sums to {total!r}, not 1")
        object.__setattr__(self, "weights", _frozen(w / total))


@dataclass(frozen=True)
class SignedMeasure:
    """Real vector summing to zero, with its Jordan decomposition."""

    weights: np.ndarray

    def __post_init__(self):
        w = _check_vector(self.weights, "signed measure")
        total = w.sum()
        if abs(total) > TOL_RENORM:
            raise InputError(f"signed measure sums to {total!r}, not 0")
        if abs(total) > TOL_MASS:
            pos, neg = w.clip(min=0), (-w).clip(min=0)
            mid = 0.5 * (pos.sum() + neg.sum())
            w = pos * (mid / pos.sum()) - neg * (mid / neg.sum())
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def plus(self) -> np.ndarray:
        return np.maximum(self.weights, 0.0)

    @property
    def minus(self) -> np.ndarray:
        return -np.minimum(self.weights, 0.0)

    @classmethod
    def zero(cls, n):
        return cls(np.zeros(n))

    def __len__(self):
        return self.weights.size


def jordan(w):
    """Return ``(plus, minus)`` with ``w == plus - minus`` elementwise."""
    w = np.asarray(w, dtype=float)
    return np.maximum(w, 0.0), -np.minimum(w, 0.0)


@dataclass(frozen=True)
class GroupSamples:
    """Category counts of ``K`` independent samples on ``N`` points."""

    counts: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim != 2:
            raise InputError("counts must be a K x N array")
        if not np.all(np.isfinite(raw)) or np.any(raw < 0) or np.any(raw != np.round(raw)):
            raise InputError("counts must be nonnegative integers")
        object.__setattr__(self, "counts", _frozen(raw, dtype=np.int64))

    @property
    def n_groups(self) -> int:
        return self.counts.shape[0]

    @property
    def n_points(self) -> int:
        return self.counts.shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @classmethod
    def from_observations(cls, groups, categories, n_groups=None, n_points=None):
        """Aggregate raw ``(group, category)`` observations into counts."""
        groups = np.asarray(groups, dtype=np.int64)
        categories = np.asarray(categories, dtype=np.int64)
        if groups.shape != categories.shape:
            raise InputError("groups and categories must have the same length")
        if groups.size and (groups.min() < 0 or categories.min() < 0):
            raise InputError("group and category indices must be nonnegative")
        k = n_groups if n_groups is not None else int(groups.max()) + 1
        n = n_points if n_points is not None else int(categories.max()) + 1
        counts = np.zeros((k, n), dtype=np.int64)
        np.add.at(counts, (groups, categories), 1)
        return cls(counts)

    def empirical(self) -> np.ndarray:
        """All empirical probability vectors as a K x N array."""
        sizes = self.sizes
        if np.any(sizes < 1):
            raise InputError(f"empty sample in group {int(np.argmin(sizes))}")
        return self.counts / sizes[:, None]


def empirical_measure(samples: GroupSamples, group: int) -> ProbMeasure:
    """Empirical probability vector of one group: counts divided by group size."""
    if not 0 <= group < samples.n_groups:
        raise InputError(f"group index {group} out of range [0, {samples.n_groups})")
    row = samples.counts[group]
    size = int(row.sum())
    if size < 1:
        raise InputError("empty sample")
    return ProbMeasure(row / size)


def _as_weights(mu):
    return np.asarray(getattr(mu, "weights", mu), dtype=float)


def multinomial_sigma(mu) -> np.ndarray:
    """Covariance of one multinomial draw: ``diag(mu) - mu mu^T``."""
    m = _as_weights(mu)
    return np.diag(m) - np.outer(m, m)


def gaussian_factor(mu) -> np.ndarray:
    """Square-root factor ``A`` with ``A @ A.T == multinomial_sigma(mu)``.

    ``A = diag(sqrt(mu)) @ (I - sqrt(mu) sqrt(mu)^T)``; the bracket is the
    orthogonal projector off ``sqrt(mu)`` (a unit vector), hence idempotent.
    """
    r = np.sqrt(_as_weights(mu))
    return r[:, None] * (np.eye(r.size) - np.outer(r, r))


def grid_points(side: int, dims: int = 2) -> np.ndarray:
    """Points of ``{1..side}^dims`` in row-major order, shape (side**dims, dims)."""
    if side < 1 or dims < 1:
        raise InputError("grid side and dimension must be >= 1")
    axes = [np.arange(1, side + 1)] * dims
    return np.array(list(itertools.product(*axes)), dtype=float)


def grid_euclidean_cost(side: int, dims: int = 2) -> CostMatrix:
    """Euclidean distances between the points of the regular grid ``{1..side}^dims``."""
    pts = grid_points(side, dims)
    return CostMatrix(cdist(pts, pts))
