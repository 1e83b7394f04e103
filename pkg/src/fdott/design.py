"""Contrast matrices for one-way and factorial layouts, and sample-size weights.

Groups of a factorial layout are the cells of ``K_1 x ... x K_d`` enumerated
lexicographically (last factor varies fastest).  Factors are named ``A``,
``B``, ``C``, ... in order.  A contrast ``L`` has one column per group and
zero row sums, so ``L @ mus`` is a stack of signed measures.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from .errors import DesignError, InputError

TOL_ROWSUM = 1e-12


@dataclass(frozen=True)
class ContrastMatrix:
    """Contrast ``L`` (M x K) with zero row sums and scaling factor ``s``."""

    entries: np.ndarray
    scaling_s: float
    label: str = "custom"
    # ordered group pairs of a one-way contrast, None otherwise
    pairs: tuple | None = None

    def __post_init__(self):
        L = np.array(self.entries, dtype=float)
        if L.ndim != 2 or L.shape[0] < 1 or L.shape[1] < 2:
            raise DesignError(f"contrast must be an M x K matrix with K >= 2, got {L.shape}")
        if not np.all(np.isfinite(L)):
            raise DesignError("contrast has non-finite entries")
        bad = np.abs(L.sum(axis=1)) > TOL_ROWSUM * max(1.0, np.abs(L).max())
        if np.any(bad):
            raise DesignError(f"contrast rows {np.flatnonzero(bad).tolist()} do not sum to zero")
        if not np.isfinite(self.scaling_s) or self.scaling_s <= 0:
            raise DesignError("scaling factor s must be positive")
        L.setflags(write=False)
        object.__setattr__(self, "entries", L)
        object.__setattr__(self, "scaling_s", float(self.scaling_s))

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_groups(self) -> int:
        return self.entries.shape[1]

    @property
    def is_one_way(self) -> bool:
        return self.pairs is not None

    def apply(self, mus) -> np.ndarray:
        """Rows ``[L mu]_m`` for a K x N stack (or a ``(..., K, N)`` batch)."""
        return np.einsum("mk,...kn->...mn", self.entries, np.asarray(mus, dtype=float))

    def with_scaling(self, s) -> "ContrastMatrix":
        return ContrastMatrix(self.entries, s, self.label, self.pairs)


@dataclass(frozen=True)
class DesignSpec:
    """Factor sizes and the effect to test.

    ``effect`` is ``"interaction"`` (all factors), ``"interaction:A,B"``,
    ``"main:A"``, ``"simple:A|B"`` or ``"one-way"``.
    """

    factor_sizes: tuple
    effect: str = "interaction"
    scaling_s: float | None = None
    names: tuple = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.factor_sizes)
        if not sizes or any(k < 2 for k in sizes):
            raise DesignError("every factor needs at least two levels")
        if len(sizes) > len(string.ascii_uppercase):
            raise DesignError("too many factors")
        object.__setattr__(self, "factor_sizes", sizes)
        object.__setattr__(self, "names", tuple(string.ascii_uppercase[: len(sizes)]))

    @property
    def n_groups(self) -> int:
        return int(np.prod(self.factor_sizes))

    def levels(self):
        """Level tuples of all cells in lexicographic order."""
        return list(itertools.product(*(range(k) for k in self.factor_sizes)))


def one_way_contrasts(K, scaling_s=None) -> ContrastMatrix:
    """All pairwise differences ``mu^i - mu^j``, ``i < j``; default ``s = K^2``."""
    K = int(K)
    if K < 2:
        raise DesignError("one-way design needs K >= 2 groups")
    pairs = tuple(itertools.combinations(range(K), 2))
    L = np.zeros((len(pairs), K))
    for m, (i, j) in enumerate(pairs):
        L[m, i] = 1.0
        L[m, j] = -1.0
    s = K * K if scaling_s is None else scaling_s
    return ContrastMatrix(L, s, "one-way", pairs)


def _factor_index(spec, name):
    name = name.strip()
    if name not in spec.names:
        raise DesignError(f"unknown factor {name!r}; factors are {', '.join(spec.names)}")
    return spec.names.index(name)


def _centering(k):
    return np.eye(k) - np.full((k, k), 1.0 / k)


def _averaging(k):
    return np.full((1, k), 1.0 / k)


def _parse_effect(spec):
    """Return a per-factor role list: 'center', 'average' or 'identity'."""
    d = len(spec.factor_sizes)
    text = spec.effect.strip()
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "interaction":
        chosen = [_factor_index(spec, a) for a in arg.split(",")] if arg else list(range(d))
        if len(set(chosen)) != len(chosen):
            raise DesignError(f"repeated factor in {text!r}")
        return ["center" if f in chosen else "average" for f in range(d)]
    if kind == "main":
        f = _factor_index(spec, arg)
        return ["center" if g == f else "average" for g in range(d)]
    if kind == "simple":
        target, sep, given = arg.partition("|")
        if not sep:
            raise DesignError(f"simple effect must look like 'simple:A|B', got {text!r}")
        f = _factor_index(spec, target)
        cond = {_factor_index(spec, g) for g in given.split(",")}
        if f in cond:
            raise DesignError("a factor cannot be conditioned on itself")
        return [
            "center" if g == f else "identity" if g in cond else "average" for g in range(d)
        ]
    raise DesignError(f"unknown effect {text!r}")


def factorial_contrasts(spec: DesignSpec) -> ContrastMatrix:
    """Contrast of a factorial effect as a Kronecker product of per-factor blocks.

    Factors in the effect contribute ``I - 11^T / K_f``, averaged factors
    ``1^T / K_f`` and conditioning factors of a simple effect ``I``.  For two
    factors this gives ``mu^ij - mu^i. - mu^.j + mu^..`` (interaction),
    ``mu^i. - mu^..`` (main effect of A) and ``mu^ij - mu^.j`` (A within B).
    """
    if spec.effect.strip().lower() in ("one-way", "oneway"):
        return one_way_contrasts(spec.n_groups, spec.scaling_s)
    roles = _parse_effect(spec)
    blocks = []
    for k, role in zip(spec.factor_sizes, roles):
        if role == "center":
            blocks.append(_centering(k))
        elif role == "average":
            blocks.append(_averaging(k))
        else:
            blocks.append(np.eye(k))
    L = reduce(np.kron, blocks)
    s = spec.n_groups if spec.scaling_s is None else spec.scaling_s
    return ContrastMatrix(L, s, spec.effect.strip())


def parse_design(descriptor, n_groups=None, scaling_s=None) -> ContrastMatrix:
    """Build a contrast from a descriptor string or a raw matrix.

    Strings are ``"one-way"`` (needs ``n_groups``) or ``"<K1>x<K2>[x...]:<effect>"``
    such as ``"2x3:interaction:A,B"`` or ``"2x3:main:A"``.
    """
    if not isinstance(descriptor, str):
        s = 1.0 if scaling_s is None else scaling_s
        return ContrastMatrix(np.asarray(descriptor, dtype=float), s, "custom")
    text = descriptor.strip()
    if text.lower() in ("one-way", "oneway"):
        if n_groups is None:
            raise DesignError("one-way design needs the number of groups")
        return one_way_contrasts(n_groups, scaling_s)
    layout, sep, effect = text.partition(":")
    if not sep:
        raise DesignError(f"design must look like '2x3:interaction', got {text!r}")
    try:
        sizes = tuple(int(x) for x in layout.lower().split("x"))
    except ValueError as exc:
        raise DesignError(f"bad factor sizes {layout!r}") from exc
    L = factorial_contrasts(DesignSpec(sizes, effect, scaling_s))
    if n_groups is not None and L.n_groups != n_groups:
        raise DesignError(f"design has {L.n_groups} cells but data has {n_groups} groups")
    return L


def _sizes(n):
    n = np.asarray(n)
    if n.ndim != 1 or n.size < 1:
        raise InputError("sample sizes must be a non-empty vector")
    if np.any(n < 1):
        raise InputError("all sample sizes must be at least 1")
    return n


def rho(n) -> float:
    """``1 / sum_k (1 / n_k)``; equals ``n_1 n_2 / (n_1 + n_2)`` for two groups."""
    n = _sizes(n)
    return float(1.0 / np.sum(1.0 / n.astype(float)))


def delta_hat(n, exact=False):
    """Shares ``rho_n / n_k``; they sum to one.

    With ``exact=True`` integer sizes give :class:`fractions.Fraction` entries.
    """
    n = _sizes(n)
    if exact:
        inv = [Fraction(1, int(k)) for k in n]
        total = sum(inv)
        return [x / total for x in inv]
    inv = 1.0 / n.astype(float)
    return inv / inv.sum()
