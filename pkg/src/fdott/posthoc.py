"""Single-step max-tests over the rows of a contrast (Tukey-style HSD).

Each row ``m`` of ``L`` is a sub-hypothesis ``[L mu]_m = 0`` with statistic
``T_m = sqrt(rho_n) OT±([L mu_hat]_m, 0)``.  One critical value, the
``(1 - alpha)``-quantile of ``max_m w_m OT±([L G]_m, 0)`` under the plug-in
Gaussian limit, serves all rows.  The weighted variant for one-way layouts
uses ``w_ij`` proportional to ``1 / sqrt(delta_i + delta_j)`` so that every
pair has the same variance prefactor.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _parallel
from .design import ContrastMatrix, delta_hat, one_way_contrasts, rho
from .errors import InputError
from .inference import _cost_array, _gaussian_from, gaussian_factors, quantile
from .measures import GroupSamples
from .ot_core import signed_ot_rows


def pair_weights(n, pairs) -> np.ndarray:
    """Normalized weights ``1/sqrt(delta_i + delta_j)`` for the given group pairs."""
    d = delta_hat(n)
    raw = np.array([1.0 / math.sqrt(d[i] + d[j]) for i, j in pairs])
    return raw / raw.sum()


@dataclass(frozen=True)
class PosthocReport:
    """Per-row statistics, shared critical value and decisions.

    ``reject[m]`` holds exactly when ``weights[m] * statistics[m]`` exceeds
    ``critical_value``, equivalently when ``p_values[m] <= alpha``.
    """

    statistics: tuple
    weights: tuple
    critical_value: float
    reject: tuple
    p_values: tuple
    alpha: float
    labels: tuple
    weighted: bool
    n_draws: int
    seed: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = [list(x) if isinstance(x, tuple) else x for x in self.labels]
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def rejected(self, label) -> bool:
        return self.reject[self.labels.index(tuple(label) if isinstance(label, list) else label)]


def tukey_hsd(
    data, c, L=None, *, alpha=0.05, J=1000, weighted=False, seed=None, workers=1
) -> PosthocReport:
    """Simultaneous test of all rows of ``L`` with family-wise level ``alpha``.

    Parameters
    ----------
    data : GroupSamples or array_like of counts
    c : CostMatrix or array_like
    L : ContrastMatrix, optional
        Defaults to all pairwise differences.
    alpha : float
    J : int
        Plug-in draws of the max statistic.
    weighted : bool
        Use pair weights; requires a one-way ``L``.
    seed : int, SeedSequence or Generator
    workers : int

    Returns
    -------
    PosthocReport
    """
    data = data if isinstance(data, GroupSamples) else GroupSamples(data)
    K, N = data.n_groups, data.n_points
    L = one_way_contrasts(K) if L is None else L
    if not isinstance(L, ContrastMatrix) or L.n_groups != K:
        raise InputError(f"contrast must be a ContrastMatrix with {K} columns")
    n = data.sizes
    C = _cost_array(c, N)
    mu_hat = data.empirical()
    if weighted:
        if not L.is_one_way:
            raise InputError("weighted HSD needs pairwise rows (one-way contrast)")
        w = pair_weights(n, L.pairs)
    else:
        w = np.ones(L.n_rows)
    labels = L.pairs if L.is_one_way else tuple(range(L.n_rows))

    T = math.sqrt(rho(n)) * signed_ot_rows(L.apply(mu_hat), C)
    F = gaussian_factors(mu_hat, delta_hat(n))
    base = _parallel.seed_sequence(seed)

    def fn(a, b):
        G = _gaussian_from(F, _parallel.generators(base, a, b))
        return (w * signed_ot_rows(L.apply(G), C)).max(axis=1)

    maxima = _parallel.run_chunks(fn, int(J), workers)
    t_crit = quantile(maxima, alpha, "plugin")
    scaled = w * T
    p = np.array([np.count_nonzero(maxima >= x) / maxima.size for x in scaled])
    return PosthocReport(
        statistics=tuple(float(x) for x in T),
        weights=tuple(float(x) for x in w),
        critical_value=float(t_crit),
        reject=tuple(bool(x <= alpha) for x in p),
        p_values=tuple(float(x) for x in p),
        alpha=float(alpha),
        labels=tuple(labels),
        weighted=bool(weighted),
        n_draws=int(J),
        seed=int(seed) if isinstance(seed, (int, np.integer)) else None,
    )
