"""Measure generators, named simulation settings and experiment runners.

Settings live on the regular ``L x L`` grid with Euclidean costs.  One-way
and Tukey settings use truncated Poisson laws on the row-major point indices
``0..L^2-1``; two-way settings use random measures on the simplex.  Random
truths are drawn once per experiment from the experiment seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import ks_2samp, poisson

from . import _parallel
from .design import (
    ContrastMatrix,
    DesignSpec,
    delta_hat,
    factorial_contrasts,
    one_way_contrasts,
    rho,
)
from .errors import ConvergenceError, InputError
from .inference import (
    LocalAlternative,
    fdott_statistic,
    normalize_method,
    run_test,
    sample_alternative_limit,
)
from .measures import GroupSamples, ProbMeasure, grid_euclidean_cost
from .posthoc import tukey_hsd

LAWS = ("dirichlet1", "normalized_uniform")


def poisson_grid_measure(lam, side) -> ProbMeasure:
    """Poisson(``lam``) probabilities on ``0..side^2 - 1``, renormalized."""
    if lam < 0 or side < 1:
        raise InputError("need lam >= 0 and side >= 1")
    p = poisson.pmf(np.arange(side * side), lam)
    return ProbMeasure(p / p.sum())


def uniform_simplex_measure(N, rng, law="dirichlet1") -> ProbMeasure:
    """Random probability vector on ``N`` points.

    ``dirichlet1`` normalizes i.i.d. exponentials (uniform on the simplex);
    ``normalized_uniform`` normalizes i.i.d. uniforms on (0, 1).
    """
    if N < 1:
        raise InputError("N must be at least 1")
    if law == "dirichlet1":
        x = rng.standard_exponential(N)
    elif law == "normalized_uniform":
        x = rng.random(N)
    else:
        raise InputError(f"unknown law {law!r}; choose from {LAWS}")
    return ProbMeasure(x / x.sum())


def additive_part(mus) -> np.ndarray:
    """``mu^i. + mu^.j - mu^..`` for a K1 x K2 x N array of measures."""
    mus = np.asarray(mus, dtype=float)
    row = mus.mean(axis=1, keepdims=True)
    col = mus.mean(axis=0, keepdims=True)
    return row + col - mus.mean(axis=(0, 1), keepdims=True)


def two_way_null_project(initial, rng, law="normalized_uniform", max_rounds=10_000) -> np.ndarray:
    """Replace a grid of measures by measures without interaction.

    Each round maps every cell to its additive part.  Cells whose additive
    part has negative entries are redrawn from ``law`` and the round is
    repeated until all additive parts are nonnegative.

    Parameters
    ----------
    initial : array_like, shape (K1, K2, N)
    rng : numpy.random.Generator
    law : str
    max_rounds : int

    Returns
    -------
    ndarray, shape (K1, K2, N)
    """
    mus = np.array(initial, dtype=float)
    if mus.ndim != 3 or np.any(mus < 0):
        raise InputError("initial measures must form a nonnegative K1 x K2 x N array")
    K1, K2, N = mus.shape
    for _ in range(max_rounds):
        bar = additive_part(mus)
        bad = np.any(bar < 0, axis=2)
        if not bad.any():
            bar = np.maximum(bar, 0.0)
            return bar / bar.sum(axis=2, keepdims=True)
        for i, j in zip(*np.nonzero(bad)):
            mus[i, j] = uniform_simplex_measure(N, rng, law).weights
    raise ConvergenceError("null projection did not converge")


# -- named settings ---------------------------------------------------------

ONE_WAY_LAMBDAS = {
    "i": (13.0,) * 6,
    "ii": (14.84,) + (13.0,) * 5,
    "iii": (12.0, 12.4, 12.8, 13.2, 13.6, 14.0),
}
HSD_LAMBDAS = {
    "i": (13.0,) * 4,
    "ii": (16.0, 13.0, 13.0, 13.0),
    "iii": (13.0, 13.0, 16.0, 13.0),
    "iv": (11.0, 12.0 + 1.0 / 3.0, 13.0 + 2.0 / 3.0, 15.0),
}
HSD_SIZES = ((20, 50, 70, 30), (60, 150, 210, 90), (160, 400, 560, 240))
LOCAL_LAMBDAS = {
    "i": (15.0,) + (13.0,) * 5,
    "ii": (12.0, 12.4, 12.8, 13.2, 13.6, 14.0),
    "iii": (1.0,) + (13.0,) * 5,
    "iv": (5.0, 9.0, 13.0, 17.0, 21.0, 25.0),
    "v": (0.0,) + (13.0,) * 5,
    "vi": (0.0, 6.0, 12.0, 18.0, 24.0, 30.0),
}


def poisson_truth(lambdas, side=5) -> np.ndarray:
    return np.array([poisson_grid_measure(lam, side).weights for lam in lambdas])


def two_way_truth(setting, rng, side=5, shape=(2, 3), law="dirichlet1") -> np.ndarray:
    """Cell measures (K1*K2 x N, lexicographic) for two-way settings i, ii, iii.

    ``i`` projects normalized-uniform draws onto the no-interaction set,
    ``ii`` does the same and then replaces cell 0 by a draw from ``law``,
    ``iii`` draws every cell independently from ``law``.
    """
    K1, K2 = shape
    N = side * side
    if setting in ("i", "ii"):
        start = np.array(
            [[uniform_simplex_measure(N, rng, "normalized_uniform").weights for _ in range(K2)]
             for _ in range(K1)]
        )
        mus = two_way_null_project(start, rng).reshape(K1 * K2, N)
        if setting == "ii":
            mus[0] = uniform_simplex_measure(N, rng, law).weights
        return mus
    if setting == "iii":
        return np.array([uniform_simplex_measure(N, rng, law).weights for _ in range(K1 * K2)])
    raise InputError(f"unknown two-way setting {setting!r}")


def local_alternative(setting, side=5, sizes=None) -> LocalAlternative:
    """Base Poisson(13) measures on six groups perturbed towards a named setting."""
    if setting not in LOCAL_LAMBDAS:
        raise InputError(f"unknown local setting {setting!r}")
    lam = LOCAL_LAMBDAS[setting]
    return LocalAlternative(poisson_truth((13.0,) * len(lam), side), poisson_truth(lam, side), sizes)


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation experiment.

    Attributes
    ----------
    layout : {"one-way", "two-way", "hsd"}
    setting : str
        Roman numeral of the named setting, ``"custom"`` with ``lambdas``,
        ``"point_mass"``, or ``"random_null"`` / ``"random_alt"`` for one
        measure drawn from ``law`` and shared by all groups / one per group.
    side : int
        Grid side ``L``; the space has ``L^2`` points.
    sizes : tuple of int
        Group sizes (K entries).
    methods : tuple of str
        Null-limit methods, e.g. ``"plugin"``, ``"boot_m_of_n@0.8"``,
        ``"barycenter:plugin"``; for ``hsd`` use ``"plain"`` and ``"weighted"``.
    lambdas : tuple of float
        Poisson parameters for ``setting="custom"``.
    shape : tuple of int
        Factor sizes of a two-way layout.
    law : str
        Simplex law for random two-way truths.
    """

    layout: str = "one-way"
    setting: str = "i"
    side: int = 5
    sizes: tuple = (500,) * 6
    methods: tuple = ("plugin",)
    alpha: float = 0.05
    J: int = 1000
    R: int = 250
    seed: int = 0
    lambdas: tuple = ()
    shape: tuple = (2, 3)
    law: str = "dirichlet1"

    def __post_init__(self):
        if self.R < 1 or self.J < 1:
            raise InputError("R and J must be at least 1")
        if self.layout not in ("one-way", "two-way", "hsd"):
            raise InputError(f"unknown layout {self.layout!r}")
        object.__setattr__(self, "sizes", tuple(int(x) for x in self.sizes))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        object.__setattr__(self, "shape", tuple(int(x) for x in self.shape))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def experiment_truth(cfg: ExperimentConfig) -> np.ndarray:
    """Truth measures (K x N) of an experiment; random truths use the seed."""
    rng = np.random.default_rng(_parallel.child(_parallel.seed_sequence(cfg.seed), 0))
    if cfg.setting == "custom":
        return poisson_truth(cfg.lambdas, cfg.side)
    if cfg.setting == "point_mass":
        K = len(cfg.sizes)
        mus = np.zeros((K, cfg.side * cfg.side))
        mus[:, 0] = 1.0
        return mus
    K, N = len(cfg.sizes), cfg.side * cfg.side
    if cfg.setting == "random_null":
        return np.tile(uniform_simplex_measure(N, rng, cfg.law).weights, (K, 1))
    if cfg.setting == "random_alt":
        return np.array([uniform_simplex_measure(N, rng, cfg.law).weights for _ in range(K)])
    table = {"one-way": ONE_WAY_LAMBDAS, "hsd": HSD_LAMBDAS}.get(cfg.layout)
    if table is not None:
        if cfg.setting not in table:
            raise InputError(f"unknown {cfg.layout} setting {cfg.setting!r}")
        return poisson_truth(table[cfg.setting], cfg.side)
    return two_way_truth(cfg.setting, rng, cfg.side, cfg.shape, cfg.law)


def experiment_contrast(cfg: ExperimentConfig, K) -> ContrastMatrix:
    if cfg.layout == "two-way":
        return factorial_contrasts(DesignSpec(cfg.shape, "interaction"))
    return one_way_contrasts(K)


def sample_counts(mus, sizes, rng) -> GroupSamples:
    """Independent multinomial samples of the given sizes from each measure."""
    return GroupSamples(np.stack([rng.multinomial(n, m) for n, m in zip(sizes, mus)]))


def parse_method(entry):
    """Split ``"[barycenter:]method[@gamma]"`` into (statistic, method, gamma)."""
    statistic = "fdott"
    if entry.startswith("barycenter:"):
        statistic, entry = "barycenter", entry.split(":", 1)[1]
    name, _, g = entry.partition("@")
    gamma = float(g) if g else 0.5
    return statistic, normalize_method(name), gamma


def run_experiment(cfg: ExperimentConfig, workers=1) -> list:
    """Repeat sampling and testing ``R`` times; aggregate per method.

    Returns a list of rows ``{method, n, mean_p, reject_frac, R, J, seed}``.
    For the ``hsd`` layout there is one row per method and group pair with
    the pair's rejection frequency in ``reject_frac``.
    """
    mus = experiment_truth(cfg)
    K = mus.shape[0]
    if len(cfg.sizes) != K:
        raise InputError(f"need {K} group sizes, got {len(cfg.sizes)}")
    C = grid_euclidean_cost(cfg.side)
    base = _parallel.seed_sequence(cfg.seed)
    L = experiment_contrast(cfg, K)

    def replicate(r):
        data = sample_counts(mus, cfg.sizes, np.random.default_rng(_parallel.child(base, 1, r)))
        out = []
        for t, entry in enumerate(cfg.methods):
            seed = _parallel.child(base, 2, r, t)
            if cfg.layout == "hsd":
                if entry not in ("plain", "weighted"):
                    raise InputError(f"hsd methods are 'plain' and 'weighted', got {entry!r}")
                rep = tukey_hsd(data, C, L, alpha=cfg.alpha, J=cfg.J,
                                weighted=entry == "weighted", seed=seed)
                out.append((rep.p_values, rep.reject))
            else:
                statistic, method, gamma = parse_method(entry)
                rep = run_test(data, C, L if statistic == "fdott" else None, method=method,
                               alpha=cfg.alpha, J=cfg.J, seed=seed, gamma=gamma,
                               statistic=statistic)
                out.append(((rep.p_value,), (rep.reject,)))
        return out

    results = _map(replicate, range(cfg.R), workers)
    rows = []
    n_label = "/".join(str(x) for x in cfg.sizes) if len(set(cfg.sizes)) > 1 else str(cfg.sizes[0])
    for t, entry in enumerate(cfg.methods):
        p = np.array([res[t][0] for res in results])
        rej = np.array([res[t][1] for res in results], dtype=float)
        labels = L.pairs if cfg.layout == "hsd" else (None,)
        for m, lab in enumerate(labels):
            row = {"method": entry, "n": n_label}
            if lab is not None:
                row["pair"] = f"{lab[0] + 1}-{lab[1] + 1}"
            row.update(
                mean_p=float(p[:, m].mean()),
                reject_frac=float(rej[:, m].mean()),
                R=cfg.R,
                J=cfg.J,
                seed=cfg.seed,
            )
            rows.append(row)
    return rows


def _map(fn, items, workers):
    items = list(items)
    workers = max(1, int(workers or 1))
    if workers == 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ConvergenceResult:
    finite: np.ndarray
    limit: np.ndarray
    ks_distance: float
    meta: dict = field(default_factory=dict)


def convergence_samples(cfg: ExperimentConfig, n_samples=3000, workers=1) -> ConvergenceResult:
    """Finite-sample draws of the FDOTT statistic next to draws of its limit.

    Under the null the finite draws are ``T_n(mu_hat)`` and the limit is the
    plug-in law at the truth; otherwise the finite draws are centered,
    ``T_n(mu_hat) - T_n(mu)``, and compared with the dual-face limit.  The
    two-sample Kolmogorov-Smirnov distance between the sets is reported.
    """
    mus = experiment_truth(cfg)
    K = mus.shape[0]
    C = grid_euclidean_cost(cfg.side)
    L = experiment_contrast(cfg, K)
    base = _parallel.seed_sequence(cfg.seed)
    n = np.asarray(cfg.sizes)
    center = fdott_statistic(mus, L, C, n)

    def fn(a, b):
        out = []
        for gen in _parallel.generators(_parallel.child(base, 3), a, b):
            data = sample_counts(mus, cfg.sizes, gen)
            out.append(fdott_statistic(data.empirical(), L, C, n) - center)
        return out

    finite = _parallel.run_chunks(fn, int(n_samples), workers)
    limit = sample_alternative_limit(
        mus, L, C, delta_hat(n), int(n_samples), _parallel.child(base, 4), workers
    ).draws
    ks = float(ks_2samp(finite, limit).statistic) if np.ptp(np.r_[finite, limit]) > 0 else 0.0
    return ConvergenceResult(finite, np.asarray(limit), ks, {"center": center, "rho": rho(n)})
