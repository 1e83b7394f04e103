"""Test statistics, limit-law samplers, p-values and test decisions.

Null-limit samplers
-------------------
``plugin``
    ``(1/s) sum_m OT±([L G]_m, 0)`` with ``G^k ~ N(0, delta_k Sigma(mu_hat^k))``
    and ``delta_k = rho_n / n_k``.
``plugin_pooled``
    The same with every ``mu_hat^k`` replaced by the pooled empirical measure.
``boot_m_of_n``
    ``(sqrt(rho_l)/s) sum_m OT±([L mu*]_m, 0)`` with ``mu*^k`` an empirical
    measure of ``l_k = round(n_k^gamma)`` draws from ``mu_hat^k``.
``boot_derivative``
    ``(1/s) sum_m OT±([L sqrt(rho_n) (mu* - mu_hat)]_m, 0)`` with ``l_k = n_k``.
``permutation``
    The statistic recomputed after randomly relabeling the pooled observations
    into groups of the original sizes (one-way layouts only).

All samplers are deterministic in ``(seed, draw index)``; see
:mod:`fdott._parallel`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _parallel
from ._version import __version__
from .barycenter import NullPsiProgram, solve_barycenter
from .design import ContrastMatrix, delta_hat, one_way_contrasts, rho
from .errors import InputError, SupportMismatchError
from .measures import TOL_MASS, CostMatrix, GroupSamples, gaussian_factor
from .ot_core import DualFaceProgram, signed_ot_rows

NULL_METHODS = ("plugin", "plugin_pooled", "boot_m_of_n", "boot_derivative", "permutation")
METHODS = NULL_METHODS + ("alternative_face", "local_shift")
METHOD_ALIASES = {
    "plugin-pooled": "plugin_pooled",
    "pooled": "plugin_pooled",
    "boot-m": "boot_m_of_n",
    "boot-deriv": "boot_derivative",
    "perm": "permutation",
}
DEFAULT_GAMMA = 0.5


def normalize_method(method: str) -> str:
    m = METHOD_ALIASES.get(method, method)
    if m not in METHODS:
        raise InputError(f"unknown method {method!r}")
    return m


@dataclass(frozen=True)
class LimitSampleSet:
    """``J`` Monte Carlo draws from a limit law, with provenance."""

    draws: np.ndarray
    method: str
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.array(self.draws, dtype=float)
        if d.ndim != 1 or d.size < 1:
            raise InputError("a sample set needs at least one draw")
        if not np.all(np.isfinite(d)):
            raise InputError("draws must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "draws", d)
        object.__setattr__(self, "method", normalize_method(self.method))

    @property
    def J(self) -> int:
        return self.draws.size


@dataclass(frozen=True)
class TestReport:
    """Outcome of one test; ``reject`` holds exactly when ``p_value <= alpha``."""

    __test__ = False  # not a pytest test class

    statistic: float
    p_value: float
    quantile: float
    alpha: float
    reject: bool
    method: str
    design: str
    statistic_kind: str = "fdott"
    n_draws: int = 0
    seed: int | None = None
    sizes: tuple = ()
    gamma: float | None = None
    version: str = __version__

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = [int(x) for x in self.sizes]
        return d

    @classmethod
    def from_dict(cls, d) -> "TestReport":
        d = dict(d)
        d["sizes"] = tuple(d.get("sizes", ()))
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text) -> "TestReport":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class LocalAlternative:
    """Null measures ``mus`` perturbed towards ``nus`` at rate ``1/sqrt(n_k)``.

    Parameters
    ----------
    mus, nus : array_like, shape (K, N)
    sizes : sequence of int, optional
        Group sizes; they fix ``delta_k = rho_n / n_k``.  Equal sizes are
        assumed when omitted.
    """

    mus: np.ndarray
    nus: np.ndarray
    sizes: tuple | None = None

    def __post_init__(self):
        mus = _prob_stack(self.mus, "base measures")
        nus = _prob_stack(self.nus, "perturbations")
        if mus.shape != nus.shape:
            raise InputError("base measures and perturbations differ in shape")
        if self.sizes is not None:
            sizes = tuple(int(x) for x in self.sizes)
            if len(sizes) != mus.shape[0]:
                raise InputError("need one size per group")
            object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "nus", nus)

    @property
    def deltas(self) -> np.ndarray:
        K = self.mus.shape[0]
        return np.full(K, 1.0 / K) if self.sizes is None else delta_hat(self.sizes)

    @property
    def eta(self) -> np.ndarray:
        return np.sqrt(self.deltas)[:, None] * (self.nus - self.mus)

    def perturbed(self) -> np.ndarray:
        """Measures ``nu^k / sqrt(n_k) + (1 - 1/sqrt(n_k)) mu^k``."""
        if self.sizes is None:
            raise InputError("sizes are needed to form the perturbed measures")
        r = 1.0 / np.sqrt(np.asarray(self.sizes, dtype=float))[:, None]
        return r * self.nus + (1.0 - r) * self.mus


def _prob_stack(mus, what="measures"):
    arr = np.array([np.asarray(getattr(m, "weights", m), dtype=float) for m in mus])
    if arr.ndim != 2:
        raise InputError(f"{what} must form a K x N array")
    if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-6):
        raise InputError(f"{what} must be probability vectors")
    return arr / arr.sum(axis=1, keepdims=True)


def _cost_array(c, n_points=None):
    c = c if isinstance(c, CostMatrix) else CostMatrix(c)
    if not c.is_identifiable:
        raise InputError("cost matrix must vanish exactly on the diagonal")
    if n_points is not None and c.n_points != n_points:
        raise InputError(f"cost matrix has {c.n_points} points, data has {n_points}")
    return np.ascontiguousarray(c.costs)


def _check_contrast(L, K):
    if not isinstance(L, ContrastMatrix):
        raise InputError("L must be a ContrastMatrix")
    if L.n_groups != K:
        raise InputError(f"contrast has {L.n_groups} columns but there are {K} groups")


def _uniform(K):
    return np.full(K, 1.0 / K)


def _contrast_sum(L, stacks, C):
    """``sum_m OT±([L x]_m, 0)`` for x of shape (K, N) or (J, K, N)."""
    return signed_ot_rows(L.apply(stacks), C).sum(axis=-1)


def fdott_statistic(mu_hats, L: ContrastMatrix, c, n) -> float:
    """``(sqrt(rho_n) / s) sum_m OT±([L mu_hat]_m, 0)``."""
    mus = _prob_stack(mu_hats)
    _check_contrast(L, mus.shape[0])
    C = _cost_array(c, mus.shape[1])
    return float(math.sqrt(rho(n)) / L.scaling_s * _contrast_sum(L, mus, C))


def bary_statistic(mu_hats, w, c, n) -> float:
    """``sqrt(rho_n)`` times the weighted barycenter value of the ``mu_hat``."""
    mus = _prob_stack(mu_hats)
    w = _uniform(mus.shape[0]) if w is None else w
    return float(math.sqrt(rho(n)) * solve_barycenter(mus, w, c).value)


def gaussian_factors(mus, deltas) -> np.ndarray:
    """Stack of ``sqrt(delta_k) A(mu^k)`` with ``A A^T = Sigma(mu^k)``."""
    mus = np.asarray(mus, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas < 0):
        raise InputError("deltas must be nonnegative")
    return np.sqrt(deltas)[:, None, None] * np.array([gaussian_factor(m) for m in mus])


def _gaussian_from(F, gens):
    K, N, _ = F.shape
    Z = np.stack([g.standard_normal((K, N)) for g in gens])
    return np.einsum("kni,jki->jkn", F, Z)


def sample_gaussian(mus, deltas, rng, size=None) -> np.ndarray:
    """Draw ``G^k = sqrt(delta_k) A(mu^k) Z_k`` with independent standard normal ``Z_k``.

    Returns shape (K, N), or (size, K, N) when ``size`` is given.  Rows sum to
    zero up to rounding.
    """
    mus = _prob_stack(mus)
    F = gaussian_factors(mus, deltas)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    K, N = mus.shape
    Z = rng.standard_normal((1 if size is None else size, K, N))
    G = np.einsum("kni,jki->jkn", F, Z)
    return G[0] if size is None else G


def resample_sizes(n, gamma=DEFAULT_GAMMA):
    """``l_k = round(n_k^gamma)``, clipped to ``[1, n_k]``."""
    n = np.asarray(n, dtype=np.int64)
    return np.clip(np.rint(n.astype(float) ** gamma).astype(np.int64), 1, n)


def _seed_label(base):
    return int(base.entropy) if not base.spawn_key else None


def sample_null_limit(
    data,
    L,
    c,
    method="plugin",
    J=1000,
    seed=None,
    *,
    gamma=DEFAULT_GAMMA,
    sizes_l=None,
    workers=1,
    statistic="fdott",
    w=None,
) -> LimitSampleSet:
    """Draws approximating the null limit law of the test statistic.

    Parameters
    ----------
    data : GroupSamples or array_like of counts (K x N)
    L : ContrastMatrix or None
        Contrast for the FDOTT statistic; ignored for the barycenter statistic.
    c : CostMatrix or array_like
    method : str
        One of ``plugin``, ``plugin_pooled``, ``boot_m_of_n``,
        ``boot_derivative``, ``permutation`` (CLI spellings accepted).
    J : int
        Number of draws.
    seed : int, SeedSequence or Generator
    gamma : float
        Exponent of the m-out-of-n resample sizes.
    sizes_l : sequence of int, optional
        Explicit m-out-of-n resample sizes, overriding ``gamma``.
    workers : int
        Threads; results do not depend on it.
    statistic : {"fdott", "barycenter"}
    w : array_like, optional
        Barycenter weights, uniform by default.

    Returns
    -------
    LimitSampleSet
    """
    method = normalize_method(method)
    if method not in NULL_METHODS:
        raise InputError(f"{method} is not a null-limit method")
    data = data if isinstance(data, GroupSamples) else GroupSamples(data)
    K, N = data.n_groups, data.n_points
    n = data.sizes
    mu_hat = data.empirical()
    C = _cost_array(c, N)
    J = int(J)
    if J < 1:
        raise InputError("J must be at least 1")
    base = _parallel.seed_sequence(seed)
    meta = {"J": J}
    if statistic == "fdott":
        if L is None:
            L = one_way_contrasts(K)
        _check_contrast(L, K)
        s = L.scaling_s
    elif statistic == "barycenter":
        w = _uniform(K) if w is None else np.asarray(w, dtype=float)
    else:
        raise InputError(f"unknown statistic {statistic!r}")
    if method == "permutation" and statistic == "fdott" and not L.is_one_way:
        raise InputError("permutation requires exchangeability under the null (one-way L)")

    pooled = data.counts.sum(axis=0) / n.sum()
    rho_n = rho(n)
    dhat = delta_hat(n)

    if method in ("plugin", "plugin_pooled"):
        if statistic == "barycenter":
            # the null limit sits at a common measure; restrict to its support
            supp = np.flatnonzero(pooled > 0)
            prog = NullPsiProgram(w, C[np.ix_(supp, supp)])
            F = gaussian_factors(np.tile(pooled[supp], (K, 1)), dhat)

            def fn(a, b):
                G = _gaussian_from(F, _parallel.generators(base, a, b))
                return [prog.value(g) for g in G]

        else:
            est = np.tile(pooled, (K, 1)) if method == "plugin_pooled" else mu_hat
            F = gaussian_factors(est, dhat)

            def fn(a, b):
                G = _gaussian_from(F, _parallel.generators(base, a, b))
                return _contrast_sum(L, G, C) / s

    elif method in ("boot_m_of_n", "boot_derivative"):
        if method == "boot_m_of_n":
            ell = resample_sizes(n, gamma) if sizes_l is None else np.asarray(sizes_l, np.int64)
            if ell.shape != (K,) or np.any(ell < 1) or np.any(ell > n):
                raise InputError("resample sizes must satisfy 1 <= l_k <= n_k")
            meta.update(gamma=float(gamma) if sizes_l is None else None, sizes_l=ell.tolist())
        else:
            ell = n.copy()
            if statistic == "barycenter":
                raise InputError("the derivative bootstrap is defined for the FDOTT statistic only")
        rho_l = rho(ell)

        def resample(gens):
            return np.stack([g.multinomial(ell, mu_hat) for g in gens]) / ell[None, :, None]

        if method == "boot_derivative":

            def fn(a, b):
                star = resample(_parallel.generators(base, a, b))
                return _contrast_sum(L, math.sqrt(rho_n) * (star - mu_hat), C) / s

        elif statistic == "barycenter":

            def fn(a, b):
                star = resample(_parallel.generators(base, a, b))
                return [math.sqrt(rho_l) * solve_barycenter(x, w, C).value for x in star]

        else:

            def fn(a, b):
                star = resample(_parallel.generators(base, a, b))
                return math.sqrt(rho_l) / s * _contrast_sum(L, star, C)

    else:
        obs = np.repeat(np.arange(N), data.counts.sum(axis=0))
        labels = np.repeat(np.arange(K), n)
        meta.update(sizes=n.tolist())

        def relabel(gens):
            out = np.empty((len(gens), K, N))
            for t, g in enumerate(gens):
                perm = g.permutation(obs)
                out[t] = np.bincount(labels * N + perm, minlength=K * N).reshape(K, N)
            return out / n[None, :, None]

        if statistic == "barycenter":

            def fn(a, b):
                star = relabel(_parallel.generators(base, a, b))
                return [math.sqrt(rho_n) * solve_barycenter(x, w, C).value for x in star]

        else:

            def fn(a, b):
                star = relabel(_parallel.generators(base, a, b))
                return math.sqrt(rho_n) / s * _contrast_sum(L, star, C)

    draws = _parallel.run_chunks(fn, J, workers)
    return LimitSampleSet(draws, method, _seed_label(base), meta)


def _draws_and_method(draws, method):
    if isinstance(draws, LimitSampleSet):
        return draws.draws, draws.method
    return np.asarray(draws, dtype=float), normalize_method(method or "plugin")


def p_value(statistic, draws, method=None) -> float:
    """Monte Carlo p-value: ``#{Z >= T} / J``, or ``(#{Z >= T} + 1) / (J + 1)`` for permutations."""
    z, method = _draws_and_method(draws, method)
    hits = int(np.count_nonzero(z >= statistic))
    if method == "permutation":
        return (hits + 1) / (z.size + 1)
    return hits / z.size


def quantile(draws, alpha, method=None) -> float:
    """Empirical ``(1 - alpha)``-quantile as the higher order statistic.

    Asymptotic methods use ``Z_(ceil((1 - alpha) J))``; permutations use
    ``Z_(ceil((1 - alpha)(J + 1)))``, which is ``+inf`` when the index exceeds
    ``J``.  With these choices ``T > quantile`` holds exactly when
    ``p_value <= alpha``.
    """
    z, method = _draws_and_method(draws, method)
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    J = z.size
    total = J + 1 if method == "permutation" else J
    # guard against (1 - alpha) * total landing a hair above an integer
    k = math.ceil((1.0 - alpha) * total - 1e-9)
    if k > J:
        return math.inf
    return float(np.sort(z)[max(k, 1) - 1])


def run_test(
    data,
    c,
    L=None,
    *,
    method="plugin",
    alpha=0.05,
    J=1000,
    seed=None,
    gamma=DEFAULT_GAMMA,
    workers=1,
    statistic="fdott",
    w=None,
) -> TestReport:
    """Compute the statistic, sample its null limit and decide.

    The test rejects when the p-value is at most ``alpha``, equivalently when
    the statistic strictly exceeds the reported quantile.
    """
    data = data if isinstance(data, GroupSamples) else GroupSamples(data)
    method = normalize_method(method)
    K = data.n_groups
    if statistic == "fdott":
        L = one_way_contrasts(K) if L is None else L
        T = fdott_statistic(data.empirical(), L, c, data.sizes)
        design = L.label
    elif statistic == "barycenter":
        T = bary_statistic(data.empirical(), w, c, data.sizes)
        design = "one-way"
    else:
        raise InputError(f"unknown statistic {statistic!r}")
    base = _parallel.seed_sequence(seed)
    sample = sample_null_limit(
        data, L, c, method, J, base, gamma=gamma, workers=workers, statistic=statistic, w=w
    )
    p = p_value(T, sample)
    q = quantile(sample, alpha)
    return TestReport(
        statistic=float(T),
        p_value=float(p),
        quantile=float(q),
        alpha=float(alpha),
        reject=bool(p <= alpha),
        method=method,
        design=design,
        statistic_kind=statistic,
        n_draws=int(J),
        seed=int(seed) if isinstance(seed, (int, np.integer)) else _seed_label(base),
        sizes=tuple(int(x) for x in data.sizes),
        gamma=float(gamma) if method == "boot_m_of_n" else None,
    )


def sample_alternative_limit(mus, L, c, deltas, J=1000, seed=None, workers=1) -> LimitSampleSet:
    """Draws of ``(1/s) sum_m max_{Phi*([L mu]_m)} <(u, v), (U, V)>`` at ``h = [L G]_m``.

    This is the limit law of ``T(mu_hat) - T(mu)`` under a fixed alternative.
    """
    mus = _prob_stack(mus)
    K, N = mus.shape
    _check_contrast(L, K)
    C = _cost_array(c, N)
    F = gaussian_factors(mus, deltas)
    programs = [DualFaceProgram(row, C) for row in L.apply(mus)]
    base = _parallel.seed_sequence(seed)

    def fn(a, b):
        H = L.apply(_gaussian_from(F, _parallel.generators(base, a, b)))
        return [sum(p.value(h) for p, h in zip(programs, rows)) / L.scaling_s for rows in H]

    draws = _parallel.run_chunks(fn, int(J), workers)
    return LimitSampleSet(draws, "alternative_face", _seed_label(base), {"J": int(J)})


def _local_sampler(la, c, flavor, L, w):
    mus = la.mus
    K, N = mus.shape
    C = _cost_array(c, N)
    if flavor == "fdott":
        L = one_way_contrasts(K) if L is None else L
        _check_contrast(L, K)
        if np.abs(L.apply(mus)).max() > TOL_MASS:
            raise InputError("base measures violate the null L mu = 0")

        def value(G):
            return _contrast_sum(L, G, C) / L.scaling_s

    elif flavor == "barycenter":
        if np.abs(mus - mus[0]).max() > TOL_MASS:
            raise InputError("the barycenter local limit needs identical base measures")
        if np.any(mus[0] <= 0):
            raise SupportMismatchError(
                "support mismatch: the base measure needs full support; "
                "restrict the ground space to the joint support first"
            )
        prog = NullPsiProgram(_uniform(K) if w is None else w, C)

        def value(G):
            return np.array([prog.value(g) for g in G])

    else:
        raise InputError(f"unknown flavor {flavor!r}")
    return gaussian_factors(mus, la.deltas), value


def sample_local_limit(
    la: LocalAlternative, c, J=1000, seed=None, *, flavor="fdott", L=None, w=None, shift=True,
    workers=1,
) -> LimitSampleSet:
    """Draws of the local-alternative limit ``H(G + eta)``.

    ``flavor="fdott"`` gives ``(1/s) sum_m OT±([L(G + eta)]_m, 0)``;
    ``flavor="barycenter"`` gives the null barycenter functional at ``G + eta``.
    ``shift=False`` drops ``eta`` and samples the null limit ``H(G)``.
    """
    F, value = _local_sampler(la, c, flavor, L, w)
    eta = la.eta if shift else np.zeros_like(la.mus)
    base = _parallel.seed_sequence(seed)

    def fn(a, b):
        return value(_gaussian_from(F, _parallel.generators(base, a, b)) + eta)

    draws = _parallel.run_chunks(fn, int(J), workers)
    meta = {"J": int(J), "flavor": flavor, "shift": bool(shift)}
    return LimitSampleSet(draws, "local_shift", _seed_label(base), meta)


@dataclass(frozen=True)
class LocalPower:
    power: float
    quantile: float
    null: LimitSampleSet
    shifted: LimitSampleSet


def local_power(la, c, alpha=0.05, J=1000, seed=None, *, flavor="fdott", L=None, w=None,
                workers=1) -> LocalPower:
    """Fraction of ``H(G + eta)`` draws above the ``(1 - alpha)``-quantile of ``H(G)``.

    The two draw sets use independent streams derived from ``seed``.
    """
    base = _parallel.seed_sequence(seed)
    kw = dict(flavor=flavor, L=L, w=w, workers=workers)
    null = sample_local_limit(la, c, J, _parallel.child(base, 0), shift=False, **kw)
    shifted = sample_local_limit(la, c, J, _parallel.child(base, 1), shift=True, **kw)
    q = quantile(null, alpha)
    power = float(np.mean(shifted.draws > q))
    return LocalPower(power, q, null, shifted)
