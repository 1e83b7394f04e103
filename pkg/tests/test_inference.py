import math

import numpy as np
import pytest
from conftest import random_metric
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.spatial.distance import cdist
from scipy.stats import ks_2samp

from fdott import (
    GroupSamples,
    InputError,
    LimitSampleSet,
    LocalAlternative,
    TestReport,
    bary_statistic,
    delta_hat,
    factorial_contrasts,
    DesignSpec,
    fdott_statistic,
    grid_euclidean_cost,
    multinomial_sigma,
    one_way_contrasts,
    p_value,
    quantile,
    run_test,
    sample_alternative_limit,
    sample_gaussian,
    sample_local_limit,
    sample_null_limit,
    signed_ot,
    solve_ot,
)
from fdott.inference import METHODS, NULL_METHODS, local_power, normalize_method
from fdott.sim import local_alternative, poisson_truth

METHODS_CLI = ["plugin", "plugin-pooled", "boot-m", "boot-deriv", "perm"]

# fixed instance whose statistic was evaluated with a dense LP per contrast row
ORACLE_COUNTS = np.array([[18, 12, 13, 17], [11, 15, 16, 4], [1, 6, 5, 17]])
ORACLE_POINTS = np.array([
    [0.005265304565574724, 0.8212284183827663],
    [0.7970694287520462, 0.4679349528437208],
    [0.3030324268193135, 0.2784256121007733],
    [0.2548695876541246, 0.4450763058826466],
])
ORACLE_STATISTIC = 0.1763144982058383


def counts_from(rng, mus, n):
    return GroupSamples(np.stack([rng.multinomial(k, m) for k, m in zip(np.broadcast_to(n, len(mus)), mus)]))


class TestStatistics:
    def test_identical(self, rng):
        mu = rng.dirichlet(np.ones(4))
        mus = np.tile(mu, (3, 1))
        C = random_metric(rng, 4)
        assert fdott_statistic(mus, one_way_contrasts(3), C, [10, 20, 30]) == 0.0
        assert bary_statistic(mus, None, C, [10, 20, 30]) == pytest.approx(0.0, abs=1e-12)

    def test_two_groups(self, rng):
        C = random_metric(rng, 5)
        mus = rng.dirichlet(np.ones(5), 2)
        n = [30, 70]
        ot = solve_ot(mus[0], mus[1], C).value
        expected = math.sqrt(30 * 70 / 100) / 4 * ot
        assert fdott_statistic(mus, one_way_contrasts(2), C, n) == pytest.approx(expected, rel=1e-12)
        assert bary_statistic(mus, [0.5, 0.5], C, n) == pytest.approx(math.sqrt(21) * ot / 2, rel=1e-9)

    def test_oracle_instance(self):
        n = ORACLE_COUNTS.sum(axis=1)
        mus = ORACLE_COUNTS / n[:, None]
        C = cdist(ORACLE_POINTS, ORACLE_POINTS)
        assert fdott_statistic(mus, one_way_contrasts(3), C, n) == pytest.approx(ORACLE_STATISTIC, rel=1e-12)

    def test_sandwich(self, rng):
        # one-way FDOTT equals sqrt(rho) * D / 2 with D the ordered-pair mean
        for _ in range(20):
            K, N = int(rng.integers(2, 5)), int(rng.integers(2, 6))
            C = random_metric(rng, N)
            mus = rng.dirichlet(np.ones(N), K)
            n = rng.integers(5, 100, K)
            f = fdott_statistic(mus, one_way_contrasts(K), C, n)
            b = bary_statistic(mus, None, C, n)
            assert f <= b + 1e-9 and b <= 2 * f + 1e-9


class TestGaussian:
    def test_zero_delta(self, rng):
        mus = rng.dirichlet(np.ones(4), 2)
        G = sample_gaussian(mus, [0.0, 1.0], rng, size=10)
        assert_array_equal(G[:, 0], 0)
        assert np.abs(G[:, 1]).max() > 0

    def test_point_mass(self, rng):
        G = sample_gaussian([[1.0, 0, 0], [0.2, 0.3, 0.5]], [0.5, 0.5], rng, size=10)
        assert_allclose(G[:, 0], 0, atol=1e-15)

    def test_rows_sum_to_zero(self, rng):
        G = sample_gaussian(rng.dirichlet(np.ones(6), 3), [0.2, 0.3, 0.5], rng, size=50)
        assert np.abs(G.sum(axis=-1)).max() <= 1e-12

    def test_covariance(self, rng):
        mu = np.array([0.1, 0.2, 0.3, 0.4])
        d = 0.3
        G = sample_gaussian([mu], [d], rng, size=100_000)[:, 0]
        S = d * multinomial_sigma(mu)
        emp = G.T @ G / G.shape[0]
        # standard error of a product moment of a centered Gaussian pair
        se = np.sqrt((S**2 + np.outer(np.diag(S), np.diag(S))) / G.shape[0])
        assert np.all(np.abs(emp - S) <= 3 * se + 1e-15)


class TestPValueQuantile:
    def test_above_all_plugin(self):
        assert p_value(10.0, np.linspace(0, 1, 100), "plugin") == 0.0

    def test_above_all_permutation(self):
        assert p_value(10.0, np.linspace(0, 1, 19), "permutation") == pytest.approx(0.05)

    def test_median(self):
        z = np.arange(101.0)
        assert p_value(50.0, z, "plugin") == pytest.approx(0.5, abs=0.01)

    def test_monotone(self, rng):
        z = rng.exponential(size=200)
        ts = np.sort(rng.exponential(size=50))
        ps = [p_value(t, z) for t in ts]
        assert all(a >= b for a, b in zip(ps, ps[1:]))

    def test_permutation_quantile_infinite(self):
        assert quantile(np.arange(10.0), 0.05, "permutation") == math.inf

    def test_quantile_higher_order_statistic(self):
        z = np.arange(1, 101, dtype=float)
        assert quantile(z, 0.05, "plugin") == 95.0
        assert quantile(z[:99], 0.05, "permutation") == 95.0

    @settings(max_examples=300, deadline=None)
    @given(
        st.lists(st.integers(0, 20), min_size=1, max_size=60),
        st.integers(0, 21),
        st.sampled_from([0.01, 0.05, 0.1, 0.2, 0.5]),
        st.sampled_from(["plugin", "permutation"]),
    )
    def test_decision_consistency(self, draws, t, alpha, method):
        z = np.asarray(draws, dtype=float)
        assert (p_value(float(t), z, method) <= alpha) == (t > quantile(z, alpha, method))

    def test_bad_alpha(self):
        with pytest.raises(InputError):
            quantile(np.ones(5), 1.0)


class TestSampleNullLimit:
    def setup_method(self):
        self.C = grid_euclidean_cost(3)
        self.mus = poisson_truth((4.0, 4.0, 4.0), 3)

    def test_point_mass_plugin(self):
        data = GroupSamples([[20, 0, 0], [30, 0, 0]])
        s = sample_null_limit(data, None, grid_euclidean_cost(3, 1), "plugin", 60, 1)
        assert_array_equal(s.draws, 0)

    def test_permutation_degenerate(self):
        data = GroupSamples([[0, 7, 0], [0, 7, 0], [0, 7, 0]])
        s = sample_null_limit(data, None, grid_euclidean_cost(3, 1), "perm", 30, 1)
        assert_array_equal(s.draws, 0)

    @pytest.mark.parametrize("method", METHODS_CLI)
    def test_nonnegative_and_deterministic(self, rng, method):
        data = counts_from(rng, self.mus, 40)
        a = sample_null_limit(data, None, self.C, method, 120, 5, workers=1)
        b = sample_null_limit(data, None, self.C, method, 120, 5, workers=3)
        assert isinstance(a, LimitSampleSet) and a.J == 120
        assert np.all(a.draws >= 0)
        assert_array_equal(a.draws, b.draws)
        assert a.method == normalize_method(method)
        c = sample_null_limit(data, None, self.C, method, 120, 6)
        assert not np.array_equal(a.draws, c.draws)

    def test_prefix_stability(self, rng):
        data = counts_from(rng, self.mus, 40)
        a = sample_null_limit(data, None, self.C, "plugin", 130, 9)
        b = sample_null_limit(data, None, self.C, "plugin", 60, 9)
        assert_array_equal(a.draws[:60], b.draws)

    @pytest.mark.parametrize("method", ["plugin", "boot-m", "perm"])
    def test_barycenter_methods(self, rng, method):
        data = counts_from(rng, self.mus, 30)
        a = sample_null_limit(data, None, self.C, method, 40, 2, statistic="barycenter")
        b = sample_null_limit(data, None, self.C, method, 40, 2, statistic="barycenter", workers=2)
        assert np.all(a.draws >= -1e-12)
        assert_array_equal(a.draws, b.draws)

    def test_barycenter_derivative_unsupported(self, rng):
        data = counts_from(rng, self.mus, 30)
        with pytest.raises(InputError):
            sample_null_limit(data, None, self.C, "boot-deriv", 10, 1, statistic="barycenter")

    def test_permutation_requires_one_way(self, rng):
        data = counts_from(rng, poisson_truth((4.0,) * 4, 3), 30)
        L = factorial_contrasts(DesignSpec((2, 2)))
        with pytest.raises(InputError, match="exchangeab"):
            sample_null_limit(data, L, self.C, "permutation", 10, 1)

    def test_pooled_matches_unpooled_under_identical_groups(self):
        mu = np.full(9, 1 / 9)
        counts = np.tile(np.full(9, 20), (3, 1))
        data = GroupSamples(counts)
        assert_allclose(data.empirical(), np.tile(mu, (3, 1)))
        a = sample_null_limit(data, None, self.C, "plugin", 2000, 1).draws
        b = sample_null_limit(data, None, self.C, "plugin-pooled", 2000, 2).draws
        assert ks_2samp(a, b).pvalue > 0.001

    def test_boot_sizes(self, rng):
        data = counts_from(rng, self.mus, 100)
        s = sample_null_limit(data, None, self.C, "boot-m", 5, 1, gamma=0.5)
        assert s.meta["sizes_l"] == [10, 10, 10]
        with pytest.raises(InputError):
            sample_null_limit(data, None, self.C, "boot-m", 5, 1, sizes_l=[0, 5, 5])

    def test_unknown_method(self, rng):
        data = counts_from(rng, self.mus, 10)
        with pytest.raises(InputError):
            sample_null_limit(data, None, self.C, "jackknife", 5, 1)

    def test_method_names(self):
        assert set(NULL_METHODS) < set(METHODS)
        assert [normalize_method(m) for m in METHODS_CLI] == list(NULL_METHODS)


class TestRunTest:
    def setup_method(self):
        self.C = grid_euclidean_cost(3)

    @pytest.mark.parametrize("method", METHODS_CLI)
    def test_identical_groups(self, method):
        data = GroupSamples(np.tile([3, 5, 2, 0, 4, 1, 1, 2, 2], (3, 1)))
        rep = run_test(data, self.C, method=method, J=100, seed=0)
        assert rep.statistic == 0.0
        assert rep.p_value >= 0.05 and not rep.reject
        for alpha in (0.01, 0.5, 0.99):
            assert not run_test(data, self.C, method=method, J=50, seed=0, alpha=alpha).reject

    def test_scaling_invariance(self, rng):
        data = counts_from(rng, poisson_truth((3.0, 4.0, 5.0), 3), 40)
        L = one_way_contrasts(3)
        a = run_test(data, self.C, L, J=200, seed=3)
        b = run_test(data, self.C, L.with_scaling(2.5), J=200, seed=3)
        assert a.p_value == b.p_value and a.reject == b.reject
        assert b.statistic == pytest.approx(a.statistic * 9 / 2.5, rel=1e-12)

    def test_consistency(self):
        mus = poisson_truth((3.0, 4.0, 5.0), 3)
        freqs = []
        for n in (10, 40, 160):
            rng = np.random.default_rng(n)
            hits = [run_test(counts_from(rng, mus, n), self.C, J=200, seed=r).reject for r in range(30)]
            freqs.append(np.mean(hits))
        assert freqs[-1] >= 0.95
        assert freqs[0] < freqs[-1]

    def test_report_fields_and_round_trip(self, rng):
        data = counts_from(rng, poisson_truth((3.0, 4.0, 5.0), 3), 40)
        rep = run_test(data, self.C, method="boot-m", gamma=0.6, J=50, seed=11)
        assert rep.reject == (rep.p_value <= rep.alpha)
        assert rep.reject == (rep.statistic > rep.quantile)
        assert rep.seed == 11 and rep.n_draws == 50 and rep.gamma == 0.6
        assert rep.method == "boot_m_of_n"
        again = TestReport.from_json(rep.to_json())
        assert again == rep

    def test_barycenter_statistic(self, rng):
        data = counts_from(rng, poisson_truth((3.0, 4.0, 5.0), 3), 40)
        rep = run_test(data, self.C, statistic="barycenter", J=50, seed=1)
        assert rep.statistic_kind == "barycenter"
        assert rep.statistic == pytest.approx(bary_statistic(data.empirical(), None, self.C, data.sizes))

    def test_cost_size_mismatch(self, rng):
        data = counts_from(rng, poisson_truth((3.0, 4.0), 3), 40)
        with pytest.raises(InputError):
            run_test(data, grid_euclidean_cost(2), J=10)


class TestAlternativeLimit:
    def test_null_matches_plugin(self):
        counts = np.array([[2, 4, 6, 8], [1, 2, 3, 4], [3, 6, 9, 12]])
        data = GroupSamples(counts)
        mus = data.empirical()
        C = grid_euclidean_cost(2)
        L = one_way_contrasts(3)
        a = sample_alternative_limit(mus, L, C, delta_hat(data.sizes), 100, 4)
        b = sample_null_limit(data, L, C, "plugin", 100, 4)
        assert_allclose(a.draws, b.draws, rtol=1e-9, atol=1e-12)

    def test_zero_gaussian(self, rng):
        mus = rng.dirichlet(np.ones(4), 3)
        a = sample_alternative_limit(mus, one_way_contrasts(3), random_metric(rng, 4), [0, 0, 0], 20, 1)
        assert_array_equal(a.draws, 0)

    def test_finite_difference_draws(self, rng):
        N = 5
        C = random_metric(rng, N)
        mus = rng.dirichlet(np.ones(N) * 2, 2)
        L = one_way_contrasts(2)
        deltas = np.array([0.4, 0.6])
        seed = 12
        sample = sample_alternative_limit(mus, L, C, deltas, 40, seed)
        tau = mus[0] - mus[1]
        z = np.zeros(N)
        for j, draw in enumerate(sample.draws):
            g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(j,))))
            G = sample_gaussian(mus, deltas, g)
            h = G[0] - G[1]
            t = 1e-5
            fd = (signed_ot(tau + t * h, z, C) - signed_ot(tau, z, C)) / t / L.scaling_s
            assert abs(draw - fd) <= 1e-3


class TestLocal:
    def test_eta(self):
        la = LocalAlternative([[0.5, 0.5], [0.5, 0.5]], [[1.0, 0.0], [0.5, 0.5]], sizes=(10, 30))
        d = delta_hat([10, 30])
        assert_allclose(la.eta, [[math.sqrt(d[0]) * 0.5, -math.sqrt(d[0]) * 0.5], [0, 0]])
        assert_allclose(la.perturbed()[0], [0.5 + 0.5 / math.sqrt(10), 0.5 - 0.5 / math.sqrt(10)])

    def test_no_shift_when_equal(self, rng):
        mu = np.tile(rng.dirichlet(np.ones(4)), (3, 1))
        la = LocalAlternative(mu, mu)
        C = random_metric(rng, 4)
        a = sample_local_limit(la, C, 50, 3, shift=True)
        b = sample_local_limit(la, C, 50, 3, shift=False)
        assert_array_equal(a.draws, b.draws)
        c = sample_null_limit(GroupSamples(np.tile(mu[0] * 1e6, (3, 1)).round()), None, C, "plugin", 50, 3)
        assert_allclose(a.draws, c.draws, rtol=1e-4)

    def test_near_level_for_small_shift(self):
        la = local_alternative("i")
        res = local_power(la, grid_euclidean_cost(5), J=2000, seed=0, workers=2)
        assert 0.03 <= res.power <= 0.09

    def test_rejects_non_null_base(self, rng):
        la = LocalAlternative(rng.dirichlet(np.ones(3), 2), rng.dirichlet(np.ones(3), 2))
        with pytest.raises(InputError):
            sample_local_limit(la, random_metric(rng, 3), 5, 1)


@pytest.mark.slow
def test_bootstrap_more_conservative_than_plugin():
    from fdott.sim import ExperimentConfig, run_experiment

    cfg = ExperimentConfig(setting="i", sizes=(50,) * 6, methods=("plugin", "boot_m_of_n@0.8"),
                           J=500, R=60, seed=404)
    rows = {r["method"]: r["reject_frac"] for r in run_experiment(cfg)}
    assert rows["boot_m_of_n@0.8"] <= rows["plugin"]
