"""Acceptance criteria 1-13, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``.  Monte Carlo criteria use the
simulation harness at full stated scale, so the whole file takes several
minutes (criterion 10 dominates).
"""

import os
import sys
import time

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from fdott import (
    dual_face_maximize,
    grid_euclidean_cost,
    signed_ot,
    solve_barycenter,
    solve_ot,
)
from fdott.cli import main as cli_main
from fdott.inference import local_power
from fdott.oracles import barycenter_lp, ot_lp
from fdott.sim import ExperimentConfig, local_alternative, run_experiment

WORKERS = os.cpu_count() or 1
SEED = 20240917


def metric(rng, n):
    pts = rng.random((n, 2))
    return cdist(pts, pts)


def prob(rng, n):
    w = rng.random(n) * (rng.random(n) < 0.75)
    w[rng.integers(n)] += 0.05
    return w / w.sum()


@pytest.fixture
def report(capsys):
    def emit(number, passed, detail):
        with capsys.disabled():
            print(f"\ncriterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        assert passed, detail

    return emit


def test_criterion_01_ot_oracle(report):
    rng = np.random.default_rng(SEED + 1)
    t0 = time.perf_counter()
    worst_rel = worst_gap = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 9))
        mass = rng.uniform(0.1, 5.0)
        a, b = mass * prob(rng, n), mass * prob(rng, n)
        C = metric(rng, n) if rng.random() < 0.5 else rng.uniform(0.1, 3.0, (n, n)) * (1 - np.eye(n))
        sol = solve_ot(a, b, C)
        ref, _ = ot_lp(a, b, C)
        worst_rel = max(worst_rel, abs(sol.value - ref) / max(abs(ref), 1e-300) if ref else abs(sol.value))
        primal = float((C * sol.plan).sum())
        dual = float(sol.dual_u @ a + sol.dual_v @ b)
        worst_gap = max(worst_gap, abs(primal - dual))
    dt = time.perf_counter() - t0
    ok = worst_rel <= 1e-9 and worst_gap <= 1e-9 and dt < 60
    report(1, ok, f"rel err {worst_rel:.1e}, gap {worst_gap:.1e}, {dt:.1f}s")


def test_criterion_02_signed_ot_metric(report):
    rng = np.random.default_rng(SEED + 2)
    t0 = time.perf_counter()
    sym = tri = red = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 7))
        C = metric(rng, n)
        x, y, z = rng.standard_normal((3, n)) * rng.uniform(0.1, 2.0, (3, 1))
        x, y, z = x - x.mean(), y - y.mean(), z - z.mean()
        dxy = signed_ot(x, y, C)
        sym = max(sym, abs(dxy - signed_ot(y, x, C)))
        tri = max(tri, dxy - signed_ot(x, z, C) - signed_ot(z, y, C))
        p, q = prob(rng, n), prob(rng, n)
        red = max(red, abs(signed_ot(p - q, np.zeros(n), C) - solve_ot(p, q, C).value))
    dt = time.perf_counter() - t0
    ok = sym <= 1e-12 and tri <= 1e-9 and red <= 1e-9 and dt < 60
    report(2, ok, f"symmetry {sym:.1e}, triangle excess {tri:.1e}, reduction {red:.1e}, {dt:.1f}s")


def test_criterion_03_barycenter_oracle(report):
    rng = np.random.default_rng(SEED + 3)
    t0 = time.perf_counter()
    worst = worst_mid = 0.0
    for _ in range(100):
        K, n = int(rng.integers(2, 5)), int(rng.integers(1, 6))
        C = metric(rng, n)
        mus = np.array([prob(rng, n) for _ in range(K)])
        w = rng.dirichlet(np.ones(K))
        val = solve_barycenter(mus, w, C).value
        ref, _ = barycenter_lp(mus, w, C)
        worst = max(worst, abs(val - ref) / max(abs(ref), 1e-300) if ref else abs(val))
        two = solve_barycenter(mus[:2], [0.5, 0.5], C).value
        worst_mid = max(worst_mid, abs(two - solve_ot(mus[0], mus[1], C).value / 2))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and worst_mid <= 1e-9 and dt < 120
    report(3, ok, f"rel err {worst:.1e}, K=2 midpoint {worst_mid:.1e}, {dt:.1f}s")


def test_criterion_04_sandwich(report):
    rng = np.random.default_rng(SEED + 4)
    t0 = time.perf_counter()
    low = high = -np.inf
    for _ in range(200):
        K, n = int(rng.integers(2, 6)), int(rng.integers(1, 7))
        C = metric(rng, n)
        mus = np.array([prob(rng, n) for _ in range(K)])
        B = solve_barycenter(mus, np.ones(K) / K, C).value
        D = sum(solve_ot(mus[i], mus[j], C).value for i in range(K) for j in range(K)) / K**2
        low = max(low, D / 2 - B)
        high = max(high, B - D)
    dt = time.perf_counter() - t0
    ok = low <= 1e-9 and high <= 1e-9 and dt < 120
    report(4, ok, f"max(D/2 - B) {low:.1e}, max(B - D) {high:.1e}, {dt:.1f}s")


def test_criterion_05_directional_derivative(report):
    rng = np.random.default_rng(SEED + 5)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 6))
        C = metric(rng, n)
        tau = rng.standard_normal(n) * (rng.random(n) < 0.7)
        tau[-1] -= tau.sum()
        h = rng.standard_normal(n)
        h -= h.mean()
        z = np.zeros(n)
        d = dual_face_maximize(tau, h, C)
        base = signed_ot(tau, z, C)
        for t in (1e-4, 1e-5):
            worst = max(worst, abs((signed_ot(tau + t * h, z, C) - base) / t - d))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-3 and dt < 120
    report(5, ok, f"max |fd - face| {worst:.1e}, {dt:.1f}s")


def test_criterion_06_null_level(report):
    cfg = ExperimentConfig(layout="one-way", setting="i", sizes=(500,) * 6, methods=("plugin",),
                           J=1000, R=250, seed=SEED + 6)
    row = run_experiment(cfg, WORKERS)[0]
    rej, mp = row["reject_frac"], row["mean_p"]
    ok = 0.02 <= rej <= 0.09 and 0.40 <= mp <= 0.58
    report(6, ok, f"reject {rej:.3f} in [0.02, 0.09], mean p {mp:.3f} in [0.40, 0.58] (R=250)")


def test_criterion_07_one_way_power(report):
    cfg = ExperimentConfig(layout="one-way", setting="iii", sizes=(500,) * 6, methods=("plugin",),
                           J=1000, R=100, seed=SEED + 7)
    rej = run_experiment(cfg, WORKERS)[0]["reject_frac"]
    report(7, rej >= 0.95, f"reject {rej:.3f} >= 0.95")


def test_criterion_08_bootstrap_conservative(report):
    cfg = ExperimentConfig(layout="one-way", setting="i", sizes=(50,) * 6,
                           methods=("boot_m_of_n@0.8",), J=1000, R=100, seed=SEED + 8)
    rej = run_experiment(cfg, WORKERS)[0]["reject_frac"]
    report(8, rej <= 0.02, f"reject {rej:.3f} <= 0.02")


def test_criterion_09_two_way_interaction(report):
    cfg = ExperimentConfig(layout="two-way", setting="iii", sizes=(100,) * 6, shape=(2, 3),
                           methods=("plugin",), J=1000, R=100, seed=SEED + 9)
    rej = run_experiment(cfg, WORKERS)[0]["reject_frac"]
    report(9, rej >= 0.90, f"reject {rej:.3f} >= 0.90")


def test_criterion_10_local_power(report):
    la = local_alternative("v")
    C = grid_euclidean_cost(5)
    t0 = time.perf_counter()
    f = local_power(la, C, alpha=0.05, J=10_000, seed=SEED + 10, flavor="fdott", workers=WORKERS).power
    b = local_power(la, C, alpha=0.05, J=10_000, seed=SEED + 10, flavor="barycenter",
                    workers=WORKERS).power
    dt = time.perf_counter() - t0
    ok = abs(f - 0.447) <= 0.05 and abs(b - 0.348) <= 0.05 and f - b >= 0.05
    report(10, ok, f"FDOTT {f:.3f} (0.447), barycenter {b:.3f} (0.348), diff {f - b:.3f}, {dt:.0f}s")


def test_criterion_11_weighted_hsd(report):
    cfg = ExperimentConfig(layout="hsd", setting="iii", sizes=(60, 150, 210, 90),
                           methods=("plain", "weighted"), J=1000, R=100, seed=SEED + 11)
    rows = {(r["method"], r["pair"]): r["reject_frac"] for r in run_experiment(cfg, WORKERS)}
    plain, weighted = rows[("plain", "2-3")], rows[("weighted", "2-3")]
    ok = weighted - plain >= 0.25
    report(11, ok, f"pair (2,3): weighted {weighted:.3f}, plain {plain:.3f}, gain {weighted - plain:.3f}")


def test_criterion_12_permutation_validity(report):
    cfg = ExperimentConfig(layout="one-way", setting="i", sizes=(50,) * 6, methods=("permutation",),
                           J=199, R=250, seed=SEED + 12)
    rej = run_experiment(cfg, WORKERS)[0]["reject_frac"]
    report(12, rej <= 0.08, f"reject {rej:.3f} <= 0.08")


def test_criterion_13_cli_determinism(report, tmp_path):
    rng = np.random.default_rng(SEED + 13)
    lines = ["group,category,count"]
    for g in range(4):
        for cat, cnt in enumerate(rng.multinomial(80, rng.dirichlet(np.ones(9)))):
            lines.append(f"g{g},{cat},{cnt}")
    data = tmp_path / "counts.csv"
    data.write_text("\n".join(lines) + "\n")
    commands = {
        "test": ["test", str(data), "--grid", "3", "--draws", "300"],
        "test-perm": ["test", str(data), "--grid", "3", "--draws", "300", "--method", "perm"],
        "test-boot": ["test", str(data), "--grid", "3", "--draws", "300", "--method", "boot-m"],
        "posthoc": ["posthoc", str(data), "--grid", "3", "--draws", "300", "--weighted"],
        "simulate": ["simulate", "--side", "3", "--sizes", "40", "--setting", "custom",
                     "--lambdas", "3,3,4", "--reps", "4", "--draws", "100",
                     "--methods", "plugin,perm,barycenter:plugin"],
        "local-power": ["local-power", "--draws", "300"],
        "oracle": ["oracle", "--scale", "0.05"],
    }
    mismatched = []
    for name, argv in commands.items():
        outs = []
        for threads in ("1", "2", "5"):
            out = tmp_path / f"{name}-{threads}.out"
            code = cli_main(argv + ["--seed", "7", "--threads", threads, "--out", str(out)])
            assert code == 0, f"{name} exited {code}"
            outs.append(out.read_bytes())
        if len(set(outs)) != 1:
            mismatched.append(name)
    ok = not mismatched
    report(13, ok, f"{len(commands)} commands x threads 1/2/5 byte-identical"
               + (f"; mismatched: {mismatched}" if mismatched else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", *sys.argv[1:]]))
