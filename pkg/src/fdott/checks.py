"""Randomized cross-checks of the exact solvers against independent routes.

Each check returns a dict with the worst observed discrepancy, the tolerance
and a pass flag.  The CLI ``oracle`` subcommand runs all of them.
"""

import numpy as np
from scipy.spatial.distance import cdist

from .barycenter import solve_barycenter
from .oracles import barycenter_lp, ot_lp
from .ot_core import dual_face_maximize, signed_ot, solve_ot


def _random_metric(rng, n):
    pts = rng.random((n, 2))
    return cdist(pts, pts)


def ot_oracle(n_instances=200, seed=0, max_points=8, tol=1e-9):
    """Exact OT value versus a dense generic LP; relative error and duality gap."""
    rng = np.random.default_rng(seed)
    worst_rel = worst_gap = 0.0
    for t in range(n_instances):
        n = int(rng.integers(1, max_points + 1))
        a = rng.random(n) * (rng.random(n) < 0.8)
        b = rng.random(n) * (rng.random(n) < 0.8)
        a[rng.integers(n)] += 0.1
        b[rng.integers(n)] += 0.1
        a, b = a / a.sum(), b / b.sum()
        C = _random_metric(rng, n) if t % 2 else rng.integers(1, 5, (n, n)) * (1 - np.eye(n))
        sol = solve_ot(a, b, C)
        ref, _ = ot_lp(a, b, C)
        worst_rel = max(worst_rel, abs(sol.value - ref) / max(abs(ref), 1e-12 if ref else 1.0))
        dual = sol.dual_u @ a + sol.dual_v @ b
        worst_gap = max(worst_gap, abs(sol.value - dual) / (1.0 + abs(sol.value)))
    worst = max(worst_rel, worst_gap)
    return {"check": "ot_oracle", "instances": n_instances, "worst": worst, "tol": tol,
            "passed": bool(worst <= tol)}


def barycenter_oracle(n_instances=100, seed=0, max_groups=4, max_points=5, tol=1e-9):
    """Chained barycenter LP versus an explicit-center dense LP."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        K = int(rng.integers(2, max_groups + 1))
        n = int(rng.integers(1, max_points + 1))
        mus = rng.dirichlet(np.ones(n), K)
        w = rng.dirichlet(np.ones(K))
        C = _random_metric(rng, n)
        val = solve_barycenter(mus, w, C).value
        ref, _ = barycenter_lp(mus, w, C)
        worst = max(worst, abs(val - ref) / max(1.0, abs(ref)))
    return {"check": "barycenter_oracle", "instances": n_instances, "worst": worst, "tol": tol,
            "passed": bool(worst <= tol)}


def dual_face_oracle(n_instances=100, seed=0, max_points=5, steps=(1e-4, 1e-5), tol=1e-3):
    """Dual-face maximum versus one-sided finite differences of OT±(., 0)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(2, max_points + 1))
        C = _random_metric(rng, n)
        tau = rng.standard_normal(n) * (rng.random(n) < 0.7)
        tau -= tau.mean() if rng.random() < 0.5 else 0.0
        tau[-1] -= tau.sum()
        h = rng.standard_normal(n)
        h -= h.mean()
        zero = np.zeros(n)
        d = dual_face_maximize(tau, h, C)
        base = signed_ot(tau, zero, C)
        for t in steps:
            fd = (signed_ot(tau + t * h, zero, C) - base) / t
            worst = max(worst, abs(fd - d))
    return {"check": "dual_face_oracle", "instances": n_instances, "worst": worst, "tol": tol,
            "passed": bool(worst <= tol)}


def run_all(seed=0, scale=1.0):
    """All oracle checks; ``scale`` shrinks the instance counts."""
    k = max(1, int(round(200 * scale)))
    return [
        ot_oracle(k, seed),
        barycenter_oracle(max(1, k // 2), seed),
        dual_face_oracle(max(1, k // 2), seed),
    ]
