"""Dense generic-LP reference solvers used to cross-check the exact solvers.

These build the full constraint matrices explicitly and run HiGHS interior
point with crossover, so they share no code path with the network simplex
or the chained barycenter LP.  They are meant for small instances only.
"""

import numpy as np
from scipy.optimize import linprog

from .errors import SolverError


def _solve(cost, A_eq, b_eq):
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ipm")
    if res.status != 0:
        raise SolverError(f"oracle LP failed: {res.message}")
    return res


def ot_lp(a, b, C):
    """Value and plan of ``min <C, P>`` over couplings of ``a`` and ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = C.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    res = _solve(C.ravel(), A, np.r_[a, b])
    return float(res.fun), res.x.reshape(m, n)


def barycenter_lp(mus, w, C):
    """Value and center of ``min_nu sum_k w_k OT(mu^k, nu)`` with ``nu`` explicit.

    Variables are the K plans followed by the center; each plan has row sums
    ``mu^k`` and column sums ``nu``.
    """
    mus = np.asarray(mus, dtype=float)
    w = np.asarray(w, dtype=float)
    C = np.asarray(C, dtype=float)
    K, N = mus.shape
    nv = K * N * N + N
    A = np.zeros((2 * K * N, nv))
    for k in range(K):
        off = k * N * N
        for i in range(N):
            A[k * N + i, off + i * N : off + (i + 1) * N] = 1.0
        for j in range(N):
            row = K * N + k * N + j
            A[row, off + j : off + N * N : N] = 1.0
            A[row, K * N * N + j] = -1.0
    cost = np.r_[np.concatenate([wk * C.ravel() for wk in w]), np.zeros(N)]
    res = _solve(cost, A, np.r_[mus.ravel(), np.zeros(K * N)])
    return float(res.fun), res.x[K * N * N :]
