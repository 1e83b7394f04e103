"""Fixed-support OT barycenters and the barycenter limit functional.

The barycenter LP is solved in chained form: plan ``k`` moves ``mu^k`` to the
center, and consecutive plans are tied by equal column sums, so the center
never appears as a variable.  Its dual has potentials ``u^k`` per group and
``v^k`` per chain link with

    u^k_i + v^k_j - v^{k-1}_j <= w_k c_ij,    v^0 = v^K = 0.

The same dual polytope, restricted to its optimal face, carries the
directional derivative of the barycenter value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import InputError, SolverError, SupportMismatchError
from .measures import TOL_MASS, CostMatrix, ProbMeasure

TOL_FEAS = 1e-9
TOL_GAP = 1e-9
TOL_SUPPORT = 1e-12
# slack allowed when discarding dual constraints implied by a two-step path
TOL_PRUNE = 1e-12


@dataclass(frozen=True)
class BarycenterSolution:
    """Optimal value, center, plans and chained dual potentials.

    Attributes
    ----------
    value : float
    center : ProbMeasure
    plans : ndarray, shape (K, N, N)
        ``plans[k][i, j]`` is the mass moved from point ``i`` of ``mu^k`` to
        point ``j`` of the center.
    duals_u : ndarray, shape (K, N)
    duals_v : ndarray, shape (K - 1, N)
    """

    value: float
    center: ProbMeasure
    plans: np.ndarray
    duals_u: np.ndarray
    duals_v: np.ndarray


def _check_inputs(mus, w, c):
    mus = np.array([np.asarray(getattr(m, "weights", m), dtype=float) for m in mus])
    if mus.ndim != 2 or mus.shape[0] < 2:
        raise InputError("at least two measures are required")
    if np.any(mus < 0) or np.any(np.abs(mus.sum(axis=1) - 1.0) > TOL_MASS):
        raise InputError("measures must be probability vectors")
    K, N = mus.shape
    w = np.asarray(w, dtype=float)
    if w.shape != (K,) or np.any(w <= 0):
        raise InputError(f"need {K} positive weights")
    if abs(w.sum() - 1.0) > TOL_MASS:
        raise InputError(f"weights sum to {w.sum()!r}, not 1")
    c = c if isinstance(c, CostMatrix) else CostMatrix(c)
    if not c.is_identifiable:
        raise InputError("cost matrix must vanish exactly on the diagonal")
    if c.n_points != N:
        raise InputError(f"cost matrix has {c.n_points} points, measures have {N}")
    return mus, w, c.costs


def _chain_matrix(K, N):
    """Sparse equality matrix of the chained LP with redundant rows removed.

    Rows are the K*N row-sum constraints followed by, for each link k, the
    column-sum differences of plans k and k+1 on points 0..N-2; the dropped
    last point of every link is implied by total mass.
    """
    nn = N * N
    row_sum = sparse.kron(sparse.eye(N), np.ones((1, N)))
    col_sum = sparse.kron(np.ones((1, N)), sparse.eye(N)).tocsr()[: N - 1]
    blocks = [[None] * K for _ in range(2 * K - 1)]
    for k in range(K):
        blocks[k][k] = row_sum
    for k in range(K - 1):
        blocks[K + k][k] = col_sum
        blocks[K + k][k + 1] = -col_sum
    for r in range(2 * K - 1):
        for k in range(K):
            if blocks[r][k] is None:
                shape = (N if r < K else N - 1, nn)
                blocks[r][k] = sparse.csr_matrix(shape)
    return sparse.bmat(blocks, format="csc")


def solve_barycenter(mus, w, c) -> BarycenterSolution:
    """Minimize ``sum_k w_k OT(mu^k, nu)`` over probability vectors ``nu``.

    Parameters
    ----------
    mus : sequence of ProbMeasure or array_like, length K >= 2
    w : array_like
        Positive weights summing to one.
    c : CostMatrix or array_like

    Returns
    -------
    BarycenterSolution
        Certified by plan feasibility, dual feasibility and a zero duality gap.
    """
    mus, w, C = _check_inputs(mus, w, c)
    K, N = mus.shape
    A = _chain_matrix(K, N)
    cost = np.concatenate([wk * C.ravel() for wk in w])
    b = np.r_[mus.ravel(), np.zeros((K - 1) * (N - 1))]
    res = linprog(cost, A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise SolverError(f"solver failure: {res.message}")
    plans = np.maximum(res.x, 0.0).reshape(K, N, N)
    duals = res.eqlin.marginals
    u = duals[: K * N].reshape(K, N)
    v = np.zeros((K - 1, N))
    v[:, : N - 1] = duals[K * N :].reshape(K - 1, N - 1)

    # certificate
    vpad = np.vstack([np.zeros(N), v, np.zeros(N)])
    slack = w[:, None, None] * C[None] - (u[:, :, None] + (vpad[1:] - vpad[:-1])[:, None, :])
    cols = plans.sum(axis=1)
    value = float(np.sum(cost * plans.ravel()))
    residuals = {
        "row_marginal": float(np.abs(plans.sum(axis=2) - mus).max()),
        "chain": float(np.abs(cols[1:] - cols[:-1]).max()),
        "dual_infeasibility": float(max(0.0, -slack.min())),
        "duality_gap": abs(value - float(np.sum(mus * u))),
    }
    scale = max(1.0, float(C.max()))
    if (
        residuals["row_marginal"] > TOL_FEAS
        or residuals["chain"] > TOL_FEAS
        or residuals["dual_infeasibility"] > TOL_FEAS * scale
        or residuals["duality_gap"] > TOL_GAP * (1.0 + abs(value))
    ):
        raise SolverError("solver failure: barycenter certificate violated", residuals)
    center = cols[0] / cols[0].sum()
    return BarycenterSolution(value, ProbMeasure(center), plans, u, v)


def implied_pair_mask(C, tol=TOL_PRUNE):
    """Mask of ordered pairs ``i != j`` whose difference constraint is not implied.

    ``x_i - x_j <= c_ij`` follows from the constraints through ``r`` whenever
    ``c_ir + c_rj <= c_ij``; for identifiable costs this recursion terminates,
    so only the returned pairs need to be imposed.
    """
    C = np.asarray(C, dtype=float)
    N = C.shape[0]
    via = C[:, :, None] + C[None, :, :]  # via[i, r, j] = c_ir + c_rj
    idx = np.arange(N)
    via[idx, idx, :] = np.inf
    via[:, idx, idx] = np.inf
    scale = max(1.0, float(C.max()))
    implied = np.any(via <= C[:, None, :] + tol * scale, axis=1)
    keep = ~implied
    keep[idx, idx] = False
    return keep


class NullPsiProgram:
    """Reusable LP for the barycenter limit functional at a full-support null.

    With all measures equal and of full support, the optimal dual face reduces
    to ``{(u^1..u^K): sum_k u^k = 0, u^k_i - u^k_j <= w_k c_ij}``; pairs implied
    by shorter paths are dropped.  The polytope is built once and only the
    objective changes between calls.
    """

    def __init__(self, w, c):
        w = np.asarray(w, dtype=float)
        C = c.costs if isinstance(c, CostMatrix) else np.asarray(c, dtype=float)
        K, N = w.size, C.shape[0]
        ii, jj = np.nonzero(implied_pair_mask(C))
        P = ii.size
        r = np.arange(K * P)
        k = np.repeat(np.arange(K), P)
        col_i = k * N + np.tile(ii, K)
        col_j = k * N + np.tile(jj, K)
        self.A_ub = sparse.csr_matrix(
            (np.r_[np.ones(K * P), -np.ones(K * P)], (np.r_[r, r], np.r_[col_i, col_j])),
            shape=(K * P, K * N),
        )
        self.b_ub = np.repeat(w, P) * np.tile(C[ii, jj], K)
        self.A_eq = sparse.hstack([sparse.eye(N)] * K).tocsr()
        self.b_eq = np.zeros(N)
        # constants added to u^1..u^{K-1} leave the objective unchanged; pin them
        self.bounds = [(None, None)] * (K * N)
        for kk in range(K - 1):
            self.bounds[kk * N] = (0.0, 0.0)
        self.shape = (K, N)

    def value(self, h):
        h = np.asarray(h, dtype=float)
        if h.shape != self.shape:
            raise InputError(f"direction must have shape {self.shape}, got {h.shape}")
        if not np.any(h):
            return 0.0
        res = linprog(
            -h.ravel(),
            A_ub=self.A_ub,
            b_ub=self.b_ub,
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            bounds=self.bounds,
            method="highs",
        )
        if res.status != 0:
            raise SolverError(f"solver failure on the null dual face: {res.message}")
        return float(-res.fun)


def _face_value(h, mus, w, C, sol, tol_sign):
    K, N = mus.shape
    if np.any(h[mus == 0] < -tol_sign):
        raise InputError(
            "direction removes mass where a measure has none; the functional is unbounded"
        )
    # variables: u^1..u^K then v^1..v^{K-1}
    nu = K * N
    nvar = nu + (K - 1) * N
    kk, ii, jj = np.meshgrid(np.arange(K), np.arange(N), np.arange(N), indexing="ij")
    kk, ii, jj = kk.ravel(), ii.ravel(), jj.ravel()
    cell = np.arange(kk.size)
    rows = [cell]
    cols = [kk * N + ii]
    vals = [np.ones(kk.size)]
    has_next = kk < K - 1
    rows.append(cell[has_next])
    cols.append(nu + kk[has_next] * N + jj[has_next])
    vals.append(np.ones(has_next.sum()))
    has_prev = kk > 0
    rows.append(cell[has_prev])
    cols.append(nu + (kk[has_prev] - 1) * N + jj[has_prev])
    vals.append(-np.ones(has_prev.sum()))
    A = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(kk.size, nvar),
    )
    rhs = w[kk] * C[ii, jj]
    tight = sol.plans.ravel() > TOL_SUPPORT
    obj = np.r_[-h.ravel(), np.zeros(nvar - nu)]
    res = linprog(
        obj,
        A_ub=A[~tight],
        b_ub=rhs[~tight],
        A_eq=A[tight],
        b_eq=rhs[tight],
        bounds=(None, None),
        method="highs",
    )
    if res.status != 0:
        raise SolverError(f"solver failure on the barycenter dual face: {res.message}")
    return float(-res.fun)


def psi_limit_functional(h, mus, w, c, assume_null=False, tol_sign=1e-10):
    """Maximize ``sum_k <u^k, h^k>`` over the optimal dual face of the barycenter LP.

    Parameters
    ----------
    h : array_like, shape (K, N)
        Direction; every row sums to zero.
    mus : sequence of K probability vectors
    w : array_like
        Barycenter weights.
    c : CostMatrix or array_like
    assume_null : bool
        Use the reduced polytope valid when all measures coincide and have
        full support.  Otherwise the face is cut out by complementary
        slackness against a solved barycenter.

    Raises
    ------
    SupportMismatchError
        If ``assume_null`` is set but the common measure misses a point; the
        ground space should then be restricted to the joint support.
    """
    mus, w, C = _check_inputs(mus, w, c)
    K, N = mus.shape
    h = np.asarray(h, dtype=float)
    if h.shape != (K, N):
        raise InputError(f"direction must have shape {(K, N)}, got {h.shape}")
    if np.any(np.abs(h.sum(axis=1)) > TOL_MASS * max(1.0, np.abs(h).max())):
        raise InputError("every row of the direction must sum to zero")
    if assume_null:
        if np.abs(mus - mus[0]).max() > TOL_MASS:
            raise InputError("assume_null requires identical measures")
        if np.any(mus[0] <= 0):
            raise SupportMismatchError(
                "support mismatch: the common measure lacks full support; "
                "restrict the ground space to the joint support first"
            )
        return NullPsiProgram(w, C).value(h)
    if not np.any(h):
        return 0.0
    sol = solve_barycenter(mus, w, C)
    return _face_value(h, mus, w, C, sol, tol_sign)
