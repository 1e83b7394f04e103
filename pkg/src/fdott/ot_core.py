"""Exact optimal transport on finite spaces and its signed extension.

The workhorse is the transportation simplex in :mod:`fdott._simplex`; a
sparse HiGHS solve is kept as fallback for problems where the simplex hits
its iteration cap.  Every returned :class:`OTSolution` is certified: plan
marginals, dual feasibility and the duality gap are checked before return.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import _simplex
from .errors import InputError, SolverError, UnbalancedError
from .measures import TOL_MASS, CostMatrix, SignedMeasure

TOL_FEAS = 1e-9
TOL_GAP = 1e-9
TOL_SIGN = 1e-10
# relative to the transported mass, flows below this count as zero in slackness sets
TOL_SUPPORT = 1e-12
MAX_PIVOTS = 20000


@dataclass(frozen=True)
class OTSolution:
    """Optimal value, plan and dual potentials of one balanced OT problem."""

    value: float
    plan: np.ndarray
    dual_u: np.ndarray
    dual_v: np.ndarray


@dataclass(frozen=True)
class DualDirection:
    """The pair ``(U, V)`` entering the directional derivative of OT±."""

    u_part: np.ndarray
    v_part: np.ndarray


def _costs(c):
    """Validated cost array; raw arrays are wrapped in :class:`CostMatrix` first."""
    if not isinstance(c, CostMatrix):
        c = CostMatrix(c)
    if not c.is_identifiable:
        raise InputError("cost matrix must vanish exactly on the diagonal")
    return c.costs


def _raw_costs(c):
    return c.costs if isinstance(c, CostMatrix) else np.asarray(c, dtype=float)


def _weights(x):
    return np.asarray(getattr(x, "weights", x), dtype=float)


def _transport_lp(a, b, C):
    """Sparse HiGHS solve of the transportation LP; returns plan, u, v."""
    m, n = C.shape
    rows = sparse.kron(sparse.eye(m), np.ones((1, n)))
    cols = sparse.kron(np.ones((1, m)), sparse.eye(n))
    A = sparse.vstack([rows, cols]).tocsc()
    res = linprog(C.ravel(), A_eq=A, b_eq=np.r_[a, b], bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverError(f"solver failure: {res.message}")
    duals = res.eqlin.marginals
    return res.x.reshape(m, n), duals[:m], duals[m:]


def _extend_duals(C, rows, cols, u_sub, v_sub):
    """Extend potentials known on the supports to all points, keeping feasibility.

    Columns off the target support get the c-transform of the row potentials;
    rows off the source support then get the c-transform of all columns.  The
    objective is unchanged since those points carry no mass.
    """
    n_rows, n_cols = C.shape
    v = np.empty(n_cols)
    v[cols] = v_sub
    off_cols = np.setdiff1d(np.arange(n_cols), cols)
    if off_cols.size:
        v[off_cols] = np.min(C[np.ix_(rows, off_cols)] - u_sub[:, None], axis=0)
    u = np.empty(n_rows)
    u[rows] = u_sub
    off_rows = np.setdiff1d(np.arange(n_rows), rows)
    if off_rows.size:
        u[off_rows] = np.min(C[off_rows] - v[None, :], axis=1)
    return u, v


def certify(a, b, C, sol: OTSolution, tol_feas=TOL_FEAS, tol_gap=TOL_GAP):
    """Raise :class:`SolverError` unless ``sol`` is a certified optimum."""
    scale = max(1.0, float(np.abs(C).max()) if C.size else 1.0)
    res = {
        "row_marginal": float(np.abs(sol.plan.sum(axis=1) - a).max(initial=0.0)),
        "col_marginal": float(np.abs(sol.plan.sum(axis=0) - b).max(initial=0.0)),
        "plan_negativity": float(max(0.0, -sol.plan.min(initial=0.0))),
        "dual_infeasibility": float(
            max(0.0, (sol.dual_u[:, None] + sol.dual_v[None, :] - C).max(initial=0.0))
        ),
        "duality_gap": abs(sol.value - (sol.dual_u @ a + sol.dual_v @ b)),
    }
    ok = (
        res["row_marginal"] <= tol_feas
        and res["col_marginal"] <= tol_feas
        and res["plan_negativity"] <= tol_feas
        and res["dual_infeasibility"] <= tol_feas * scale
        and res["duality_gap"] <= tol_gap * (1.0 + abs(sol.value))
    )
    if not ok:
        raise SolverError("solver failure: optimality certificate violated", res)


def solve_ot(source, target, c) -> OTSolution:
    """Exact OT between two nonnegative vectors of equal mass.

    Parameters
    ----------
    source, target : NonNegMeasure or array_like
        Length-N nonnegative weights with equal totals (within ``TOL_MASS``).
    c : CostMatrix or array_like
        N x N ground costs.

    Returns
    -------
    OTSolution
        ``plan`` is N x N; the duals are defined on all N points and satisfy
        ``u_i + v_j <= c_ij`` everywhere.

    Raises
    ------
    UnbalancedError
        If the total masses differ.
    SolverError
        If no certified optimum is found.
    """
    a = _weights(source)
    b = _weights(target)
    C = _costs(c)
    if a.ndim != 1 or b.ndim != 1 or C.shape != (a.size, b.size):
        raise InputError(f"shape mismatch: {a.shape}, {b.shape} against costs {C.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise InputError("transport marginals must be nonnegative")
    ea, eb = a.sum(), b.sum()
    if abs(ea - eb) > TOL_MASS:
        raise UnbalancedError(f"unbalanced marginals: masses {ea!r} and {eb!r}")
    rows = np.flatnonzero(a > 0)
    cols = np.flatnonzero(b > 0)
    if rows.size == 0 or cols.size == 0:
        z = np.zeros(C.shape)
        return OTSolution(0.0, z, np.zeros(a.size), np.zeros(b.size))

    # absorb the admissible mass mismatch before the exact solve
    mid = 0.5 * (ea + eb)
    a_sub = a[rows] * (mid / ea)
    b_sub = b[cols] * (mid / eb)
    C_sub = np.ascontiguousarray(C[np.ix_(rows, cols)])
    bi, bj, flow, u_sub, v_sub, _, status = _simplex.transport_simplex(
        a_sub, b_sub, C_sub, MAX_PIVOTS
    )
    plan = np.zeros(C.shape)
    if status == _simplex.OPTIMAL:
        np.add.at(plan, (rows[bi], cols[bj]), flow)
    else:
        sub_plan, u_sub, v_sub = _transport_lp(a_sub, b_sub, C_sub)
        plan[np.ix_(rows, cols)] = np.maximum(sub_plan, 0.0)
    u, v = _extend_duals(C, rows, cols, u_sub, v_sub)
    sol = OTSolution(float(np.sum(plan * C)), plan, u, v)
    certify(a, b, C, sol)
    return sol


def signed_ot(mu, nu, c) -> float:
    """Extended OT between signed measures: ``OT(mu+ + nu-, nu+ + mu-)``."""
    mu = mu if isinstance(mu, SignedMeasure) else SignedMeasure(mu)
    nu = nu if isinstance(nu, SignedMeasure) else SignedMeasure(nu)
    return solve_ot(mu.plus + nu.minus, nu.plus + mu.minus, c).value


def signed_ot_rows(W, c) -> np.ndarray:
    """``OT±(w, 0)`` for every row ``w`` of ``W`` (rows sum to zero).

    Rows of a contrast applied to measures are passed here in bulk.  Rows
    where the compiled simplex hits its pivot cap are re-solved exactly.
    """
    W = np.ascontiguousarray(W, dtype=float)
    C = np.ascontiguousarray(_raw_costs(c))
    flat = W.reshape(-1, W.shape[-1])
    out = _simplex.signed_rows_values(flat, C, MAX_PIVOTS)
    for k in np.flatnonzero(np.isnan(out)):
        w = flat[k]
        pos, neg = np.maximum(w, 0.0), np.maximum(-w, 0.0)
        mid = 0.5 * (pos.sum() + neg.sum())
        out[k] = solve_ot(pos * (mid / pos.sum()), neg * (mid / neg.sum()), C).value
    return out.reshape(W.shape[:-1])


def _clean_signed(x, tol):
    w = _weights(x).copy()
    w[np.abs(w) <= tol] = 0.0
    return w


def uv_maps(tau, h, tol_sign=TOL_SIGN) -> DualDirection:
    """Split a direction ``h`` according to the sign pattern of ``tau``.

    ``U_i = h_i`` where ``tau_i > 0``, or ``tau_i = 0`` and ``h_i > 0``;
    ``V_i = -h_i`` where ``tau_i < 0``, or ``tau_i = 0`` and ``h_i < 0``;
    both are zero elsewhere.  ``|tau_i| <= tol_sign`` counts as zero.
    """
    t = _weights(tau)
    hv = _weights(h)
    if t.shape != hv.shape:
        raise InputError(f"tau and h differ in shape: {t.shape} vs {hv.shape}")
    pos = t > tol_sign
    neg = t < -tol_sign
    zero = ~(pos | neg)
    u_part = np.where(pos | (zero & (hv > 0)), hv, 0.0)
    v_part = np.where(neg | (zero & (hv < 0)), -hv, 0.0)
    return DualDirection(u_part, v_part)


class DualFaceProgram:
    """The optimal dual face of ``OT(tau+, tau-)``, built once for many directions.

    The face is the dual polytope ``u_i + v_j <= c_ij`` with equality on the
    cells where a primal optimal plan is positive.  Complementary slackness
    against any single optimal plan describes the whole face.
    """

    def __init__(self, tau, c, tol_sign=TOL_SIGN):
        self.C = _costs(c)
        self.tol_sign = tol_sign
        self.tau = SignedMeasure(_clean_signed(tau, tol_sign)).weights
        n = self.C.shape[0]
        if self.tau.size != n:
            raise InputError(f"tau has {self.tau.size} entries, costs have {n} points")
        self.is_zero = not np.any(self.tau)
        if self.is_zero:
            return
        pos, neg = np.maximum(self.tau, 0.0), np.maximum(-self.tau, 0.0)
        plan = solve_ot(pos, neg, self.C).plan
        self.tight = plan > TOL_SUPPORT * pos.sum()
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        cell = np.arange(n * n)
        A = sparse.csr_matrix(
            (np.ones(2 * n * n), (np.r_[cell, cell], np.r_[ii.ravel(), n + jj.ravel()])),
            shape=(n * n, 2 * n),
        )
        flat = self.tight.ravel()
        cflat = self.C.ravel()
        self.A_ub, self.b_ub = A[~flat], cflat[~flat]
        self.A_eq, self.b_eq = A[flat], cflat[flat]
        # shift along (1, -1) changes neither feasibility nor the objective; pin u_0
        self.bounds = [(None, None)] * (2 * n)
        self.bounds[0] = (0.0, 0.0)

    def value(self, h) -> float:
        hv = SignedMeasure(h).weights
        n = self.C.shape[0]
        if hv.size != n:
            raise InputError(f"direction has {hv.size} entries, costs have {n} points")
        if not np.any(hv):
            return 0.0
        if self.is_zero:
            return float(signed_ot_rows(hv[None, :], self.C)[0])
        d = uv_maps(self.tau, hv, self.tol_sign)
        res = linprog(
            -np.r_[d.u_part, d.v_part],
            A_ub=self.A_ub,
            b_ub=self.b_ub,
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            bounds=self.bounds,
            method="highs",
        )
        if res.status != 0:
            raise SolverError(f"solver failure on the dual face: {res.message}")
        x = res.x
        gap = x[:n, None] + x[None, n:] - self.C
        viol = float(max(0.0, gap.max()))
        slack = float(np.abs(gap[self.tight]).max(initial=0.0))
        scale = max(1.0, float(self.C.max()))
        if viol > TOL_FEAS * scale or slack > TOL_FEAS * scale:
            raise SolverError(
                "solver failure: dual face solution infeasible",
                {"dual_infeasibility": viol, "slackness": slack},
            )
        return float(-res.fun)


def dual_face_maximize(tau, h, c, tol_sign=TOL_SIGN) -> float:
    """Maximize ``<u, U> + <v, V>`` over the optimal dual face of ``OT(tau+, tau-)``.

    ``(U, V)`` comes from :func:`uv_maps`.  The value is the one-sided
    directional derivative of ``t -> OT±(tau + t h, 0)`` at ``t = 0``; for
    ``tau = 0`` it equals ``OT±(h, 0)``.

    Parameters
    ----------
    tau, h : SignedMeasure or array_like
        Base point and direction, each summing to zero.
    c : CostMatrix or array_like
    tol_sign : float
        Entries of ``tau`` with absolute value at most this count as zero.

    Returns
    -------
    float
    """
    return DualFaceProgram(tau, c, tol_sign).value(h)
