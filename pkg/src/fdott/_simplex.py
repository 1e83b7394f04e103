"""Transportation network simplex compiled with numba.

The basis is a spanning tree on ``m`` row nodes and ``n`` column nodes,
stored as ``m + n - 1`` basic cells.  The start is the least-cost
(matrix-minimum) basic solution; pivoting uses Dantzig pricing.  Degenerate
cycling is guarded by an iteration cap, and callers fall back to a dense LP
when the cap is hit.

Batch entry points reuse one workspace across problems, since per-call
allocation otherwise dominates at the sizes used in Monte Carlo loops.
"""

import numpy as np
from numba import njit

OPTIMAL = 0
ITERATION_LIMIT = 1


@njit(cache=True, nogil=True)
def _workspace(nmax):
    nn = 2 * nmax
    ints = np.empty((12, 2 * nn + 2), np.int64)
    floats = np.empty((4, nn + 1))
    sub = np.empty((nmax, nmax))
    keys = np.empty(nmax * nmax)
    return ints, floats, sub, keys


@njit(cache=True, nogil=True)
def _solve(a, b, C, m, n, max_iter, ints, floats, keys):
    """Solve on ``C[:m, :n]`` in place; results stay in the workspace.

    Basic cells are ``ints[0, :nb], ints[1, :nb]`` with flows
    ``floats[0, :nb]``; potentials are ``floats[1, :m + n]``, rows first.
    Returns ``(cost, status)``.
    """
    nn = m + n
    nb = nn - 1
    bi = ints[0]
    bj = ints[1]
    deg = ints[2]
    start = ints[3]
    fill = ints[4]
    adj_node = ints[5]
    adj_edge = ints[6]
    parent = ints[7]
    pedge = ints[8]
    depth = ints[9]
    queue = ints[10]
    path = ints[11]
    flow = floats[0]
    pot = floats[1]
    ra = floats[2]
    rb = floats[3]

    scale = 0.0
    for i in range(m):
        ra[i] = a[i]
        for j in range(n):
            keys[i * n + j] = C[i, j]
            if C[i, j] > scale:
                scale = C[i, j]
    for j in range(n):
        rb[j] = b[j]
    order = np.argsort(keys[: m * n])

    # least-cost start; depth doubles as the crossed-out marker here
    depth[:nn] = 0
    rows_left = m
    cols_left = n
    cnt = 0
    for idx in order:
        i = idx // n
        j = idx % n
        if depth[i] or depth[m + j]:
            continue
        x = min(ra[i], rb[j])
        bi[cnt] = i
        bj[cnt] = j
        flow[cnt] = x
        cnt += 1
        ra[i] -= x
        rb[j] -= x
        if cnt == nb:
            break
        # cross out exactly one line per allocation, the last cell closes both
        if ra[i] <= rb[j] and rows_left > 1:
            depth[i] = 1
            rows_left -= 1
        elif cols_left > 1:
            depth[m + j] = 1
            cols_left -= 1
        else:
            depth[i] = 1
            rows_left -= 1

    tol = 1e-12 * max(scale, 1.0)
    status = ITERATION_LIMIT
    for it in range(max_iter + 1):
        deg[:nn] = 0
        for e in range(nb):
            deg[bi[e]] += 1
            deg[m + bj[e]] += 1
        start[0] = 0
        for v in range(nn):
            start[v + 1] = start[v] + deg[v]
            fill[v] = start[v]
        for e in range(nb):
            r = bi[e]
            c = m + bj[e]
            adj_node[fill[r]] = c
            adj_edge[fill[r]] = e
            fill[r] += 1
            adj_node[fill[c]] = r
            adj_edge[fill[c]] = e
            fill[c] += 1

        # potentials by BFS from row node 0: u_i + v_j = C_ij on the tree
        parent[:nn] = -1
        parent[0] = 0
        pedge[0] = -1
        depth[0] = 0
        pot[0] = 0.0
        head = 0
        tail = 1
        queue[0] = 0
        while head < tail:
            x = queue[head]
            head += 1
            for k in range(start[x], start[x + 1]):
                y = adj_node[k]
                if parent[y] == -1:
                    e = adj_edge[k]
                    parent[y] = x
                    pedge[y] = e
                    depth[y] = depth[x] + 1
                    pot[y] = C[bi[e], bj[e]] - pot[x]
                    queue[tail] = y
                    tail += 1

        best = -tol
        ei = -1
        ej = -1
        for i in range(m):
            ui = pot[i]
            for j in range(n):
                rc = C[i, j] - ui - pot[m + j]
                if rc < best:
                    best = rc
                    ei = i
                    ej = j
        if ei < 0:
            status = OPTIMAL
            break
        if it == max_iter:
            break

        # tree path from column node to row node; its edges alternate -, +, -, ...
        # queue is free after the BFS and holds the row-side half of the path
        x = m + ej
        y = ei
        nx = 0
        while depth[x] > depth[y]:
            path[nx] = pedge[x]
            nx += 1
            x = parent[x]
        ny = 0
        while depth[y] > depth[x]:
            queue[ny] = pedge[y]
            ny += 1
            y = parent[y]
        while x != y:
            path[nx] = pedge[x]
            nx += 1
            x = parent[x]
            queue[ny] = pedge[y]
            ny += 1
            y = parent[y]
        for k in range(ny - 1, -1, -1):
            path[nx] = queue[k]
            nx += 1

        theta = np.inf
        leave = -1
        for k in range(0, nx, 2):
            e = path[k]
            if flow[e] < theta:
                theta = flow[e]
                leave = e
        for k in range(nx):
            e = path[k]
            if k % 2 == 0:
                flow[e] -= theta
            else:
                flow[e] += theta
        bi[leave] = ei
        bj[leave] = ej
        flow[leave] = theta

    cost = 0.0
    for e in range(nb):
        cost += flow[e] * C[bi[e], bj[e]]
    return cost, status


@njit(cache=True, nogil=True)
def transport_simplex(a, b, C, max_iter):
    """Solve ``min <C, P>`` over plans with row sums ``a`` and column sums ``b``.

    ``a`` and ``b`` must be positive with equal totals.  Returns the basic
    cells ``(bi, bj, flow)``, duals ``(u, v)`` with ``u_i + v_j <= C_ij`` up
    to rounding and equality on basic cells, the cost, and a status code.
    Duals are ``nan`` when the iteration cap is hit.
    """
    m = a.size
    n = b.size
    nb = m + n - 1
    ints, floats, _, keys = _workspace(max(m, n))
    cost, status = _solve(a, b, C, m, n, max_iter, ints, floats, keys)
    u = floats[1, :m].copy()
    v = floats[1, m : m + n].copy()
    if status != OPTIMAL:
        u[:] = np.nan
        v[:] = np.nan
    return ints[0, :nb].copy(), ints[1, :nb].copy(), floats[0, :nb].copy(), u, v, cost, status


@njit(cache=True, nogil=True)
def _signed_row(w, C, max_iter, ints, floats, sub, keys, a, b, pi, ni):
    n = w.size
    npos = 0
    nneg = 0
    sa = 0.0
    sb = 0.0
    for i in range(n):
        if w[i] > 0:
            pi[npos] = i
            a[npos] = w[i]
            sa += w[i]
            npos += 1
        elif w[i] < 0:
            ni[nneg] = i
            b[nneg] = -w[i]
            sb -= w[i]
            nneg += 1
    if npos == 0 or nneg == 0:
        return 0.0, OPTIMAL
    # both sides are rescaled to the mean mass to absorb rounding in the row sum
    mid = 0.5 * (sa + sb)
    if npos == 1:
        tot = 0.0
        for k in range(nneg):
            tot += b[k] * C[pi[0], ni[k]]
        return tot * (mid / sb), OPTIMAL
    if nneg == 1:
        tot = 0.0
        for k in range(npos):
            tot += a[k] * C[pi[k], ni[0]]
        return tot * (mid / sa), OPTIMAL
    for k in range(npos):
        a[k] *= mid / sa
    for k in range(nneg):
        b[k] *= mid / sb
    for k in range(npos):
        for l in range(nneg):
            sub[k, l] = C[pi[k], ni[l]]
    return _solve(a, b, sub, npos, nneg, max_iter, ints, floats, keys)


@njit(cache=True, nogil=True)
def signed_row_value(w, C, max_iter):
    """OT cost between the positive and negative parts of one zero-sum row.

    Returns ``(value, status)``; a row without mass on one side costs 0.
    """
    r = np.empty((1, w.size))
    r[0] = w
    out = signed_rows_values(r, C, max_iter)
    if np.isnan(out[0]):
        return 0.0, ITERATION_LIMIT
    return out[0], OPTIMAL


@njit(cache=True, nogil=True)
def signed_rows_values(W, C, max_iter):
    """Vectorized :func:`signed_row_value` over the rows of ``W``.

    Rows that hit the iteration cap get ``nan`` so the caller can re-solve them.
    """
    r, n = W.shape
    ints, floats, sub, keys = _workspace(n)
    a = np.empty(n)
    b = np.empty(n)
    pi = np.empty(n, np.int64)
    ni = np.empty(n, np.int64)
    out = np.empty(r)
    for k in range(r):
        val, st = _signed_row(W[k], C, max_iter, ints, floats, sub, keys, a, b, pi, ni)
        out[k] = val if st == OPTIMAL else np.nan
    return out
