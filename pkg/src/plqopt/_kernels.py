"""Hot inner loops, compiled with numba when it is available.

Every kernel is written in the subset of numpy that numba's nopython mode
accepts, so the very same source runs either jitted or as plain numpy.
Set ``PLQOPT_DISABLE_NUMBA=1`` in the environment *before* importing the
package to force the pure-numpy path (useful for debugging and for the
benchmark in ``benchmarks/bench_kernels.py``).
"""

import os

import numpy as np

_flag = os.environ.get("PLQOPT_DISABLE_NUMBA", "").strip().lower()
DISABLE_NUMBA = _flag not in ("", "0", "false", "no")

try:
    if DISABLE_NUMBA:
        raise ImportError("numba disabled by PLQOPT_DISABLE_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def jit(func):
    """``numba.njit(cache=True)`` or the identity, depending on availability."""
    if HAVE_NUMBA:
        return _njit(cache=True)(func)
    return func


STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_UNBOUNDED = 2
STATUS_MAX_ITER = 3


@jit
def _norm(v):
    s = 0.0
    for i in range(v.size):
        s += v[i] * v[i]
    return np.sqrt(s)


@jit
def null_space(M, n, rank_tol):
    """Orthonormal basis (columns) of ``{p : M p = 0}``."""
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(M)
    thr = rank_tol * max(s[0], 1.0)
    r = 0
    for v in s:
        if v > thr:
            r += 1
    return vt[r:].T.copy()


@jit
def initial_working_set(Aeq, Aub, bub, x, active_tol, rank_tol):
    """Greedy, lowest-index-first set of active rows independent of ``Aeq``."""
    n = x.size
    q = Aub.shape[0]
    work = np.zeros(q, dtype=np.bool_)
    basis = np.zeros((n, n))
    nb = 0
    if Aeq.shape[0] > 0:
        _, s, vt = np.linalg.svd(Aeq)
        thr = rank_tol * max(s[0], 1.0)
        for j in range(s.size):
            if s[j] > thr:
                basis[nb] = vt[j]
                nb += 1
    for i in range(q):
        if nb >= n:
            break
        if bub[i] - Aub[i] @ x <= active_tol:
            r = Aub[i].copy()
            for j in range(nb):
                r -= (basis[j] @ Aub[i]) * basis[j]
            nr = _norm(r)
            if nr > 1e-7:
                basis[nb] = r / nr
                nb += 1
                work[i] = True
    return work


@jit
def active_set_core(H, c, Aeq, Aub, bub, x0, work0, max_iter,
                    step_tol, mult_tol, curv_tol, rank_tol):
    """Primal active-set iterations from a feasible ``x0``.

    Minimizes ``0.5 x'Hx + c'x`` subject to ``Aeq x = const`` (assumed to
    already hold at ``x0``) and ``Aub x <= bub``.  Rows are expected to be
    normalized to unit length by the caller.  Zero-curvature descent
    directions of the reduced Hessian are followed until a constraint
    blocks them; if none does, the problem is unbounded below.

    Returns ``(status, x, work, mult_eq, mult_ub, direction, iterations)``
    with multipliers satisfying ``Hx + c + Aeq'mult_eq + Aub'mult_ub = 0``.
    """
    n = c.size
    k = Aeq.shape[0]
    q = Aub.shape[0]
    x = x0.copy()
    work = work0.copy()
    mult_eq = np.zeros(k)
    mult_ub = np.zeros(q)
    direction = np.zeros(n)
    status = STATUS_MAX_ITER
    streak = 0
    it = 0
    while it < max_iter:
        it += 1
        g = H @ x + c
        gscale = 1.0 + _norm(g)
        idx = np.nonzero(work)[0]
        nw = idx.size
        M = np.empty((k + nw, n))
        for j in range(k):
            M[j] = Aeq[j]
        for j in range(nw):
            M[k + j] = Aub[idx[j]]
        Z = null_space(M, n, rank_tol)
        r = Z.shape[1]
        p = np.zeros(n)
        ray = False
        if r > 0:
            gz = Z.T @ g
            Hz = Z.T @ (H @ Z)
            Hz = 0.5 * (Hz + Hz.T)
            evals, evecs = np.linalg.eigh(Hz)
            emax = 1.0
            for e in evals:
                if abs(e) > emax:
                    emax = abs(e)
            ge = evecs.T @ gz
            flat = np.zeros(r)
            curved = np.zeros(r)
            for j in range(r):
                if evals[j] > curv_tol * emax:
                    curved[j] = -ge[j] / evals[j]
                else:
                    flat[j] = -ge[j]
            if _norm(flat) > mult_tol * gscale:
                p = Z @ (evecs @ flat)
                ray = True
            else:
                p = Z @ (evecs @ curved)
        pn = _norm(p)
        if (not ray) and pn <= step_tol * (1.0 + _norm(x)):
            if k + nw == 0:
                status = STATUS_OPTIMAL
                break
            lam = np.linalg.lstsq(M.T.copy(), -g)[0]
            bland = streak >= 5
            jdrop = -1
            best = -mult_tol * gscale
            for j in range(nw):
                if lam[k + j] < best:
                    jdrop = j
                    if bland:
                        break
                    best = lam[k + j]
            if jdrop < 0:
                status = STATUS_OPTIMAL
                for j in range(k):
                    mult_eq[j] = lam[j]
                for j in range(nw):
                    mult_ub[idx[j]] = lam[k + j]
                break
            work[idx[jdrop]] = False
            continue
        alpha = np.inf if ray else 1.0
        block = -1
        for i in range(q):
            if work[i]:
                continue
            ap = Aub[i] @ p
            if ap > rank_tol * pn:
                slack = bub[i] - Aub[i] @ x
                if slack < 0.0:
                    slack = 0.0
                a = slack / ap
                if a < alpha:
                    alpha = a
                    block = i
        if block < 0 and ray:
            status = STATUS_UNBOUNDED
            direction = p / pn
            break
        if alpha <= 0.0:
            streak += 1
        else:
            streak = 0
        x = x + alpha * p
        if block >= 0:
            work[block] = True
    return status, x, work, mult_eq, mult_ub, direction, it


@jit
def plq1d_values(xs, lo, hi, q):
    """Closed-form ``sup_{lo<=y<=hi} y*x - q*y**2/2`` on a grid of ``x``."""
    out = np.empty(xs.size)
    for j in range(xs.size):
        x = xs[j]
        if q > 0.0:
            y = x / q
            if y < lo:
                y = lo
            if y > hi:
                y = hi
            out[j] = y * x - 0.5 * q * y * y
        elif x > 0.0:
            out[j] = hi * x if hi < np.inf else np.inf
        elif x < 0.0:
            out[j] = lo * x if lo > -np.inf else np.inf
        else:
            out[j] = 0.0
    return out


@jit
def tilted_argmin_extent(xs, fx, ys, rtol):
    """For each tilt ``y`` the smallest and largest grid point minimizing
    ``fx - y*xs`` up to a relative value tolerance."""
    nt = ys.size
    lo = np.empty(nt)
    hi = np.empty(nt)
    for t in range(nt):
        y = ys[t]
        best = np.inf
        for j in range(xs.size):
            v = fx[j] - y * xs[j]
            if v < best:
                best = v
        thr = best + rtol * (1.0 + abs(best))
        first = -1
        last = -1
        for j in range(xs.size):
            if fx[j] - y * xs[j] <= thr:
                if first < 0:
                    first = j
                last = j
        lo[t] = xs[first]
        hi[t] = xs[last]
    return lo, hi
