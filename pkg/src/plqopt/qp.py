"""Convex quadratic programming over polyhedra.

``solve`` is a primal active-set method (feasibility by a phase-1 LP, then
null-space steps with lowest-index tie-breaking and Bland's rule after a run
of degenerate steps).  Everything that needs an argmin of a convex quadratic
over a polyhedron in this package goes through it.  ``brute_force_qp`` is an
unrelated enumeration used only as a test oracle.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .config import DEFAULT, Tolerances
from .polyhedra import EmptyPolyhedronError, Polyhedron


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


_STATUS = {
    K.STATUS_OPTIMAL: QpStatus.OPTIMAL,
    K.STATUS_INFEASIBLE: QpStatus.INFEASIBLE,
    K.STATUS_UNBOUNDED: QpStatus.UNBOUNDED,
    K.STATUS_MAX_ITER: QpStatus.MAX_ITER,
}


@dataclass(frozen=True, eq=False)
class QpProblem:
    """Minimize ``0.5 x'Hx + c'x`` over ``feasible``."""

    H: np.ndarray
    c: np.ndarray
    feasible: Polyhedron

    def __post_init__(self):
        n = self.feasible.dim
        H = np.asarray(self.H, dtype=float).reshape(n, n)
        c = np.asarray(self.c, dtype=float).reshape(n)
        check_psd(H)
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.feasible.dim

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.c @ x)


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Outcome of a QP solve.

    For ``OPTIMAL`` the multipliers satisfy
    ``Hx + c + A_eq' eq_mult + A_ub' ineq_mult = 0`` with ``ineq_mult >= 0``.
    For ``UNBOUNDED``, ``direction`` is a unit recession direction along
    which the objective decreases without bound (``obj = -inf``).
    """

    status: QpStatus
    x: np.ndarray | None
    obj: float
    eq_mult: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_mult: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    direction: np.ndarray | None = None
    active: tuple = ()

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def check_psd(H, tol: Tolerances = DEFAULT, name="H"):
    """Raise ``ValueError`` unless ``H`` is finite, symmetric and PSD."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.all(np.isfinite(H)):
        raise ValueError(f"{name} has NaN or infinite entries")
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    if np.max(np.abs(H - H.T), initial=0.0) > tol.symmetry * scale:
        raise ValueError(f"{name} is not symmetric")
    if H.size and np.linalg.eigvalsh(0.5 * (H + H.T))[0] < -tol.psd_floor * scale:
        raise ValueError(f"{name} is not positive semidefinite")


def _empty(n):
    return np.zeros((0, n))


def _clean_rows(A, b, is_eq, tol):
    """Unit-normalize rows; drop zero rows or report inconsistency.

    Returns ``(A, b, norms, keep, ok)``.
    """
    norms = np.linalg.norm(A, axis=1) if A.shape[0] else np.zeros(0)
    keep = norms > 1e-14
    dropped_b = b[~keep]
    if is_eq:
        ok = bool(np.all(np.abs(dropped_b) <= tol))
    else:
        ok = bool(np.all(dropped_b >= -tol))
    idx = np.flatnonzero(keep)
    return A[idx] / norms[idx, None], b[idx] / norms[idx], norms[idx], idx, ok


def _max_iter(n, k, q, tol):
    return tol.max_iter_factor * (n + k + q + 1) + 100


def _phase1(A_eq, b_eq, A_ub, b_ub, x0, tol):
    """Minimize the total constraint violation starting from ``x0``.

    Rows must already be unit-normalized.  Returns a point within the
    feasibility tolerance, or ``None``.
    """
    n = x0.size
    k, q = A_eq.shape[0], A_ub.shape[0]
    scale = 1.0 + max(np.max(np.abs(b_eq), initial=0.0), np.max(np.abs(b_ub), initial=0.0))
    res_eq = A_eq @ x0 - b_eq
    res_ub = A_ub @ x0 - b_ub
    if (np.max(np.abs(res_eq), initial=0.0) <= tol.feasibility * scale
            and np.max(res_ub, initial=-np.inf) <= tol.feasibility * scale):
        return x0
    # variables (x, s, rp, rm): A_ub x - s <= b_ub, A_eq x + rp - rm = b_eq
    N = n + q + 2 * k
    c = np.concatenate([np.zeros(n), np.ones(q + 2 * k)])
    Ae = np.hstack([A_eq, np.zeros((k, q)), np.eye(k), -np.eye(k)])
    Au = np.vstack([
        np.hstack([A_ub, -np.eye(q), np.zeros((q, 2 * k))]),
        np.hstack([np.zeros((q + 2 * k, n)), -np.eye(q + 2 * k)]),
    ])
    bu = np.concatenate([b_ub, np.zeros(q + 2 * k)])
    ne = np.linalg.norm(Ae, axis=1)
    nu = np.linalg.norm(Au, axis=1)
    Ae, Au, bu = Ae / ne[:, None], Au / nu[:, None], bu / nu
    z0 = np.concatenate([x0, np.maximum(res_ub, 0.0), np.maximum(-res_eq, 0.0),
                         np.maximum(res_eq, 0.0)])
    work = K.initial_working_set(Ae, Au, bu, z0, tol.active, tol.rank)
    status, z, *_ = K.active_set_core(
        np.zeros((N, N)), c, Ae, Au, bu, z0, work, _max_iter(N, k, Au.shape[0], tol),
        tol.step, tol.multiplier, tol.curvature, tol.rank)
    x = z[:n]
    viol = max(np.max(np.abs(A_eq @ x - b_eq), initial=0.0),
               np.max(A_ub @ x - b_ub, initial=0.0))
    if viol <= 1e3 * tol.feasibility * scale:
        return x
    return None


def solve_arrays(H, c, A_eq, b_eq, A_ub, b_ub, x0=None, active_hint=None,
                 tol: Tolerances = DEFAULT) -> QpSolution:
    """Array-level entry point of :func:`solve` (no PSD validation)."""
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.size
    H = np.asarray(H, dtype=float).reshape(n, n)
    A_eq = np.asarray(A_eq, dtype=float).reshape(-1, n)
    A_ub = np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    b_ub = np.asarray(b_ub, dtype=float).reshape(-1)
    k0, q0 = A_eq.shape[0], A_ub.shape[0]

    Ae, be, ne, ie, ok_e = _clean_rows(A_eq, b_eq, True, tol.feasibility)
    Au, bu, nu, iu, ok_u = _clean_rows(A_ub, b_ub, False, tol.feasibility)
    if not (ok_e and ok_u):
        return QpSolution(QpStatus.INFEASIBLE, None, np.inf)

    start = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n).copy()
    x_feas = _phase1(Ae, be, Au, bu, start, tol)
    if x_feas is None:
        return QpSolution(QpStatus.INFEASIBLE, None, np.inf)

    if active_hint is not None and x_feas is start:
        work = np.zeros(Au.shape[0], dtype=bool)
        hint = set(int(i) for i in active_hint)
        for j, i in enumerate(iu):
            if i in hint and bu[j] - Au[j] @ x_feas <= tol.working:
                work[j] = True
        # keep only an independent subset, lowest index first
        sub = K.initial_working_set(Ae, Au[work], bu[work], x_feas, np.inf, tol.rank)
        work[np.flatnonzero(work)[~sub]] = False
    else:
        work = K.initial_working_set(Ae, Au, bu, x_feas, tol.working, tol.rank)

    status, x, work, me, mu, d, it = K.active_set_core(
        H, c, Ae, Au, bu, x_feas, work, _max_iter(n, Ae.shape[0], Au.shape[0], tol),
        tol.step, tol.multiplier, tol.curvature, tol.rank)
    st = _STATUS[int(status)]

    eq_mult = np.zeros(k0)
    ineq_mult = np.zeros(q0)
    eq_mult[ie] = me / ne
    ineq_mult[iu] = np.maximum(mu, 0.0) / nu
    if st is QpStatus.UNBOUNDED:
        return QpSolution(st, x, -np.inf, eq_mult, ineq_mult, int(it), d.copy())
    obj = float(0.5 * x @ H @ x + c @ x)
    active = tuple(int(i) for i in np.flatnonzero(A_ub @ x >= b_ub - tol.active)) if q0 else ()
    return QpSolution(st, x, obj, eq_mult, ineq_mult, int(it), None, active)


def solve(qp: QpProblem, x0=None, active_hint=None, tol: Tolerances = DEFAULT) -> QpSolution:
    """Solve a convex QP.

    Parameters
    ----------
    qp : QpProblem
    x0 : array_like, optional
        Starting point; if it is feasible phase 1 is skipped.
    active_hint : iterable of int, optional
        Inequality rows to start the working set from (used only when
        ``x0`` is feasible and the rows are active there).

    Returns
    -------
    QpSolution
        ``MAX_ITER`` is reported separately from infeasibility.
    """
    P = qp.feasible
    return solve_arrays(qp.H, qp.c, P.A_eq, P.b_eq, P.A_ub, P.b_ub, x0, active_hint, tol)


def solve_lp(c, P: Polyhedron, x0=None, tol: Tolerances = DEFAULT) -> QpSolution:
    n = P.dim
    return solve_arrays(np.zeros((n, n)), c, P.A_eq, P.b_eq, P.A_ub, P.b_ub, x0, None, tol)


def find_feasible_point(P: Polyhedron, tol: Tolerances = DEFAULT):
    """A point of ``P`` (phase 1 from the origin), or ``None`` if empty."""
    Ae, be, _, _, ok_e = _clean_rows(P.A_eq, P.b_eq, True, tol.feasibility)
    Au, bu, _, _, ok_u = _clean_rows(P.A_ub, P.b_ub, False, tol.feasibility)
    if not (ok_e and ok_u):
        return None
    x = _phase1(Ae, be, Au, bu, np.zeros(P.dim), tol)
    if x is None:
        return None
    x = np.array(x)
    x.setflags(write=False)
    return x


def cone_max(objective, eq_rows, ub_rows, tol: Tolerances = DEFAULT):
    """Maximize ``<objective, d>`` over ``{eq_rows d = 0, ub_rows d <= 0, |d|_inf <= 1}``.

    Returns ``(value, d)``.  The origin is feasible so phase 1 is skipped.
    """
    objective = np.asarray(objective, dtype=float).reshape(-1)
    n = objective.size
    eq_rows = np.asarray(eq_rows, dtype=float).reshape(-1, n)
    ub_rows = np.asarray(ub_rows, dtype=float).reshape(-1, n)
    A_ub = np.vstack([ub_rows, np.eye(n), -np.eye(n)])
    b_ub = np.concatenate([np.zeros(ub_rows.shape[0]), np.ones(2 * n)])
    sol = solve_arrays(np.zeros((n, n)), -objective, eq_rows, np.zeros(eq_rows.shape[0]),
                       A_ub, b_ub, np.zeros(n), None, tol)
    if not sol.ok:  # cannot happen for a bounded feasible LP unless iterations ran out
        raise RuntimeError(f"cone LP ended with status {sol.status.value}")
    return -sol.obj, sol.x


def cone_is_trivial(eq_rows, ub_rows, extra_eq_rows=None, tol: Tolerances = DEFAULT) -> bool:
    """True iff ``{eq d = 0, extra d = 0, ub d <= 0}`` is ``{0}``.

    Certified by maximizing each signed coordinate over the cone cut by the
    unit box: any optimum above ``tol.qualification`` exhibits a nonzero
    element.
    """
    return nontrivial_cone_element(eq_rows, ub_rows, extra_eq_rows, tol) is None


def nontrivial_cone_element(eq_rows, ub_rows, extra_eq_rows=None, tol: Tolerances = DEFAULT):
    eq_rows = np.atleast_2d(np.asarray(eq_rows, dtype=float))
    ub_rows = np.atleast_2d(np.asarray(ub_rows, dtype=float))
    n = max(eq_rows.shape[1], ub_rows.shape[1])
    eq_rows = eq_rows.reshape(-1, n)
    ub_rows = ub_rows.reshape(-1, n)
    if extra_eq_rows is not None:
        eq_rows = np.vstack([eq_rows, np.asarray(extra_eq_rows, dtype=float).reshape(-1, n)])
    if eq_rows.shape[0] and np.linalg.matrix_rank(eq_rows) == n:
        return None
    for j in range(n):
        for sign in (1.0, -1.0):
            e = np.zeros(n)
            e[j] = sign
            val, d = cone_max(e, eq_rows, ub_rows, tol)
            if val > tol.qualification:
                return d
    return None


def solution_direction_cone(qp: QpProblem, sol: QpSolution, tol: Tolerances = DEFAULT):
    """Rows ``(eq, ub)`` of the cone of directions into the solution set.

    The solution set of a convex QP is ``{x feasible | Hx = Hx*, c'x = c'x*}``.
    Its directions at ``x*`` form ``{A_eq p = 0, A_S p = 0, A_W p <= 0,
    Hp = 0}`` where ``S`` are active rows with positive multiplier and ``W``
    the remaining active rows.
    """
    P = qp.feasible
    scale = 1.0 + float(np.max(np.abs(sol.ineq_mult), initial=0.0))
    active = np.array(sol.active, dtype=int)
    strong = [i for i in active if sol.ineq_mult[i] > 1e-9 * scale]
    weak = [i for i in active if sol.ineq_mult[i] <= 1e-9 * scale]
    return np.vstack([P.A_eq, P.A_ub[strong], qp.H]), P.A_ub[weak]


def is_unique(qp: QpProblem, sol: QpSolution, tol: Tolerances = DEFAULT) -> bool:
    """Whether ``sol.x`` is the only minimizer of ``qp``
    (the cone of :func:`solution_direction_cone` is ``{0}``)."""
    if not sol.ok:
        return False
    eq, ub = solution_direction_cone(qp, sol, tol)
    if np.linalg.matrix_rank(eq, tol=1e-9 * max(1.0, np.max(np.abs(eq), initial=0.0))) == qp.n:
        return True
    return cone_is_trivial(eq, ub, None, tol)


def project(P: Polyhedron, x, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``P``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != P.dim:
        raise ValueError("dimension mismatch")
    if P.contains(x, 0.0):
        return x.copy()
    sol = solve_arrays(np.eye(P.dim), -x, P.A_eq, P.b_eq, P.A_ub, P.b_ub, x, None, tol)
    if sol.status is QpStatus.INFEASIBLE:
        raise EmptyPolyhedronError("projection onto an empty polyhedron")
    if not sol.ok:
        raise RuntimeError(f"projection QP ended with status {sol.status.value}")
    return sol.x


def brute_force_qp(qp: QpProblem, max_dim: int = 6) -> QpSolution:
    """Reference optimum by enumerating candidate active sets.

    For every subset ``S`` of inequality rows, the equality-constrained
    problem (equalities plus ``S`` held tight) is solved through its KKT
    system; subsets where ``[A_eq; A_S; H]`` lacks full column rank are
    skipped.  The best feasible candidate is returned.  Exponential in the
    number of inequalities; only meant as a test oracle.
    """
    P = qp.feasible
    n = P.dim
    if n > max_dim:
        raise ValueError(f"brute_force_qp is limited to dimension <= {max_dim}")
    H, c = qp.H, qp.c
    k, q = P.A_eq.shape[0], P.A_ub.shape[0]
    best = None
    for size in range(0, q + 1):
        for S in itertools.combinations(range(q), size):
            M = np.vstack([P.A_eq, P.A_ub[list(S)]])
            rhs = np.concatenate([P.b_eq, P.b_ub[list(S)]])
            if np.linalg.matrix_rank(np.vstack([M, H])) < n:
                continue
            r = M.shape[0]
            KKT = np.block([[H, M.T], [M, np.zeros((r, r))]])
            sol = np.linalg.lstsq(KKT, np.concatenate([-c, rhs]), rcond=None)[0]
            resid = KKT @ sol - np.concatenate([-c, rhs])
            if np.max(np.abs(resid)) > 1e-9 * (1 + np.max(np.abs(rhs), initial=0.0) + np.max(np.abs(c))):
                continue
            x = sol[:n]
            if not P.contains(x, 1e-9):
                continue
            obj = float(0.5 * x @ H @ x + c @ x)
            if best is None or obj < best[0] - 1e-12:
                mult = sol[n:]
                ineq = np.zeros(q)
                ineq[list(S)] = mult[k:]
                best = (obj, x, mult[:k].copy(), ineq, S)
    if best is None:
        return QpSolution(QpStatus.INFEASIBLE, None, np.inf)
    obj, x, me, mi, S = best
    return QpSolution(QpStatus.OPTIMAL, x, obj, me, mi, 0, None, tuple(S))
