"""Proximal composite method and the consistent-approximation driver.

Each iteration minimizes the linearized model

    h(G(x_k) + grad G(x_k)(x - x_k)) + |x - x_k|^2 / (2 lam)   over x in X

as one convex QP in ``(x, v, w)`` using the dual form of ``h``, accepts
the step when the actual decrease is at least ``sigma`` times the model
decrease, and otherwise shrinks ``lam`` by ``tau`` and re-solves.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import qp as _qp
from .composite import (CompositeProblem, StationarityTriple, recover_triple,
                        stationarity_residual)
from .config import DEFAULT, Tolerances
from .plq import PlqFunction, dual_point_from_solution
from .polyhedra import Polyhedron

TRACE_COLUMNS = ("iter", "phi", "lambda", "step_norm", "residual", "backtracks")


class LinearizedInfeasible(RuntimeError):
    """The linearized subproblem has no point with finite model value."""


@dataclass(frozen=True)
class ProxParams:
    tau: float = 2.0
    sigma: float = 0.1
    lam_max: float = 10.0
    lam0: float = 1.0
    stop_tol: float = 1e-8
    max_iter: int = 500
    max_backtracks: int = 60

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError("tau must exceed 1")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if not self.lam_max > 0:
            raise ValueError("lam_max must be positive")
        if not 0 < self.lam0 <= self.lam_max:
            raise ValueError("lam0 must lie in (0, lam_max]")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iter < 0 or self.max_backtracks < 0:
            raise ValueError("iteration limits must be nonnegative")


@dataclass(frozen=True, eq=False)
class ProxStep:
    """Solution of one linearized subproblem.

    ``y`` is the multiplier of the linearization constraint, an element of
    ``dh(model_point)`` where ``model_point`` is the linearization at ``x``.
    """

    x: np.ndarray
    y: np.ndarray
    model_point: np.ndarray
    solution: _qp.QpSolution


def prox_subproblem(p: CompositeProblem, xk, lam: float, tol: Tolerances = DEFAULT) -> ProxStep:
    """Minimize ``h(G(xk) + J(x - xk)) + |x - xk|^2/(2 lam)`` over ``X``.

    Solved as ``min <b,v> + 0.5|w|^2 + |x - xk|^2/(2 lam)`` subject to
    ``Av + Dw - Jx = G(xk) - J xk``, ``v >= 0``, ``x in X``, started at the
    feasible point ``(xk, v, w)`` read off the evaluation multipliers.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    xk = np.asarray(xk, dtype=float).reshape(p.n)
    h = p.h
    Gk = p.G(xk)
    J = p.G.jac(xk)
    val, hsol = h.argmax(Gk, tol)
    if hsol is None:
        raise ValueError("G(xk) is outside dom h")
    df = h.dual_form
    v0, w0 = dual_point_from_solution(h, hsol)
    n, m, q = p.n, p.m, df.b.size
    use_w = bool(np.any(df.D))
    nw = m if use_w else 0
    N = n + q + nw
    H = np.zeros((N, N))
    H[:n, :n] = np.eye(n) / lam
    if use_w:
        H[n + q:, n + q:] = df.J
    c = np.concatenate([-xk / lam, df.b, np.zeros(nw)])
    X = p.X
    A_eq = np.vstack([
        np.hstack([-J, df.A] + ([df.D] if use_w else [])),
        np.hstack([X.A_eq, np.zeros((X.A_eq.shape[0], q + nw))]),
    ])
    b_eq = np.concatenate([Gk - J @ xk, X.b_eq])
    A_ub = np.vstack([
        np.hstack([X.A_ub, np.zeros((X.A_ub.shape[0], q + nw))]),
        np.hstack([np.zeros((q, n)), -np.eye(q), np.zeros((q, nw))]),
    ])
    b_ub = np.concatenate([X.b_ub, np.zeros(q)])
    start = np.concatenate([xk, v0] + ([w0] if use_w else []))
    sol = _qp.solve_arrays(H, c, A_eq, b_eq, A_ub, b_ub, start, None, tol)
    if sol.status is _qp.QpStatus.INFEASIBLE:
        raise LinearizedInfeasible("linearized subproblem is infeasible")
    if not sol.ok:
        raise RuntimeError(f"subproblem QP ended with status {sol.status.value}")
    x = sol.x[:n].copy()
    y = -sol.eq_mult[:m]
    return ProxStep(x, y, Gk + J @ (x - xk), sol)


@dataclass(frozen=True)
class IterRecord:
    iter: int
    x: np.ndarray
    lam: float
    phi: float
    model_decrease: float
    actual_decrease: float
    step_norm: float
    residual: float
    backtracks: int


@dataclass(eq=False)
class SolveTrace:
    """History of one run.  ``reason`` is ``"stationary"`` when the step
    fell below ``stop_tol``, else ``"max_iter"`` or ``"max_backtracks"``."""

    x0: np.ndarray
    phi0: float
    records: list = field(default_factory=list)
    x: np.ndarray | None = None
    phi: float = np.inf
    triple: StationarityTriple | None = None
    reason: str = ""
    subproblems: int = 0

    @property
    def converged(self) -> bool:
        return self.reason == "stationary"

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def residual(self) -> float:
        return self.triple.residual if self.triple is not None else np.inf

    def descent_holds(self, slack: float = 0.0) -> bool:
        """``phi`` never increases across accepted iterations."""
        vals = [self.phi0] + [r.phi for r in self.records]
        return all(b <= a + slack for a, b in zip(vals, vals[1:]))

    def rows(self):
        for r in self.records:
            yield (r.iter, r.phi, r.lam, r.step_norm, r.residual, r.backtracks)

    def to_csv(self, dest=None) -> str:
        """Write the CSV trace (columns ``iter,phi,lambda,step_norm,residual,backtracks``).

        Returns the text; ``dest`` may be a path or an open text file.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in self.rows():
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:5]] + [row[5]])
        text = buf.getvalue()
        if isinstance(dest, str):
            with open(dest, "w", newline="") as fh:
                fh.write(text)
        elif dest is not None:
            dest.write(text)
        return text


def _start_point(p: CompositeProblem, x0):
    x = np.asarray(x0, dtype=float).reshape(p.n)
    if not p.X.contains(x, 0.0):
        x = _qp.project(p.X, x)
    f = p.phi(x)
    if not np.isfinite(f):
        raise ValueError("phi is not finite at the starting point")
    return x, f


def solve(p: CompositeProblem, params: ProxParams = ProxParams(), x0=None,
          tol: Tolerances = DEFAULT, keep_x: bool = True) -> SolveTrace:
    """Run the proximal composite method from ``x0``.

    The final :class:`StationarityTriple` is the better of two genuine
    evaluations of ``dist(0, Phi)``: at the last subproblem solution with its
    own multiplier and model point, and at the last iterate with recovered
    multipliers.
    """
    if x0 is None:
        x0 = np.zeros(p.n)
    x, fx = _start_point(p, x0)
    trace = SolveTrace(x.copy(), fx)
    lam = params.lam0
    h, G = p.h, p.G
    last_step = None
    reason = "max_iter"
    for it in range(1, params.max_iter + 1):
        backtracks = 0
        accepted = False
        while True:
            step = prox_subproblem(p, x, lam, tol)
            trace.subproblems += 1
            last_step = step
            dx = float(np.linalg.norm(step.x - x))
            if dx <= params.stop_tol:
                reason = "stationary"
                # a sub-tolerance step is still taken when it does not raise phi
                fbar = h.value(G(step.x), tol) if dx > 0 else fx
                if dx > 0 and fbar <= fx:
                    x, fx = step.x, fbar
                break
            model = fx - h.value(step.model_point, tol)
            fbar = h.value(G(step.x), tol)
            actual = fx - fbar
            if actual >= params.sigma * model:
                accepted = True
                break
            backtracks += 1
            if backtracks > params.max_backtracks:
                reason = "max_backtracks"
                break
            lam /= params.tau
        if not accepted:
            break
        r = stationarity_residual(p, step.x, step.y, step.model_point, tol).residual
        trace.records.append(IterRecord(it, step.x.copy() if keep_x else None, lam, fbar,
                                        model, actual, dx, r, backtracks))
        x, fx = step.x, fbar
        lam = min(params.tau * lam, params.lam_max)
    trace.reason = reason
    trace.x = x
    trace.phi = fx
    trace.triple = _final_triple(p, x, last_step, tol)
    return trace


def _final_triple(p, x, step, tol):
    cands = []
    try:
        cands.append(recover_triple(p, x, tol))
    except ValueError:
        pass
    if step is not None:
        cands.append(stationarity_residual(p, step.x, step.y, step.model_point, tol))
    if not cands:
        return None
    return min(cands, key=lambda t: t.residual)


# -- consistent approximations ------------------------------------------------

class ScheduleKind(enum.Enum):
    MOREAU = "moreau"
    PENALTY = "penalty"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ApproxSchedule:
    kind: ScheduleKind
    nu_list: tuple
    eps_list: tuple
    theta_list: tuple | None = None

    def __post_init__(self):
        nus, eps = tuple(self.nu_list), tuple(self.eps_list)
        object.__setattr__(self, "nu_list", nus)
        object.__setattr__(self, "eps_list", eps)
        if len(nus) != len(eps) or not nus:
            raise ValueError("nu_list and eps_list must be nonempty and of equal length")
        if any(b <= a for a, b in zip(nus, nus[1:])):
            raise ValueError("nu_list must increase")
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be positive and strictly decreasing")
        if self.theta_list is not None:
            th = tuple(self.theta_list)
            object.__setattr__(self, "theta_list", th)
            if len(th) != len(nus):
                raise ValueError("theta_list length differs from nu_list")
            if any(t <= 0 for t in th) or any(b <= a for a, b in zip(th, th[1:])):
                raise ValueError("theta_list must be positive and strictly increasing")
        elif self.kind is ScheduleKind.PENALTY:
            raise ValueError("a penalty schedule needs theta_list")

    @classmethod
    def moreau(cls, nus=(1, 10, 100, 1000)):
        return cls(ScheduleKind.MOREAU, tuple(nus), tuple(1.0 / nu for nu in nus))

    @classmethod
    def exact_penalty(cls, stages=12, base=2.0, eps0=1e-2):
        nus = tuple(range(1, stages + 1))
        return cls(ScheduleKind.PENALTY, nus, tuple(eps0 / nu for nu in nus),
                   tuple(base ** nu for nu in nus))

    def stages(self):
        th = self.theta_list or (None,) * len(self.nu_list)
        return list(zip(self.nu_list, self.eps_list, th))


@dataclass(eq=False)
class StageResult:
    nu: float
    eps: float
    theta: float | None
    problem: CompositeProblem
    trace: SolveTrace
    criterion_met: bool


def consistent_solve(family: Callable, schedule: ApproxSchedule, x0,
                     params: ProxParams = ProxParams(), retries: int = 3,
                     tol: Tolerances = DEFAULT) -> list:
    """Solve the approximating problems in order, warm-starting each stage.

    ``family(nu, theta)`` returns the stage problem.  A stage is done when
    its own ``dist(0, Phi_nu) <= eps_nu``; otherwise it is re-run from its
    last point with ``stop_tol`` divided by 100, up to ``retries`` times.
    """
    results = []
    x = np.asarray(x0, dtype=float)
    for nu, eps, theta in schedule.stages():
        prob = family(nu, theta)
        prm = params
        trace = solve(prob, prm, x, tol)
        for _ in range(retries):
            if trace.residual <= eps:
                break
            prm = ProxParams(prm.tau, prm.sigma, prm.lam_max, prm.lam0,
                             prm.stop_tol / 100, prm.max_iter, prm.max_backtracks)
            trace = solve(prob, prm, trace.x, tol)
        results.append(StageResult(nu, eps, theta, prob, trace, trace.residual <= eps))
        x = trace.x
    return results


def moreau_family(p: CompositeProblem) -> Callable:
    """``nu -> (X, G, h with Q + I/nu)``."""
    return lambda nu, theta=None: p.with_h(p.h.smoothed(nu))


def _penalty_shape(Y: Polyhedron):
    """Indices ``(free, nonneg)`` when ``Y = {1} x R^free x [0,inf)^nonneg``."""
    m = Y.dim
    if Y.A_eq.shape[0] != 1:
        raise ValueError("penalty family needs exactly one equality y_0 = 1")
    a, b = Y.A_eq[0], Y.b_eq[0]
    if a[0] == 0 or np.any(a[1:] != 0) or b / a[0] != 1.0:
        raise ValueError("penalty family needs the equality y_0 = 1")
    nonneg = []
    for row, rhs in zip(Y.A_ub, Y.b_ub):
        nz = np.flatnonzero(row)
        if nz.size != 1 or nz[0] == 0 or row[nz[0]] >= 0 or rhs != 0:
            raise ValueError("penalty family needs sign constraints y_i >= 0 only")
        nonneg.append(int(nz[0]))
    nonneg = sorted(set(nonneg))
    free = [i for i in range(1, m) if i not in nonneg]
    return free, nonneg


def penalty_family(Y: Polyhedron, theta: float) -> Polyhedron:
    """``{1} x [-theta, theta]^free x [0, theta]^nonneg`` for ``Y = {1} x R^free x [0,inf)^nonneg``."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    free, nonneg = _penalty_shape(Y)
    lo = np.full(Y.dim, -theta)
    hi = np.full(Y.dim, float(theta))
    lo[0] = hi[0] = 1.0
    lo[nonneg] = 0.0
    return Polyhedron.box(lo, hi)


def exact_penalty_family(p: CompositeProblem) -> Callable:
    """``(nu, theta) -> (X, G, h with Y replaced by its theta-truncation)``."""
    _penalty_shape(p.h.Y)
    return lambda nu, theta: p.with_h(PlqFunction(penalty_family(p.h.Y, theta), p.h.Q))


def true_residual(p: CompositeProblem, stage_triple: StationarityTriple,
                  tol: Tolerances = DEFAULT) -> StationarityTriple:
    """``dist(0, Phi)`` of the original problem near a stage solution.

    Evaluated at the stage's own ``(x, y, z)`` and at ``x`` with recovered
    multipliers; the smaller is returned.
    """
    cands = []
    try:
        cands.append(stationarity_residual(p, stage_triple.x, stage_triple.y, stage_triple.z, tol))
    except ValueError:
        pass
    try:
        cands.append(recover_triple(p, stage_triple.x, tol))
    except ValueError:
        pass
    return min(cands, key=lambda t: t.residual)
