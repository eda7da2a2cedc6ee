"""Piecewise linear-quadratic functions ``h(z) = sup_{y in Y} <y,z> - 0.5 <y,Qy>``.

Values are plain floats; ``+inf`` marks points outside ``dom h``.  A value
is declared infinite only on an LP certificate: a direction ``d`` of the
recession cone of ``Y`` with ``Qd = 0`` and ``<d,z> > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import qp as _qp
from .config import DEFAULT, Tolerances
from .polyhedra import Polyhedron
from .qp import QpSolution, QpStatus


@dataclass(frozen=True, eq=False)
class DualForm:
    """Data with ``Y = {y | A'y <= b}`` and ``Q = D J^{-1} D'``."""

    A: np.ndarray
    b: np.ndarray
    D: np.ndarray
    J: np.ndarray


@dataclass(frozen=True, eq=False)
class Subgradient:
    """One element of ``dh(z)`` plus how it was obtained.

    ``point`` is ``None`` when ``z`` is outside ``dom h`` (empty set).
    """

    point: np.ndarray | None
    unique: bool
    solution: QpSolution | None

    @property
    def empty(self) -> bool:
        return self.point is None


def sqrt_psd(Q):
    """Symmetric square root of a PSD matrix (negative roundoff clipped)."""
    Q = np.asarray(Q, dtype=float)
    if not np.any(Q):
        return np.zeros_like(Q)
    lam, V = np.linalg.eigh(0.5 * (Q + Q.T))
    return (V * np.sqrt(np.maximum(lam, 0.0))) @ V.T


@dataclass(frozen=True, eq=False)
class PlqFunction:
    """``h(z) = sup_{y in Y} <y,z> - 0.5 <y,Qy>`` for polyhedral ``Y`` and PSD ``Q``."""

    Y: Polyhedron
    Q: np.ndarray

    def __post_init__(self):
        m = self.Y.dim
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim == 0:
            Q = Q * np.eye(m)
        Q = Q.reshape(m, m)
        _qp.check_psd(Q, name="Q")
        Q = 0.5 * (Q + Q.T)
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        if self.Y.is_empty:
            raise ValueError("Y must be nonempty")

    @classmethod
    def abs(cls):
        """``h = |.|`` on the real line."""
        return cls(Polyhedron.box([-1.0], [1.0]), np.zeros((1, 1)))

    @property
    def m(self) -> int:
        return self.Y.dim

    @cached_property
    def q_positive_definite(self) -> bool:
        return bool(np.linalg.eigvalsh(self.Q)[0] > DEFAULT.psd_floor)

    @cached_property
    def real_valued(self) -> bool:
        """``dom h`` is everything: ``Y`` bounded or ``Q`` positive definite."""
        if self.q_positive_definite or self.Y.is_bounded:
            return True
        return _qp.cone_is_trivial(self.Y.A_eq, self.Y.A_ub, self.Q)

    def _check(self, z):
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.m:
            raise ValueError(f"argument has length {z.size}, expected {self.m}")
        return z

    def infinite_at(self, z, tol: Tolerances = DEFAULT) -> bool:
        """LP certificate for ``h(z) = +inf``."""
        z = self._check(z)
        if not np.all(np.isfinite(z)):
            return True
        if self.real_valued:
            return False
        val, _ = _qp.cone_max(z, np.vstack([self.Y.A_eq, self.Q]), self.Y.A_ub, tol)
        return val > tol.recession * (1.0 + np.sum(np.abs(z)))

    def argmax(self, z, tol: Tolerances = DEFAULT):
        """``(value, QpSolution)`` of ``min_{y in Y} 0.5 y'Qy - <y,z>``.

        The solution is ``None`` when the value is ``+inf``.
        """
        z = self._check(z)
        if self.infinite_at(z, tol):
            return np.inf, None
        sol = _qp.solve_arrays(self.Q, -z, self.Y.A_eq, self.Y.b_eq, self.Y.A_ub, self.Y.b_ub,
                               self.Y.feasible_point, None, tol)
        if sol.status is QpStatus.UNBOUNDED:
            return np.inf, None
        if sol.status is QpStatus.INFEASIBLE:  # Y was checked nonempty at construction
            raise AssertionError("feasible set of h became empty")
        if not sol.ok:
            raise RuntimeError(f"evaluation QP ended with status {sol.status.value}")
        return -sol.obj + 0.0, sol

    def value(self, z, tol: Tolerances = DEFAULT) -> float:
        """``h(z)``, possibly ``+inf``; never ``-inf`` because ``Y`` is nonempty."""
        return self.argmax(z, tol)[0]

    __call__ = value

    def subgradient(self, z, tol: Tolerances = DEFAULT) -> Subgradient:
        """A point of ``dh(z) = argmin_{y in Y} 0.5 y'Qy - <y,z>``.

        ``unique`` is certified by :func:`plqopt.qp.is_unique`.  For ties the
        representative is whatever the active-set solver returns (lowest-index
        rules), so it is reproducible.
        """
        val, sol = self.argmax(z, tol)
        if sol is None:
            return Subgradient(None, False, None)
        if self.q_positive_definite:
            unique = True
        else:
            unique = _qp.is_unique(_qp.QpProblem(self.Q, -self._check(z), self.Y), sol, tol)
        return Subgradient(sol.x.copy(), unique, sol)

    def domain_normal_cone(self, z) -> Polyhedron:
        """``N_{dom h}(z) = {y in Y^inf | Qy = 0, <y,z> = 0}``."""
        z = self._check(z)
        m = self.m
        A_eq = np.vstack([self.Y.A_eq, self.Q, z.reshape(1, m)])
        return Polyhedron(A_eq, np.zeros(A_eq.shape[0]), self.Y.A_ub,
                          np.zeros(self.Y.A_ub.shape[0]), dim=m)

    @cached_property
    def dual_form(self) -> DualForm:
        """``Y = {y | A'y <= b}`` (equalities split in two), ``D = Q^{1/2}``, ``J = I``."""
        A, b = self.Y.as_inequalities()
        return DualForm(A, b, sqrt_psd(self.Q), np.eye(self.m))

    def value_via_dual(self, z, tol: Tolerances = DEFAULT) -> float:
        """``inf {<b,v> + 0.5 <w,Jw> | Av + Dw = z, v >= 0}``; infeasible means ``+inf``."""
        z = self._check(z)
        df = self.dual_form
        q = df.b.size
        m = self.m
        use_w = bool(np.any(df.D))
        nw = m if use_w else 0
        N = q + nw
        H = np.zeros((N, N))
        H[q:, q:] = df.J if use_w else 0.0
        c = np.concatenate([df.b, np.zeros(nw)])
        A_eq = np.hstack([df.A, df.D]) if use_w else df.A
        A_ub = np.hstack([-np.eye(q), np.zeros((q, nw))])
        sol = _qp.solve_arrays(H, c, A_eq, z, A_ub, np.zeros(q), None, None, tol)
        if sol.status is QpStatus.INFEASIBLE:
            return np.inf
        if sol.status is QpStatus.UNBOUNDED:
            raise AssertionError("dual QP unbounded although Y is nonempty")
        if not sol.ok:
            raise RuntimeError(f"dual QP ended with status {sol.status.value}")
        return sol.obj

    def smoothed(self, nu: float) -> PlqFunction:
        """Moreau-type smoothing: same ``Y``, ``Q + I/nu``."""
        if not nu > 0:
            raise ValueError("nu must be positive")
        return PlqFunction(self.Y, self.Q + np.eye(self.m) / nu)

    def with_Y(self, Y: Polyhedron) -> PlqFunction:
        return PlqFunction(Y, self.Q)


def dual_point_from_solution(h: PlqFunction, sol: QpSolution):
    """A feasible ``(v, w)`` for the dual form, built from the multipliers of
    the evaluation QP; optimal in the dual QP when ``sol`` is optimal."""
    v = np.concatenate([sol.ineq_mult, np.maximum(sol.eq_mult, 0.0), np.maximum(-sol.eq_mult, 0.0)])
    w = h.dual_form.D @ sol.x
    return v, w
