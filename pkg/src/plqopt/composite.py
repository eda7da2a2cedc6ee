"""The composite problem ``min_x  iota_X(x) + h(G(x))`` and its first-order tools.

``stationarity_residual`` measures ``dist(0, Phi(x, y, z))`` for the
optimality map

    Phi(x, y, z) = {G(x) - z} x (Qy - z + N_Y(y)) x (grad G(x)' y + N_X(x)),

whose zeros are exactly the (x, y, z) with x stationary, y a multiplier in
``dh(G(x))`` and ``z = G(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import qp as _qp
from .config import DEFAULT, Tolerances
from .plq import PlqFunction
from .polyhedra import Polyhedron, dist_to_cone, normal_cone


def _fd_step(x):
    return 1e-6 * np.maximum(1.0, np.abs(x))


@dataclass(frozen=True, eq=False)
class SmoothMap:
    """A C^1 map ``G: R^n -> R^m`` given by callbacks.

    Callbacks must be pure.  Without ``jacobian`` central differences are
    used (step ``1e-6 * max(1, |x_i|)``); without ``weighted_hessian`` the
    Hessian of ``<y, G(.)>`` is differenced from the Jacobian.  ``affine``
    holds ``(A, b)`` when ``G(x) = Ax + b``.
    """

    n: int
    m: int
    value: Callable
    jacobian: Callable | None = None
    weighted_hessian: Callable | None = None
    affine: tuple | None = None
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.value(np.asarray(x, dtype=float)), dtype=float).reshape(self.m)

    def jac(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float).reshape(self.m, self.n)
        return self.fd_jacobian(x)

    def fd_jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        J = np.empty((self.m, self.n))
        hs = _fd_step(x)
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = hs[i]
            J[:, i] = (self(x + e) - self(x - e)) / (2 * hs[i])
        return J

    def hessian(self, x, y) -> np.ndarray:
        """``sum_i y_i grad^2 G_i(x)``."""
        x = np.asarray(x, dtype=float).reshape(self.n)
        y = np.asarray(y, dtype=float).reshape(self.m)
        if self.weighted_hessian is not None:
            return np.asarray(self.weighted_hessian(x, y), dtype=float).reshape(self.n, self.n)
        Hs = np.empty((self.n, self.n))
        hs = _fd_step(x)
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = hs[i]
            Hs[:, i] = (self.jac(x + e).T @ y - self.jac(x - e).T @ y) / (2 * hs[i])
        return 0.5 * (Hs + Hs.T)

    def linearize(self, xbar, x) -> np.ndarray:
        xbar = np.asarray(xbar, dtype=float)
        return self(xbar) + self.jac(xbar) @ (np.asarray(x, dtype=float) - xbar)

    def jacobian_error(self, x) -> float:
        """Relative error between the Jacobian callback and central differences."""
        J = self.jac(x)
        F = self.fd_jacobian(x)
        return float(np.max(np.abs(J - F)) / max(1.0, np.max(np.abs(F))))

    # -- constructors -----------------------------------------------------
    @classmethod
    def affine_map(cls, A, b, name="affine"):
        """``G(x) = Ax + b``."""
        A = np.array(A, dtype=float, ndmin=2)
        b = np.array(b, dtype=float).reshape(A.shape[0])
        A.setflags(write=False)
        b.setflags(write=False)
        m, n = A.shape
        return cls(n, m, lambda x: A @ x + b, lambda x: A,
                   lambda x, y: np.zeros((n, n)), (A, b), name)

    @classmethod
    def quadratic_map(cls, P, A, c, name="quadratic"):
        """``G_i(x) = 0.5 x'P_i x + <A_i, x> + c_i``."""
        P = np.array(P, dtype=float)
        A = np.array(A, dtype=float, ndmin=2)
        c = np.array(c, dtype=float).reshape(A.shape[0])
        m, n = A.shape
        P = P.reshape(m, n, n)
        P = 0.5 * (P + P.transpose(0, 2, 1))
        for a in (P, A, c):
            a.setflags(write=False)
        return cls(
            n, m,
            lambda x: 0.5 * np.einsum("i,kij,j->k", x, P, x) + A @ x + c,
            lambda x: P @ x + A,
            lambda x, y: np.einsum("k,kij->ij", y, P),
            None, name)


@dataclass(frozen=True, eq=False)
class StationarityTriple:
    """``(x, y, z)`` with the parts of ``dist(0, Phi(x, y, z))``."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    r_G: float
    r_Y: float
    r_X: float

    @property
    def residual(self) -> float:
        return float(np.sqrt(self.r_G ** 2 + self.r_Y ** 2 + self.r_X ** 2))

    @property
    def parts(self):
        return (self.r_G, self.r_Y, self.r_X)


@dataclass(frozen=True, eq=False)
class ChainSubgradient:
    """An element ``grad G(x)' y`` of ``d(h o G)(x)`` and its qualification verdicts.

    ``qualification_ok`` is the condition that the only ``y`` in
    ``N_{dom h}(G(x))`` with ``grad G(x)' y = 0`` is zero.
    ``qualification_with_X_ok`` asks that the only such ``y`` with
    ``-grad G(x)' y`` in ``N_X(x)`` is zero; it implies ``qualification_ok``.
    """

    vector: np.ndarray
    unique: bool
    multiplier: np.ndarray
    qualification_ok: bool
    qualification_with_X_ok: bool


@dataclass(frozen=True, eq=False)
class CompositeProblem:
    """``min_x iota_X(x) + h(G(x))``."""

    X: Polyhedron
    G: SmoothMap
    h: PlqFunction

    def __post_init__(self):
        if self.X.dim != self.G.n:
            raise ValueError(f"X has dimension {self.X.dim} but G expects {self.G.n} inputs")
        if self.G.m != self.h.m:
            raise ValueError(f"G has {self.G.m} outputs but h expects {self.h.m}")

    @property
    def n(self) -> int:
        return self.X.dim

    @property
    def m(self) -> int:
        return self.h.m

    def phi(self, x, tol: float = DEFAULT.active) -> float:
        """``iota_X(x) + h(G(x))``: ``+inf`` off ``X`` (within ``tol``) or off ``dom h``."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n:
            raise ValueError("dimension mismatch")
        if not self.X.contains(x, tol):
            return np.inf
        return self.h.value(self.G(x))

    def with_h(self, h: PlqFunction) -> CompositeProblem:
        return CompositeProblem(self.X, self.G, h)


def phi(p: CompositeProblem, x) -> float:
    return p.phi(x)


def qualification_holds(p: CompositeProblem, x, tol: Tolerances = DEFAULT) -> bool:
    """``{y in N_{dom h}(G(x)) | grad G(x)' y = 0} = {0}``, certified by LPs."""
    x = np.asarray(x, dtype=float)
    if p.h.real_valued:
        return True
    cone = p.h.domain_normal_cone(p.G(x))
    J = p.G.jac(x)
    return _qp.cone_is_trivial(cone.A_eq, cone.A_ub, J.T, tol)


def qualification_with_X_holds(p: CompositeProblem, x, tol: Tolerances = DEFAULT) -> bool:
    """``y in N_{dom h}(G(x))`` and ``-grad G(x)' y in N_X(x)`` force ``y = 0``.

    ``N_X(x)`` is polyhedral, so the pairs form a polyhedral cone in
    ``(y, a, s)`` with ``J'y + E'a + D_act's = 0``, ``s >= 0``; one LP per
    signed coordinate of ``y`` decides it.
    """
    x = np.asarray(x, dtype=float)
    if p.h.real_valued:
        return True
    m = p.m
    cone = p.h.domain_normal_cone(p.G(x))
    J = p.G.jac(x)
    nc = normal_cone(p.X, x)
    if nc.empty:
        return True
    S, Gen = nc.span_rows, nc.gen_rows
    ka, ks = S.shape[0], Gen.shape[0]
    N = m + ka + ks
    eq = np.vstack([
        np.hstack([cone.A_eq, np.zeros((cone.A_eq.shape[0], ka + ks))]),
        np.hstack([J.T, S.T, Gen.T]),
    ])
    ub = np.vstack([
        np.hstack([cone.A_ub, np.zeros((cone.A_ub.shape[0], ka + ks))]),
        np.hstack([np.zeros((ks, m + ka)), -np.eye(ks)]),
    ])
    for j in range(m):
        for sign in (1.0, -1.0):
            e = np.zeros(N)
            e[j] = sign
            val, _ = _qp.cone_max(e, eq, ub, tol)
            if val > tol.qualification:
                return False
    return True


def chain_subgradient(p: CompositeProblem, x, tol: Tolerances = DEFAULT) -> ChainSubgradient:
    """``grad G(x)' y`` with ``y in dh(G(x))`` plus qualification verdicts.

    ``unique`` is true when ``grad G(x)'`` maps the whole face ``dh(G(x))``
    to one point, decided from the cone of directions of that face.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    z = p.G(x)
    sg = p.h.subgradient(z, tol)
    if sg.empty or not p.X.contains(x, tol.active):
        raise ValueError("x is outside dom phi")
    J = p.G.jac(x)
    if sg.unique:
        unique = True
    else:
        eq, ub = _qp.solution_direction_cone(_qp.QpProblem(p.h.Q, -z, p.h.Y), sg.solution, tol)
        unique = True
        for row in J.T:
            for sign in (1.0, -1.0):
                val, _ = _qp.cone_max(sign * row, eq, ub, tol)
                if val > tol.qualification:
                    unique = False
                    break
            if not unique:
                break
    return ChainSubgradient(J.T @ sg.point, unique, sg.point,
                            qualification_holds(p, x, tol), qualification_with_X_holds(p, x, tol))


def stationarity_residual(p: CompositeProblem, x, y, z, tol: Tolerances = DEFAULT) -> StationarityTriple:
    """Parts of ``dist(0, Phi(x, y, z))``.

    ``r_G = |G(x) - z|``, ``r_Y = dist(z - Qy, N_Y(y))``,
    ``r_X = dist(-grad G(x)' y, N_X(x))``.  A point within ``1e-8`` of ``X``
    is projected first; farther away, or with ``y`` outside ``Y``, the
    normal cone is empty and the part is ``inf``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    if x.size != p.n or y.size != p.m or z.size != p.m:
        raise ValueError("dimension mismatch")
    if p.X.contains(x, 0.0):
        xp = x
    elif p.X.contains(x, tol.active):
        xp = _qp.project(p.X, x)
    else:
        return StationarityTriple(x, y, z, np.inf, np.inf, np.inf)
    Gx = p.G(xp)
    r_G = float(np.linalg.norm(Gx - z))
    r_Y = dist_to_cone(normal_cone(p.h.Y, y, tol.active), z - p.h.Q @ y)
    r_X = dist_to_cone(normal_cone(p.X, xp, tol.active), -p.G.jac(xp).T @ y)
    return StationarityTriple(xp, y, z, r_G, float(r_Y), float(r_X))


def multiplier_recovery(p: CompositeProblem, x, tol: Tolerances = DEFAULT, slack: float = 0.0):
    """``(y, z)`` with ``z = G(x)`` and ``y in dh(z)``.

    Among the multipliers in the face ``dh(z)`` the one minimizing
    ``dist(-grad G(x)' y, N_X(x))`` is returned (a QP over the face and the
    normal cone), so ``r_G = 0``, ``r_Y`` is at roundoff level and ``r_X`` is
    as small as this ``x`` allows.  With ``slack > 0`` the face is widened to
    ``<z,y> >= <z,y0> - slack``, which helps when a component of ``z`` is a
    roundoff-size nonzero; ``r_Y`` then measures the departure from ``dh(z)``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if not p.X.contains(x, tol.active):
        raise ValueError("x is outside X")
    xp = x if p.X.contains(x, 0.0) else _qp.project(p.X, x)
    z = p.G(xp)
    sg = p.h.subgradient(z, tol)
    if sg.empty:
        raise ValueError("G(x) is outside dom h")
    y0 = sg.point
    J = p.G.jac(xp)
    nc = normal_cone(p.X, xp, tol.active)
    if sg.unique and slack == 0:
        return y0, z
    # face of dh(z): {y in Y | Qy = Qy0, <z,y> = <z,y0>}
    Y, Q, m = p.h.Y, p.h.Q, p.m
    S, Gen = nc.span_rows, nc.gen_rows
    ka, ks = S.shape[0], Gen.shape[0]
    N = m + ka + ks
    B = np.hstack([J.T, S.T, Gen.T])
    H = B.T @ B
    level = z.reshape(1, m)
    face_eq = [Y.A_eq, Q] if slack > 0 else [Y.A_eq, Q, level]
    A_eq = np.vstack(face_eq)
    A_eq = np.hstack([A_eq, np.zeros((A_eq.shape[0], ka + ks))])
    b_eq = np.concatenate([Y.b_eq, Q @ y0] + ([] if slack > 0 else [[z @ y0]]))
    ub_rows = [np.hstack([Y.A_ub, np.zeros((Y.A_ub.shape[0], ka + ks))]),
               np.hstack([np.zeros((ks, m + ka)), -np.eye(ks)])]
    ub_rhs = [Y.b_ub, np.zeros(ks)]
    if slack > 0:
        ub_rows.append(np.hstack([-level, np.zeros((1, ka + ks))]))
        ub_rhs.append([slack - z @ y0])
    A_ub, b_ub = np.vstack(ub_rows), np.concatenate(ub_rhs)
    start = np.concatenate([y0, np.zeros(ka + ks)])
    sol = _qp.solve_arrays(H, np.zeros(N), A_eq, b_eq, A_ub, b_ub, start, None, tol)
    if not sol.ok:
        return y0, z
    return sol.x[:m].copy(), z


RECOVERY_SLACK = 1e-12


def recover_triple(p: CompositeProblem, x, tol: Tolerances = DEFAULT) -> StationarityTriple:
    """:func:`stationarity_residual` at ``x`` with multipliers from :func:`multiplier_recovery`.

    Both the exact face and the face widened by ``RECOVERY_SLACK * (1 + |z|_1)``
    are tried; the triple with the smaller residual is returned.
    """
    y, z = multiplier_recovery(p, x, tol)
    best = stationarity_residual(p, x, y, z, tol)
    if best.residual > 0:
        y2, _ = multiplier_recovery(p, x, tol, RECOVERY_SLACK * (1 + np.abs(z).sum()))
        cand = stationarity_residual(p, x, y2, z, tol)
        if cand.residual < best.residual:
            best = cand
    return best
