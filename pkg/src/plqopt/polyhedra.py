"""Polyhedral sets ``{x | A_eq x = b_eq, A_ub x <= b_ub}`` and their cones.

Boxes, orthants and simplices are only constructor sugar: everything is
stored in the single (A_eq, b_eq, A_ub, b_ub) form so that normal cones,
recession cones and projections have one code path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import nnls

from .config import DEFAULT


class EmptyPolyhedronError(ValueError):
    """Raised when an operation needs a nonempty polyhedron."""


def _as_matrix(a, ncols):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, ncols))
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return a


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """The set ``{x in R^dim | A_eq x = b_eq, A_ub x <= b_ub}``."""

    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    dim: int = field(default=-1)

    def __post_init__(self):
        dim = self.dim
        if dim < 0:
            for a in (self.A_eq, self.A_ub):
                a = np.asarray(a)
                if a.size:
                    dim = a.shape[-1]
                    break
        if dim < 1:
            raise ValueError("polyhedron dimension must be >= 1")
        A_eq = _as_matrix(self.A_eq, dim)
        A_ub = _as_matrix(self.A_ub, dim)
        b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        if A_eq.shape[1] != dim or A_ub.shape[1] != dim:
            raise ValueError("constraint rows do not match dimension %d" % dim)
        if A_eq.shape[0] != b_eq.size or A_ub.shape[0] != b_ub.size:
            raise ValueError("row count and right-hand side length differ")
        for name, a in (("A_eq", A_eq), ("b_eq", b_eq), ("A_ub", A_ub), ("b_ub", b_ub)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains NaN or infinite entries")
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "A_eq", _frozen(A_eq))
        object.__setattr__(self, "b_eq", _frozen(b_eq))
        object.__setattr__(self, "A_ub", _frozen(A_ub))
        object.__setattr__(self, "b_ub", _frozen(b_ub))

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_rows(cls, dim, A_eq=None, b_eq=None, A_ub=None, b_ub=None):
        z = np.zeros((0, dim))
        return cls(
            z if A_eq is None else A_eq,
            np.zeros(0) if b_eq is None else b_eq,
            z if A_ub is None else A_ub,
            np.zeros(0) if b_ub is None else b_ub,
            dim=dim,
        )

    @classmethod
    def free(cls, dim):
        return cls.from_rows(dim)

    @classmethod
    def box(cls, lower, upper):
        """``{x | lower <= x <= upper}``; infinite bounds produce no row."""
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ValueError("NaN bound")
        if np.any(lower > upper):
            raise ValueError("empty box: some lower bound exceeds its upper bound")
        n = lower.size
        eye = np.eye(n)
        rows, rhs = [], []
        for i in range(n):
            if np.isfinite(upper[i]):
                rows.append(eye[i])
                rhs.append(upper[i])
            if np.isfinite(lower[i]):
                rows.append(-eye[i])
                rhs.append(-lower[i])
        return cls.from_rows(n, A_ub=np.array(rows).reshape(-1, n), b_ub=np.array(rhs))

    @classmethod
    def cube(cls, dim, lo=-1.0, hi=1.0):
        return cls.box(np.full(dim, lo), np.full(dim, hi))

    @classmethod
    def orthant(cls, dim):
        return cls.from_rows(dim, A_ub=-np.eye(dim), b_ub=np.zeros(dim))

    @classmethod
    def simplex(cls, dim):
        """Probability simplex ``{y >= 0, sum(y) = 1}``."""
        return cls.from_rows(dim, A_eq=np.ones((1, dim)), b_eq=[1.0],
                             A_ub=-np.eye(dim), b_ub=np.zeros(dim))

    @classmethod
    def singleton(cls, point):
        point = np.asarray(point, dtype=float).reshape(-1)
        return cls.from_rows(point.size, A_eq=np.eye(point.size), b_eq=point)

    @classmethod
    def halfspace(cls, a, beta):
        a = np.asarray(a, dtype=float).reshape(1, -1)
        return cls.from_rows(a.shape[1], A_ub=a, b_ub=[float(beta)])

    # -- combinations -----------------------------------------------------
    def product(self, *others: Polyhedron) -> Polyhedron:
        """Cartesian product ``self x others[0] x ...``."""
        parts = (self,) + others
        dims = [p.dim for p in parts]
        n = sum(dims)
        eq_rows, eq_rhs, ub_rows, ub_rhs = [], [], [], []
        off = 0
        for p, d in zip(parts, dims):
            E = np.zeros((p.A_eq.shape[0], n))
            E[:, off:off + d] = p.A_eq
            U = np.zeros((p.A_ub.shape[0], n))
            U[:, off:off + d] = p.A_ub
            eq_rows.append(E)
            eq_rhs.append(p.b_eq)
            ub_rows.append(U)
            ub_rhs.append(p.b_ub)
            off += d
        return Polyhedron(np.vstack(eq_rows), np.concatenate(eq_rhs),
                          np.vstack(ub_rows), np.concatenate(ub_rhs), dim=n)

    def intersect(self, other: Polyhedron) -> Polyhedron:
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return Polyhedron(np.vstack([self.A_eq, other.A_eq]),
                          np.concatenate([self.b_eq, other.b_eq]),
                          np.vstack([self.A_ub, other.A_ub]),
                          np.concatenate([self.b_ub, other.b_ub]), dim=self.dim)

    def contains(self, x, tol=0.0) -> bool:
        return contains(self, x, tol)

    # -- cached facts -----------------------------------------------------
    @cached_property
    def feasible_point(self):
        """Some point of the set, or ``None`` if it is empty."""
        from .qp import find_feasible_point

        return find_feasible_point(self)

    @property
    def is_empty(self) -> bool:
        return self.feasible_point is None

    @cached_property
    def is_bounded(self) -> bool:
        """True when the recession cone is ``{0}`` (checked by 2*dim LPs)."""
        from .qp import cone_is_trivial

        return cone_is_trivial(self.A_eq, self.A_ub, np.zeros((0, self.dim)))

    @property
    def is_unconstrained(self) -> bool:
        return self.A_eq.shape[0] == 0 and self.A_ub.shape[0] == 0

    def as_inequalities(self):
        """Return ``(A, b)`` with the set equal to ``{y | A.T y <= b}``.

        Equalities are split into two opposite inequalities.
        """
        A = np.vstack([self.A_ub, self.A_eq, -self.A_eq]).T
        b = np.concatenate([self.b_ub, self.b_eq, -self.b_eq])
        return A.reshape(self.dim, -1), b


def contains(P: Polyhedron, x, tol: float = 0.0) -> bool:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != P.dim:
        raise ValueError(f"point has length {x.size}, polyhedron has dimension {P.dim}")
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    if not np.all(np.isfinite(x)):
        return False
    if P.A_eq.shape[0] and np.max(np.abs(P.A_eq @ x - P.b_eq)) > tol:
        return False
    if P.A_ub.shape[0] and np.max(P.A_ub @ x - P.b_ub) > tol:
        return False
    return True


@dataclass(frozen=True, eq=False)
class ConeDescription:
    """The cone ``{S' a + G' z | a free, z >= 0}`` attached at ``base_point``.

    ``span_rows`` are the rows ``S`` combined with free weights and
    ``gen_rows`` the rows ``G`` combined with nonnegative weights.  The empty
    cone (normal cone at a point outside the set) has ``empty=True``.
    """

    span_rows: np.ndarray
    gen_rows: np.ndarray
    base_point: np.ndarray | None = None
    active: tuple = ()
    empty: bool = False

    @property
    def dim(self) -> int:
        return self.span_rows.shape[1]

    @classmethod
    def empty_cone(cls, dim, base_point=None):
        z = np.zeros((0, dim))
        return cls(z, z, base_point, (), True)

    @classmethod
    def trivial(cls, dim, base_point=None):
        z = np.zeros((0, dim))
        return cls(z, z, base_point, (), False)

    def combine(self, free_weights, gen_weights):
        """The cone element ``S' a + G' z`` (``z`` is clipped at zero)."""
        if self.empty:
            raise ValueError("the empty cone has no elements")
        return (self.span_rows.T @ np.asarray(free_weights, dtype=float)
                + self.gen_rows.T @ np.maximum(np.asarray(gen_weights, dtype=float), 0.0))

    def sample(self, rng):
        return self.combine(rng.normal(size=self.span_rows.shape[0]),
                            rng.exponential(size=self.gen_rows.shape[0]))

    def contains(self, v, tol=1e-9) -> bool:
        return dist_to_cone(self, v) <= tol


def normal_cone(P: Polyhedron, x, tol: float = DEFAULT.active) -> ConeDescription:
    """Normal cone ``N_P(x) = {A_eq' y + A_ub' z | z >= 0 on active rows, 0 elsewhere}``.

    Returns the empty-cone marker when ``x`` is not in ``P`` (within ``tol``).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if not contains(P, x, tol):
        return ConeDescription.empty_cone(P.dim, x)
    if P.A_ub.shape[0]:
        act = np.flatnonzero(P.A_ub @ x >= P.b_ub - tol)
    else:
        act = np.zeros(0, dtype=int)
    return ConeDescription(P.A_eq.copy(), P.A_ub[act].copy(), x, tuple(int(i) for i in act))


def dist_to_cone(cone: ConeDescription, v) -> float:
    """Euclidean distance from ``v`` to the cone (``inf`` for the empty cone).

    The free span is projected out first; what remains is a nonnegative
    least-squares problem over the generators.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if cone.empty:
        return np.inf
    if v.size != cone.dim:
        raise ValueError("dimension mismatch")
    S = cone.span_rows
    G = cone.gen_rows
    if S.shape[0]:
        _, s, vt = np.linalg.svd(S, full_matrices=False)
        B = vt[s > DEFAULT.rank * max(1.0, s[0])]
        r = v - B.T @ (B @ v)
        G = G - (G @ B.T) @ B
    else:
        r = v
    if G.shape[0] == 0:
        return float(np.linalg.norm(r))
    _, rnorm = nnls(G.T, r)
    return float(rnorm)


def recession_cone(P: Polyhedron) -> Polyhedron:
    """``{y | A_eq y = 0, A_ub y <= 0}``; raises for an empty ``P``."""
    if P.is_empty:
        raise EmptyPolyhedronError("recession cone of an empty polyhedron")
    return Polyhedron(P.A_eq, np.zeros_like(P.b_eq), P.A_ub, np.zeros_like(P.b_ub), dim=P.dim)


def vertices(P: Polyhedron, tol: float = 1e-9) -> list:
    """All vertices of a bounded polyhedron of dimension at most 6.

    Exhaustive basis selection: every choice of ``dim - rank(A_eq)``
    inequality rows that, together with the equalities, pins a point.
    """
    n = P.dim
    if n > 6:
        raise ValueError("vertex enumeration is limited to dimension <= 6")
    if P.is_empty:
        return []
    if not P.is_bounded:
        raise ValueError("vertex enumeration needs a bounded polyhedron")
    r_eq = np.linalg.matrix_rank(P.A_eq) if P.A_eq.shape[0] else 0
    need = n - r_eq
    found = []
    for rows in itertools.combinations(range(P.A_ub.shape[0]), need):
        M = np.vstack([P.A_eq, P.A_ub[list(rows)]])
        rhs = np.concatenate([P.b_eq, P.b_ub[list(rows)]])
        if np.linalg.matrix_rank(M) < n:
            continue
        x = np.linalg.lstsq(M, rhs, rcond=None)[0]
        if np.max(np.abs(M @ x - rhs), initial=0.0) > 1e-9 * (1 + np.max(np.abs(rhs), initial=0.0)):
            continue
        if not contains(P, x, tol):
            continue
        if all(np.max(np.abs(x - f)) > tol for f in found):
            found.append(x)
    return found
