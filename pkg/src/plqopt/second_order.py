"""Coderivatives of planar polyline graphs and tilt-stability tests.

The graph of the subgradient map of a 1-D PLQ function (and of the normal
cone map of an interval) is a connected polyline: a ray, finitely many
segments, and a ray.  At a point of such a graph with outgoing piece
directions ``d_1, ..., d_k`` the (limiting) normal cone is

    {v | <v, d_i> <= 0 for all i}  union  d_1^perp  union ... union  d_k^perp,

the regular normals plus the limits of normals from the adjacent pieces.
Everything here is exact interval arithmetic on those cones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .config import DEFAULT
from .plq import PlqFunction
from .polyhedra import Polyhedron, dist_to_cone, normal_cone

INF = np.inf


def _z(a):
    """Turn ``-0.0`` into ``0.0`` so intervals compare and print cleanly."""
    return float(a) + 0.0


@dataclass(frozen=True)
class IntervalSet:
    """A union of at most 3 closed intervals of the extended real line."""

    intervals: tuple = ()

    MAX_PIECES = 3

    def __post_init__(self):
        ivs = sorted((_z(a), _z(b)) for a, b in self.intervals if a <= b)
        merged = []
        for a, b in ivs:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        if len(merged) > self.MAX_PIECES:
            raise ValueError("more than 3 disjoint intervals")
        object.__setattr__(self, "intervals", tuple(merged))

    @classmethod
    def empty(cls):
        return cls(())

    @classmethod
    def reals(cls):
        return cls(((-INF, INF),))

    @classmethod
    def point(cls, a):
        return cls(((a, a),))

    @classmethod
    def closed(cls, a, b):
        return cls(((a, b),))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, u, tol=0.0) -> bool:
        return any(a - tol <= u <= b + tol for a, b in self.intervals)

    def intersects(self, other: IntervalSet) -> bool:
        return any(max(a, c) <= min(b, d) for a, b in self.intervals for c, d in other.intervals)

    def union(self, other: IntervalSet) -> IntervalSet:
        return IntervalSet(self.intervals + other.intervals)

    def __repr__(self):
        if not self.intervals:
            return "{}"

        def one(a, b):
            if a == b:
                return "{%g}" % a
            left = "(-inf" if a == -INF else "[%g" % a
            right = "inf)" if b == INF else "%g]" % b
            return left + ", " + right

        return " U ".join(one(a, b) for a, b in self.intervals)


@dataclass(frozen=True)
class Cone2:
    """``{p in R^2 | rows @ p <= 0}``; a line ``d^perp`` uses rows ``d, -d``."""

    rows: tuple

    @classmethod
    def polar_of(cls, dirs):
        return cls(tuple((float(d[0]), float(d[1])) for d in dirs))

    @classmethod
    def perp(cls, d):
        return cls(((float(d[0]), float(d[1])), (-float(d[0]), -float(d[1]))))

    def contains(self, p, tol=1e-12) -> bool:
        p = np.asarray(p, dtype=float)
        s = tol * max(1.0, float(np.linalg.norm(p)))
        return all(r[0] * p[0] + r[1] * p[1] <= s for r in self.rows)

    def slice(self, s) -> IntervalSet:
        """``{u | (u, s) in cone}``."""
        lo, hi = -INF, INF
        for a1, a2 in self.rows:
            rhs = -a2 * s
            if a1 > 0:
                hi = min(hi, rhs / a1)
            elif a1 < 0:
                lo = max(lo, rhs / a1)
            elif rhs < 0:
                return IntervalSet.empty()
        if lo > hi:
            return IntervalSet.empty()
        return IntervalSet(((lo, hi),))


@dataclass(frozen=True)
class ConeUnion:
    """Union of planar convex cones; possibly nonconvex.  Empty list means
    the empty set (point off the graph)."""

    cones: tuple = ()
    on_graph: bool = True

    def contains(self, p, tol=1e-12) -> bool:
        return any(c.contains(p, tol) for c in self.cones)

    def slice(self, s) -> IntervalSet:
        out = IntervalSet.empty()
        for c in self.cones:
            out = out.union(c.slice(s))
        return out


@dataclass(frozen=True)
class Piece:
    """A segment ``start -> end`` or, with ``end=None``, the ray ``start + t*direction``."""

    start: tuple
    end: tuple | None = None
    direction: tuple | None = None

    def contains(self, p, tol=1e-10):
        p = np.asarray(p, dtype=float)
        a = np.asarray(self.start, dtype=float)
        d = np.asarray(self.direction if self.end is None else np.subtract(self.end, self.start),
                       dtype=float)
        dd = d @ d
        t = (p - a) @ d / dd
        tmax = INF if self.end is None else 1.0
        if t < -tol or t > tmax + tol:
            return None
        if np.linalg.norm(a + t * d - p) > tol * max(1.0, np.linalg.norm(p)):
            return None
        return t

    def outgoing(self, p, tol=1e-10):
        """Directions leaving ``p`` along this piece (one or two)."""
        t = self.contains(p, tol)
        if t is None:
            return []
        d = np.asarray(self.direction if self.end is None else np.subtract(self.end, self.start),
                       dtype=float)
        d = d / np.linalg.norm(d)
        tmax = INF if self.end is None else 1.0
        out = []
        if t < tmax - tol:
            out.append(d)
        if t > tol:
            out.append(-d)
        return out


@dataclass(frozen=True)
class PolylineGraph:
    """Connected planar polyline given by its pieces in order."""

    pieces: tuple
    monotone_x: bool = True

    @classmethod
    def from_chain(cls, vertices, first_dir, last_dir, monotone_x=True):
        """Ray into ``vertices[0]`` from direction ``first_dir``, segments
        through the vertices, ray out of ``vertices[-1]`` along ``last_dir``."""
        vs = []
        for v in vertices:
            v = (_z(v[0]), _z(v[1]))
            if not vs or vs[-1] != v:
                vs.append(v)
        pieces = [Piece(vs[0], None, tuple(map(float, first_dir)))]
        pieces += [Piece(a, b) for a, b in zip(vs, vs[1:])]
        pieces.append(Piece(vs[-1], None, tuple(map(float, last_dir))))
        return cls(tuple(pieces), monotone_x)

    def contains(self, p, tol=1e-10) -> bool:
        return any(pc.contains(p, tol) is not None for pc in self.pieces)


def graph_normal_cone(g: PolylineGraph, p, tol=1e-10) -> ConeUnion:
    """Limiting normal cone to the graph at ``p`` (empty off the graph)."""
    dirs = []
    for pc in g.pieces:
        for d in pc.outgoing(p, tol):
            if not any(np.allclose(d, e, atol=1e-14) for e in dirs):
                dirs.append(d)
    if not dirs:
        return ConeUnion((), False)
    cones = [Cone2.polar_of(dirs)] + [Cone2.perp(d) for d in dirs]
    return ConeUnion(tuple(cones), True)


def coderivative(g: PolylineGraph, p, v: float) -> IntervalSet:
    """``D*S(p)(v) = {u | (u, -v) in N_gph(p)}``."""
    return graph_normal_cone(g, p).slice(-float(v))


# -- builders ---------------------------------------------------------------

def interval_of(Y: Polyhedron):
    """``(lo, hi)`` of a 1-D polyhedron."""
    if Y.dim != 1:
        raise ValueError("expected a 1-D set")
    lo, hi = -INF, INF
    for a, b in zip(Y.A_ub[:, 0], Y.b_ub):
        if a > 0:
            hi = min(hi, b / a)
        elif a < 0:
            lo = max(lo, b / a)
    for a, b in zip(Y.A_eq[:, 0], Y.b_eq):
        if a != 0:
            lo = max(lo, b / a)
            hi = min(hi, b / a)
    return float(lo), float(hi)


def plq_1d_data(f: PlqFunction):
    if f.m != 1:
        raise ValueError("expected a 1-D PLQ function")
    lo, hi = interval_of(f.Y)
    return lo, hi, float(f.Q[0, 0])


def subgradient_graph(lo: float, hi: float, q: float) -> PolylineGraph:
    """Graph of ``df`` for ``f(x) = sup_{lo<=y<=hi} xy - q y^2/2``."""
    verts = []
    if q > 0:
        if lo > -INF:
            verts.append((q * lo, lo))
        if hi < INF:
            verts.append((q * hi, hi))
        if not verts:
            verts.append((0.0, 0.0))
        first = (-1.0, 0.0) if lo > -INF else (-q, -1.0)
        last = (1.0, 0.0) if hi < INF else (q, 1.0)
    else:
        if lo > -INF:
            verts.append((0.0, lo))
        if hi < INF:
            verts.append((0.0, hi))
        if not verts:
            verts.append((0.0, 0.0))
        first = (-1.0, 0.0) if lo > -INF else (0.0, -1.0)
        last = (1.0, 0.0) if hi < INF else (0.0, 1.0)
    return PolylineGraph.from_chain(verts, first, last)


def normal_cone_graph(lo: float, hi: float) -> PolylineGraph:
    """Graph of ``N_[lo,hi]``: a downward ray at ``lo``, the segment
    ``[lo,hi] x {0}`` and an upward ray at ``hi`` (infinite ends become
    horizontal rays)."""
    verts = []
    if lo > -INF:
        verts.append((lo, 0.0))
    if hi < INF:
        verts.append((hi, 0.0))
    if not verts:
        verts.append((0.0, 0.0))
    first = (0.0, -1.0) if lo > -INF else (-1.0, 0.0)
    last = (0.0, 1.0) if hi < INF else (1.0, 0.0)
    return PolylineGraph.from_chain(verts, first, last)


# -- second-order subdifferentials -----------------------------------------

def is_subgradient(f: PlqFunction, x: float, y: float, tol=1e-10) -> bool:
    """``y in df(x)`` for 1-D ``f``: ``y in Y`` and ``x - Qy in N_Y(y)``."""
    yv = np.array([float(y)])
    if not f.Y.contains(yv, tol):
        return False
    return dist_to_cone(normal_cone(f.Y, yv, tol), np.array([x]) - f.Q @ yv) <= tol


def second_subdiff_1d(f: PlqFunction, x: float, y: float, v: float) -> IntervalSet:
    """``d^2 f(x, y)(v)``: coderivative of ``df`` at ``(x, y)``."""
    if not is_subgradient(f, x, y):
        raise ValueError(f"{y} is not a subgradient at {x}")
    lo, hi, q = plq_1d_data(f)
    return coderivative(subgradient_graph(lo, hi, q), (x, y), v)


def nys_interval(Y, y: float, w: float, v: float) -> IntervalSet:
    """``d^2 iota_Y(y, w)(v)`` for an interval ``Y`` given as ``(lo, hi)`` or a
    1-D polyhedron; empty when ``(y, w)`` is off the graph of ``N_Y``."""
    lo, hi = interval_of(Y) if isinstance(Y, Polyhedron) else (float(Y[0]), float(Y[1]))
    return coderivative(normal_cone_graph(lo, hi), (y, w), v)


# -- tilt stability -----------------------------------------------------------

def tilt_stable_smooth(hess, tol=1e-10) -> bool:
    """At a stationary point of a C^2 function: positive definite Hessian."""
    H = np.atleast_2d(np.asarray(hess, dtype=float))
    if H.shape[0] != H.shape[1]:
        raise ValueError("Hessian must be square")
    if np.max(np.abs(H - H.T), initial=0.0) > tol:
        raise ValueError("Hessian is not symmetric")
    return bool(np.linalg.eigvalsh(0.5 * (H + H.T))[0] > tol)


def tilt_stable_1d(f: PlqFunction, x: float) -> bool:
    """Second-order test: ``u v > 0`` for every ``v != 0`` and every
    ``u in d^2 f(x, 0)(v)`` (checked at ``v = +-1`` by positive homogeneity;
    empty sets pass)."""
    if not is_subgradient(f, x, 0.0):
        raise ValueError("0 is not a subgradient at x")
    for v in (1.0, -1.0):
        U = second_subdiff_1d(f, x, 0.0, v)
        bad = IntervalSet.closed(-INF, 0.0) if v > 0 else IntervalSet.closed(0.0, INF)
        if U.intersects(bad):
            return False
    return True


@dataclass(frozen=True)
class TiltOracleResult:
    single_valued: bool
    centered: bool
    lipschitz: float
    lipschitz_max: float
    extents: np.ndarray = field(repr=False, default=None)

    @property
    def stable(self) -> bool:
        return self.single_valued and self.centered and self.lipschitz <= self.lipschitz_max

    def __bool__(self):
        return self.stable


def tilt_oracle_1d(f: PlqFunction, x: float, delta: float = 0.5, y_grid=None,
                   step: float = 1e-4, lipschitz_max: float = 10.0) -> TiltOracleResult:
    """Brute-force check of the definition of tilt stability.

    ``M(y) = argmin_{|t - x| <= delta} f(t) - y t`` is computed on a grid of
    spacing ``step`` for every tilt in ``y_grid`` (default 201 tilts in
    ``[-0.1, 0.1]``).  Stable means: each ``M(y)`` has diameter at most one
    grid step, ``M(0)`` contains ``x``, and consecutive tilts move ``M`` by at
    most ``lipschitz_max`` times the tilt change.
    """
    lo, hi, q = plq_1d_data(f)
    k = int(round(delta / step))
    xs = x + step * np.arange(-k, k + 1, dtype=float)
    fx = K.plq1d_values(xs, lo, hi, q)
    ys = np.linspace(-0.1, 0.1, 201) if y_grid is None else np.asarray(y_grid, dtype=float)
    ys = np.sort(ys)
    a, b = K.tilted_argmin_extent(xs, fx, ys, 1e-12)
    single = bool(np.all(b - a <= step * 1.5))
    j0 = int(np.argmin(np.abs(ys)))
    centered = bool(a[j0] - step <= x <= b[j0] + step)
    mid = 0.5 * (a + b)
    dy = np.diff(ys)
    lip = float(np.max(np.abs(np.diff(mid)) / dy)) if ys.size > 1 else 0.0
    return TiltOracleResult(single, centered, lip, lipschitz_max, np.stack([ys, a, b], axis=1))


#: 1-D PLQ test functions ``(name, Y interval, Q, minimizer)`` used to
#: cross-check the second-order test against the brute-force oracle
TILT_CATALOG = (
    ("max(-x,2x)", (-1.0, 2.0), 0.0, 0.0),
    ("max(0,x)", (0.0, 1.0), 0.0, 0.0),
    ("x^2/2", (-INF, INF), 1.0, 0.0),
    ("|x|", (-1.0, 1.0), 0.0, 0.0),
    ("huber", (-1.0, 1.0), 1.0, 0.0),
    ("max(0,x)^2/2", (0.0, INF), 1.0, 0.0),
    ("max(0,-x)", (-1.0, 0.0), 0.0, 0.0),
    ("x^2", (-INF, INF), 0.5, 0.0),
    ("zero", (0.0, 0.0), 0.0, 0.0),
    ("clipped x^2", (-2.0, 3.0), 0.5, 0.0),
    ("half-pipe", (0.0, 2.0), 1.0, 0.0),
    ("indicator{0}", (-INF, INF), 0.0, 0.0),
)


def plq_1d(lo: float, hi: float, q: float) -> PlqFunction:
    return PlqFunction(Polyhedron.box([lo], [hi]), np.array([[q]]))


def composite_tilt_diagnostic(p, x, tol=DEFAULT) -> str:
    """``"stable"``, ``"unstable"`` or ``"unsupported"`` for the composite problem.

    Supported: (a) ``h`` smooth (``Y`` the whole space, ``Q`` positive
    definite) and ``x`` interior to ``X``: Hessian test on
    ``phi = h o G``; (b) ``n = m = 1``, ``X = R`` and ``G`` the identity:
    the 1-D PLQ test.  Anything else is not guessed.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h, G = p.h, p.G
    if h.Y.is_unconstrained and h.q_positive_definite:
        if p.X.A_eq.shape[0] or (p.X.A_ub.shape[0] and np.max(p.X.A_ub @ x - p.X.b_ub) > -tol.active):
            return "unsupported"
        Qi = np.linalg.inv(h.Q)
        J = G.jac(x)
        y = Qi @ G(x)
        grad = J.T @ y
        if np.linalg.norm(grad) > 1e-6:
            return "unsupported"
        H = G.hessian(x, y) + J.T @ Qi @ J
        return "stable" if tilt_stable_smooth(0.5 * (H + H.T)) else "unstable"
    if p.n == 1 and p.m == 1 and p.X.is_unconstrained and G.affine is not None:
        A, b = G.affine
        if A[0, 0] == 1.0 and b[0] == 0.0:
            if not is_subgradient(h, float(x[0]), 0.0):
                return "unsupported"
            return "stable" if tilt_stable_1d(h, float(x[0])) else "unstable"
    return "unsupported"
