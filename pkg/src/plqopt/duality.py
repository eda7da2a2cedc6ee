"""Lagrangians, dual functions and augmented Lagrangians of the composite problem.

With the perturbation ``f(u, x) = iota_X(x) + h(G(x) + u)`` the Lagrangian is

    l(x, y) = iota_X(x) + <G(x), y> - 0.5 <y, Qy> - iota_Y(y),

(``+inf`` for ``x`` outside ``X`` whatever ``y`` is) and the dual function is
``psi(y) = inf_x l(x, y)``.  Adding ``0.5 theta |u|^2`` to ``f`` gives the
augmented Lagrangian ``l_theta`` evaluated in :func:`aug_lagrangian`.

The inner infima over ``x`` are computed by a dense grid followed by a local
polish with the proximal composite method.  They are verification tools for
``n <= 3`` and return *upper bounds* on the true infimum.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import qp as _qp
from .composite import CompositeProblem, SmoothMap, StationarityTriple, stationarity_residual
from .config import DEFAULT, Tolerances
from .plq import PlqFunction
from .polyhedra import Polyhedron
from .prox_solver import ProxParams, solve as prox_solve

#: grid minima below this are reported as a numerically certified -inf
DIVERGENCE_THRESHOLD = -1e6


@dataclass(frozen=True)
class DualPoint:
    """``value`` is ``psi(y)`` or ``psi_theta(y)``; ``attained_x`` the inner minimizer found."""

    y: np.ndarray
    value: float
    attained_x: np.ndarray | None = None
    upper_bound: bool = False
    certified_unbounded: bool = False


@dataclass(frozen=True)
class GridSpec:
    """Search region for inner minimizations over ``x``.

    The region is the box ``center +- half_width`` intersected with ``X``
    (and with the bounding box of ``X`` where that is finite).  When ``X`` is
    unbounded the half-width is multiplied by ``factor`` up to
    ``expansions`` times to detect divergence to ``-inf``.
    """

    half_width: float = 10.0
    center: tuple | None = None
    points: int | None = None
    expansions: int = 4
    factor: float = 4.0
    polish: bool = True

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.points is not None and self.points < 2:
            raise ValueError("a grid needs at least 2 points per axis")

    def points_per_axis(self, n):
        if self.points is not None:
            return self.points
        return {1: 2001, 2: 201, 3: 41}.get(n, 11)


def _bounding_box(X: Polyhedron, tol=DEFAULT):
    lo = np.full(X.dim, -np.inf)
    hi = np.full(X.dim, np.inf)
    for j in range(X.dim):
        e = np.zeros(X.dim)
        e[j] = 1.0
        s = _qp.solve_lp(e, X, X.feasible_point, tol)
        if s.ok:
            lo[j] = s.x[j]
        s = _qp.solve_lp(-e, X, X.feasible_point, tol)
        if s.ok:
            hi[j] = s.x[j]
    return lo, hi


def _grid_points(X: Polyhedron, grid: GridSpec, scale: float):
    n = X.dim
    if n > 3:
        raise ValueError("grid-based inner minimization is limited to n <= 3")
    center = (np.zeros(n) if grid.center is None
              else np.asarray(grid.center, dtype=float).reshape(n))
    center = _qp.project(X, center)
    lo, hi = _bounding_box(X)
    a = np.maximum(center - grid.half_width * scale, lo)
    b = np.minimum(center + grid.half_width * scale, hi)
    k = grid.points_per_axis(n)
    axes = [np.linspace(a[j], b[j], k) if b[j] > a[j] else np.array([a[j]]) for j in range(n)]
    pts = np.array(list(itertools.product(*axes)))
    keep = np.array([X.contains(x, 1e-12) for x in pts])
    return pts[keep], (a, b), bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))


def _polish(p: CompositeProblem, x0, box):
    """Local refinement of ``min phi`` restricted to the search box."""
    Xb = p.X.intersect(Polyhedron.box(*box))
    try:
        tr = prox_solve(CompositeProblem(Xb, p.G, p.h),
                        ProxParams(stop_tol=1e-12, max_iter=200), x0, keep_x=False)
        return tr.x
    except (ValueError, RuntimeError):
        return None


# -- Lagrangian and dual functions ---------------------------------------------

def lagrangian(p: CompositeProblem, x, y, tol: Tolerances = DEFAULT) -> float:
    """``iota_X(x) + <G(x),y> - 0.5<y,Qy> - iota_Y(y)`` with ``+inf`` winning."""
    x = np.asarray(x, dtype=float).reshape(p.n)
    y = np.asarray(y, dtype=float).reshape(p.m)
    if not p.X.contains(x, tol.active):
        return np.inf
    if not p.h.Y.contains(y, tol.feasibility):
        return -np.inf
    return float(p.G(x) @ y - 0.5 * y @ p.h.Q @ y)


def support_function(X: Polyhedron, v, tol: Tolerances = DEFAULT) -> float:
    """``sup_{x in X} <v, x>`` by LP (``+inf`` when unbounded)."""
    s = _qp.solve_lp(-np.asarray(v, dtype=float), X, X.feasible_point, tol)
    if s.status is _qp.QpStatus.UNBOUNDED:
        return np.inf
    if not s.ok:
        raise RuntimeError(f"support LP ended with status {s.status.value}")
    return -s.obj


def _affine_data(p: CompositeProblem):
    if p.G.affine is None:
        raise ValueError("dual_affine needs an affine G registered with (A, b)")
    A_aff, b_aff = p.G.affine
    return A_aff, b_aff


def dual_affine(p: CompositeProblem, y, tol: Tolerances = DEFAULT) -> float:
    """``psi(y)`` for ``G(x) = b - Ax``: ``<b,y> - 0.5<y,Qy> - sup_{x in X} <A'y, x>``.

    ``G`` is stored as ``A_aff x + b_aff``, so ``A = -A_aff``.  Returns
    ``-inf`` for ``y`` outside ``Y`` or when the support function is infinite.
    """
    A_aff, b_aff = _affine_data(p)
    y = np.asarray(y, dtype=float).reshape(p.m)
    if not p.h.Y.contains(y, tol.feasibility):
        return -np.inf
    s = support_function(p.X, -A_aff.T @ y, tol)
    if not np.isfinite(s):
        return -np.inf
    return float(b_aff @ y - 0.5 * y @ p.h.Q @ y - s)


def dual_affine_max(p: CompositeProblem, tol: Tolerances = DEFAULT):
    """``(sup psi, y)`` for affine ``G``, as one concave QP.

    With ``X = {Ex = e, Dx <= d}``, LP duality turns the support function
    into ``min {<e,a> + <d,s> | E'a + D's = -A_aff'y, s >= 0}``, so
    ``sup psi = max <b,y> - 0.5<y,Qy> - <e,a> - <d,s>`` over ``y in Y``.
    """
    A_aff, b_aff = _affine_data(p)
    X, Y, Q = p.X, p.h.Y, p.h.Q
    m, ka, ks = p.m, X.A_eq.shape[0], X.A_ub.shape[0]
    N = m + ka + ks
    H = np.zeros((N, N))
    H[:m, :m] = Q
    c = np.concatenate([-b_aff, X.b_eq, X.b_ub])
    A_eq = np.vstack([
        np.hstack([A_aff.T, X.A_eq.T, X.A_ub.T]),
        np.hstack([Y.A_eq, np.zeros((Y.A_eq.shape[0], ka + ks))]),
    ])
    b_eq = np.concatenate([np.zeros(p.n), Y.b_eq])
    A_ub = np.vstack([
        np.hstack([Y.A_ub, np.zeros((Y.A_ub.shape[0], ka + ks))]),
        np.hstack([np.zeros((ks, m + ka)), -np.eye(ks)]),
    ])
    b_ub = np.concatenate([Y.b_ub, np.zeros(ks)])
    s = _qp.solve_arrays(H, c, A_eq, b_eq, A_ub, b_ub, None, None, tol)
    if s.status is _qp.QpStatus.INFEASIBLE:
        return -np.inf, None
    if s.status is _qp.QpStatus.UNBOUNDED:
        return np.inf, None
    return -s.obj, s.x[:m].copy()


def primal_affine_min(p: CompositeProblem, tol: Tolerances = DEFAULT):
    """``(inf phi, x)`` for affine ``G`` via the dual form of ``h`` (one convex QP)."""
    A_aff, b_aff = _affine_data(p)
    df = p.h.dual_form
    X = p.X
    n, m, q = p.n, p.m, df.b.size
    use_w = bool(np.any(df.D))
    nw = m if use_w else 0
    N = n + q + nw
    H = np.zeros((N, N))
    if use_w:
        H[n + q:, n + q:] = df.J
    c = np.concatenate([np.zeros(n), df.b, np.zeros(nw)])
    A_eq = np.vstack([
        np.hstack([-A_aff, df.A] + ([df.D] if use_w else [])),
        np.hstack([X.A_eq, np.zeros((X.A_eq.shape[0], q + nw))]),
    ])
    b_eq = np.concatenate([b_aff, X.b_eq])
    A_ub = np.vstack([
        np.hstack([X.A_ub, np.zeros((X.A_ub.shape[0], q + nw))]),
        np.hstack([np.zeros((q, n)), -np.eye(q), np.zeros((q, nw))]),
    ])
    b_ub = np.concatenate([X.b_ub, np.zeros(q)])
    s = _qp.solve_arrays(H, c, A_eq, b_eq, A_ub, b_ub, None, None, tol)
    if s.status is _qp.QpStatus.INFEASIBLE:
        return np.inf, None
    if s.status is _qp.QpStatus.UNBOUNDED:
        return -np.inf, None
    return s.obj, s.x[:n].copy()


def _grid_minimize(p: CompositeProblem, fvals, grid: GridSpec):
    """Shared expanding-grid driver.  ``fvals(points) -> values``."""
    best_val, best_x, box = np.inf, None, None
    for level in range(grid.expansions + 1):
        pts, box, bounded = _grid_points(p.X, grid, grid.factor ** level)
        if pts.shape[0] == 0:
            continue
        vals = fvals(pts)
        j = int(np.argmin(vals))
        # wider levels evaluate at larger |x|; ignore gains at roundoff scale
        margin = 0.0 if best_x is None else 1e-6 * (1 + abs(best_val))
        if vals[j] < best_val - margin:
            best_val, best_x = float(vals[j]), pts[j].copy()
        if best_val < DIVERGENCE_THRESHOLD:
            return -np.inf, best_x, box, True
        if bounded:
            break
    if best_x is None:
        raise ValueError("the search grid contains no point of X")
    return best_val, best_x, box, False


def dual_sampled(p: CompositeProblem, y, grid: GridSpec = GridSpec(),
                 tol: Tolerances = DEFAULT) -> DualPoint:
    """Estimate ``psi(y) = inf_x l(x, y)`` by grid search plus local polish.

    The value is an upper bound on the true ``psi(y)`` (it is the Lagrangian
    at a point that was found).  ``y`` outside ``Y`` gives ``-inf`` exactly;
    a grid minimum below ``-1e6`` gives ``-inf`` flagged as numerically
    certified.
    """
    y = np.asarray(y, dtype=float).reshape(p.m)
    if not p.h.Y.contains(y, tol.feasibility):
        return DualPoint(y, -np.inf, None, False, True)
    const = 0.5 * y @ p.h.Q @ y
    G = p.G

    def fvals(pts):
        return np.array([G(x) @ y for x in pts]) - const

    val, x, box, diverged = _grid_minimize(p, fvals, grid)
    if diverged:
        return DualPoint(y, -np.inf, x, True, True)
    if grid.polish:
        lin = CompositeProblem(p.X, G, PlqFunction(Polyhedron.singleton(y), np.zeros((p.m, p.m))))
        xp = _polish(lin, x, box)
        if xp is not None:
            vp = lagrangian(p, xp, y, tol)
            if vp < val:
                val, x = vp, xp
    return DualPoint(y, float(val), x, True, False)


@dataclass(frozen=True)
class AugValue:
    value: float
    w_hat: np.ndarray
    grad_y: np.ndarray


def aug_lagrangian(p: CompositeProblem, x, y, theta: float, tol: Tolerances = DEFAULT) -> AugValue:
    """``l_theta(x,y) = iota_X(x) - min_{w in Y} {0.5<w,Qw> - <G(x),w> + |w-y|^2/(2 theta)}``.

    The minimizer ``w_hat`` is unique (strictly convex QP) and the gradient
    in ``y`` is ``(w_hat - y)/theta``.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    x = np.asarray(x, dtype=float).reshape(p.n)
    y = np.asarray(y, dtype=float).reshape(p.m)
    Y, Q = p.h.Y, p.h.Q
    Gx = p.G(x)
    H = Q + np.eye(p.m) / theta
    c = -Gx - y / theta
    s = _qp.solve_arrays(H, c, Y.A_eq, Y.b_eq, Y.A_ub, Y.b_ub, Y.feasible_point, None, tol)
    if not s.ok:
        raise RuntimeError(f"augmented Lagrangian QP ended with status {s.status.value}")
    w = s.x.copy()
    val = -(s.obj + 0.5 * (y @ y) / theta)
    if not p.X.contains(x, tol.active):
        val = np.inf
    return AugValue(float(val), w, (w - y) / theta)


def dual_augmented_sampled(p: CompositeProblem, y, theta: float, grid: GridSpec = GridSpec(),
                           tol: Tolerances = DEFAULT) -> DualPoint:
    """Estimate ``psi_theta(y) = inf_x l_theta(x, y)`` (upper bound, like :func:`dual_sampled`)."""
    y = np.asarray(y, dtype=float).reshape(p.m)

    def fvals(pts):
        return np.array([aug_lagrangian(p, x, y, theta, tol).value for x in pts])

    val, x, box, diverged = _grid_minimize(p, fvals, grid)
    if diverged:
        return DualPoint(y, -np.inf, x, True, True)
    if grid.polish:
        xp = _projected_gradient(p, x, y, theta, ProxParams(stop_tol=1e-12, max_iter=500),
                                 Polyhedron.box(*box), tol)
        vp = aug_lagrangian(p, xp, y, theta, tol).value
        if vp < val:
            val, x = vp, xp
    return DualPoint(y, float(val), x, True, False)


# -- exactness ---------------------------------------------------------------

def _shifted(G: SmoothMap, u) -> SmoothMap:
    u = np.asarray(u, dtype=float)
    return SmoothMap(G.n, G.m, lambda x: G(x) + u, G.jac, G.hessian, None, G.name + "+u")


def _truncate(h: PlqFunction, T: float) -> PlqFunction:
    if h.real_valued:
        return h
    return h.with_Y(h.Y.intersect(Polyhedron.cube(h.m, -T, T)))


def inner_infimum(p: CompositeProblem, u, grid: GridSpec = GridSpec(),
                  truncation: float = 1e3, tol: Tolerances = DEFAULT):
    """``inf_{x in X cap B} h(G(x) + u)`` over the search box ``B`` of ``grid``.

    The grid stage ranks points by ``h_T``, the same function with ``Y``
    cut to ``[-T, T]^m`` (finite everywhere, so infeasible grid points are
    still comparable); the best point is polished by the proximal method on
    ``h_T`` and the true ``h`` is evaluated at the candidates.  Returns
    ``(value, x)``; an upper bound on the infimum over ``X``.
    """
    Gu = _shifted(p.G, u)
    hT = _truncate(p.h, truncation)
    pt = CompositeProblem(p.X, Gu, hT)

    def fvals(pts):
        return np.array([hT.value(Gu(x)) for x in pts])

    grid1 = GridSpec(grid.half_width, grid.center, grid.points, 0, grid.factor, grid.polish)
    _, x, box, _ = _grid_minimize(pt, fvals, grid1)
    cands = [x]
    if grid.polish:
        xp = _polish(pt, x, box)
        if xp is not None:
            cands.append(xp)
    best = (np.inf, x)
    for c in cands:
        v = p.h.value(Gu(c))
        if v < best[0]:
            best = (v, c)
    return best


@dataclass
class ExactnessReport:
    """Per-sample table of the exactness inequality
    ``inf_x f(u,x) >= inf phi + <ybar, u>`` (``margin = lhs - rhs``)."""

    kind: str
    theta: float | None
    ybar: np.ndarray
    inf_phi: float
    rows: list = field(default_factory=list)
    theta_bar: float | None = None
    slack: float = 1e-9

    @property
    def violations(self):
        return [r for r in self.rows if r[3] < -self.slack]

    @property
    def holds(self) -> bool:
        return not self.violations

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u", "lhs", "rhs", "margin"])
        for u, lhs, rhs, margin in self.rows:
            w.writerow([" ".join(repr(float(t)) for t in u), repr(lhs), repr(rhs), repr(margin)])
        return buf.getvalue()


def exactness_check(p: CompositeProblem, kind: str, ybar, u_samples, theta: float | None = None,
                    inf_phi: float | None = None, grid: GridSpec = GridSpec(),
                    tol: Tolerances = DEFAULT) -> ExactnessReport:
    """Check the supporting-hyperplane condition on sampled perturbations.

    ``kind`` is ``"plain"`` for ``f(u,x) = iota_X(x) + h(G(x)+u)`` or
    ``"augmented"`` for ``f + 0.5 theta |u|^2``.  ``theta_bar`` estimates the
    smallest quadratic correction that makes the plain inequality hold on
    the samples, ``max 2 (inf phi + <ybar,u> - inf_x f(u,x)) / |u|^2``.
    """
    kind = kind.lower()
    if kind not in ("plain", "augmented"):
        raise ValueError("kind must be 'plain' or 'augmented'")
    if kind == "augmented" and not (theta is not None and theta > 0):
        raise ValueError("the augmented check needs theta > 0")
    ybar = np.asarray(ybar, dtype=float).reshape(p.m)
    if inf_phi is None:
        inf_phi = inner_infimum(p, np.zeros(p.m), grid, tol=tol)[0]
    rep = ExactnessReport(kind, theta, ybar, float(inf_phi))
    tb = 0.0
    for u in u_samples:
        u = np.asarray(u, dtype=float).reshape(p.m)
        v, _ = inner_infimum(p, u, grid, tol=tol)
        uu = float(u @ u)
        lhs = v + (0.5 * theta * uu if kind == "augmented" else 0.0)
        rhs = inf_phi + float(ybar @ u)
        rep.rows.append((u, float(lhs), rhs, float(lhs - rhs)))
        if uu > 0 and np.isfinite(v):
            tb = max(tb, 2.0 * (rhs - v) / uu)
    rep.theta_bar = tb
    return rep


# -- augmented Lagrangian method ---------------------------------------------

@dataclass(frozen=True)
class AugParams:
    theta: float
    lam_step: float | None = None
    outer_iters: int = 100
    tol: float = 1e-8
    inner: ProxParams = ProxParams(stop_tol=1e-12, max_iter=2000)

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.lam_step is None:
            object.__setattr__(self, "lam_step", float(self.theta))
        if not self.lam_step > 0:
            raise ValueError("lam_step must be positive")


def _projected_gradient(p, x, y, theta, prm: ProxParams, region=None, tol=DEFAULT):
    """Minimize ``x -> l_theta(x, y)`` over ``X`` (cut by ``region``) using the
    envelope gradient ``grad G(x)' w_hat`` and Armijo backtracking."""
    X = p.X if region is None else p.X.intersect(region)
    x = _qp.project(X, x)
    a = aug_lagrangian(p, x, y, theta, tol)
    s = prm.lam0
    for _ in range(prm.max_iter):
        g = p.G.jac(x).T @ a.w_hat
        for _ in range(prm.max_backtracks + 1):
            xn = _qp.project(X, x - s * g)
            an = aug_lagrangian(p, xn, y, theta, tol)
            d = xn - x
            if (d @ d) / (2 * s) <= 1e-13 * (1 + abs(a.value)):
                # the decrease to certify is at roundoff level: accept if the
                # gradient mapping shrinks instead
                gn = p.G.jac(xn).T @ an.w_hat
                if np.linalg.norm(xn - _qp.project(X, xn - s * gn)) < np.linalg.norm(d):
                    break
            elif an.value <= a.value + g @ d + (0.5 / s) * (d @ d):
                break
            s /= prm.tau
        step = float(np.linalg.norm(d))
        x, a = xn, an
        if step <= prm.stop_tol * max(1.0, s) or a.value < DIVERGENCE_THRESHOLD:
            break
        s = min(s * prm.tau, prm.lam_max)
    return x


@dataclass
class AlmTrace:
    """Outer iterations ``(x, y, residual)`` and the final triple
    ``(x, w_hat, G(x) - (w_hat - y)/theta)``."""

    records: list = field(default_factory=list)
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    triple: StationarityTriple | None = None
    reason: str = ""

    @property
    def converged(self) -> bool:
        return self.reason == "converged"

    @property
    def residual(self) -> float:
        return self.triple.residual if self.triple is not None else np.inf


def alm_triple(p: CompositeProblem, x, y, theta, tol=DEFAULT) -> StationarityTriple:
    """``(x, w_hat, G(x) - (w_hat - y)/theta)``: ``w_hat`` lies in ``dh`` of that ``z``."""
    a = aug_lagrangian(p, x, y, theta, tol)
    z = p.G(x) - (a.w_hat - np.asarray(y, dtype=float)) / theta
    return stationarity_residual(p, x, a.w_hat, z, tol)


def alm_solve(p: CompositeProblem, params: AugParams, x0, y0, tol: Tolerances = DEFAULT) -> AlmTrace:
    """Augmented Lagrangian method.

    Each outer iteration locally minimizes ``l_theta(., y)`` from the current
    ``x`` by projected gradient, then updates
    ``y <- y + (lam_step/theta)(w_hat - y)``.  Stops when the residual of
    the triple of :func:`alm_triple` is at most ``params.tol``; stops with
    reason ``"inner_unbounded"`` when ``l_theta(., y)`` drops below
    ``DIVERGENCE_THRESHOLD``.
    """
    x = _qp.project(p.X, np.asarray(x0, dtype=float).reshape(p.n))
    y = np.asarray(y0, dtype=float).reshape(p.m).copy()
    tr = AlmTrace()
    tr.reason = "max_iter"
    for k in range(params.outer_iters):
        x = _projected_gradient(p, x, y, params.theta, params.inner, None, tol)
        if aug_lagrangian(p, x, y, params.theta, tol).value < DIVERGENCE_THRESHOLD:
            tr.reason = "inner_unbounded"
            break
        trip = alm_triple(p, x, y, params.theta, tol)
        tr.records.append((k, x.copy(), y.copy(), trip.residual))
        tr.triple = trip
        if trip.residual <= params.tol:
            tr.reason = "converged"
            break
        y = y + (params.lam_step / params.theta) * (trip.y - y)
    tr.x, tr.y = x, y
    return tr
