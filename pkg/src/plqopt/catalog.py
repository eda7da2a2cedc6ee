"""Seeded builders for the example problem families.

Every instance is a deterministic function of its :class:`InstanceSpec`;
random data come from ``numpy.random.Generator(PCG64(seed))``.

Families
--------
Goal
    ``sum_i alpha_i max{0, g_i(x) - tau_i}`` over a box, affine ``g_i``.
NlpPenalty
    ``g_0`` subject to ``g_i = 0`` / ``g_i <= 0`` via ``Y = {1} x R^m x [0,inf)^q``.
Cvar
    superquantile of affine scenario costs, ``Y = {y >= 0, sum y = 1, (1-alpha) y_i <= p_i}``.
LassoTaper
    least squares plus an l1 or tapered penalty, ``Y = {1} x [-1,1]^n``.
PhaseRetrieval
    ``(1/m) sum_i |<a_i,x>^2 - b_i|`` with real data and a planted signal.
SpatialVI
    gap function of a spatial price equilibrium, ``X = C``, ``Y = {1} x C``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import qp as _qp
from .composite import CompositeProblem, SmoothMap
from .plq import PlqFunction
from .polyhedra import Polyhedron

FAMILIES = ("Goal", "NlpPenalty", "Cvar", "LassoTaper", "PhaseRetrieval", "SpatialVI")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _freeze(v):
    if isinstance(v, dict):
        return tuple(sorted((k, _freeze(x)) for k, x in v.items()))
    if isinstance(v, np.ndarray):
        return (v.shape, tuple(v.ravel().tolist()))
    if isinstance(v, (list, tuple)):
        return tuple(_freeze(x) for x in v)
    return v


@dataclass(frozen=True, eq=False)
class InstanceSpec:
    """Family name, dimensions, seed and family parameters.

    Recognized ``params`` (all optional):

    * Goal: ``alpha`` (m), ``tau`` (m), ``box`` (half-width of X)
    * NlpPenalty: ``P`` (k x n x n), ``A`` (k x n), ``c`` (k) for the
      quadratic functions ``g_0..g_{m+q}``, ``n_eq``, ``n_ineq``; default is
      ``min x1 + x2 s.t. x1^2 + x2^2 = 2``
    * Cvar: ``alpha`` in [0,1), ``p`` (m, sums to 1), ``box``
    * LassoTaper: ``theta`` > 0, ``taper`` (bool)
    * PhaseRetrieval: ``noise`` (std of additive noise on b)
    * SpatialVI: ``producers``, ``regions``, ``capacity``
    * any family: ``q_shift`` >= 0 adds ``q_shift * I`` to ``Q``
    """

    family: str
    n: int
    m: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.n < 1 or self.m < 1:
            raise ValueError("dimensions must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        p = dict(self.params)
        object.__setattr__(self, "params", p)
        if self.family == "Cvar":
            a = float(p.get("alpha", 0.8))
            if not 0 <= a < 1:
                raise ValueError("Cvar alpha must lie in [0, 1)")
            if "p" in p:
                pr = np.asarray(p["p"], dtype=float)
                if pr.size != self.m or np.any(pr < 0) or abs(pr.sum() - 1) > 1e-12:
                    raise ValueError("probabilities must be nonnegative and sum to 1")
        if self.family == "Goal" and "alpha" in p and np.any(np.asarray(p["alpha"]) < 0):
            raise ValueError("goal penalties must be nonnegative")
        if self.family == "LassoTaper" and not float(p.get("theta", 0.5)) > 0:
            raise ValueError("theta must be positive")
        if float(p.get("q_shift", 0.0)) < 0:
            raise ValueError("q_shift must be nonnegative")

    def key(self):
        return (self.family, self.n, self.m, int(self.seed), _freeze(self.params))

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v
        return {"family": self.family, "n": self.n, "m": self.m, "seed": int(self.seed),
                "params": {k: plain(v) for k, v in sorted(self.params.items())}}


@dataclass(frozen=True, eq=False)
class Instance:
    spec: InstanceSpec
    problem: CompositeProblem
    data: dict


def build(spec: InstanceSpec) -> CompositeProblem:
    """The composite problem ``(X, G, h)`` of the instance."""
    return generate(spec).problem


def generate(spec: InstanceSpec) -> Instance:
    """Problem plus generated data (planted solution, probabilities, ...)."""
    return _generate_cached(spec.key(), spec)


@lru_cache(maxsize=256)
def _generate_cached(key, spec):
    builder = _BUILDERS[spec.family]
    X, G, Y, Q, data = builder(spec, rng_for(spec.seed))
    shift = float(spec.params.get("q_shift", 0.0))
    if shift:
        Q = Q + shift * np.eye(Q.shape[0])
    return Instance(spec, CompositeProblem(X, G, PlqFunction(Y, Q)), data)


# -- families -----------------------------------------------------------------

def _goal(spec, rng):
    n, m, p = spec.n, spec.m, spec.params
    A = np.asarray(p["A"], dtype=float).reshape(m, n) if "A" in p else rng.normal(size=(m, n))
    b = np.asarray(p["b"], dtype=float).reshape(m) if "b" in p else rng.normal(size=m)
    alpha = np.asarray(p.get("alpha", np.ones(m)), dtype=float).reshape(m)
    tau = np.asarray(p.get("tau", np.zeros(m)), dtype=float).reshape(m)
    w = float(p.get("box", 1.0))
    G = SmoothMap.affine_map(A, b - tau, "goal")
    Y = Polyhedron.box(np.zeros(m), alpha)
    return Polyhedron.cube(n, -w, w), G, Y, np.zeros((m, m)), {"A": A, "b": b, "alpha": alpha, "tau": tau}


def _nlp(spec, rng):
    n, p = spec.n, spec.params
    if "A" in p:
        A = np.asarray(p["A"], dtype=float)
        k = A.shape[0]
        P = np.asarray(p.get("P", np.zeros((k, n, n))), dtype=float).reshape(k, n, n)
        c = np.asarray(p.get("c", np.zeros(k)), dtype=float).reshape(k)
        n_eq = int(p.get("n_eq", k - 1))
        n_ineq = int(p.get("n_ineq", k - 1 - n_eq))
    else:
        if n != 2:
            raise ValueError("the default NlpPenalty instance has n = 2")
        P = np.array([np.zeros((2, 2)), 2 * np.eye(2)])
        A = np.array([[1.0, 1.0], [0.0, 0.0]])
        c = np.array([0.0, -2.0])
        n_eq, n_ineq = 1, 0
    k = 1 + n_eq + n_ineq
    if A.shape != (k, n) or spec.m != k:
        raise ValueError(f"NlpPenalty expects m = 1 + n_eq + n_ineq = {k} quadratic functions")
    G = SmoothMap.quadratic_map(P, A, c, "nlp")
    e0 = np.zeros((1, k))
    e0[0, 0] = 1.0
    sign = np.zeros((n_ineq, k))
    for i in range(n_ineq):
        sign[i, 1 + n_eq + i] = -1.0
    Y = Polyhedron.from_rows(k, A_eq=e0, b_eq=[1.0], A_ub=sign, b_ub=np.zeros(n_ineq))
    return Polyhedron.free(n), G, Y, np.zeros((k, k)), {"n_eq": n_eq, "n_ineq": n_ineq}


def cvar_set(p, alpha) -> Polyhedron:
    """``{y >= 0, sum y = 1, (1 - alpha) y_i <= p_i}``."""
    m = len(p)
    return Polyhedron.from_rows(
        m, A_eq=np.ones((1, m)), b_eq=[1.0],
        A_ub=np.vstack([-np.eye(m), (1 - alpha) * np.eye(m)]),
        b_ub=np.concatenate([np.zeros(m), np.asarray(p, dtype=float)]))


def _cvar(spec, rng):
    n, m, p = spec.n, spec.m, spec.params
    A = np.asarray(p["A"], dtype=float).reshape(m, n) if "A" in p else rng.normal(size=(m, n))
    b = np.asarray(p["b"], dtype=float).reshape(m) if "b" in p else rng.normal(size=m)
    if "p" in p:
        pr = np.asarray(p["p"], dtype=float)
    else:
        pr = rng.uniform(0.5, 1.5, size=m)
        pr = pr / pr.sum()
    alpha = float(p.get("alpha", 0.8))
    w = float(p.get("box", 1.0))
    G = SmoothMap.affine_map(A, b, "cvar")
    return (Polyhedron.cube(n, -w, w), G, cvar_set(pr, alpha), np.zeros((m, m)),
            {"A": A, "b": b, "p": pr, "alpha": alpha, "box": w})


def taper(t, theta):
    """Smooth taper of ``theta * t``: linear on [-1, 1], exponential tails."""
    t = np.asarray(t, dtype=float)
    up = np.exp(np.minimum(1 - t, 0.0))
    down = np.exp(np.minimum(1 + t, 0.0))
    return np.where(t > 1, 2 * theta - theta * up,
                    np.where(t >= -1, theta * t, theta * down - 2 * theta))


def taper_prime(t, theta):
    t = np.asarray(t, dtype=float)
    return np.where(t > 1, theta * np.exp(1 - t), np.where(t >= -1, theta, theta * np.exp(1 + t)))


def taper_second(t, theta):
    t = np.asarray(t, dtype=float)
    return np.where(t > 1, -theta * np.exp(1 - t), np.where(t >= -1, 0.0, theta * np.exp(1 + t)))


def _lasso(spec, rng):
    n, m, p = spec.n, spec.m, spec.params
    A = np.asarray(p["A"], dtype=float).reshape(m, n) if "A" in p else rng.normal(size=(m, n))
    b = np.asarray(p["b"], dtype=float).reshape(m) if "b" in p else rng.normal(size=m)
    theta = float(p.get("theta", 0.5))
    tap = bool(p.get("taper", True))

    def value(x):
        r = A @ x - b
        pen = taper(x, theta) if tap else theta * x
        return np.concatenate([[r @ r], pen])

    def jac(x):
        r = A @ x - b
        d = taper_prime(x, theta) if tap else np.full(n, theta)
        return np.vstack([2 * A.T @ r, np.diag(d)])

    def hess(x, y):
        d2 = taper_second(x, theta) if tap else np.zeros(n)
        return 2 * y[0] * A.T @ A + np.diag(y[1:] * d2)

    G = SmoothMap(n, n + 1, value, jac, hess, None, "lasso-taper" if tap else "lasso")
    lo = np.concatenate([[1.0], -np.ones(n)])
    hi = np.concatenate([[1.0], np.ones(n)])
    return Polyhedron.free(n), G, Polyhedron.box(lo, hi), np.zeros((n + 1, n + 1)), \
        {"A": A, "b": b, "theta": theta, "taper": tap}


def _phase(spec, rng):
    n, m, p = spec.n, spec.m, spec.params
    A = rng.normal(size=(m, n))
    x_star = rng.normal(size=n)
    x_star /= np.linalg.norm(x_star)
    b = (A @ x_star) ** 2
    noise = float(p.get("noise", 0.0))
    if noise:
        b = b + noise * rng.normal(size=m)

    def value(x):
        return ((A @ x) ** 2 - b) / m

    def jac(x):
        return 2 * (A @ x)[:, None] * A / m

    def hess(x, y):
        return 2 * (A.T * y) @ A / m

    G = SmoothMap(n, m, value, jac, hess, None, "phase-retrieval")
    Y = Polyhedron.cube(m, -1.0, 1.0)
    return Polyhedron.free(n), G, Y, np.zeros((m, m)), {"A": A, "b": b, "x_star": x_star}


def spectral_start(A, b):
    """Leading eigenvector of ``(1/m) sum_i b_i a_i a_i'`` scaled by ``sqrt(mean b)``."""
    m = A.shape[0]
    M = (A.T * b) @ A / m
    lam, V = np.linalg.eigh(M)
    return V[:, -1] * np.sqrt(max(np.mean(b), 0.0))


def equilibrium_set(producers, regions, capacity) -> Polyhedron:
    """``C = {(s,d,w) | w >= 0, w <= capacity, sum_j w_ij = s_i, sum_i w_ij = d_j}``."""
    mp, nr = producers, regions
    N = mp + nr + mp * nr
    rows = []
    for i in range(mp):
        r = np.zeros(N)
        r[i] = -1.0
        r[mp + nr + i * nr: mp + nr + (i + 1) * nr] = 1.0
        rows.append(r)
    for j in range(nr):
        r = np.zeros(N)
        r[mp + j] = -1.0
        r[mp + nr + j: N: nr] = 1.0
        rows.append(r)
    W = np.zeros((mp * nr, N))
    W[:, mp + nr:] = np.eye(mp * nr)
    return Polyhedron.from_rows(N, A_eq=np.array(rows), b_eq=np.zeros(mp + nr),
                                A_ub=np.vstack([-W, W]),
                                b_ub=np.concatenate([np.zeros(mp * nr), np.full(mp * nr, capacity)]))


def _vi(spec, rng):
    p = spec.params
    mp = int(p.get("producers", 2))
    nr = int(p.get("regions", 2))
    cap = float(p.get("capacity", 5.0))
    N = mp + nr + mp * nr
    if spec.n != N or spec.m != N + 1:
        raise ValueError(f"SpatialVI with {mp} producers and {nr} regions needs n = {N}, m = {N + 1}")
    # supply price p(s) = p0 + P s, demand price q(d) = q0 - R d, transport c(w) = c0 + C w
    p0 = rng.uniform(0.5, 1.5, mp)
    q0 = rng.uniform(4.0, 6.0, nr)
    c0 = rng.uniform(0.1, 1.0, mp * nr)
    diag = np.concatenate([rng.uniform(0.5, 1.5, mp), rng.uniform(0.5, 1.5, nr),
                           rng.uniform(0.1, 0.5, mp * nr)])
    M = np.diag(diag)
    F0 = np.concatenate([p0, -q0, c0])
    C = equilibrium_set(mp, nr, cap)
    P = np.zeros((N + 1, N, N))
    P[0] = 2 * M
    A = np.vstack([F0, -M])
    c = np.concatenate([[0.0], -F0])
    G = SmoothMap.quadratic_map(P, A, c, "vi-gap")
    e0 = np.zeros((1, N + 1))
    e0[0, 0] = 1.0
    Y = Polyhedron(np.vstack([e0, np.hstack([np.zeros((C.A_eq.shape[0], 1)), C.A_eq])]),
                   np.concatenate([[1.0], C.b_eq]),
                   np.hstack([np.zeros((C.A_ub.shape[0], 1)), C.A_ub]), C.b_ub, dim=N + 1)
    return C, G, Y, np.zeros((N + 1, N + 1)), {"M": M, "F0": F0, "C": C,
                                               "producers": mp, "regions": nr}


_BUILDERS = {"Goal": _goal, "NlpPenalty": _nlp, "Cvar": _cvar, "LassoTaper": _lasso,
             "PhaseRetrieval": _phase, "SpatialVI": _vi}


def initial_point(spec: InstanceSpec) -> np.ndarray:
    """A reasonable starting point: spectral start for phase retrieval,
    a feasible point of ``X`` otherwise."""
    inst = generate(spec)
    if spec.family == "PhaseRetrieval":
        return spectral_start(inst.data["A"], inst.data["b"])
    return np.array(inst.problem.X.feasible_point)


# -- reference computations -----------------------------------------------------

def cvar_ru_reference(spec: InstanceSpec):
    """Superquantile optimum by the single LP
    ``min gamma + sum p_i u_i / (1 - alpha)`` s.t. ``g_i(x) - gamma <= u_i``, ``u >= 0``, ``x in X``.

    Returns ``(value, x)``.
    """
    if spec.family != "Cvar":
        raise ValueError("cvar_ru_reference needs a Cvar instance")
    inst = generate(spec)
    d = inst.data
    A, b, pr, alpha = d["A"], d["b"], d["p"], d["alpha"]
    m, n = A.shape
    X = inst.problem.X
    N = n + 1 + m
    c = np.concatenate([np.zeros(n), [1.0], pr / (1 - alpha)])
    A_ub = np.vstack([
        np.hstack([A, -np.ones((m, 1)), -np.eye(m)]),
        np.hstack([np.zeros((m, n + 1)), -np.eye(m)]),
        np.hstack([X.A_ub, np.zeros((X.A_ub.shape[0], 1 + m))]),
    ])
    b_ub = np.concatenate([-b, np.zeros(m), X.b_ub])
    sol = _qp.solve_arrays(np.zeros((N, N)), c, np.zeros((0, N)), np.zeros(0), A_ub, b_ub)
    if not sol.ok:
        raise RuntimeError(f"Rockafellar-Uryasev LP ended with status {sol.status.value}")
    return sol.obj, sol.x[:n]


def vi_merit(spec: InstanceSpec, x) -> float:
    """Gap ``sup_{y in C} <F(x), x - y>`` by LP; raises if ``x`` is not in ``C``."""
    inst = generate(spec)
    C, M, F0 = inst.data["C"], inst.data["M"], inst.data["F0"]
    x = np.asarray(x, dtype=float)
    if not C.contains(x, 1e-8):
        raise ValueError("x is not in C")
    F = F0 + M @ x
    sol = _qp.solve_lp(F, C, C.feasible_point)
    if not sol.ok:
        raise RuntimeError(f"merit LP ended with status {sol.status.value}")
    return max(float(F @ x - sol.obj), 0.0)


def vi_reference(spec: InstanceSpec):
    """Equilibrium by the QP ``min 0.5 x'Mx + F0'x`` over ``C`` (``F`` is its gradient)."""
    inst = generate(spec)
    M, F0, C = inst.data["M"], inst.data["F0"], inst.data["C"]
    sol = _qp.solve(_qp.QpProblem(M, F0, C))
    if not sol.ok:
        raise RuntimeError(f"equilibrium QP ended with status {sol.status.value}")
    return sol.x


# -- small fixed instances ------------------------------------------------------

def abs_square_minus_one() -> CompositeProblem:
    """``phi(x) = |x^2 - 1|`` on the real line; minimizers ``+-1``."""
    G = SmoothMap.quadratic_map([2 * np.eye(1)], [[0.0]], [-1.0], "x^2-1")
    return CompositeProblem(Polyhedron.free(1), G, PlqFunction.abs())


def duality_gap_instance() -> CompositeProblem:
    """``X = [-1,1]``, ``G(x) = (x, x^2)``, ``Y = {1} x [0,inf)``.

    ``phi`` is finite only at ``x = 0`` so ``inf phi = 0``, while
    ``psi((1, y2))`` is ``-1 + y2`` below ``1/2`` and ``-1/(4 y2)`` above,
    so the dual supremum 0 is not attained.
    """
    G = SmoothMap.quadratic_map([np.zeros((1, 1)), 2 * np.eye(1)], [[1.0], [0.0]], [0.0, 0.0],
                                "(x, x^2)")
    Y = Polyhedron.from_rows(2, A_eq=[[1.0, 0.0]], b_eq=[1.0], A_ub=[[0.0, -1.0]], b_ub=[0.0])
    return CompositeProblem(Polyhedron.box([-1.0], [1.0]), G, PlqFunction(Y, np.zeros((2, 2))))


def duality_gap_psi(y2: float) -> float:
    """Closed form of ``psi((1, y2))`` for :func:`duality_gap_instance`."""
    if y2 < 0:
        return -np.inf
    return -1.0 + y2 if y2 < 0.5 else -1.0 / (4.0 * y2)


def single_equality_instance() -> CompositeProblem:
    """``min -x^2`` subject to ``x = 0``: ``G(x) = (-x^2, x)``, ``Y = {1} x R``."""
    G = SmoothMap.quadratic_map([-2 * np.eye(1), np.zeros((1, 1))], [[0.0], [1.0]], [0.0, 0.0],
                                "(-x^2, x)")
    Y = Polyhedron.from_rows(2, A_eq=[[1.0, 0.0]], b_eq=[1.0])
    return CompositeProblem(Polyhedron.free(1), G, PlqFunction(Y, np.zeros((2, 2))))


def circle_nlp() -> CompositeProblem:
    """``min x1 + x2`` subject to ``x1^2 + x2^2 = 2``; solution ``(-1, -1)``."""
    return build(InstanceSpec("NlpPenalty", 2, 2, 0))
