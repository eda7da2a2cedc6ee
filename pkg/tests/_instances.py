"""Random instance generators shared by the test modules and the acceptance suite."""

import numpy as np

from plqopt import qp
from plqopt.plq import PlqFunction
from plqopt.polyhedra import ConeDescription, Polyhedron


def random_Y(rng, m):
    kind = rng.choice(["box", "simplex", "product"]) if m > 1 else "box"
    if kind == "box":
        lo = rng.uniform(-2, 0, m)
        return Polyhedron.box(lo, lo + rng.uniform(0.1, 2, m))
    if kind == "simplex":
        return Polyhedron.simplex(m)
    k = int(rng.integers(1, m))
    return Polyhedron.simplex(k).product(Polyhedron.cube(m - k, -1.0, 1.0))


def random_Q(rng, m, pd):
    if not pd:
        return np.zeros((m, m))
    M = rng.normal(size=(m, m))
    return M @ M.T + 0.1 * np.eye(m)


def random_plq(rng, m=None, pd=None):
    m = int(rng.integers(1, 5)) if m is None else m
    pd = bool(rng.random() < 0.5) if pd is None else pd
    return PlqFunction(random_Y(rng, m), random_Q(rng, m, pd))


def unbounded_plq_examples():
    """``Y = {1} x R`` with ``Q = 0`` and ``Y = {1} x R x [0, inf)``; their domains are
    ``{z_2 = 0}`` and ``{z_2 = 0, z_3 <= 0}``."""
    Y1 = Polyhedron.from_rows(2, A_eq=[[1.0, 0.0]], b_eq=[1.0])
    Y2 = Polyhedron.from_rows(3, A_eq=[[1.0, 0.0, 0.0]], b_eq=[1.0], A_ub=[[0.0, 0.0, -1.0]], b_ub=[0.0])
    return PlqFunction(Y1, np.zeros((2, 2))), PlqFunction(Y2, np.zeros((3, 3)))


def projection_distance(nc: ConeDescription, v):
    """Independent route: ``|v - proj_K(v)|`` by the QP solver over the
    generator weights (free span weights, nonnegative generator weights)."""
    B = np.vstack([nc.span_rows, nc.gen_rows]).T
    k, s = nc.span_rows.shape[0], nc.gen_rows.shape[0]
    if k + s == 0:
        return float(np.linalg.norm(v))
    H = B.T @ B
    c = -B.T @ v
    A_ub = np.hstack([np.zeros((s, k)), -np.eye(s)])
    sol = qp.solve_arrays(H + 1e-14 * np.eye(k + s), c, np.zeros((0, k + s)), np.zeros(0),
                          A_ub, np.zeros(s))
    return float(np.linalg.norm(v - B @ sol.x))


def random_triple(rng):
    n = int(rng.integers(2, 5))
    q = int(rng.integers(n, n + 4))
    A = rng.normal(size=(q, n))
    x = rng.normal(size=n)
    b = A @ x + np.where(rng.random(q) < 0.5, 0.0, rng.random(q))
    P = Polyhedron.from_rows(n, A_ub=A, b_ub=b)
    return P, x, rng.normal(size=n) * 2


def regular_normal_excess(P, xbar, v, rng, samples=500, radius=1e-3):
    """``max <v, x - xbar> / |x - xbar|`` over sampled ``x in P`` near ``xbar``."""
    worst = -np.inf
    for _ in range(samples):
        x = qp.project(P, xbar + radius * rng.normal(size=xbar.size))
        d = np.linalg.norm(x - xbar)
        if d > 1e-12:
            worst = max(worst, float(v @ (x - xbar)) / d)
    return worst
