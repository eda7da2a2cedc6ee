"""Compare the numba-compiled kernels with their pure-numpy sources.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

Kernel rows time ``kernel(*args)`` against ``kernel.py_func(*args)`` on the
same inputs after one warm-up call.  ``--end-to-end`` also times a small
solver workload in two subprocesses, one with ``PLQOPT_DISABLE_NUMBA=1``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from plqopt import _kernels as K
from plqopt.polyhedra import Polyhedron

WORKLOAD = """
import time
import numpy as np
from plqopt import catalog
from plqopt.catalog import InstanceSpec
from plqopt.prox_solver import solve
from plqopt import second_order as so
t0 = time.perf_counter()
for s in range(3):
    spec = InstanceSpec("PhaseRetrieval", 5, 20, s)
    solve(catalog.build(spec), x0=catalog.initial_point(spec))
    spec = InstanceSpec("Cvar", 4, 10, s)
    solve(catalog.build(spec), x0=catalog.initial_point(spec))
for name, Y, q, x in so.TILT_CATALOG:
    so.tilt_oracle_1d(so.plq_1d(Y[0], Y[1], q), x, delta=0.5, step=1e-4)
print(time.perf_counter() - t0)
"""


def qp_args(rng, n):
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    c = rng.normal(size=n) * 3
    P = Polyhedron.cube(n, -1.0, 1.0).intersect(Polyhedron.halfspace(np.ones(n), 0.5))
    x0 = P.feasible_point.copy()
    Ae = np.zeros((0, n))
    A = P.A_ub / np.linalg.norm(P.A_ub, axis=1)[:, None]
    b = P.b_ub / np.linalg.norm(P.A_ub, axis=1)
    work = K.initial_working_set(Ae, A, b, x0, 1e-13, 1e-10)
    return (H, c, Ae, A, b, x0, work, 50 * (n + A.shape[0]), 1e-12, 1e-10, 1e-12, 1e-10)


def cases(rng):
    xs = np.linspace(-1, 1, 20001)
    fx = K.plq1d_values(xs, -1.0, 2.0, 0.0)
    return [
        ("active_set_core n=5", K.active_set_core, qp_args(rng, 5)),
        ("active_set_core n=20", K.active_set_core, qp_args(rng, 20)),
        ("plq1d_values 20001 pts", K.plq1d_values, (xs, -1.0, 2.0, 0.5)),
        ("tilted_argmin_extent 20001x41", K.tilted_argmin_extent,
         (xs, fx, np.linspace(-0.2, 0.2, 41), 1e-12)),
    ]


def best_of(fn, args, repeat):
    fn(*args)
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05 and number < 10**5:
        number *= 10
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def end_to_end():
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, PLQOPT_DISABLE_NUMBA=flag)
        subprocess.run([sys.executable, "-c", WORKLOAD], env=env, check=True,
                       capture_output=True)  # warm the on-disk cache
        res = subprocess.run([sys.executable, "-c", WORKLOAD], env=env, check=True,
                             capture_output=True, text=True)
        out[label] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba is not available (or PLQOPT_DISABLE_NUMBA is set); nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numba':>12s} {'numpy':>12s} {'speedup':>9s}")
    for name, fn, a in cases(rng):
        fast = best_of(fn, a, args.repeat)
        slow = best_of(fn.py_func, a, args.repeat)
        print(f"{name:32s} {fast * 1e6:10.1f}us {slow * 1e6:10.1f}us {slow / fast:8.1f}x")
    if args.end_to_end:
        t = end_to_end()
        print(f"{'solver workload':32s} {t['numba']:11.2f}s {t['numpy']:11.2f}s "
              f"{t['numpy'] / t['numba']:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
