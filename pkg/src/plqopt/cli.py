"""Command-line front end.

    plqopt solve FILE... [--method prox|approx|alm] [--tol T] [--max-iter K]
                         [--trace out.csv] [--json out.json] [--jobs N]
    plqopt check FILE... --what subgradient|duality|tilt

Exit codes: 0 success, 1 input error, 2 not converged / check failed,
3 check not supported for the problem.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import problem_file as pfm

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_UNSUPPORTED = 0, 1, 2, 3


class InputError(Exception):
    pass


def _num(v):
    v = float(v)
    if np.isfinite(v):
        return v
    return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")


def _vec(a):
    return None if a is None else [_num(t) for t in np.asarray(a, dtype=float).ravel()]


# -- solve --------------------------------------------------------------------

def _trace_rows_prox(trace, offset=0):
    return [(offset + r[0],) + tuple(r[1:]) for r in trace.rows()]


def _run_prox(p, x0, prox):
    from .prox_solver import solve
    tr = solve(p, prox, x0)
    return {"x": tr.x, "triple": tr.triple, "phi": tr.phi, "iterations": tr.iterations,
            "subproblems": tr.subproblems, "status": tr.reason, "rows": _trace_rows_prox(tr)}


def _run_approx(p, x0, prox, sched):
    from .prox_solver import (ScheduleKind, consistent_solve, exact_penalty_family,
                              moreau_family, true_residual)
    if sched.kind is ScheduleKind.PENALTY:
        try:
            family = exact_penalty_family(p)
        except ValueError as e:
            raise InputError(f"penalty schedule: {e}") from None
    else:
        family = moreau_family(p)
    stages = consistent_solve(family, sched, x0, prox)
    rows, it = [], 0
    for st in stages:
        rows += _trace_rows_prox(st.trace, it)
        it += st.trace.iterations
    last = stages[-1].trace
    triple = true_residual(p, last.triple)
    met = all(st.criterion_met for st in stages)
    return {"x": last.x, "triple": triple, "phi": p.phi(last.x), "iterations": it,
            "subproblems": sum(st.trace.subproblems for st in stages),
            "status": "stationary" if met else "stage_criterion_missed", "rows": rows,
            "stages": [{"nu": _num(st.nu), "eps": _num(st.eps),
                        "theta": None if st.theta is None else _num(st.theta),
                        "residual": _num(st.trace.residual), "met": st.criterion_met}
                       for st in stages]}


def _run_alm(p, x0, y0, alm):
    from .duality import alm_solve
    tr = alm_solve(p, alm, x0, y0)
    rows, prev = [], np.asarray(x0, dtype=float)
    for k, x, _, res in tr.records:
        rows.append((k + 1, p.phi(x), alm.lam_step, float(np.linalg.norm(x - prev)), res, 0))
        prev = x
    return {"x": tr.x, "triple": tr.triple, "phi": p.phi(tr.x), "iterations": len(tr.records),
            "subproblems": len(tr.records), "status": tr.reason, "rows": rows}


def _write_csv(rows, dest):
    from .prox_solver import TRACE_COLUMNS
    import csv
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in rows:
            w.writerow([int(r[0])] + [repr(float(v)) for v in r[1:5]] + [int(r[5])])


def solve_problem(pf: pfm.ProblemFile, method=None, tol=1e-6, max_iter=None) -> dict:
    """Run one problem; returns the report dict (``exit_code`` included)."""
    from .duality import AugParams
    from .prox_solver import ProxParams

    t0 = time.perf_counter()
    try:
        p = pfm.build_problem(pf)
        prox, sched, alm = pfm.solver_params(pf.solver)
        x0 = pfm.initial_point(pf, p)
    except ValueError as e:
        raise InputError(f"{pf.name}: {e}") from None
    method = method or pf.method
    if max_iter is not None:
        prox = ProxParams(prox.tau, prox.sigma, prox.lam_max, prox.lam0, prox.stop_tol,
                          int(max_iter), prox.max_backtracks)
    try:
        if method == "prox":
            out = _run_prox(p, x0, prox)
        elif method == "approx":
            out = _run_approx(p, x0, prox, sched)
        else:
            if alm is None:
                alm = AugParams(theta=2.0, lam_step=1.0)
            if max_iter is not None:
                alm = AugParams(alm.theta, alm.lam_step, int(max_iter), alm.tol, alm.inner)
            y0 = pf.solver.get("alm", {}).get("y0")
            if y0 is None:
                y0 = np.array(p.h.Y.feasible_point)
            out = _run_alm(p, x0, np.asarray(y0, dtype=float), alm)
    except InputError:
        raise
    except ValueError as e:
        raise InputError(f"{pf.name}: {e}") from None
    except RuntimeError as e:
        raise InputError(f"{pf.name}: solver failed: {e}") from None
    trip = out["triple"]
    residual = trip.residual if trip is not None else np.inf
    code = EXIT_OK if residual <= tol else EXIT_NOT_CONVERGED
    rep = {
        "name": pf.name, "method": method, "status": out["status"], "tol": _num(tol),
        "x": _vec(out["x"]), "y": _vec(trip.y if trip else None), "z": _vec(trip.z if trip else None),
        "phi": _num(out["phi"]), "residual": _num(residual),
        "residual_parts": ({"r_G": _num(trip.r_G), "r_Y": _num(trip.r_Y), "r_X": _num(trip.r_X)}
                           if trip else None),
        "iterations": int(out["iterations"]), "subproblems": int(out["subproblems"]),
        "exit_code": code, "wall_time": time.perf_counter() - t0,
    }
    if "stages" in out:
        rep["stages"] = out["stages"]
    rep["_rows"] = out["rows"]
    return rep


def _solve_job(args):
    pf, method, tol, max_iter = args
    try:
        return solve_problem(pf, method, tol, max_iter)
    except InputError as e:
        return {"name": pf.name, "input_error": str(e), "exit_code": EXIT_INPUT}


def _load_all(files):
    problems = []
    for f in files:
        try:
            problems += pfm.load(f)
        except OSError as e:
            raise InputError(f"{f}: {e.strerror}") from None
        except pfm.ProblemFileError as e:
            raise InputError(str(e)) from None
    return problems


def _indexed(path, i, count):
    if count == 1:
        return path
    stem, ext = os.path.splitext(path)
    return f"{stem}.{i}{ext}"


def cmd_solve(args) -> int:
    problems = _load_all(args.files)
    jobs = [(pf, args.method, args.tol, args.max_iter) for pf in problems]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            reports = list(ex.map(_solve_job, jobs))
    else:
        reports = [_solve_job(j) for j in jobs]
    n = len(reports)
    for i, (pf, rep) in enumerate(zip(problems, reports)):
        if "input_error" in rep:
            print(f"error: {rep['input_error']}", file=sys.stderr)
            continue
        rows = rep.pop("_rows")
        trace = args.trace or pf.outputs.get("trace")
        if trace:
            _write_csv(rows, _indexed(trace, i, n))
        print(f"{rep['name']}: {rep['status']}  phi={rep['phi']!r}  residual={rep['residual']!r}  "
              f"iterations={rep['iterations']}  exit={rep['exit_code']}")
    dest = args.json or (problems[0].outputs.get("json") if n == 1 else None)
    if dest:
        doc = reports[0] if n == 1 else {"reports": reports}
        with open(dest, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return max(r["exit_code"] for r in reports)


# -- check ----------------------------------------------------------------------

def _table(rows):
    head = ("check", "samples", "max_error", "result")
    cells = [head] + [(r[0], str(r[1]), "-" if r[2] is None else f"{r[2]:.3e}", r[3]) for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(4)]
    return "\n".join("  ".join(c[i].ljust(widths[i]) for i in range(4)).rstrip() for c in cells)


def _sample_X(p, rng, k):
    from .qp import project
    base = np.array(p.X.feasible_point)
    return [project(p.X, base + rng.normal(size=p.n)) for _ in range(k)]


def check_subgradient(p, rng, samples=20):
    from .qp import QpProblem, brute_force_qp
    h = p.h
    zs = [p.G(x) for x in _sample_X(p, rng, samples // 2)]
    zs += [rng.normal(size=p.m) * 2 for _ in range(samples - len(zs))]
    err_dual, err_bf_obj, err_bf_sol, n_bf, bad = 0.0, 0.0, 0.0, 0, False
    for z in zs:
        v1, v2 = h.value(z), h.value_via_dual(z)
        if np.isinf(v1) or np.isinf(v2):
            bad |= v1 != v2
            continue
        err_dual = max(err_dual, abs(v1 - v2) / (1 + abs(v1)))
        if p.m <= 6:
            ref = brute_force_qp(QpProblem(h.Q, -z, h.Y))
            if ref.ok:
                n_bf += 1
                err_bf_obj = max(err_bf_obj, abs(-ref.obj - v1) / (1 + abs(v1)))
                sg = h.subgradient(z)
                if sg.unique:
                    err_bf_sol = max(err_bf_sol, float(np.linalg.norm(sg.point - ref.x)))
    rows = [("h primal vs dual form", len(zs), err_dual,
             "pass" if err_dual <= 1e-7 and not bad else "FAIL")]
    if n_bf:
        rows.append(("h vs brute-force QP (value)", n_bf, err_bf_obj,
                     "pass" if err_bf_obj <= 1e-7 else "FAIL"))
        rows.append(("h vs brute-force QP (unique subgradient)", n_bf, err_bf_sol,
                     "pass" if err_bf_sol <= 1e-6 else "FAIL"))
    if h.q_positive_definite:
        from .composite import chain_subgradient
        err = 0.0
        xs = _sample_X(p, rng, 10)
        interior = [x for x in xs if p.X.A_eq.shape[0] == 0 and
                    (p.X.A_ub.shape[0] == 0 or np.max(p.X.A_ub @ x - p.X.b_ub) < -1e-4)]
        for x in interior:
            g = chain_subgradient(p, x).vector
            fd = np.array([(p.phi(x + 1e-6 * e) - p.phi(x - 1e-6 * e)) / 2e-6 for e in np.eye(p.n)])
            err = max(err, float(np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(fd))))
        if interior:
            rows.append(("chain rule vs finite differences", len(interior), err,
                         "pass" if err <= 1e-4 else "FAIL"))
    return rows


def check_duality(p, pf, rng, samples=10):
    from .duality import GridSpec, dual_affine, dual_affine_max, dual_sampled, primal_affine_min
    from .prox_solver import solve
    from .qp import project
    affine = p.G.affine is not None
    if not affine and p.n > 3:
        return None
    x0 = pfm.initial_point(pf, p)
    try:
        upper = solve(p, x0=x0).phi
    except (ValueError, RuntimeError):
        upper = np.inf
    upper = min([upper] + [p.phi(x) for x in _sample_X(p, rng, samples)])
    Ybase = np.array(p.h.Y.feasible_point)
    ys = [Ybase] + [project(p.h.Y, Ybase + rng.normal(size=p.m)) for _ in range(samples - 1)]
    grid = GridSpec(points=201 if p.n == 1 else None)
    worst = -np.inf
    for y in ys:
        psi = dual_affine(p, y) if affine else dual_sampled(p, y, grid).value
        worst = max(worst, psi - upper)
    ok = worst <= 1e-8 * (1 + abs(upper))
    rows = [("weak duality psi(y) <= phi(x)", len(ys), max(worst, 0.0), "pass" if ok else "FAIL")]
    if affine:
        lo, _ = primal_affine_min(p)
        hi, _ = dual_affine_max(p)
        if np.isfinite(lo) and np.isfinite(hi):
            gap = abs(lo - hi)
            rows.append(("max psi = min phi (affine G)", 1, gap,
                         "pass" if gap <= 1e-6 * (1 + abs(lo)) else "FAIL"))
    return rows


def check_tilt(p, pf):
    from . import second_order as so
    from .prox_solver import solve
    x0 = pfm.initial_point(pf, p)
    try:
        xbar = solve(p, x0=x0).x
    except (ValueError, RuntimeError):
        return None
    xbar = np.where(np.abs(xbar) < 1e-12, 0.0, xbar)
    verdict = so.composite_tilt_diagnostic(p, xbar)
    if verdict == "unsupported":
        return None
    if p.n == 1 and p.m == 1 and not p.h.Y.is_unconstrained:
        oracle = "stable" if so.tilt_oracle_1d(p.h, float(xbar[0])) else "unstable"
    else:
        H = _fd_hessian(p.phi, xbar)
        oracle = "stable" if so.tilt_stable_smooth(H, 1e-6) else "unstable"
    return [(f"tilt at x={_fmt(xbar)}: {verdict} (oracle {oracle})", 1, None,
             "pass" if verdict == oracle else "FAIL")]


def _fmt(x):
    return "[" + ", ".join(f"{t:.6g}" for t in x) + "]"


def _fd_hessian(f, x, h=1e-4):
    n = x.size
    H = np.zeros((n, n))
    E = np.eye(n) * h
    for i in range(n):
        for j in range(n):
            H[i, j] = (f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j])
                       + f(x - E[i] - E[j])) / (4 * h * h)
    return 0.5 * (H + H.T)


def cmd_check(args) -> int:
    from .catalog import rng_for
    problems = _load_all(args.files)
    code = EXIT_OK
    for pf in problems:
        try:
            p = pfm.build_problem(pf)
        except ValueError as e:
            raise InputError(f"{pf.name}: {e}") from None
        rng = rng_for(int(pf.meta.get("seed", 0)))
        if args.what == "subgradient":
            rows = check_subgradient(p, rng)
        elif args.what == "duality":
            rows = check_duality(p, pf, rng)
        else:
            rows = check_tilt(p, pf)
        print(f"== {pf.name}: {args.what}")
        if rows is None:
            print("unsupported")
            code = max(code, EXIT_UNSUPPORTED) if code != EXIT_NOT_CONVERGED else code
            continue
        print(_table(rows))
        if any(r[3] != "pass" for r in rows):
            code = EXIT_NOT_CONVERGED
    return code


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plqopt", description="Composite PLQ optimization tools.")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve problem files")
    s.add_argument("files", nargs="+")
    s.add_argument("--method", choices=pfm.METHODS, default=None,
                   help="overrides solver.method of the file (default prox)")
    s.add_argument("--tol", type=float, default=1e-6, help="residual needed for exit code 0")
    s.add_argument("--max-iter", type=int, default=None)
    s.add_argument("--trace", default=None, help="CSV trace path")
    s.add_argument("--json", default=None, help="JSON report path")
    s.add_argument("--jobs", type=int, default=1)
    c = sub.add_parser("check", help="run diagnostics on problem files")
    c.add_argument("files", nargs="+")
    c.add_argument("--what", choices=("subgradient", "duality", "tilt"), required=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        if args.command == "solve":
            if args.tol <= 0 or args.jobs < 1 or (args.max_iter is not None and args.max_iter < 0):
                raise InputError("--tol must be positive, --jobs and --max-iter at least 1 and 0")
            return cmd_solve(args)
        return cmd_check(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
