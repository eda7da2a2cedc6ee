"""Acceptance suite: one test per criterion, summarized as PASS/FAIL lines
at the end of the pytest run (see ``conftest.pytest_terminal_summary``).

Runtime limits are measured inside the test after the session warm-up, so
they exclude JIT compilation.
"""

import json
import time

import numpy as np
import pytest

from _instances import (projection_distance, random_plq, random_triple, regular_normal_excess,
                        unbounded_plq_examples)
from plqopt import catalog, cli, qp
from plqopt import second_order as so
from plqopt.catalog import InstanceSpec
from plqopt.composite import chain_subgradient
from plqopt.duality import GridSpec, dual_augmented_sampled, dual_sampled, exactness_check
from plqopt.polyhedra import dist_to_cone, normal_cone
from plqopt.prox_solver import (ApproxSchedule, ProxParams, consistent_solve, exact_penalty_family,
                                moreau_family, solve, true_residual)
from plqopt.second_order import INF, IntervalSet as I

SEED = 20240611
GRID_1D = GridSpec(points=201)


def criterion(number, title):
    return pytest.mark.criterion(number, title)


@criterion(1, "subgradient oracle equivalence on 200 random PLQ instances")
def test_subgradient_oracle_equivalence():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    kinds = set()
    for _ in range(200):
        h = random_plq(rng)
        kinds.add(h.q_positive_definite)
        z = rng.normal(size=h.m) * 2
        sg = h.subgradient(z)
        ref = qp.brute_force_qp(qp.QpProblem(h.Q, -z, h.Y))
        assert ref.ok
        assert abs(h.value(z) + ref.obj) <= 1e-7
        if sg.unique:
            assert np.linalg.norm(sg.point - ref.x) <= 1e-6
    assert kinds == {True, False}
    assert time.perf_counter() - t0 < 30


@criterion(2, "primal and dual forms of h agree; +inf exactly off the domain")
def test_primal_dual_consistency():
    rng = np.random.default_rng(SEED + 1)
    t0 = time.perf_counter()
    for _ in range(100):
        h = random_plq(rng)
        z = rng.normal(size=h.m) * 2
        assert abs(h.value(z) - h.value_via_dual(z)) <= 1e-7
    h1, h2 = unbounded_plq_examples()
    for _ in range(10):
        z = np.array([rng.normal(), rng.normal() + np.sign(rng.normal())])
        assert h1.value(z) == np.inf and h1.value_via_dual(z) == np.inf
        z = np.array([rng.normal(), 0.0, rng.uniform(0.1, 2)])
        assert h2.value(z) == np.inf and h2.value_via_dual(z) == np.inf
    assert time.perf_counter() - t0 < 10


@criterion(3, "chain rule matches finite differences for positive definite Q")
def test_chain_rule_vs_finite_differences():
    rng = np.random.default_rng(SEED + 2)
    specs = [InstanceSpec("Goal", 3, 4, 2, {"q_shift": 1.0}),
             InstanceSpec("Cvar", 3, 5, 1, {"q_shift": 0.5}),
             InstanceSpec("LassoTaper", 3, 4, 0, {"q_shift": 1.0}),
             InstanceSpec("PhaseRetrieval", 3, 8, 0, {"q_shift": 1.0})]
    for spec in specs:
        p = catalog.build(spec)
        assert p.h.q_positive_definite
        for _ in range(20):
            x = rng.uniform(-0.5, 0.5, p.n)
            g = chain_subgradient(p, x).vector
            fd = np.array([(p.phi(x + 1e-6 * e) - p.phi(x - 1e-6 * e)) / 2e-6 for e in np.eye(p.n)])
            assert np.linalg.norm(g - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))


@criterion(4, "proximal composite method: |x^2-1|, phase retrieval, descent")
def test_proximal_composite_method():
    traces = []
    tr = solve(catalog.abs_square_minus_one(), x0=[3.0])
    traces.append(tr)
    assert tr.residual <= 1e-6 and abs(abs(tr.x[0]) - 1) <= 1e-6

    spec = InstanceSpec("PhaseRetrieval", 5, 20, 0)
    p = catalog.build(spec)
    x0 = catalog.initial_point(spec)
    t0 = time.perf_counter()
    tr = solve(p, ProxParams(), x0)
    assert time.perf_counter() - t0 < 10
    traces.append(tr)
    assert tr.phi <= 1e-8 and tr.residual <= 1e-6

    for x0 in (-2.5, -0.4, 0.7, 1.9):
        traces.append(solve(catalog.abs_square_minus_one(), x0=[x0]))
    for s in range(1, 4):
        spec = InstanceSpec("PhaseRetrieval", 5, 20, s)
        traces.append(solve(catalog.build(spec), x0=catalog.initial_point(spec)))
    assert all(t.descent_holds() for t in traces)


@criterion(5, "CVaR composite optimum equals the Rockafellar-Uryasev LP")
def test_cvar_equivalence():
    for seed in range(5):
        spec = InstanceSpec("Cvar", 4, 10, seed)
        tr = solve(catalog.build(spec), x0=catalog.initial_point(spec))
        assert abs(tr.phi - catalog.cvar_ru_reference(spec)[0]) <= 1e-6


@criterion(6, "duality gap: sampled psi profile and a negative dual supremum")
def test_duality_counterexample():
    p = catalog.duality_gap_instance()
    for y2 in (0.0, 0.1, 0.25, 0.4, 0.49, 0.5, 0.75, 2.0, 10.0, 100.0):
        got = dual_sampled(p, [1.0, y2], GRID_1D).value
        assert abs(got - catalog.duality_gap_psi(y2)) <= 1e-6
    sup = max(dual_sampled(p, [1.0, t], GRID_1D).value for t in np.linspace(0, 100, 101))
    assert sup < 0
    xs = np.linspace(-1, 1, 2001)
    assert min(p.phi([x]) for x in xs) == 0.0


@criterion(7, "exactness fails for the plain and holds for the augmented Rockafellian")
def test_exactness():
    p = catalog.single_equality_instance()
    us = [np.array([a, b]) for a in np.linspace(-1, 1, 9) for b in np.linspace(-1, 1, 9)]
    plain = exactness_check(p, "plain", [1.0, 0.0], us, inf_phi=0.0, grid=GRID_1D)
    assert not plain.holds
    aug = exactness_check(p, "augmented", [1.0, 0.0], us, theta=2.0, inf_phi=0.0, grid=GRID_1D)
    assert aug.holds
    assert abs(dual_augmented_sampled(p, [1.0, 0.0], 2.0, GRID_1D).value) <= 1e-8


@criterion(8, "consistent approximation: Moreau and exact-penalty schedules")
def test_consistent_approximation():
    p = catalog.abs_square_minus_one()
    sched = ApproxSchedule.moreau()
    assert sched.nu_list == (1, 10, 100, 1000)
    stages = consistent_solve(moreau_family(p), sched, [3.0])
    for st in stages:
        assert st.criterion_met and st.trace.residual <= 1.0 / st.nu
    assert true_residual(p, stages[-1].trace.triple).residual <= 1e-3

    nlp = catalog.circle_nlp()
    sched = ApproxSchedule.exact_penalty(12)
    assert sched.theta_list[-1] == 2.0 ** 12
    stages = consistent_solve(exact_penalty_family(nlp), sched, [0.0, 0.0])
    assert np.linalg.norm(stages[-1].trace.x - [-1.0, -1.0]) <= 1e-3


@criterion(9, "second-order golden tables as exact set equalities")
def test_second_order_tables():
    g = so.PolylineGraph.from_chain([(0.0, -1.0), (0.0, 2.0)], (-1.0, 0.0), (1.0, 0.0))
    R, E = I.reals(), I.empty()
    table = {
        (0.0, 0.0): [(0.0, R), (1.0, E), (-1.0, E)],
        (0.0, -1.0): [(1.0, I.closed(0, INF)), (-1.0, I.point(0)), (0.0, R)],
        (0.0, 2.0): [(-1.0, I.closed(-INF, 0)), (1.0, I.point(0)), (0.0, R)],
    }
    for pt, rows in table.items():
        for v, expected in rows:
            assert so.coderivative(g, pt, v) == expected

    square = so.plq_1d(-INF, INF, 0.5)
    for x in (-1.0, 0.0, 2.0):
        for v in (-1.0, 0.5, 3.0):
            assert so.second_subdiff_1d(square, x, 2 * x, v) == I.point(2 * v)
    vee = so.plq_1d(-1.0, 2.0, 0.0)
    for v in (-1.0, 1.0):
        assert so.second_subdiff_1d(vee, 0.0, 0.0, v) == E
    hinge = so.plq_1d(0.0, 1.0, 0.0)
    assert so.second_subdiff_1d(hinge, 0.0, 0.0, 1.0) == I.closed(0, INF)
    assert so.second_subdiff_1d(hinge, 0.0, 0.0, -1.0) == I.point(0)

    Y = (0.0, INF)
    assert so.nys_interval(Y, 1.0, 0.0, 2.0) == I.point(0)
    assert so.nys_interval(Y, 0.0, 0.0, -1.0) == I.closed(-INF, 0)
    assert so.nys_interval(Y, 0.0, -1.0, 0.0) == R
    assert so.nys_interval(Y, 0.0, 0.0, 1.0) == I.point(0)
    assert so.nys_interval(Y, 0.0, -1.0, 1.0) == E


@criterion(10, "tilt stability verdicts agree with the brute-force oracle")
def test_tilt_stability():
    t0 = time.perf_counter()
    verdicts = {}
    for name, Y, q, x in so.TILT_CATALOG:
        f = so.plq_1d(Y[0], Y[1], q)
        v = so.tilt_stable_1d(f, x)
        assert v == bool(so.tilt_oracle_1d(f, x, delta=0.5, step=1e-4)), name
        verdicts[(Y, q, x)] = v
    assert len(so.TILT_CATALOG) == 12
    assert so.tilt_stable_1d(so.plq_1d(-1.0, 2.0, 0.0), 0.0)
    assert not so.tilt_stable_1d(so.plq_1d(0.0, 1.0, 0.0), 0.0)
    rng = np.random.default_rng(SEED + 10)
    for _ in range(50):
        n = int(rng.integers(1, 5))
        M = rng.normal(size=(n, n))
        B = 0.5 * (M + M.T)
        assert so.tilt_stable_smooth(B) == (np.linalg.eigvalsh(B)[0] > 1e-10)
    assert time.perf_counter() - t0 < 30


@criterion(11, "normal cone distance matches a projection QP; regular-normal inequality")
def test_normal_cones():
    rng = np.random.default_rng(SEED + 11)
    for _ in range(100):
        P, x, v = random_triple(rng)
        nc = normal_cone(P, x)
        assert abs(dist_to_cone(nc, v) - projection_distance(nc, v)) <= 1e-7
        for gen in nc.gen_rows:
            gen = gen / np.linalg.norm(gen)
            assert regular_normal_excess(P, x, gen, rng, samples=50) <= 1e-6


@criterion(12, "VI merit: oracle equilibrium and prox solve")
def test_vi_merit():
    spec = InstanceSpec("SpatialVI", 8, 9, 0)
    assert catalog.vi_merit(spec, catalog.vi_reference(spec)) <= 1e-7
    tr = solve(catalog.build(spec), x0=catalog.initial_point(spec))
    assert catalog.vi_merit(spec, tr.x) <= 1e-5


@criterion(13, "CLI: byte-identical JSON and the documented exit codes")
def test_cli(tmp_path, capsys):
    texts = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        assert cli.main(["solve", "problems/phase_retrieval.yaml", "--method", "prox",
                         "--json", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["residual"] <= 1e-6
        doc.pop("wall_time")
        texts.append(json.dumps(doc, sort_keys=True, indent=2))
    assert texts[0] == texts[1]

    bad = tmp_path / "bad.yaml"
    bad.write_text("X: {type: free, dim: 1}\nY: {type: free, dim: 2}\nQ: [[1, 2], [0, 1]]\n"
                   "G: {type: affine, A: [[1], [0]], b: [0, 0]}\n")
    assert cli.main(["solve", str(bad)]) == 1
    assert "Q" in capsys.readouterr().err
    typo = tmp_path / "typo.yaml"
    typo.write_text("X: {type: free, dimension: 1}\n")
    assert cli.main(["solve", str(typo)]) == 1
    assert cli.main(["solve", "problems/abs_square.yaml", "--max-iter", "1"]) == 2
