import numpy as np
import pytest
from hypothesis import given, strategies as st

from _instances import projection_distance, random_triple, regular_normal_excess
from plqopt import qp
from plqopt.polyhedra import (ConeDescription, EmptyPolyhedronError, Polyhedron, contains,
                              dist_to_cone, normal_cone, recession_cone, vertices)


def unit_square():
    return Polyhedron.cube(2, 0.0, 1.0)


class TestContains:
    def test_interior_point(self):
        assert contains(unit_square(), [0.5, 0.5], 0.0)

    def test_violated_bound(self):
        assert not contains(unit_square(), [1 + 1e-6, 0.0], 1e-9)

    def test_simplex_centroid(self):
        assert Polyhedron.simplex(3).contains(np.full(3, 1 / 3))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            unit_square().contains([0.5])


class TestConstruction:
    def test_box_lower_above_upper(self):
        with pytest.raises(ValueError):
            Polyhedron.box([1.0], [0.0])

    def test_infinite_bounds_drop_rows(self):
        P = Polyhedron.box([0.0, -np.inf], [np.inf, 1.0])
        assert P.A_ub.shape == (2, 2)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            Polyhedron.from_rows(1, A_ub=[[np.nan]], b_ub=[0.0])

    def test_arrays_read_only(self):
        P = unit_square()
        with pytest.raises(ValueError):
            P.A_ub[0, 0] = 3.0

    def test_empty_detected(self):
        P = Polyhedron.from_rows(1, A_ub=[[1.0], [-1.0]], b_ub=[0.0, -1.0])
        assert P.is_empty
        assert P.feasible_point is None

    def test_product_and_intersect(self):
        P = Polyhedron.singleton([1.0]).product(Polyhedron.orthant(1))
        assert P.dim == 2 and P.contains([1.0, 3.0]) and not P.contains([0.0, 3.0])
        Q = unit_square().intersect(Polyhedron.halfspace([1.0, 1.0], 1.0))
        assert Q.contains([0.5, 0.5]) and not Q.contains([0.8, 0.8])

    def test_boundedness(self):
        assert unit_square().is_bounded
        assert not Polyhedron.orthant(2).is_bounded
        assert Polyhedron.simplex(3).is_bounded

    def test_as_inequalities(self):
        P = Polyhedron.simplex(3)
        A, b = P.as_inequalities()
        y = np.array([0.2, 0.3, 0.5])
        assert np.all(A.T @ y <= b + 1e-12)
        assert np.any(A.T @ np.array([0.2, 0.3, 0.6]) > b)


class TestNormalCone:
    def test_interior_is_zero(self):
        nc = normal_cone(unit_square(), [0.5, 0.5])
        assert nc.span_rows.shape[0] == 0 and nc.gen_rows.shape[0] == 0
        assert dist_to_cone(nc, [3.0, 4.0]) == pytest.approx(5.0)

    def test_corner_is_negative_quadrant(self):
        nc = normal_cone(unit_square(), [0.0, 0.0])
        assert nc.contains([-1.0, -2.0]) and nc.contains([0.0, -1.0])
        assert not nc.contains([1.0, -1.0])

    def test_halfplane(self):
        nc = normal_cone(Polyhedron.halfspace([0.0, 1.0], 0.0), [3.0, 0.0])
        assert nc.contains([0.0, 2.0]) and not nc.contains([0.1, 2.0])
        assert not nc.contains([0.0, -1.0])

    def test_outside_is_empty_marker(self):
        nc = normal_cone(unit_square(), [2.0, 0.0])
        assert nc.empty
        assert dist_to_cone(nc, [0.0, 0.0]) == np.inf

    def test_equality_rows_give_span(self):
        nc = normal_cone(Polyhedron.simplex(3), np.full(3, 1 / 3))
        assert nc.contains([5.0, 5.0, 5.0]) and nc.contains([-2.0, -2.0, -2.0])
        assert not nc.contains([1.0, 0.0, 0.0])


class TestDistToCone:
    def test_orthant(self):
        nc = ConeDescription(np.zeros((0, 2)), np.eye(2), np.zeros(2), (), False)
        assert dist_to_cone(nc, [-1.0, 2.0]) == pytest.approx(1.0)

    def test_ray(self):
        nc = ConeDescription(np.zeros((0, 2)), np.array([[0.0, 1.0]]), np.zeros(2), (), False)
        assert dist_to_cone(nc, [1.0, 1.0]) == pytest.approx(1.0)

    def test_zero_for_admissible_combinations(self, rng):
        P = Polyhedron.cube(3, 0.0, 1.0).intersect(Polyhedron.halfspace([1, 1, 1], 2.0))
        for x in ([0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.5, 0.0], [0.5, 0.5, 0.5]):
            nc = normal_cone(P, x)
            for _ in range(20):
                assert dist_to_cone(nc, nc.sample(rng)) <= 1e-9


def test_dist_to_cone_matches_projection_qp(rng):
    for _ in range(100):
        P, x, v = random_triple(rng)
        nc = normal_cone(P, x)
        assert abs(dist_to_cone(nc, v) - projection_distance(nc, v)) <= 1e-7


def test_sampled_normals_satisfy_regular_normal_inequality(rng):
    for _ in range(10):
        P, x, _ = random_triple(rng)
        nc = normal_cone(P, x)
        for g in list(nc.gen_rows) + [nc.sample(rng)]:
            g = g / max(np.linalg.norm(g), 1e-300)
            assert regular_normal_excess(P, x, g, rng, samples=200) <= 1e-6


class TestRecessionCone:
    def test_box(self):
        R = recession_cone(Polyhedron.cube(3))
        assert R.is_bounded

    def test_equality_penalty_shape(self):
        Y = Polyhedron.singleton([1.0]).product(Polyhedron.free(1), Polyhedron.orthant(1))
        R = recession_cone(Y)
        assert R.contains([0.0, -3.0, 2.0]) and not R.contains([0.0, 0.0, -1.0])
        assert not R.contains([1.0, 0.0, 0.0])

    def test_halfspace_is_itself(self, rng):
        H = Polyhedron.halfspace([1.0, 0.0], 0.0)
        R = recession_cone(H)
        for p in rng.normal(size=(50, 2)):
            assert R.contains(p) == H.contains(p)

    def test_empty_raises(self):
        with pytest.raises(EmptyPolyhedronError):
            recession_cone(Polyhedron.from_rows(1, A_ub=[[1.0], [-1.0]], b_ub=[0.0, -1.0]))

    def test_idempotent(self, rng):
        for _ in range(10):
            P, _, _ = random_triple(rng)
            R1 = recession_cone(P)
            R2 = recession_cone(R1)
            for p in rng.normal(size=(50, P.dim)):
                assert R1.contains(p, 1e-12) == R2.contains(p, 1e-12)

    def test_directions_stay_inside(self, rng):
        P = Polyhedron.orthant(2).intersect(Polyhedron.halfspace([1.0, -1.0], 1.0))
        R = recession_cone(P)
        base = np.array([0.5, 0.2])
        for d in rng.normal(size=(100, 2)):
            if R.contains(d):
                assert P.contains(base + 1e3 * d, 1e-9)


class TestVertices:
    def test_square(self):
        V = sorted(map(tuple, vertices(unit_square())))
        assert V == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]

    def test_simplex(self):
        V = np.array(sorted(map(tuple, np.round(vertices(Polyhedron.simplex(3)), 12))))
        np.testing.assert_allclose(V, np.eye(3)[::-1], atol=1e-12)

    def test_interval(self):
        assert sorted(float(v[0]) for v in vertices(Polyhedron.cube(1))) == [-1.0, 1.0]

    def test_unbounded_rejected(self):
        with pytest.raises(ValueError):
            vertices(Polyhedron.orthant(2))

    def test_points_in_hull(self, rng):
        P = unit_square().intersect(Polyhedron.halfspace([1.0, 2.0], 2.0))
        V = np.array(vertices(P))
        assert all(P.contains(v, 1e-12) for v in V)
        k = V.shape[0]
        for _ in range(30):
            x = qp.project(P, rng.random(2))
            # convex weights lam >= 0 with V' lam = x, sum lam = 1
            A_eq = np.vstack([V.T, np.ones((1, k))])
            sol = qp.solve_arrays(np.zeros((k, k)), np.zeros(k), A_eq, np.append(x, 1.0),
                                  -np.eye(k), np.zeros(k))
            assert sol.ok


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(0.1, 3), min_size=2, max_size=2))
def test_box_membership_matches_bounds(center, width):
    lo = np.array(center)
    hi = lo + np.array(width)
    P = Polyhedron.box(lo, hi)
    mid = 0.5 * (lo + hi)
    assert P.contains(mid)
    assert not P.contains(hi + 0.01)
