import numpy as np
import pytest

from plqopt import second_order as so
from plqopt.polyhedra import Polyhedron
from plqopt.second_order import INF, IntervalSet as I

R = I.reals()
EMPTY = I.empty()


def jump_map():
    """S(x) = {-1} for x < 0, [-1, 2] at 0, {2} for x > 0."""
    return so.PolylineGraph.from_chain([(0.0, -1.0), (0.0, 2.0)], (-1.0, 0.0), (1.0, 0.0))


class TestIntervalSet:
    def test_merge_and_repr(self):
        s = I(((0, 1), (0.5, 2), (5, 5)))
        assert s.intervals == ((0.0, 2.0), (5.0, 5.0))
        assert repr(s) == "[0, 2] U {5}"
        assert repr(R) == "(-inf, inf)"
        assert repr(EMPTY) == "{}"

    def test_negative_zero_normalized(self):
        assert I.point(-0.0) == I.point(0.0)

    def test_too_many_pieces(self):
        with pytest.raises(ValueError):
            I(((0, 0), (1, 1), (2, 2), (3, 3)))

    def test_contains_intersects(self):
        s = I(((-INF, 0.0),))
        assert s.contains(-5) and not s.contains(1)
        assert s.intersects(I.point(0.0)) and not s.intersects(I.closed(1, 2))


class TestJumpMapCoderivative:
    """The three displayed coderivatives of the jump map."""

    @pytest.mark.parametrize("v,expected", [(0.0, R), (1.0, EMPTY), (-1.0, EMPTY), (3.5, EMPTY)])
    def test_at_origin(self, v, expected):
        assert so.coderivative(jump_map(), (0.0, 0.0), v) == expected

    @pytest.mark.parametrize("v,expected", [(0.0, R), (1.0, I.closed(0, INF)), (2.0, I.closed(0, INF)),
                                            (-1.0, I.point(0)), (-0.3, I.point(0))])
    def test_at_lower_corner(self, v, expected):
        assert so.coderivative(jump_map(), (0.0, -1.0), v) == expected

    @pytest.mark.parametrize("v,expected", [(0.0, R), (-1.0, I.closed(-INF, 0)), (-4.0, I.closed(-INF, 0)),
                                            (1.0, I.point(0)), (0.2, I.point(0))])
    def test_at_upper_corner(self, v, expected):
        assert so.coderivative(jump_map(), (0.0, 2.0), v) == expected

    def test_origin_normals_are_horizontal_line(self):
        N = so.graph_normal_cone(jump_map(), (0.0, 0.0))
        assert N.contains((1.0, 0.0)) and N.contains((-3.0, 0.0))
        assert not N.contains((1.0, 0.1)) and not N.contains((0.0, 1.0))

    def test_lower_corner_cone_is_nonconvex(self):
        N = so.graph_normal_cone(jump_map(), (0.0, -1.0))
        a, b = np.array([1.0, 0.0]), np.array([0.0, -1.0])
        assert N.contains(a) and N.contains(b) and N.contains((1.0, -1.0))
        assert N.contains((-1.0, 0.0)) and N.contains((0.0, 1.0))
        assert not N.contains((-1.0, 1.0))
        # (-1, 0) and (0, 1) lie in the cone but their sum does not
        assert not N.contains(np.array([-1.0, 0.0]) + np.array([0.0, 1.0]))

    def test_upper_corner_second_quadrant(self):
        N = so.graph_normal_cone(jump_map(), (0.0, 2.0))
        assert N.contains((-1.0, 1.0)) and N.contains((1.0, 0.0)) and N.contains((0.0, -1.0))
        assert not N.contains((1.0, 1.0)) and not N.contains((-1.0, -1.0))

    def test_off_graph_is_empty(self):
        N = so.graph_normal_cone(jump_map(), (1.0, 0.0))
        assert not N.on_graph
        assert so.coderivative(jump_map(), (1.0, 0.0), 0.0) == EMPTY


def test_regular_normal_inequality_on_emitted_cones(rng):
    """Regular normals of the convex part satisfy <v, q - p> <= o(|q - p|)
    at nearby graph points; perpendicular parts are limits of the adjacent
    pieces' normals, checked by membership at shifted points."""
    g = jump_map()
    for p in [(0.0, 0.0), (0.0, -1.0), (0.0, 2.0), (-1.0, -1.0), (0.0, 1.0), (3.0, 2.0)]:
        N = so.graph_normal_cone(g, p)
        reg = N.cones[0]
        for _ in range(50):
            v = rng.normal(size=2)
            if not reg.contains(v):
                continue
            for pc in g.pieces:
                t = pc.contains(p)
                if t is None:
                    continue
                for d in pc.outgoing(p):
                    q = np.asarray(p) + 1e-3 * rng.random() * d
                    assert v @ (q - np.asarray(p)) <= 1e-6 * np.linalg.norm(v)
        for d_cone in N.cones[1:]:
            d = np.array(d_cone.rows[0])
            normal = np.array([-d[1], d[0]])
            q = np.asarray(p) + 1e-4 * d
            assert g.contains(q)
            assert so.graph_normal_cone(g, q).contains(normal)


class TestSecondSubdiff:
    def test_square(self):
        f = so.plq_1d(-INF, INF, 0.5)  # x^2
        for x in (-1.0, 0.0, 2.5):
            for v in (-2.0, 0.0, 1.5):
                assert so.second_subdiff_1d(f, x, 2 * x, v) == I.point(2 * v)

    @pytest.mark.parametrize("v", [1.0, -1.0, 0.25])
    def test_v_shape_empty(self, v):
        f = so.plq_1d(-1.0, 2.0, 0.0)
        assert so.second_subdiff_1d(f, 0.0, 0.0, v) == EMPTY

    def test_v_shape_zero_direction(self):
        assert so.second_subdiff_1d(so.plq_1d(-1.0, 2.0, 0.0), 0.0, 0.0, 0.0) == R

    @pytest.mark.parametrize("v,expected", [(1.0, I.closed(0, INF)), (2.0, I.closed(0, INF)),
                                            (-1.0, I.point(0)), (0.0, R)])
    def test_hinge(self, v, expected):
        assert so.second_subdiff_1d(so.plq_1d(0.0, 1.0, 0.0), 0.0, 0.0, v) == expected

    @pytest.mark.parametrize("x,v,expected", [
        (1.0, 1.5, I.point(3.0)), (1.0, -1.0, I.point(-2.0)),
        (0.0, 1.0, I.closed(0, 2)), (0.0, 0.0, I.point(0.0)),
        (0.0, -1.0, I(((0, 0), (-2, -2)))), (-1.0, 1.0, I.point(0.0)), (-3.0, -2.0, I.point(0.0)),
    ])
    def test_one_sided_square(self, x, v, expected):
        # max(0, x)^2: Y = [0, inf), Q = 1/2
        f = so.plq_1d(0.0, INF, 0.5)
        assert so.second_subdiff_1d(f, x, 2 * max(x, 0.0), v) == expected

    def test_not_a_subgradient(self):
        with pytest.raises(ValueError):
            so.second_subdiff_1d(so.plq_1d(0.0, 1.0, 0.0), 0.0, 2.0, 1.0)

    @pytest.mark.parametrize("q", [0.5, 1.0, 3.0])
    def test_smooth_interior_points(self, q):
        # quadratic pieces away from kinks: {f''(x) v} with f'' = 1/q
        f = so.plq_1d(-1.0, 1.0, q)
        x = 0.3 * q
        for v in (-1.0, 2.0):
            got = so.second_subdiff_1d(f, x, x / q, v)
            assert got.intervals[0][0] == pytest.approx(v / q)
            assert len(got.intervals) == 1 and got.intervals[0][0] == got.intervals[0][1]


class TestIndicatorTable:
    """The 5-case table for Y = [0, inf)."""

    Y = Polyhedron.orthant(1)

    @pytest.mark.parametrize("y,v", [(1.0, 0.0), (2.0, -3.0), (0.5, 1.0)])
    def test_interior(self, y, v):
        assert so.nys_interval(self.Y, y, 0.0, v) == I.point(0)

    @pytest.mark.parametrize("v", [-1.0, -0.1])
    def test_corner_negative(self, v):
        assert so.nys_interval(self.Y, 0.0, 0.0, v) == I.closed(-INF, 0)

    @pytest.mark.parametrize("w", [0.0, -1.0, -5.0])
    def test_boundary_zero_direction(self, w):
        assert so.nys_interval(self.Y, 0.0, w, 0.0) == R

    @pytest.mark.parametrize("v", [1.0, 0.1])
    def test_corner_positive(self, v):
        assert so.nys_interval(self.Y, 0.0, 0.0, v) == I.point(0)

    @pytest.mark.parametrize("y,w,v", [(0.0, -1.0, 1.0), (0.0, -1.0, -1.0), (1.0, 1.0, 0.0),
                                       (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (2.0, -1.0, 1.0)])
    def test_otherwise_empty(self, y, w, v):
        assert so.nys_interval(self.Y, y, w, v) == EMPTY

    def test_bounded_interval_endpoints(self):
        assert so.nys_interval((0.0, 1.0), 1.0, 0.0, -1.0) == I.point(0)
        assert so.nys_interval((0.0, 1.0), 1.0, 0.0, 1.0) == I.closed(0, INF)
        assert so.nys_interval((0.0, 1.0), 1.0, 2.0, 0.0) == R
        assert so.nys_interval((0.0, 1.0), 0.5, 0.0, 3.0) == I.point(0)


def test_h_and_indicator_relation():
    """u in d2h(z, y)(v) iff Qu - v in d2 iota_Y(y, z - Qy)(-u), on case grids."""
    us = np.linspace(-3, 3, 25)
    for lo, hi, q in [(0.0, INF, 0.0), (0.0, INF, 1.0), (-1.0, 2.0, 0.0), (-1.0, 1.0, 0.5)]:
        f = so.plq_1d(lo, hi, q)
        pts = []
        for y in {lo, hi, 0.0, 0.5 * (max(lo, -2) + min(hi, 2))}:
            if not np.isfinite(y):
                continue
            for w in (-1.0, 0.0, 1.0):
                z = q * y + w
                if so.is_subgradient(f, z, y):
                    pts.append((z, y))
        assert pts
        for z, y in pts:
            for v in (-1.0, 0.0, 1.0, 2.0):
                lhs = so.second_subdiff_1d(f, z, y, v)
                for u in us:
                    rhs = so.nys_interval((lo, hi), y, z - q * y, -u)
                    assert lhs.contains(u) == rhs.contains(q * u - v), (lo, hi, q, z, y, v, u)


class TestTilt:
    def test_smooth_examples(self):
        assert so.tilt_stable_smooth(np.eye(2))
        assert not so.tilt_stable_smooth(np.diag([1.0, 0.0]))
        assert not so.tilt_stable_smooth([[0.0]])  # x^4 at 0

    def test_smooth_asymmetric(self):
        with pytest.raises(ValueError):
            so.tilt_stable_smooth([[1.0, 1.0], [0.0, 1.0]])

    def test_smooth_random_matrices(self, rng):
        for _ in range(50):
            M = rng.normal(size=(3, 3))
            B = 0.5 * (M + M.T)
            assert so.tilt_stable_smooth(B) == (np.linalg.eigvalsh(B)[0] > 1e-10)

    def test_1d_examples(self):
        assert so.tilt_stable_1d(so.plq_1d(-1.0, 2.0, 0.0), 0.0)
        assert not so.tilt_stable_1d(so.plq_1d(0.0, 1.0, 0.0), 0.0)
        assert so.tilt_stable_1d(so.plq_1d(-INF, INF, 1.0), 0.0)

    def test_1d_needs_stationarity(self):
        with pytest.raises(ValueError):
            so.tilt_stable_1d(so.plq_1d(-INF, INF, 1.0), 1.0)

    def test_oracle_examples(self):
        r = so.tilt_oracle_1d(so.plq_1d(-1.0, 2.0, 0.0), 0.0)
        assert r.stable and r.lipschitz == pytest.approx(0.0, abs=1e-9)
        r = so.tilt_oracle_1d(so.plq_1d(0.0, 1.0, 0.0), 0.0)
        assert not r.stable
        r = so.tilt_oracle_1d(so.plq_1d(-INF, INF, 1.0), 0.0)
        assert r.stable and r.lipschitz == pytest.approx(1.0, abs=0.05)

    @pytest.mark.parametrize("name,Y,q,x", so.TILT_CATALOG, ids=[c[0] for c in so.TILT_CATALOG])
    def test_catalog_agreement(self, name, Y, q, x):
        f = so.plq_1d(Y[0], Y[1], q)
        assert so.tilt_stable_1d(f, x) == bool(so.tilt_oracle_1d(f, x, delta=0.5, step=1e-4))

    def test_catalog_has_both_verdicts(self):
        verdicts = {so.tilt_stable_1d(so.plq_1d(Y[0], Y[1], q), x) for _, Y, q, x in so.TILT_CATALOG}
        assert verdicts == {True, False}
        assert len(so.TILT_CATALOG) == 12


class TestCompositeDiagnostic:
    def test_identity_composite(self):
        from plqopt.composite import CompositeProblem, SmoothMap
        G = SmoothMap.affine_map([[1.0]], [0.0])
        stable = CompositeProblem(Polyhedron.free(1), G, so.plq_1d(-1.0, 2.0, 0.0))
        unstable = CompositeProblem(Polyhedron.free(1), G, so.plq_1d(0.0, 1.0, 0.0))
        assert so.composite_tilt_diagnostic(stable, [0.0]) == "stable"
        assert so.composite_tilt_diagnostic(unstable, [0.0]) == "unstable"

    def test_smooth_h(self):
        from plqopt.composite import CompositeProblem, SmoothMap
        from plqopt.plq import PlqFunction
        h = PlqFunction(Polyhedron.free(2), np.eye(2))  # |z|^2 / 2
        G = SmoothMap.quadratic_map([np.eye(2), np.zeros((2, 2))], np.eye(2), [0.0, 0.0])
        p = CompositeProblem(Polyhedron.free(2), G, h)
        assert so.composite_tilt_diagnostic(p, [0.0, 0.0]) == "stable"
        G2 = SmoothMap.affine_map([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])
        assert so.composite_tilt_diagnostic(CompositeProblem(Polyhedron.free(2), G2, h), [0.0, 0.0]) \
            == "unstable"

    def test_unsupported(self):
        from plqopt.catalog import abs_square_minus_one
        assert so.composite_tilt_diagnostic(abs_square_minus_one(), [1.0]) == "unsupported"
