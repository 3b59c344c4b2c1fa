import itertools

import numpy as np
import pytest

from toricflow.errors import (
    DelzantViolation,
    NonReflexive,
    NotFullDimensional,
    OriginNotInterior,
)
from toricflow.polytope import from_vertices

from conftest import BLP_VERTICES, CP2_VERTICES, P1XP1_VERTICES


def brute_force_lattice_points(vertices):
    """Oracle: scan the integer bounding box, keep hull members.

    Containment is tested against every supporting half-space derived
    directly from vertex pairs/triples, independent of the library code.
    """
    verts = np.asarray(vertices, dtype=float)
    m = verts.shape[1]
    lo = np.floor(verts.min(axis=0)).astype(int)
    hi = np.ceil(verts.max(axis=0)).astype(int)
    points = []
    for p in itertools.product(*[range(lo[c], hi[c] + 1) for c in range(m)]):
        if _in_hull(np.array(p, dtype=float), verts):
            points.append(p)
    return sorted(points)


def _in_hull(x, verts):
    # a point is in the hull iff no hyperplane through vertex subsets separates it
    m = verts.shape[1]
    if m == 1:
        return verts.min() - 1e-9 <= x[0] <= verts.max() + 1e-9
    for combo in itertools.combinations(range(len(verts)), m):
        base = verts[combo[0]]
        rows = verts[list(combo[1:])] - base
        if m == 2:
            n = np.array([-rows[0, 1], rows[0, 0]])
        else:
            n = np.cross(rows[0], rows[1])
        if np.linalg.norm(n) < 1e-12:
            continue
        vals = (verts - base) @ n
        xval = (x - base) @ n
        if np.all(vals <= 1e-9) and xval > 1e-9:
            return False
        if np.all(vals >= -1e-9) and xval < -1e-9:
            return False
    return True


def shoelace(verts2d):
    v = np.asarray(verts2d, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class TestConstruction:
    def test_cp1(self, cp1):
        assert cp1.dim == 1
        assert sorted(map(tuple, cp1.facet_normals)) == [(-1,), (1,)]
        assert list(map(tuple, cp1.lattice_points)) == [(-1,), (0,), (1,)]

    def test_p1xp1_counts(self, p1xp1):
        assert p1xp1.n_facets == 4
        assert p1xp1.n_lattice_points == 9
        oracle = brute_force_lattice_points(P1XP1_VERTICES)
        assert sorted(map(tuple, p1xp1.lattice_points)) == oracle

    def test_cp2_counts(self, cp2):
        assert cp2.n_facets == 3
        assert cp2.n_lattice_points == 10
        oracle = brute_force_lattice_points(CP2_VERTICES)
        assert sorted(map(tuple, cp2.lattice_points)) == oracle

    def test_blp_counts(self, blp_cp2):
        assert blp_cp2.n_facets == 5
        oracle = brute_force_lattice_points(BLP_VERTICES)
        assert sorted(map(tuple, blp_cp2.lattice_points)) == oracle

    def test_non_extreme_points_dropped(self):
        P = from_vertices([[1, 1], [1, -1], [-1, 1], [-1, -1], [0, 0], [1, 0]])
        assert len(P.vertices_exact) == 4

    def test_not_full_dimensional(self):
        with pytest.raises(NotFullDimensional):
            from_vertices([[0, 0], [1, 1], [2, 2]])

    def test_origin_not_interior(self):
        with pytest.raises(OriginNotInterior):
            from_vertices([[1], [3]])

    def test_delzant_violation(self):
        # the diamond: vertex cones have determinant 2
        with pytest.raises(DelzantViolation):
            from_vertices([[1, 0], [0, 1], [-1, 0], [0, -1]])

    def test_non_reflexive(self):
        with pytest.raises(NonReflexive):
            from_vertices([[-1], [2]])

    def test_lattice_contains_vertices(self, cp2):
        pts = set(map(tuple, cp2.lattice_points))
        for v in cp2.vertices_exact:
            assert tuple(int(c) for c in v) in pts

    def test_facet_values_nonnegative_on_lattice(self, blp_cp2):
        vals = blp_cp2.facet_values(blp_cp2.lattice_points.astype(float))
        assert np.all(vals >= -1e-12)


class TestQueries:
    def test_support_square(self, p1xp1):
        assert p1xp1.support_function(np.array([1.0, 2.0])) == pytest.approx(3.0)

    def test_support_zero(self, cp2):
        assert cp2.support_function(np.zeros(2)) == pytest.approx(0.0)

    def test_support_cp1_absolute_value(self, cp1):
        assert cp1.support_function(np.array([-5.0])) == pytest.approx(5.0)

    def test_support_homogeneous_and_convex(self, p1xp1, rng):
        t = rng.normal(size=(200, 2))
        alpha = rng.uniform(0, 3, size=200)
        v = p1xp1.support_function(t)
        v_scaled = p1xp1.support_function(alpha[:, None] * t)
        assert np.max(np.abs(v_scaled - alpha * v)) < 1e-12
        s, u = rng.normal(size=(2, 200, 2))
        lam = rng.uniform(0, 1, size=200)
        mid = p1xp1.support_function(lam[:, None] * s + (1 - lam[:, None]) * u)
        assert np.all(
            mid
            <= lam * p1xp1.support_function(s)
            + (1 - lam) * p1xp1.support_function(u)
            + 1e-12
        )

    def test_active_vertex_cp1(self, cp1):
        idx = cp1.active_vertex(np.array([3.0]))
        assert tuple(cp1.vertices[idx]) == (1.0,)
        assert cp1.active_vertex(np.array([0.0])) == 0

    def test_active_vertex_square(self, p1xp1):
        idx = p1xp1.active_vertex(np.array([2.0, -1.0]))
        assert tuple(p1xp1.vertices[idx]) == (1.0, -1.0)

    def test_distance_to_boundary(self, cp1, p1xp1):
        assert cp1.distance_to_boundary(np.array([0.0])) == pytest.approx(1.0)
        assert cp1.distance_to_boundary(np.array([1.0])) == pytest.approx(0.0)
        assert p1xp1.distance_to_boundary(np.array([0.5, 0.0])) == pytest.approx(0.5)


class TestVolume:
    def test_interval(self, cp1):
        assert cp1.volume() == pytest.approx(2.0)

    def test_square(self, p1xp1):
        assert p1xp1.volume() == pytest.approx(4.0)

    def test_cp2_vs_shoelace(self, cp2):
        assert cp2.volume() == pytest.approx(shoelace(CP2_VERTICES))
        assert cp2.volume() == pytest.approx(4.5)

    def test_blp_vs_shoelace(self, blp_cp2):
        # hull order for the shoelace oracle
        ordered = [[-1, 1], [0, 1], [1, 0], [1, -1], [-1, -1]]
        assert blp_cp2.volume() == pytest.approx(shoelace(ordered))

    @pytest.mark.parametrize("name", ["p1xp1", "cp2"])
    def test_monte_carlo(self, name, request, rng):
        P = request.getfixturevalue(name)
        lo, hi = P.bounding_box()
        n = 10**6
        samples = rng.uniform(lo, hi, size=(n, P.dim))
        hits = np.count_nonzero(P.contains(samples))
        box_vol = float(np.prod(hi - lo))
        p = hits / n
        estimate = p * box_vol
        sigma = box_vol * np.sqrt(p * (1 - p) / n)
        assert abs(estimate - P.volume()) < 3 * sigma + 1e-12


def test_delzant_determinants_all_shipped(cp1, p1xp1, cp2, blp_cp2):
    for P in (cp1, p1xp1, cp2, blp_cp2):
        for v in P.vertices_exact:
            active = [
                row
                for row in P.facet_normals
                if sum(int(c) * int(a) for c, a in zip(v, row)) + 1 == 0
            ]
            assert len(active) == P.dim
            det = round(np.linalg.det(np.array(active, dtype=float)))
            assert det in (-1, 1)
