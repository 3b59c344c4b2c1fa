import numpy as np
import pytest

from toricflow import potentials as pot
from toricflow.errors import BoundaryPoint, NonConvexInput, NonPositiveDefinite
from toricflow.grids import PotentialGrid


def quadratic_grid(P, R, N):
    from toricflow.grids import geometry_for

    geom = geometry_for(P, R, N)
    vals = 0.5 * np.sum(geom.nodes**2, axis=-1).reshape(geom.shape)
    return PotentialGrid(P, R, N, vals)


class TestReferencePotential:
    def test_cp1_center(self, cp1):
        assert pot.reference_potential(cp1, np.array([0.0])) == pytest.approx(np.log(3))

    def test_cp1_large_argument_stable(self, cp1):
        val = pot.reference_potential(cp1, np.array([100.0]))
        assert np.isfinite(val)
        assert val == pytest.approx(100.0)

    def test_square_center(self, p1xp1):
        # 9 lattice points from the enumeration oracle
        assert pot.reference_potential(p1xp1, np.zeros(2)) == pytest.approx(np.log(9))

    def test_batch_matches_scalar(self, cp2, rng):
        ts = rng.normal(size=(50, 2))
        batch = pot.reference_potential(cp2, ts)
        for t, v in zip(ts, batch):
            assert v == pytest.approx(pot.reference_potential(cp2, t))


class TestEnvelopeGap:
    def test_upper_bound_attained_at_origin(self, cp1):
        assert pot.envelope_gap(cp1, np.array([0.0])) == pytest.approx(np.log(3))

    def test_decay_along_ray(self, cp1):
        assert pot.envelope_gap(cp1, np.array([50.0])) < 1e-20

    def test_two_sided_bound_random(self, cp1, p1xp1, cp2, rng):
        for P in (cp1, p1xp1, cp2):
            ts = rng.uniform(-50, 50, size=(10**4, P.dim))
            gaps = pot.envelope_gap(P, ts)
            assert np.all(gaps >= -1e-12)
            assert np.all(gaps <= np.log(P.n_lattice_points) + 1e-12)

    def test_consistent_with_direct_difference(self, cp2, rng):
        ts = rng.uniform(-3, 3, size=(100, 2))
        direct = pot.reference_potential(cp2, ts) - cp2.support_function(ts)
        assert np.allclose(pot.envelope_gap(cp2, ts), direct, atol=1e-12)


class TestGuillemin:
    def test_cp1_values(self, cp1):
        assert pot.guillemin_potential(cp1, np.array([0.0])) == pytest.approx(0.0)
        expected = 0.5 * np.log(0.5) + 1.5 * np.log(1.5)
        assert pot.guillemin_potential(cp1, np.array([0.5])) == pytest.approx(expected)

    def test_bounded_near_boundary(self, cp1):
        val = pot.guillemin_potential(cp1, np.array([1.0 - 1e-12]))
        assert abs(val) < 2 * np.log(2) + 1e-6

    def test_boundary_point_raises(self, cp1):
        with pytest.raises(BoundaryPoint):
            pot.guillemin_potential(cp1, np.array([1.0]))

    def test_dual_hessian_det_cp1(self, cp1):
        assert pot.dual_hessian_det(cp1, np.array([0.0])) == pytest.approx(0.5)
        assert pot.dual_hessian_det(cp1, np.array([0.5])) == pytest.approx(0.375)

    def test_delta_factor_constant_on_cp1(self, cp1):
        # dual_hessian_det / prod l_r is the smooth positive boundary factor;
        # on the interval it is identically 1/2
        for x in np.linspace(-0.999, 0.999, 41):
            ratio = pot.dual_hessian_det(cp1, np.array([x])) / (
                (1 + x) * (1 - x)
            )
            assert ratio == pytest.approx(0.5, abs=1e-12)

    def test_delta_factor_positive_2d(self, cp2, rng):
        for _ in range(200):
            x = rng.uniform(-0.95, 0.95, size=2)
            if cp2.distance_to_boundary(x) < 0.05:
                continue
            ratio = pot.dual_hessian_det(cp2, x) / np.prod(cp2.facet_values(x))
            assert ratio > 0


class TestCanonicalPotential:
    def test_matches_closed_form_cp1(self, cp1):
        # the dual of the canonical symplectic potential on the interval
        # is 2 log cosh(t/2)
        ts = np.linspace(-8, 8, 33)
        vals = pot.canonical_potential(cp1, ts[:, None])
        expected = 2 * np.log(np.cosh(ts / 2))
        assert np.allclose(vals, expected, atol=1e-11)

    def test_gradient_inversion_2d(self, cp2):
        t = np.array([0.7, -0.4])
        val = pot.canonical_potential(cp2, t)
        eps = 1e-6
        gx = (
            pot.canonical_potential(cp2, t + [eps, 0])
            - pot.canonical_potential(cp2, t - [eps, 0])
        ) / (2 * eps)
        gy = (
            pot.canonical_potential(cp2, t + [0, eps])
            - pot.canonical_potential(cp2, t - [0, eps])
        ) / (2 * eps)
        # gradient must lie strictly inside the polytope
        assert cp2.distance_to_boundary(np.array([gx, gy])) > 0
        assert np.isfinite(val)


class TestNodeQueries:
    def test_quadratic_exact(self, p1xp1):
        u = quadratic_grid(p1xp1, 2.0, 33)
        node = (16, 16)
        assert np.allclose(pot.gradient(u, node), [0.0, 0.0], atol=1e-12)
        assert pot.hessian_det(u, node) == pytest.approx(1.0, abs=1e-10)
        off = (20, 12)
        t = u.node_point(off)
        assert np.allclose(pot.gradient(u, off), t, atol=1e-10)

    def test_reference_center_gradient_and_det(self, cp1):
        u = pot.sample_reference(cp1, 10.0, 1025)
        center = (512,)
        assert pot.gradient(u, center)[0] == pytest.approx(0.0, abs=1e-14)
        assert pot.hessian_det(u, center) == pytest.approx(2.0 / 3.0, abs=1e-4)

    def test_det_second_order(self, cp1):
        errs = []
        for N in (513, 1025):
            u = pot.sample_reference(cp1, 10.0, N)
            center = ((N - 1) // 2,)
            errs.append(abs(pot.hessian_det(u, center) - 2.0 / 3.0))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)

    def test_non_convex_raises(self, cp1):
        from toricflow.grids import geometry_for

        geom = geometry_for(cp1, 2.0, 33)
        vals = -0.5 * geom.nodes[:, 0].reshape(geom.shape) ** 2
        u = PotentialGrid(cp1, 2.0, 33, vals)
        with pytest.raises(NonPositiveDefinite):
            pot.hessian_det(u, (16,))


class TestGradientContainment:
    def test_reference_gradient_inside(self, cp1):
        u = pot.sample_reference(cp1, 12.0, 257)
        assert u.gradient_slack() > 0

    def test_rockafellar_ray_limit(self, cp1, p1xp1):
        # along rays the grid gradient converges to the active vertex
        for P, t0 in ((cp1, np.array([1.0])), (p1xp1, np.array([1.0, 0.5]))):
            R, N = 70.0, 1401 if P.dim == 1 else 281
            u = pot.sample_reference(P, R, N)
            k = P.active_vertex(t0)
            target = P.vertices[k]
            dists = []
            for lam in (1, 2, 4, 8, 16, 32, 64):
                node = u.node_index(lam * t0)
                g = pot.gradient(u, node)
                dists.append(np.linalg.norm(g - target))
            dists = np.array(dists)
            above = dists > 1e-6
            assert np.all(np.diff(dists[above]) < 0)
            assert dists[-1] < 1e-6

    def test_validate_reference(self, p1xp1):
        u = pot.sample_reference(p1xp1, 8.0, 65)
        u.validate()


class TestAdmissibilityResidual:
    def test_reference_box_stable(self, cp1):
        u1 = pot.sample_reference(cp1, 10.0, 512)
        u2 = pot.sample_reference(cp1, 20.0, 1024)
        r1 = pot.admissibility_residual(u1)
        r2 = pot.admissibility_residual(u2)
        assert np.isfinite(r1)
        assert abs(r1 - r2) < 0.01 * max(r1, r2)

    def test_quadratic_grows_with_box(self, cp1):
        for R in (5.0, 10.0):
            u = quadratic_grid(cp1, R, 257)
            res = pot.admissibility_residual(u)
            # |log 1 + t^2/2| peaks at the box corner
            assert res == pytest.approx(R**2 / 2, rel=0.02)

    def test_canonical_dual_residual_cp1(self, cp1):
        # for the dual of the canonical potential the residual is exactly
        # |log of the constant boundary factor| = log 2
        ts = np.linspace(-10, 10, 801)
        vals = pot.canonical_potential(cp1, ts[:, None])
        u = PotentialGrid(cp1, 10.0, 801, vals)
        assert pot.admissibility_residual(u) == pytest.approx(np.log(2), abs=1e-3)


class TestLegendre:
    def test_conjugate_at_origin(self, cp1):
        u = pot.sample_reference(cp1, 12.0, 513)
        G = pot.legendre_transform(u, n_dual=201)
        mid = 100  # x = 0 node
        assert G.valid[mid]
        assert G.values[mid] == pytest.approx(-np.log(3), abs=1e-6)

    def test_biconjugation_second_order(self, cp1):
        errs = []
        for N in (257, 513):
            u = pot.sample_reference(cp1, 10.0, N)
            G = pot.legendre_transform(u, n_dual=N)
            back = pot.conjugate_back(G, u)
            geom = u.geometry
            mask = np.abs(geom.axis) <= 5.0
            errs.append(np.max(np.abs(back[mask] - u.values[mask])))
        assert errs[0] / errs[1] > 2.5  # O(h^2): ratio ~ 4

    def test_smoothed_support_conjugate_near_zero(self, cp1):
        # eps-smoothed envelope: conjugate collapses to ~0 on the polytope
        eps = 1e-2
        from toricflow.grids import geometry_for

        geom = geometry_for(cp1, 10.0, 513)
        vals = eps * pot.reference_potential(
            cp1, geom.nodes / eps
        ).reshape(geom.shape)
        u = PotentialGrid(cp1, 10.0, 513, vals)
        G = pot.legendre_transform(u, n_dual=101)
        good = G.valid
        assert np.nanmax(np.abs(G.values[good])) < eps * np.log(3) + 1e-3

    def test_nonconvex_rejected(self, cp1):
        from toricflow.grids import geometry_for

        geom = geometry_for(cp1, 2.0, 33)
        vals = np.cos(geom.nodes[:, 0]).reshape(geom.shape)
        with pytest.raises(NonConvexInput):
            pot.legendre_transform(PotentialGrid(cp1, 2.0, 33, vals))

    def test_dual_hessian_identity(self, cp1):
        # hessian_det(dual of G0) * det Hess G0 (Du) = 1 up to O(h^2)
        N, R = 513, 12.0
        ts = np.linspace(-R, R, N)
        vals = pot.canonical_potential(cp1, ts[:, None])
        u = PotentialGrid(cp1, R, N, vals)
        products = []
        for i in range(N // 4, 3 * N // 4, 16):
            det_u = pot.hessian_det(u, (i,))
            x = pot.gradient(u, (i,))
            det_g = np.linalg.det(pot.guillemin_hessian(cp1, x))
            products.append(det_u * det_g)
        assert np.allclose(products, 1.0, atol=5e-4)
