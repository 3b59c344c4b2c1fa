import numpy as np
import pytest

from toricflow import quadrature


def test_constant_recovers_volume(cp1, p1xp1, cp2, blp_cp2):
    for P in (cp1, p1xp1, cp2, blp_cp2):
        val = quadrature.integrate(P, lambda x: np.ones(len(x)))
        assert val == pytest.approx(P.volume(), rel=1e-12)


def test_polynomial_exact_on_square(p1xp1):
    # integral of x^2 y^2 over [-1,1]^2 is 4/9
    val = quadrature.integrate(p1xp1, lambda x: x[:, 0] ** 2 * x[:, 1] ** 2)
    assert val == pytest.approx(4.0 / 9.0, rel=1e-12)


def test_exponential_1d(cp1):
    val = quadrature.integrate(cp1, lambda x: np.exp(x[:, 0]))
    assert val == pytest.approx(np.exp(1) - np.exp(-1), rel=1e-12)


def test_odd_integrand_vanishes(p1xp1):
    val = quadrature.integrate(p1xp1, lambda x: x[:, 0])
    assert abs(val) < 1e-14


def test_vector_integrand(cp2):
    val = quadrature.integrate(cp2, lambda x: x)
    # barycenter of the triangle (-1,-1),(2,-1),(-1,2) is (0,0): both moments vanish
    assert np.allclose(val, 0.0, atol=1e-12)


def test_swap_symmetry_blp(blp_cp2):
    f = lambda x: np.exp(0.3 * (x[:, 0] + x[:, 1])) * x[:, 0]
    g = lambda x: np.exp(0.3 * (x[:, 0] + x[:, 1])) * x[:, 1]
    v1 = quadrature.integrate(blp_cp2, f)
    v2 = quadrature.integrate(blp_cp2, g)
    assert v1 == pytest.approx(v2, abs=1e-13)
