"""High-order quadrature over polytopes.

Integrals over the moment polytope (weighted volumes, barycenters,
covariances) are computed by splitting the polytope into simplices and
mapping a tensor Gauss-Legendre rule onto each simplex with the collapsed
(Duffy) coordinate change.  Integrands here are entire functions, so the
rule converges geometrically; a refinement check guards against misuse.
"""

from __future__ import annotations

import weakref

import numpy as np

from .errors import QuadratureUnstable
from .polytope import LatticePolytope

_CACHE: "weakref.WeakKeyDictionary[LatticePolytope, dict]" = weakref.WeakKeyDictionary()


def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def simplex_rule(simplex: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights integrating over one simplex (rows = m+1 vertices)."""
    m = simplex.shape[1]
    x, w = _gauss01(order)
    if m == 1:
        a, b = simplex[0, 0], simplex[1, 0]
        return (a + (b - a) * x)[:, None], np.abs(b - a) * w
    if m == 2:
        v0, v1, v2 = simplex
        area2 = abs(np.linalg.det(np.stack([v1 - v0, v2 - v1])))
        xi, eta = np.meshgrid(x, x, indexing="ij")
        pts = (
            v0[None, :]
            + xi.ravel()[:, None] * (v1 - v0)[None, :]
            + (xi * eta).ravel()[:, None] * (v2 - v1)[None, :]
        )
        wts = (np.outer(w, w).ravel()) * xi.ravel() * area2
        return pts, wts
    if m == 3:
        v0, v1, v2, v3 = simplex
        vol6 = abs(np.linalg.det(np.stack([v1 - v0, v2 - v0, v3 - v0])))
        xi, eta, zeta = np.meshgrid(x, x, x, indexing="ij")
        pts = (
            v0[None, :]
            + xi.ravel()[:, None] * (v1 - v0)[None, :]
            + (xi * eta).ravel()[:, None] * (v2 - v1)[None, :]
            + (xi * eta * zeta).ravel()[:, None] * (v3 - v2)[None, :]
        )
        wts = (
            np.einsum("i,j,k->ijk", w, w, w).ravel()
            * (xi**2 * eta).ravel()
            * vol6
        )
        return pts, wts
    raise NotImplementedError(f"quadrature not implemented for dimension {m}")


def polytope_rule(P: LatticePolytope, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature points/weights over the whole polytope (cached per order)."""
    per_poly = _CACHE.setdefault(P, {})
    if order not in per_poly:
        pts, wts = [], []
        for simplex in P.simplices():
            p, w = simplex_rule(simplex, order)
            pts.append(p)
            wts.append(w)
        per_poly[order] = (np.concatenate(pts), np.concatenate(wts))
    return per_poly[order]


def integrate(
    P: LatticePolytope,
    func,
    order: int = 24,
    rtol: float = 1e-10,
    check: bool = True,
):
    """Integrate func(points) -> values over the polytope.

    func receives an (n, m) array and must return shape (n,) or (n, k).
    With check=True the result is compared against a refined rule and
    QuadratureUnstable is raised when the two disagree beyond rtol.
    """
    pts, wts = polytope_rule(P, order)
    val = np.tensordot(wts, np.asarray(func(pts)), axes=(0, 0))
    if check:
        pts2, wts2 = polytope_rule(P, order + order // 2)
        val2 = np.tensordot(wts2, np.asarray(func(pts2)), axes=(0, 0))
        scale = max(np.max(np.abs(val2)), 1e-300)
        if np.max(np.abs(val - val2)) > rtol * max(scale, 1.0):
            raise QuadratureUnstable(
                f"polytope quadrature drifted by {np.max(np.abs(val - val2)):.3e} "
                f"under refinement (order {order} -> {order + order // 2})"
            )
        return val2
    return val
