"""Convex potential machinery: reference potential, symplectic duals, stencils.

The reference potential is the stabilized log-sum-exp over all lattice
points of the moment polytope; its piecewise-linear envelope is the support
function.  The canonical symplectic potential sum_r l_r log l_r lives on the
dual side; numerical Legendre conjugation moves between the two pictures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryPoint, NonConvexInput, NonPositiveDefinite
from .grids import PotentialGrid, geometry_for
from .polytope import LatticePolytope


# --------------------------------------------------------------------------
# reference potential and support envelope
# --------------------------------------------------------------------------

def reference_potential(P: LatticePolytope, t) -> float | np.ndarray:
    """log sum_k exp<p^(k), t> over all lattice points, overflow-safe.

    Extended-precision input is honored: the result dtype follows t.
    """
    t = np.asarray(t)
    if not np.issubdtype(t.dtype, np.floating):
        t = t.astype(np.float64)
    dots = t @ P.lattice_points.T.astype(t.dtype)
    peak = np.max(dots, axis=-1, keepdims=True)
    out = np.squeeze(peak, -1) + np.log(
        np.sum(np.exp(dots - peak), axis=-1)
    )
    if out.ndim:
        return out
    return out[()] if t.dtype == np.longdouble else float(out)


def envelope_gap(P: LatticePolytope, t) -> float | np.ndarray:
    """reference_potential - support_function; always in [0, log(#points)].

    Computed as log1p of the non-leading exponentials so the decay is
    resolved far below double rounding of the potential itself.
    """
    t = np.asarray(t, dtype=float)
    dots = t @ P.lattice_points.T.astype(float)
    order = np.argsort(dots, axis=-1)
    sorted_dots = np.take_along_axis(dots, order, axis=-1)
    peak = sorted_dots[..., -1]
    rest = np.sum(np.exp(sorted_dots[..., :-1] - peak[..., None]), axis=-1)
    out = np.log1p(rest)
    return out if out.ndim else float(out)


def sample_reference(
    P: LatticePolytope,
    box_radius: float,
    n_per_axis: int,
    translate=None,
    dtype=np.float64,
) -> PotentialGrid:
    """Reference potential sampled on the grid, optionally as u(t - translate).

    dtype=np.longdouble keeps the exponentially small edge curvature above
    the rounding floor of the difference stencils.
    """
    geom = geometry_for(P, box_radius, n_per_axis)
    pts = geom.nodes.astype(dtype)
    if translate is not None:
        pts = pts - np.asarray(translate, dtype=dtype)[None, :]
    values = reference_potential(P, pts).reshape(geom.shape).astype(dtype)
    return PotentialGrid(P, box_radius, n_per_axis, values)


# --------------------------------------------------------------------------
# canonical symplectic potential on the dual side
# --------------------------------------------------------------------------

def guillemin_potential(P: LatticePolytope, x) -> float | np.ndarray:
    """sum_r l_r(x) log l_r(x) on the interior of the polytope."""
    vals = P.facet_values(x)
    if np.any(vals <= 0.0):
        raise BoundaryPoint(f"point {np.asarray(x).tolist()} is not strictly interior")
    out = np.sum(vals * np.log(vals), axis=-1)
    return out if np.ndim(out) else float(out)


def guillemin_hessian(P: LatticePolytope, x) -> np.ndarray:
    """Closed-form Hessian sum_r lambda_r lambda_r^T / l_r(x)."""
    x = np.asarray(x, dtype=float)
    vals = P.facet_values(x)
    if np.any(vals <= 0.0):
        raise BoundaryPoint(f"point {x.tolist()} is not strictly interior")
    lam = P.facet_normals.astype(float)
    return np.einsum("ra,rb,r->ab", lam, lam, 1.0 / vals)


def dual_hessian_det(P: LatticePolytope, x) -> float:
    """(det Hess G0(x))^-1 for the canonical symplectic potential G0."""
    return float(1.0 / np.linalg.det(guillemin_hessian(P, x)))


def canonical_potential(P: LatticePolytope, t, tol: float = 1e-13) -> float | np.ndarray:
    """Legendre dual of the canonical symplectic potential, pointwise exact.

    Solves DG0(x) = t by a damped interior Newton iteration using the
    closed-form gradient/Hessian of G0, then returns <x, t> - G0(x).
    """
    t = np.asarray(t, dtype=float)
    single = t.ndim == 1
    pts = t[None, :] if single else t.reshape(-1, t.shape[-1])
    lam = P.facet_normals.astype(float)
    out = np.empty(len(pts))
    x0 = np.zeros(P.dim)  # the origin is always interior
    for k, ti in enumerate(pts):
        x = x0.copy()
        for _ in range(200):
            l = P.facet_values(x)
            grad = lam.T @ (1.0 + np.log(l)) - ti
            if np.max(np.abs(grad)) < tol * max(1.0, np.max(np.abs(ti))):
                break
            H = np.einsum("ra,rb,r->ab", lam, lam, 1.0 / l)
            step = np.linalg.solve(H, -grad)
            # fraction-to-boundary damping keeps all l_r positive
            dl = lam @ step
            alpha = 1.0
            neg = dl < 0
            if np.any(neg):
                alpha = min(1.0, 0.9 * np.min(-l[neg] / dl[neg]))
            x = x + alpha * step
        l = P.facet_values(x)
        out[k] = x @ ti - np.sum(l * np.log(l))
    result = out.reshape(t.shape[:-1]) if not single else float(out[0])
    return result


# --------------------------------------------------------------------------
# per-node differential queries
# --------------------------------------------------------------------------

def gradient(u: PotentialGrid, node: tuple) -> np.ndarray:
    """Centered gradient at an interior node index."""
    _require_interior(u, node)
    g = np.empty(u.polytope.dim)
    for a in range(u.polytope.dim):
        up, dn = list(node), list(node)
        up[a] += 1
        dn[a] -= 1
        g[a] = (u.values[tuple(up)] - u.values[tuple(dn)]) / (2 * u.h)
    return g


def hessian_matrix(u: PotentialGrid, node: tuple) -> np.ndarray:
    _require_interior(u, node)
    m = u.polytope.dim
    H = np.empty((m, m))
    for a in range(m):
        up, dn = list(node), list(node)
        up[a] += 1
        dn[a] -= 1
        H[a, a] = (
            u.values[tuple(up)] - 2 * u.values[node] + u.values[tuple(dn)]
        ) / u.h**2
    for a in range(m):
        for b in range(a + 1, m):
            acc = 0.0
            for sa, sb in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
                j = list(node)
                j[a] += sa
                j[b] += sb
                acc += (1 if sa == sb else -1) * u.values[tuple(j)]
            H[a, b] = H[b, a] = acc / (4 * u.h**2)
    return H


def hessian_det(u: PotentialGrid, node: tuple) -> float:
    """det of the centered difference Hessian; must be positive definite."""
    H = hessian_matrix(u, node)
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite(
            f"difference Hessian at node {node} is not positive definite"
        )
    return float(np.linalg.det(H))


def _require_interior(u: PotentialGrid, node: tuple) -> None:
    if any(i <= 0 or i >= u.n_per_axis - 1 for i in node):
        raise ValueError(f"node {node} is not an interior node")


def admissibility_residual(u: PotentialGrid) -> float:
    """sup over interior nodes of |log det D^2 u + u|.

    Finite and box-stable exactly for potentials with the right polytope
    asymptotics; grows with the box for inadmissible input (diagnostic).
    """
    geom = u.geometry
    H = geom.hessian(u.values)
    det = u.interior(geom.hessian_det(H))
    if np.any(det <= 0):
        raise NonPositiveDefinite("non-convex potential in admissibility residual")
    vals = u.interior(u.values)
    return float(np.max(np.abs(np.log(det) + vals)))


# --------------------------------------------------------------------------
# grid Legendre transform
# --------------------------------------------------------------------------

@dataclass
class SymplecticPotential:
    """Numerical convex conjugate on a uniform grid over the polytope."""

    polytope: LatticePolytope
    axes: list[np.ndarray]
    values: np.ndarray  # NaN outside the valid interior mask
    valid: np.ndarray  # boolean mask of trustworthy dual nodes

    @property
    def spacing(self) -> np.ndarray:
        return np.array([ax[1] - ax[0] for ax in self.axes])

    def singular_part(self) -> np.ndarray:
        """sum_r l_r log l_r at the valid dual nodes (NaN elsewhere)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        vals = self.polytope.facet_values(pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            g0 = np.sum(np.where(vals > 0, vals * np.log(vals), np.inf), axis=-1)
        g0 = g0.reshape(self.values.shape)
        return np.where(self.valid, g0, np.nan)

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def quadratic_model(self, x: np.ndarray):
        """(value, gradient, Hessian) of a local quadratic fit around x."""
        idx = tuple(
            int(np.clip(np.rint((x[a] - self.axes[a][0]) / self.spacing[a]), 1,
                        len(self.axes[a]) - 2))
            for a in range(len(self.axes))
        )
        m = len(self.axes)
        if not self.valid[idx]:
            raise BoundaryPoint(f"dual point {x.tolist()} has no valid neighborhood")
        g = np.empty(m)
        H = np.empty((m, m))
        v0 = self.values[idx]
        for a in range(m):
            up, dn = list(idx), list(idx)
            up[a] += 1
            dn[a] -= 1
            if not (self.valid[tuple(up)] and self.valid[tuple(dn)]):
                raise BoundaryPoint(f"dual stencil at {x.tolist()} leaves the mask")
            g[a] = (self.values[tuple(up)] - self.values[tuple(dn)]) / (
                2 * self.spacing[a]
            )
            H[a, a] = (
                self.values[tuple(up)] - 2 * v0 + self.values[tuple(dn)]
            ) / self.spacing[a] ** 2
        for a in range(m):
            for b in range(a + 1, m):
                acc = 0.0
                for sa, sb in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
                    j = list(idx)
                    j[a] += sa
                    j[b] += sb
                    if not self.valid[tuple(j)]:
                        raise BoundaryPoint(
                            f"dual stencil at {x.tolist()} leaves the mask"
                        )
                    acc += (1 if sa == sb else -1) * self.values[tuple(j)]
                H[a, b] = H[b, a] = acc / (4 * self.spacing[a] * self.spacing[b])
        delta = x - np.array([self.axes[a][idx[a]] for a in range(m)])
        value = v0 + g @ delta + 0.5 * delta @ H @ delta
        return float(value), g + H @ delta, H


def legendre_transform(u: PotentialGrid, n_dual: int = 0) -> SymplecticPotential:
    """Convex conjugate G(x) = sup_t (<x,t> - u(t)) on a dual grid over Delta.

    The sup is taken over the primal grid and polished with one Newton step
    on the local quadratic model.  Dual nodes whose maximizer hits the primal
    box edge are masked out (the true maximizer left the box).
    """
    # roundoff slack: piecewise-affine inputs have zero second differences
    if u.convexity_defect() < -1e-9 * max(1.0, float(np.max(np.abs(u.values)))):
        raise NonConvexInput("legendre_transform requires a convex grid potential")
    P = u.polytope
    m = P.dim
    geom = u.geometry
    if n_dual <= 0:
        n_dual = min(257, u.n_per_axis)
    lo, hi = P.bounding_box()
    axes = [np.linspace(lo[a], hi[a], n_dual) for a in range(m)]
    mesh = np.meshgrid(*axes, indexing="ij")
    xs = np.stack([g.ravel() for g in mesh], axis=-1)

    vals64 = u.values.astype(np.float64)
    uflat = vals64.ravel()
    grad = geom.gradient(vals64)
    hess = geom.hessian(vals64)
    values = np.full(len(xs), np.nan)
    valid = np.zeros(len(xs), dtype=bool)
    inside = P.contains(xs, tol=-1e-12)  # strictly inside only
    # score all primal nodes per dual node in blocks to bound memory
    nodes64 = geom.nodes.astype(np.float64)
    block = max(1, int(2e7) // max(1, geom.size))
    for start in range(0, len(xs), block):
        xb = xs[start : start + block]
        scores = xb @ nodes64.T - uflat[None, :]
        best = np.argmax(scores, axis=1)
        for row, flat in enumerate(best):
            k = start + row
            if not inside[k]:
                continue
            idx = np.unravel_index(flat, geom.shape)
            if any(i == 0 or i == u.n_per_axis - 1 for i in idx):
                continue  # maximizer on the box edge: conjugate unreliable
            g = np.array([grad[(a,) + idx] for a in range(m)])
            H = np.array(
                [[hess[(a, b) + idx] for b in range(m)] for a in range(m)]
            )
            try:
                delta = np.linalg.solve(H, xs[k] - g)
            except np.linalg.LinAlgError:
                delta = np.zeros(m)
            delta = np.clip(delta, -geom.h, geom.h)
            t_star = nodes64[flat] + delta
            u_star = uflat[flat] + g @ delta + 0.5 * delta @ H @ delta
            values[k] = xs[k] @ t_star - u_star
            valid[k] = True
    shape = (n_dual,) * m
    return SymplecticPotential(P, axes, values.reshape(shape), valid.reshape(shape))


def conjugate_back(G: SymplecticPotential, u_like: PotentialGrid) -> np.ndarray:
    """Conjugate a SymplecticPotential back onto a primal grid.

    Returns value array on u_like's grid: u**(t) = sup_x (<x,t> - G(x)), sup
    over valid dual nodes plus one quadratic polish.
    """
    geom = u_like.geometry
    pts = G.points()
    ok = G.valid.ravel()
    xs = pts[ok]
    gv = G.values.ravel()[ok]
    out = np.empty(geom.size)
    scores_const = -gv
    nodes64 = geom.nodes.astype(np.float64)
    block = max(1, int(2e7) // max(1, len(xs)))
    for start in range(0, geom.size, block):
        tb = nodes64[start : start + block]
        scores = tb @ xs.T + scores_const[None, :]
        best = np.argmax(scores, axis=1)
        for row, j in enumerate(best):
            t = tb[row]
            x0 = xs[j]
            try:
                val, g, H = G.quadratic_model(x0)
                delta = np.linalg.solve(H, t - g)
                delta = np.clip(delta, -G.spacing, G.spacing)
                x1 = x0 + delta
                val1 = val + g @ delta + 0.5 * delta @ H @ delta
                out[start + row] = x1 @ t - val1
            except (BoundaryPoint, np.linalg.LinAlgError):
                out[start + row] = scores[row, j]
    return out.reshape(geom.shape)
