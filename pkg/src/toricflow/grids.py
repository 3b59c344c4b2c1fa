"""Uniform grid potentials and their finite-difference machinery.

A convex potential u lives on a uniform node grid over [-R, R]^m.  Outside
the box the potential is extended affinely with slope equal to the active
polytope vertex of the outward direction, which matches the asymptotics of
every admissible potential.  All difference stencils (gradient, Hessian,
Hessian determinant and inverse) are centered and second order; stencils at
edge nodes reach into the affine extension through precomputed ghost maps.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import MinimizerOnBoundary, NonConvexInput, NonPositiveDefinite
from .polytope import LatticePolytope

_GEOMETRIES: "weakref.WeakKeyDictionary[LatticePolytope, dict]" = (
    weakref.WeakKeyDictionary()
)


def geometry_for(P: LatticePolytope, box_radius: float, n_per_axis: int) -> "GridGeometry":
    per_poly = _GEOMETRIES.setdefault(P, {})
    key = (float(box_radius), int(n_per_axis))
    if key not in per_poly:
        per_poly[key] = GridGeometry(P, float(box_radius), int(n_per_axis))
    return per_poly[key]


class GridGeometry:
    """Precomputed stencil/ghost data for one (polytope, box, resolution)."""

    def __init__(self, P: LatticePolytope, box_radius: float, n_per_axis: int):
        if n_per_axis < 16:
            raise ValueError("n_per_axis must be at least 16")
        self.polytope = P
        self.dim = P.dim
        self.box_radius = box_radius
        self.n = n_per_axis
        self.h = 2.0 * box_radius / (n_per_axis - 1)
        # extended-precision axis: stencil accuracy near the box edge relies
        # on exactly uniform sampling positions
        self.axis = np.linspace(
            np.longdouble(-box_radius), np.longdouble(box_radius), n_per_axis,
            dtype=np.longdouble,
        )
        self.shape = (n_per_axis,) * self.dim
        self.size = n_per_axis**self.dim
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        self.nodes = np.stack([g.ravel() for g in mesh], axis=-1)  # (size, m)
        self._pad_cache: dict[int, tuple] = {}
        self._neighbor_cache: dict[tuple, np.ndarray] = {}

    # ------------------------------------------------------------- padding

    def _pad_maps(self, width: int):
        """Ghost index maps for an affine-cap pad of the given width."""
        if width not in self._pad_cache:
            m, n = self.dim, self.n
            idx = np.indices((n + 2 * width,) * m).reshape(m, -1) - width
            clamped = np.clip(idx, 0, n - 1)
            ghost = np.any(idx != clamped, axis=0)
            base_flat = np.ravel_multi_index(clamped[:, ghost], self.shape)
            t_clamped = self.axis[clamped[:, ghost]].astype(float)
            slopes = self.polytope.vertices[
                self.polytope.active_vertex_array(t_clamped.T)
            ]
            h_exact = self.axis[1] - self.axis[0]
            offsets = (idx[:, ghost] - clamped[:, ghost]) * h_exact
            dots = np.einsum("ga,ag->g", slopes.astype(np.longdouble), offsets)
            self._pad_cache[width] = (np.flatnonzero(ghost), base_flat, dots)
        return self._pad_cache[width]

    def pad(self, values: np.ndarray, width: int = 1) -> np.ndarray:
        """Affine-cap extension of a value grid by `width` ghost cells."""
        ghost_flat, base_flat, dots = self._pad_maps(width)
        out = np.empty((self.n + 2 * width,) * self.dim, dtype=values.dtype)
        inner = (slice(width, width + self.n),) * self.dim
        out[inner] = values
        out.ravel()[ghost_flat] = values.ravel()[base_flat] + dots.astype(
            values.dtype
        )
        return out

    def _view(self, padded: np.ndarray, offset) -> np.ndarray:
        return padded[tuple(slice(1 + o, 1 + o + self.n) for o in offset)]

    # --------------------------------------------------------- derivatives

    def gradient(self, values: np.ndarray, padded: np.ndarray | None = None) -> np.ndarray:
        """Centered gradient at every node, shape (m,) + grid shape."""
        P = self.pad(values) if padded is None else padded
        out = np.empty((self.dim,) + self.shape, dtype=P.dtype)
        for a in range(self.dim):
            e = [0] * self.dim
            e[a] = 1
            out[a] = (self._view(P, e) - self._view(P, [-x for x in e])) / (2 * self.h)
        return out

    def hessian(self, values: np.ndarray, padded: np.ndarray | None = None) -> np.ndarray:
        """Centered difference Hessian, shape (m, m) + grid shape."""
        P = self.pad(values) if padded is None else padded
        m = self.dim
        H = np.empty((m, m) + self.shape, dtype=P.dtype)
        c = self._view(P, [0] * m)
        for a in range(m):
            e = [0] * m
            e[a] = 1
            H[a, a] = (
                self._view(P, e) - 2 * c + self._view(P, [-x for x in e])
            ) / self.h**2
        for a in range(m):
            for b in range(a + 1, m):
                pp = [0] * m
                pm = [0] * m
                pp[a], pp[b] = 1, 1
                pm[a], pm[b] = 1, -1
                H[a, b] = (
                    self._view(P, pp)
                    - self._view(P, pm)
                    - self._view(P, [-x for x in pm])
                    + self._view(P, [-x for x in pp])
                ) / (4 * self.h**2)
                H[b, a] = H[a, b]
        return H

    def hessian_det(self, H: np.ndarray) -> np.ndarray:
        m = self.dim
        if m == 1:
            return H[0, 0].copy()
        if m == 2:
            return H[0, 0] * H[1, 1] - H[0, 1] ** 2
        if m == 3:
            return (
                H[0, 0] * (H[1, 1] * H[2, 2] - H[1, 2] ** 2)
                - H[0, 1] * (H[0, 1] * H[2, 2] - H[1, 2] * H[0, 2])
                + H[0, 2] * (H[0, 1] * H[1, 2] - H[1, 1] * H[0, 2])
            )
        raise NotImplementedError

    def is_positive_definite(self, H: np.ndarray) -> np.ndarray:
        """Sylvester check per node; boolean array over the grid."""
        m = self.dim
        ok = H[0, 0] > 0
        if m >= 2:
            ok &= H[0, 0] * H[1, 1] - H[0, 1] ** 2 > 0
        if m == 3:
            ok &= self.hessian_det(H) > 0
        return ok

    def hessian_inverse(self, H: np.ndarray, det: np.ndarray) -> np.ndarray:
        m = self.dim
        inv = np.empty_like(H)
        if m == 1:
            inv[0, 0] = 1.0 / H[0, 0]
            return inv
        if m == 2:
            inv[0, 0] = H[1, 1] / det
            inv[1, 1] = H[0, 0] / det
            inv[0, 1] = inv[1, 0] = -H[0, 1] / det
            return inv
        if m == 3:
            inv[0, 0] = (H[1, 1] * H[2, 2] - H[1, 2] ** 2) / det
            inv[1, 1] = (H[0, 0] * H[2, 2] - H[0, 2] ** 2) / det
            inv[2, 2] = (H[0, 0] * H[1, 1] - H[0, 1] ** 2) / det
            inv[0, 1] = inv[1, 0] = (H[0, 2] * H[1, 2] - H[0, 1] * H[2, 2]) / det
            inv[0, 2] = inv[2, 0] = (H[0, 1] * H[1, 2] - H[0, 2] * H[1, 1]) / det
            inv[1, 2] = inv[2, 1] = (H[0, 1] * H[0, 2] - H[0, 0] * H[1, 2]) / det
            return inv
        raise NotImplementedError

    # ------------------------------------------------- sparse stencil maps

    def neighbor_columns(self, offset: tuple) -> np.ndarray:
        """Flat column index of node+offset with edge clamping (ghost fold)."""
        if offset not in self._neighbor_cache:
            m, n = self.dim, self.n
            idx = np.indices(self.shape).reshape(m, -1)
            shifted = np.clip(idx + np.array(offset)[:, None], 0, n - 1)
            self._neighbor_cache[offset] = np.ravel_multi_index(shifted, self.shape)
        return self._neighbor_cache[offset]

    # -------------------------------------------------------- interpolation

    def sample(self, values: np.ndarray, points: np.ndarray, pad_width: int | None = None) -> np.ndarray:
        """Cubic-spline samples of the capped extension at arbitrary points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        reach = np.max(np.abs(points)) if points.size else 0.0
        if pad_width is None:
            pad_width = max(2, int(np.ceil((reach - self.box_radius) / self.h)) + 3)
        padded = self.pad(values, pad_width).astype(np.float64)
        coords = (points.T + self.box_radius) / self.h + pad_width
        return map_coordinates(padded, coords, order=3, mode="nearest")

    def translated_values(self, values: np.ndarray, shift: np.ndarray) -> np.ndarray:
        """Resample so that new(t) = old(t + shift); cubic interpolation."""
        shift = np.asarray(shift, dtype=float)
        pad_width = int(np.ceil(np.max(np.abs(shift)) / self.h)) + 3
        padded = self.pad(values, pad_width).astype(np.float64)
        axis64 = self.axis.astype(np.float64)
        mesh = np.meshgrid(*([axis64] * self.dim), indexing="ij")
        coords = [
            (mesh[a] + shift[a] + self.box_radius) / self.h + pad_width
            for a in range(self.dim)
        ]
        return map_coordinates(padded, coords, order=3, mode="nearest")


@dataclass(eq=False)
class PotentialGrid:
    """A convex potential sampled on the uniform grid of a GridGeometry."""

    polytope: LatticePolytope
    box_radius: float
    n_per_axis: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if not np.issubdtype(self.values.dtype, np.floating):
            self.values = self.values.astype(np.float64)
        if self.values.shape != (self.n_per_axis,) * self.polytope.dim:
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"({self.n_per_axis},)*{self.polytope.dim}"
            )

    @property
    def geometry(self) -> GridGeometry:
        return geometry_for(self.polytope, self.box_radius, self.n_per_axis)

    @property
    def h(self) -> float:
        return self.geometry.h

    @property
    def axis(self) -> np.ndarray:
        return self.geometry.axis

    def copy(self) -> "PotentialGrid":
        return PotentialGrid(
            self.polytope, self.box_radius, self.n_per_axis, self.values.copy()
        )

    def with_values(self, values: np.ndarray) -> "PotentialGrid":
        return PotentialGrid(self.polytope, self.box_radius, self.n_per_axis, values)

    # ------------------------------------------------------------ invariants

    def interior(self, arr: np.ndarray) -> np.ndarray:
        """Restrict a grid-shaped array to interior nodes."""
        sl = (slice(1, -1),) * self.polytope.dim
        return arr[sl]

    def convexity_defect(self) -> float:
        """Most negative leading-minor value over interior nodes (>0 is convex)."""
        geom = self.geometry
        H = geom.hessian(self.values)
        m = self.polytope.dim
        worst = np.min(self.interior(H[0, 0]))
        if m >= 2:
            worst = min(worst, np.min(self.interior(H[0, 0] * H[1, 1] - H[0, 1] ** 2)))
        if m == 3:
            worst = min(worst, np.min(self.interior(geom.hessian_det(H))))
        return float(worst)

    def gradient_slack(self) -> float:
        """min over interior nodes of the signed distance of Du to the polytope."""
        geom = self.geometry
        grad = geom.gradient(self.values)
        pts = np.moveaxis(grad, 0, -1)
        dist = self.polytope.distance_to_boundary(
            self.interior(pts.reshape(self.values.shape + (self.polytope.dim,)))
        )
        return float(np.min(dist))

    def validate(self) -> None:
        """Check discrete convexity and gradient containment; raise otherwise."""
        if self.convexity_defect() <= 0.0:
            raise NonConvexInput(
                f"second-difference Hessian not positive definite "
                f"(worst minor {self.convexity_defect():.3e})"
            )
        slack = self.gradient_slack()
        if slack < -self.h:
            raise NonConvexInput(
                f"gradient image leaves the polytope by {-slack:.3e} (> h = {self.h:.3e})"
            )

    # ------------------------------------------------------------- evaluation

    def node_index(self, t) -> tuple:
        """Nearest node multi-index for a point t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.rint((t + self.box_radius) / self.h).astype(int)
        idx = np.clip(idx, 0, self.n_per_axis - 1)
        return tuple(int(i) for i in idx)

    def node_point(self, index: tuple) -> np.ndarray:
        return -self.box_radius + np.asarray(index, dtype=float) * self.h

    def min_location(self):
        """Sub-grid minimizer and minimum via a local quadratic fit.

        Returns (p, m, index).  Raises MinimizerOnBoundary when the discrete
        argmin touches the box edge.
        """
        geom = self.geometry
        flat = int(np.argmin(self.values))
        idx = np.unravel_index(flat, self.values.shape)
        if any(i == 0 or i == self.n_per_axis - 1 for i in idx):
            raise MinimizerOnBoundary(
                f"potential minimizer at grid node {idx} lies on the box edge"
            )
        m = self.polytope.dim
        g = np.empty(m)
        H = np.empty((m, m))
        for a in range(m):
            up = list(idx)
            dn = list(idx)
            up[a] += 1
            dn[a] -= 1
            g[a] = (self.values[tuple(up)] - self.values[tuple(dn)]) / (2 * geom.h)
            H[a, a] = (
                self.values[tuple(up)] - 2 * self.values[idx] + self.values[tuple(dn)]
            ) / geom.h**2
        for a in range(m):
            for b in range(a + 1, m):
                quad = []
                for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    j = list(idx)
                    j[a] += sa
                    j[b] += sb
                    quad.append(self.values[tuple(j)])
                H[a, b] = H[b, a] = (quad[0] - quad[1] - quad[2] + quad[3]) / (
                    4 * geom.h**2
                )
        g64, H64 = g.astype(np.float64), H.astype(np.float64)
        try:
            delta = np.linalg.solve(H64, -g64)
        except np.linalg.LinAlgError:
            raise NonPositiveDefinite("singular Hessian at the discrete minimizer")
        delta = np.clip(delta, -geom.h, geom.h)
        p = self.node_point(idx) + delta
        value = float(self.values[idx] + g64 @ delta + 0.5 * delta @ H64 @ delta)
        return p, value, idx
