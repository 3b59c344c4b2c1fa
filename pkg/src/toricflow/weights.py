"""Fiber weight factors: a product of affine functions of the moment variable.

Each pair (a, b) contributes the factor <a, x> + b, evaluated at moment
points x in the polytope.  The pairs are ingested already expressed in the
moment convention x = Du (any scaling from their group-theoretic origin is
applied upstream; see README).  Positivity of every factor on the polytope
is the Fano condition and is certified at the vertices, where affine
functions attain their extremes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FanoViolation, NonPositiveFactor, OutsidePolytope
from .polytope import LatticePolytope


@dataclass(eq=False)
class WeightData:
    """Validated list of affine weight factors over a polytope."""

    polytope: LatticePolytope
    a: np.ndarray = field(default=None)  # (k, m)
    b: np.ndarray = field(default=None)  # (k,)

    def __post_init__(self):
        m = self.polytope.dim
        if self.a is None:
            self.a = np.zeros((0, m))
        self.a = np.asarray(self.a, dtype=float).reshape(-1, m)
        if self.b is None:
            self.b = np.zeros(0)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if len(self.a) != len(self.b):
            raise ValueError("weight vectors a and offsets b disagree in length")
        self._check_vertex_positivity()

    @classmethod
    def from_pairs(cls, polytope: LatticePolytope, pairs) -> "WeightData":
        """Build from [(a_vector, b_scalar), ...]; empty list is the pure case."""
        if not pairs:
            return cls(polytope)
        a = np.array([p[0] for p in pairs], dtype=float)
        b = np.array([p[1] for p in pairs], dtype=float)
        return cls(polytope, a, b)

    @property
    def n_factors(self) -> int:
        return len(self.b)

    def _check_vertex_positivity(self) -> None:
        if self.n_factors == 0:
            return
        vals = self.polytope.vertices @ self.a.T + self.b[None, :]  # (V, k)
        bad = np.argwhere(vals <= 0.0)
        if len(bad):
            v_idx, f_idx = bad[0]
            raise FanoViolation(
                self.polytope.vertices[v_idx], f_idx, vals[v_idx, f_idx]
            )

    # ------------------------------------------------------------- evaluation

    def factors(self, x) -> np.ndarray:
        """All factor values <a_i, x> + b_i, shape x.shape[:-1] + (k,)."""
        x = np.asarray(x, dtype=float)
        return x @ self.a.T + self.b

    def log_factor_sum(self, x, check: bool = True) -> np.ndarray | float:
        """sum_i log(<a_i, x> + b_i); raises NonPositiveFactor on bad input.

        This is the term the evolution equation adds to log det D^2 u; it
        equals -log of the curvature weight.
        """
        x = np.asarray(x, dtype=float)
        if self.n_factors == 0:
            out = np.zeros(x.shape[:-1])
            return out if out.ndim else 0.0
        f = self.factors(x)
        if check and np.any(f <= 0.0):
            k = int(np.argwhere(f <= 0.0)[0][-1])
            raise NonPositiveFactor(
                f"weight factor {k} is non-positive at a moment point"
            )
        out = np.sum(np.log(f), axis=-1)
        return out if out.ndim else float(out)

    def product(self, x, boundary_tol: float = 1e-9) -> np.ndarray | float:
        """prod_i (<a_i, x> + b_i) for x in the closed polytope."""
        x = np.asarray(x, dtype=float)
        if not np.all(self.polytope.contains(x, tol=boundary_tol)):
            raise OutsidePolytope("moment point lies outside the closed polytope")
        if self.n_factors == 0:
            out = np.ones(x.shape[:-1])
            return out if out.ndim else 1.0
        out = np.prod(self.factors(x), axis=-1)
        return out if np.ndim(out) else float(out)

    def neg_log_product(self, x, boundary_tol: float = 1e-9) -> np.ndarray | float:
        """-log of the factor product (the curvature-weight logarithm)."""
        x = np.asarray(x, dtype=float)
        if not np.all(self.polytope.contains(x, tol=boundary_tol)):
            raise OutsidePolytope("moment point lies outside the closed polytope")
        out = -self.log_factor_sum(x)
        return out if np.ndim(out) else float(out)

    # -------------------------------------------------------------- validation

    def validate_fano(self, rtol: float = 1e-3, n_start: int = 64):
        """Certified two-sided bounds (K1, K2) with K1 <= 1/product <= K2.

        The factor product is log-concave, so its minimum over the polytope
        sits at a vertex (K2 is exact).  The maximum is located by dense grid
        sampling refined until stable to rtol, then inflated by the observed
        stability margin so the bracket is safe.
        """
        self._check_vertex_positivity()
        if self.n_factors == 0:
            return 1.0, 1.0
        vert_vals = np.prod(
            self.polytope.vertices @ self.a.T + self.b[None, :], axis=-1
        )
        prod_min = float(np.min(vert_vals))
        if self.n_factors == 1:
            # a single affine factor attains both extremes at vertices
            return 1.0 / float(np.max(vert_vals)), 1.0 / prod_min
        prod_max_prev = float(np.max(vert_vals))
        lo, hi = self.polytope.bounding_box()
        n = n_start
        drift = np.inf
        for _ in range(8):
            axes = [np.linspace(lo[a], hi[a], n) for a in range(self.polytope.dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([g.ravel() for g in mesh], axis=-1)
            pts = pts[self.polytope.contains(pts, tol=1e-12)]
            pts = np.concatenate([pts, self.polytope.vertices], axis=0)
            vals = np.prod(pts @ self.a.T + self.b[None, :], axis=-1)
            prod_max = float(np.max(vals))
            drift = abs(prod_max - prod_max_prev) / max(prod_max, 1e-300)
            prod_max_prev = prod_max
            if drift <= rtol:
                break
            n *= 2
        margin = max(drift, rtol)
        k1 = 1.0 / (prod_max_prev * (1.0 + margin))
        k2 = 1.0 / prod_min
        return k1, k2
