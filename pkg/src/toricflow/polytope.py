"""Exact lattice-polytope model for the moment polytope of a toric Fano fiber.

The polytope Delta is stored in facet form l_r(x) = <x, lambda_r> + 1 >= 0
with integral inward normals lambda_r, together with its vertex set and the
full list of lattice points.  Construction and all combinatorial checks run
in exact rational arithmetic; floating point enters only in the query layer
(support function, distances, quadrature points).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    DelzantViolation,
    NonReflexive,
    NotFullDimensional,
    OriginNotInterior,
)

Vector = tuple[Fraction, ...]


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("vertex coordinates must be finite")
        return Fraction(x).limit_denominator(10**9)
    raise TypeError(f"cannot interpret {x!r} as a rational number")


def _det(rows: list[list[Fraction]]) -> Fraction:
    """Exact determinant by fraction-free Gaussian elimination."""
    n = len(rows)
    mat = [list(r) for r in rows]
    det = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if mat[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            mat[col], mat[pivot] = mat[pivot], mat[col]
            det = -det
        det *= mat[col][col]
        inv = Fraction(1) / mat[col][col]
        for r in range(col + 1, n):
            factor = mat[r][col] * inv
            if factor == 0:
                continue
            for c in range(col, n):
                mat[r][c] -= factor * mat[col][c]
    return det


def _rank(rows: list[list[Fraction]]) -> int:
    mat = [list(r) for r in rows]
    nrows = len(mat)
    ncols = len(mat[0]) if mat else 0
    rank = 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, nrows) if mat[r][col] != 0), None)
        if pivot is None:
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        inv = Fraction(1) / mat[rank][col]
        for r in range(nrows):
            if r != rank and mat[r][col] != 0:
                factor = mat[r][col] * inv
                for c in range(col, ncols):
                    mat[r][c] -= factor * mat[rank][c]
        rank += 1
        if rank == min(nrows, ncols):
            break
    return rank


def _null_vector(rows: list[Vector]) -> tuple[Fraction, ...] | None:
    """A nonzero normal orthogonal to m-1 difference rows in R^m, or None.

    Computed by Laplace-style signed minors, so it is exact.
    """
    m = len(rows[0]) if rows else 1
    if m == 1:
        return (Fraction(1),)
    if len(rows) != m - 1:
        raise ValueError("need exactly m-1 rows")
    comps = []
    for j in range(m):
        minor = [[row[c] for c in range(m) if c != j] for row in rows]
        comps.append((-1) ** j * _det(minor))
    if all(c == 0 for c in comps):
        return None
    return tuple(comps)


@dataclass(frozen=True, eq=False)
class LatticePolytope:
    """Moment polytope with exact facet data l_r(x) = <x, lambda_r> + 1.

    Attributes
    ----------
    dim : ambient (and intrinsic) dimension m
    vertices_exact : vertex coordinates as Fractions, in input order
    facet_normals : integer inward normals lambda_r, one row per facet
    lattice_points : all integer points of the polytope, lexicographic order
    """

    dim: int
    vertices_exact: tuple[Vector, ...]
    facet_normals: np.ndarray
    lattice_points: np.ndarray
    vertices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.array([[float(c) for c in v] for v in self.vertices_exact])
        object.__setattr__(self, "vertices", verts)
        self.facet_normals.setflags(write=False)
        self.lattice_points.setflags(write=False)
        self.vertices.setflags(write=False)

    # -------------------------------------------------------------- queries

    @property
    def n_facets(self) -> int:
        return self.facet_normals.shape[0]

    @property
    def n_lattice_points(self) -> int:
        return self.lattice_points.shape[0]

    def facet_values(self, x) -> np.ndarray:
        """l_r(x) for all facets; x may be a single point or (..., m) array."""
        x = np.asarray(x, dtype=float)
        return x @ self.facet_normals.T + 1.0

    def support_function(self, t) -> float | np.ndarray:
        """max_k <p^(k), t> over vertices; convex and 1-homogeneous."""
        t = np.asarray(t, dtype=float)
        vals = t @ self.vertices.T
        return np.max(vals, axis=-1)

    def active_vertex(self, t) -> int:
        """Index of the vertex maximizing <p^(k), t>, lowest index on ties."""
        t = np.asarray(t, dtype=float)
        return int(np.argmax(self.vertices @ t))

    def active_vertex_array(self, t) -> np.ndarray:
        """Vectorized active_vertex for an (..., m) array of directions."""
        t = np.asarray(t, dtype=float)
        return np.argmax(t @ self.vertices.T, axis=-1)

    def distance_to_boundary(self, x) -> float | np.ndarray:
        """min_r l_r(x) / |lambda_r|; positive iff x is interior."""
        norms = np.linalg.norm(self.facet_normals, axis=1)
        vals = self.facet_values(x) / norms
        return np.min(vals, axis=-1)

    def contains(self, x, tol: float = 0.0) -> bool | np.ndarray:
        return np.all(self.facet_values(x) >= -tol, axis=-1)

    def diameter(self) -> float:
        v = self.vertices
        diffs = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((diffs**2).sum(-1)).max())

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    # --------------------------------------------------------------- volume

    def volume_exact(self) -> Fraction:
        """Exact Euclidean volume via the cached simplicial decomposition."""
        total = Fraction(0)
        factorial = math.factorial(self.dim)
        for simplex in self._simplices_exact():
            rows = [
                [simplex[i + 1][c] - simplex[0][c] for c in range(self.dim)]
                for i in range(self.dim)
            ]
            total += abs(_det(rows))
        return total / factorial

    def volume(self) -> float:
        return float(self.volume_exact())

    def simplices(self) -> list[np.ndarray]:
        """Simplicial decomposition as float arrays of shape (m+1, m)."""
        return [
            np.array([[float(c) for c in p] for p in s]) for s in self._simplices_exact()
        ]

    def _simplices_exact(self) -> list[tuple[Vector, ...]]:
        m = self.dim
        verts = self.vertices_exact
        if m == 1:
            lo = min(verts, key=lambda v: v[0])
            hi = max(verts, key=lambda v: v[0])
            return [(lo, hi)]
        centroid = tuple(
            sum(v[c] for v in verts) / len(verts) for c in range(m)
        )
        simplices = []
        for r in range(self.n_facets):
            lam = [Fraction(int(a)) for a in self.facet_normals[r]]
            on_facet = [
                v
                for v in verts
                if sum(v[c] * lam[c] for c in range(m)) + 1 == 0
            ]
            ordered = _order_facet_vertices(on_facet, m)
            if m == 2:
                simplices.append((centroid, ordered[0], ordered[1]))
            else:
                for i in range(1, len(ordered) - 1):
                    simplices.append(
                        (centroid, ordered[0], ordered[i], ordered[i + 1])
                    )
        return simplices


def _order_facet_vertices(points: list[Vector], m: int) -> list[Vector]:
    """Cyclically order the vertices of a facet (trivial in 2D)."""
    if m == 2:
        if len(points) != 2:
            raise ValueError("2D facet must have exactly two vertices")
        return points
    arr = np.array([[float(c) for c in p] for p in points])
    center = arr.mean(axis=0)
    rel = arr - center
    # orthonormal basis of the facet plane from an SVD of the spread
    _, _, vt = np.linalg.svd(rel, full_matrices=False)
    angles = np.arctan2(rel @ vt[1], rel @ vt[0])
    order = np.argsort(angles)
    return [points[i] for i in order]


def from_vertices(vertex_list) -> LatticePolytope:
    """Build a LatticePolytope from its vertex coordinates.

    Facets are recovered by exact convex-hull dualization, lattice points by
    a bounding-box scan, and the reflexivity and Delzant conditions are
    validated.  Non-extreme input points are dropped.

    Raises
    ------
    NotFullDimensional, OriginNotInterior, NonReflexive, DelzantViolation
    """
    pts: list[Vector] = []
    for v in vertex_list:
        vec = tuple(_frac(c) for c in v)
        if vec not in pts:
            pts.append(vec)
    if not pts:
        raise NotFullDimensional("no vertices given")
    m = len(pts[0])
    if any(len(p) != m for p in pts):
        raise ValueError("vertices have inconsistent dimensions")
    if len(pts) < m + 1:
        raise NotFullDimensional(f"{len(pts)} points cannot span R^{m}")
    diff_rows = [[p[c] - pts[0][c] for c in range(m)] for p in pts[1:]]
    if _rank(diff_rows) < m:
        raise NotFullDimensional(f"vertices span a proper subspace of R^{m}")

    facets = _dualize(pts, m)
    normals = []
    for n_vec, c in facets:
        if c == 0:
            raise OriginNotInterior("origin lies on a supporting hyperplane")
        if c < 0:
            raise OriginNotInterior("origin is outside the polytope")
        lam = [-comp / c for comp in n_vec]
        if any(l.denominator != 1 for l in lam):
            raise NonReflexive(
                f"facet normal {tuple(float(l) for l in lam)} is not integral"
            )
        normals.append([int(l) for l in lam])
    normals_arr = np.array(sorted(normals), dtype=int)

    # keep only true vertices: points active on >= m facets
    def n_active(p: Vector) -> int:
        return sum(
            1
            for row in normals_arr
            if sum(p[c] * int(row[c]) for c in range(m)) + 1 == 0
        )

    vertices = tuple(p for p in pts if n_active(p) >= m)
    if len(vertices) < m + 1:
        raise NotFullDimensional("hull of the input is degenerate")

    for p in vertices:
        if any(c.denominator != 1 for c in p):
            raise NonReflexive(f"vertex {tuple(float(c) for c in p)} is not integral")

    # Delzant: each vertex simple, active normals a unimodular basis
    for p in vertices:
        active = [
            row
            for row in normals_arr
            if sum(p[c] * int(row[c]) for c in range(m)) + 1 == 0
        ]
        if len(active) != m:
            raise DelzantViolation(
                [float(c) for c in p], f"{len(active)} active facets, expected {m}"
            )
        det = _det([[Fraction(int(a)) for a in row] for row in active])
        if abs(det) != 1:
            raise DelzantViolation(
                [float(c) for c in p], f"vertex cone determinant {det}"
            )

    lattice = _enumerate_lattice_points(vertices, normals_arr, m)
    for p in vertices:
        key = tuple(int(c) for c in p)
        if key not in lattice:
            raise NonReflexive(f"vertex {key} missing from its own lattice points")

    return LatticePolytope(
        dim=m,
        vertices_exact=vertices,
        facet_normals=normals_arr,
        lattice_points=np.array(sorted(lattice), dtype=int),
    )


def _dualize(pts: list[Vector], m: int) -> list[tuple[Vector, Fraction]]:
    """All supporting hyperplanes (outward normal n, offset c) with <x,n> <= c."""
    found: dict[tuple, tuple[Vector, Fraction]] = {}
    for combo in itertools.combinations(range(len(pts)), m):
        base = pts[combo[0]]
        rows = [
            tuple(pts[i][c] - base[c] for c in range(m)) for i in combo[1:]
        ]
        normal = _null_vector(rows) if m > 1 else (Fraction(1),)
        if normal is None:
            continue
        c = sum(base[k] * normal[k] for k in range(m))
        vals = [sum(p[k] * normal[k] for k in range(m)) for p in pts]
        if all(v <= c for v in vals):
            pass
        elif all(v >= c for v in vals):
            normal = tuple(-x for x in normal)
            c = -c
        else:
            continue
        # primitive integer form for dedup
        denom_lcm = 1
        for x in normal:
            denom_lcm = denom_lcm * x.denominator // math.gcd(denom_lcm, x.denominator)
        ints = [int(x * denom_lcm) for x in normal]
        g = 0
        for x in ints:
            g = math.gcd(g, abs(x))
        key = tuple(x // g for x in ints)
        if key not in found:
            scale = Fraction(g, denom_lcm)
            found[key] = (tuple(Fraction(k) for k in key), c / scale)
    return list(found.values())


def _enumerate_lattice_points(
    vertices: tuple[Vector, ...], normals: np.ndarray, m: int
) -> list[tuple[int, ...]]:
    lo = [math.floor(min(v[c] for v in vertices)) for c in range(m)]
    hi = [math.ceil(max(v[c] for v in vertices)) for c in range(m)]
    pts = []
    for coords in itertools.product(*[range(lo[c], hi[c] + 1) for c in range(m)]):
        if all(
            sum(coords[c] * int(row[c]) for c in range(m)) + 1 >= 0
            for row in normals
        ):
            pts.append(coords)
    return pts
