"""Direct solver for the stationary limit: drift vector and potential.

The drift b is the unique zero of the weighted barycenter
integral_Delta x exp<b,x> prod_i f_i(x) dx, found by Newton on the strictly
convex log-partition function.  The stationary potential solves
log det D^2 w + w + sum_i log f_i(Dw) - <b, Dw> = c on the same capped grid
as the flow, with the gauge c fixed by the conserved weighted volume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.sparse.linalg as spla

from . import quadrature
from .errors import (
    GaugeInconsistency,
    NewtonDivergence,
    NonPositiveDefinite,
    QuadratureUnstable,
)
from .flow import (
    FieldBundle,
    _assemble_operator,
    _roll_with_cap,
    log_residual_noise_floor,
    logsumexp,
    weighted_volume_target,
)
from .grids import PotentialGrid, geometry_for
from .polytope import LatticePolytope
from .potentials import sample_reference
from .weights import WeightData


# --------------------------------------------------------------------------
# drift vector
# --------------------------------------------------------------------------

def _barycenter_parts(P: LatticePolytope, W: WeightData, b: np.ndarray, order: int):
    pts, wts = quadrature.polytope_rule(P, order)
    log_density = pts @ b
    if W.n_factors:
        log_density = log_density + np.sum(np.log(pts @ W.a.T + W.b), axis=-1)
    peak = np.max(log_density)
    dens = wts * np.exp(log_density - peak)
    Z = dens.sum()
    mean = (pts.T @ dens) / Z
    cov = (pts.T * dens) @ pts / Z - np.outer(mean, mean)
    return mean, cov


def _drift_newton(P, W, order, tol, max_iter=100):
    b = np.zeros(P.dim)
    for _ in range(max_iter):
        mean, cov = _barycenter_parts(P, W, b, order)
        if np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise NonPositiveDefinite(
                "weighted covariance lost positive definiteness"
            )
        if np.linalg.norm(mean) < tol:
            return b, float(np.linalg.norm(mean))
        b = b - np.linalg.solve(cov, mean)
    return b, float(np.linalg.norm(_barycenter_parts(P, W, b, order)[0]))


def drift_vector(
    P: LatticePolytope,
    W: WeightData,
    tol: float = 1e-12,
    order: int = 32,
) -> np.ndarray:
    """Drift killing the weighted barycenter; Newton on the log-partition.

    The objective b -> log integral exp<b,x> prod f_i(x) dx is smooth and
    strictly convex (gradient = weighted barycenter, Hessian = weighted
    covariance), so Newton converges from any start.  The root is
    recomputed on a refined quadrature; disagreement raises
    QuadratureUnstable.
    """
    b1, g1 = _drift_newton(P, W, order, tol)
    b2, g2 = _drift_newton(P, W, order + order // 2, tol)
    if np.max(np.abs(b1 - b2)) > 1e-10 or max(g1, g2) > tol:
        raise QuadratureUnstable(
            f"drift root moved by {np.max(np.abs(b1 - b2)):.3e} under quadrature "
            f"refinement"
        )
    return b2


def barycenter_norm(P, W, b, order: int = 48) -> float:
    """Norm of the normalized weighted barycenter at b (solution residual)."""
    mean, _ = _barycenter_parts(P, W, np.asarray(b, dtype=float), order)
    return float(np.linalg.norm(mean))


# --------------------------------------------------------------------------
# stationary potential
# --------------------------------------------------------------------------

@dataclass(eq=False)
class SolitonSolution:
    """Stationary potential with its drift, gauge constant and residuals."""

    drift: np.ndarray
    potential: PotentialGrid
    gauge: float
    barycenter_norm: float
    ma_residual_inf: float


def _stationary_residual(bundle: FieldBundle, b: np.ndarray, c: float) -> np.ndarray:
    r = bundle.rhs()
    return r - bundle.grad_points @ b - c


def _stationary_newton(
    geom,
    W: WeightData,
    b: np.ndarray,
    c: float,
    w_init: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 80,
    stall_ceiling: float = 1e-6,
):
    w = w_init.copy()
    bundle = FieldBundle(geom, w, W)
    if not bundle.feasible:
        raise NewtonDivergence("infeasible initial guess for the stationary solve")
    F = _stationary_residual(bundle, b, c)
    fnorm = float(np.max(np.abs(F)))
    for _ in range(max_iter):
        if fnorm < tol:
            return w, bundle, fnorm
        hinv = geom.hessian_inverse(bundle.hess, bundle.det)
        if W.n_factors:
            inv_factors = 1.0 / bundle.factors  # (..., k)
            q = np.stack(
                [inv_factors @ W.a[:, a] - b[a] for a in range(geom.dim)]
            )
        else:
            q = np.broadcast_to(
                (-b)[(slice(None),) + (None,) * geom.dim],
                (geom.dim,) + geom.shape,
            ).copy()
        A = _assemble_operator(geom, hinv, 1.0, 1.0, transport=q)
        delta = spla.spsolve(A.tocsc(), -F.ravel().astype(np.float64)).reshape(
            geom.shape
        )
        peak = float(np.max(np.abs(delta)))
        if peak > 5.0:
            delta *= 5.0 / peak  # near-neutral translation mode: cap the jump
        alpha, improved = 1.0, False
        while alpha > 2.0**-24:
            cand = w + alpha * delta
            cand_bundle = FieldBundle(geom, cand, W)
            if cand_bundle.feasible:
                F_cand = _stationary_residual(cand_bundle, b, c)
                f_cand = float(np.max(np.abs(F_cand)))
                if f_cand < fnorm:
                    w, bundle, F, fnorm = cand, cand_bundle, F_cand, f_cand
                    improved = True
                    break
            alpha *= 0.5
        if not improved:
            break  # evaluation noise floor of log det reached
    accept = max(stall_ceiling, log_residual_noise_floor(geom, bundle))
    if fnorm >= accept:
        raise NewtonDivergence(
            f"stationary Newton stalled at residual {fnorm:.3e} "
            f"(acceptance {accept:.3e})"
        )
    return w, bundle, fnorm


def _gauge_from_normalization(geom, W, bundle: FieldBundle, b, c) -> float:
    """Gauge consistent with the conserved weighted volume for
    u_dot = <b, Dw> + c."""
    logw = bundle.log_weight_density()
    u_dot = bundle.grad_points @ b + c
    target = weighted_volume_target(W)
    log_num = float(logsumexp(logw - u_dot) + geom.dim * np.log(geom.h))
    return c + float(np.log(target) - log_num)


def soliton_potential(
    P: LatticePolytope,
    W: WeightData,
    b,
    box_radius: float,
    n_per_axis: int,
    gauge_tol: float = 1e-8,
) -> SolitonSolution:
    """Solve the stationary equation at drift b and recenter the result.

    The time-derivative term of the flow is replaced by <b, Dw> + c; the
    gauge c is fixed by the same volume normalization the flow uses.  The
    achieved gauge is recomputed after a final Newton sweep and must agree
    to gauge_tol, otherwise GaugeInconsistency is raised.
    """
    b = np.asarray(b, dtype=float)
    geom = geometry_for(P, box_radius, n_per_axis)
    w0 = sample_reference(P, box_radius, n_per_axis, dtype=np.longdouble).values

    w, bundle, _ = _stationary_newton(geom, W, b, 0.0, w0)
    c = _gauge_from_normalization(geom, W, bundle, b, 0.0)
    w = w + c  # w + c solves the equation with gauge constant c
    w, bundle, _ = _stationary_newton(geom, W, b, c, w)
    c_check = _gauge_from_normalization(geom, W, bundle, b, c)
    if abs(c_check - c) > gauge_tol:
        raise GaugeInconsistency(
            f"gauge drifted by {abs(c_check - c):.3e} between Newton sweeps"
        )

    grid = PotentialGrid(P, box_radius, n_per_axis, w)
    p, min_val, _ = grid.min_location()
    cells = np.rint(p / geom.h).astype(int)
    if np.any(cells != 0):
        w_rec = _roll_with_cap(geom, w, cells)
    else:
        w_rec = w.copy()
    shift = float(w_rec.min())
    w_rec -= shift
    gauge_rec = c - shift
    rec_grid = PotentialGrid(P, box_radius, n_per_axis, w_rec)
    rec_grid.validate()
    rec_bundle = FieldBundle(geom, w_rec, W)
    ma_res = float(np.max(np.abs(_stationary_residual(rec_bundle, b, gauge_rec))))
    return SolitonSolution(
        drift=b,
        potential=rec_grid,
        gauge=gauge_rec,
        barycenter_norm=barycenter_norm(P, W, b),
        ma_residual_inf=ma_res,
    )


# --------------------------------------------------------------------------
# modulo-translation comparison
# --------------------------------------------------------------------------

def compare_to_flow(limit: PotentialGrid, sol: SolitonSolution) -> float:
    """inf over translations of the oscillation of limit(.+tau) - potential.

    Subtracting the minimum gap makes the comparison insensitive to the
    additive gauge; the translation search is the quotient by the torus.
    """
    ref = sol.potential
    geom = ref.geometry
    nodes = geom.nodes
    limit_geom = limit.geometry

    def objective(tau):
        pts = nodes + tau[None, :]
        inside = np.all(np.abs(pts) <= limit.box_radius, axis=1)
        if inside.sum() < nodes.shape[0] // 2:
            return 1e6
        samples = limit_geom.sample(limit.values, pts[inside])
        diff = samples - ref.values.ravel()[inside]
        return float(diff.max() - diff.min())

    res = scipy.optimize.minimize(
        lambda tau: objective(np.asarray(tau)),
        x0=np.zeros(geom.dim),
        method="Nelder-Mead",
        options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 400},
    )
    return float(res.fun)
