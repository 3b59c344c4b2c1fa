"""Backward-Euler integration of the parabolic real Monge-Ampere flow.

The evolution is du/dt = log det D^2 u + u + sum_i log(<a_i, Du> + b_i) on
the capped grid.  Each step solves the implicit equation with a damped
Newton iteration whose linearized operator is
(1 - dt) Id - dt (D^2 u)^{-1} : D^2 on the grid nodes, ghost values handled
by the vertex-affine cap.  After every accepted step the state is
renormalized (gauge constant c_t), recentered (minimizer to the origin,
minimum subtracted), and a full monitor snapshot is recorded.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import quadrature
from .errors import (
    ConvexityLoss,
    MaxStepsExceeded,
    NewtonDivergence,
    NonPositiveDefinite,
    NonPositiveFactor,
    QuadratureUnderflow,
)
from .grids import GridGeometry, PotentialGrid
from .potentials import legendre_transform, sample_reference
from .weights import WeightData

_VOLUME_TARGETS: "weakref.WeakKeyDictionary[WeightData, float]" = (
    weakref.WeakKeyDictionary()
)


def logsumexp(a: np.ndarray) -> float:
    """Shifted log-sum-exp, dtype preserving (works for longdouble input)."""
    peak = np.max(a)
    return float(peak + np.log(np.sum(np.exp(a - peak))))


def weighted_volume_target(W: WeightData) -> float:
    """Time-independent total weighted volume: integral of the factor
    product over the polytope (the pushforward of the conserved measure)."""
    if W not in _VOLUME_TARGETS:
        _VOLUME_TARGETS[W] = float(
            quadrature.integrate(
                W.polytope, lambda x: np.prod(x @ W.a.T + W.b, axis=-1)
                if W.n_factors
                else np.ones(len(x)),
            )
        )
    return _VOLUME_TARGETS[W]


# --------------------------------------------------------------------------
# pointwise field bundle
# --------------------------------------------------------------------------

class FieldBundle:
    """Gradient/Hessian/right-hand-side arrays of one potential grid."""

    def __init__(self, geom: GridGeometry, values: np.ndarray, W: WeightData):
        self.geom = geom
        self.values = values
        padded = geom.pad(values)
        self.grad = geom.gradient(values, padded)
        self.hess = geom.hessian(values, padded)
        self.det = geom.hessian_det(self.hess)
        self.pd_ok = bool(np.all(geom.is_positive_definite(self.hess)))
        self.grad_points = np.moveaxis(self.grad, 0, -1)
        if W.n_factors:
            self.factors = self.grad_points @ W.a.T + W.b
            self.factors_ok = bool(np.all(self.factors > 0.0))
        else:
            self.factors = None
            self.factors_ok = True

    @property
    def feasible(self) -> bool:
        return self.pd_ok and self.factors_ok

    def rhs(self) -> np.ndarray:
        if not self.pd_ok:
            raise NonPositiveDefinite(
                "difference Hessian lost positive definiteness"
            )
        if not self.factors_ok:
            raise NonPositiveFactor("weight factor non-positive at a gradient value")
        out = np.log(self.det) + self.values
        if self.factors is not None:
            out = out + np.sum(np.log(self.factors), axis=-1)
        return out

    def log_weight_density(self) -> np.ndarray:
        """log(det D^2 u * prod factors(Du)): density of the conserved measure."""
        out = np.log(self.det)
        if self.factors is not None:
            out = out + np.sum(np.log(self.factors), axis=-1)
        return out


def rhs(u: PotentialGrid, W: WeightData) -> np.ndarray:
    """Flow right-hand side at every node (capped stencils at the edges)."""
    return FieldBundle(u.geometry, u.values, W).rhs()


# --------------------------------------------------------------------------
# state containers
# --------------------------------------------------------------------------

@dataclass(eq=False)
class MonitorSnapshot:
    """Per-step diagnostics; every field must be finite."""

    grad_bound: float
    vol_weighted: float
    vol_unweighted: float
    m_t: float
    sup_phi_bar: float
    perelman_gap: float
    sublevel_vol: float
    sublevel_ratio: float
    stationarity_residual: float
    fitted_drift: np.ndarray
    fitted_gauge: float

    def __post_init__(self):
        scalars = [
            self.grad_bound,
            self.vol_weighted,
            self.vol_unweighted,
            self.m_t,
            self.sup_phi_bar,
            self.perelman_gap,
            self.sublevel_vol,
            self.sublevel_ratio,
            self.stationarity_residual,
            self.fitted_gauge,
        ]
        if not (
            np.all(np.isfinite(scalars)) and np.all(np.isfinite(self.fitted_drift))
        ):
            raise ValueError("monitor snapshot contains non-finite values")


@dataclass(eq=False)
class FlowState:
    """Flow trajectory point: potential, last du/dt, gauge and recentering."""

    time: float
    u: PotentialGrid
    u_dot: np.ndarray | None = None
    c_t: float = 0.0
    p_t: np.ndarray | None = None
    m_t: float = 0.0
    monitors: MonitorSnapshot | None = None


# --------------------------------------------------------------------------
# implicit step
# --------------------------------------------------------------------------

def _assemble_operator(
    geom: GridGeometry,
    hess_inv: np.ndarray,
    center_scale: float,
    op_scale: float,
    transport: np.ndarray | None = None,
) -> sp.csr_matrix:
    """center_scale*Id + op_scale*(Hinv : D^2) [+ transport . D] as CSR.

    Ghost neighbors fold onto their clamped node, which is exactly the
    Jacobian of the affine-cap extension.
    """
    m, h, size = geom.dim, geom.h, geom.size
    rows_parts, cols_parts, vals_parts = [], [], []
    rows = np.arange(size)

    diag = np.full(size, center_scale)
    for a in range(m):
        coeff = hess_inv[(a, a)].ravel().astype(np.float64) / h**2
        diag -= op_scale * 2.0 * coeff
        for sign in (+1, -1):
            off = tuple(sign if i == a else 0 for i in range(m))
            entry = op_scale * coeff
            if transport is not None:
                entry = entry + sign * transport[a].ravel().astype(np.float64) / (
                    2 * h
                )
            rows_parts.append(rows)
            cols_parts.append(geom.neighbor_columns(off))
            vals_parts.append(entry)
    for a in range(m):
        for b in range(a + 1, m):
            coeff = op_scale * hess_inv[(a, b)].ravel().astype(np.float64) / (
                2 * h**2
            )
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                off = tuple(
                    sa if i == a else (sb if i == b else 0) for i in range(m)
                )
                rows_parts.append(rows)
                cols_parts.append(geom.neighbor_columns(off))
                vals_parts.append((1 if sa == sb else -1) * coeff)
    rows_parts.append(rows)
    cols_parts.append(rows)
    vals_parts.append(diag)
    A = sp.coo_matrix(
        (
            np.concatenate(vals_parts),
            (np.concatenate(rows_parts), np.concatenate(cols_parts)),
        ),
        shape=(size, size),
    )
    return A.tocsr()


def log_residual_noise_floor(geom: GridGeometry, bundle: FieldBundle) -> float:
    """Rounding floor of log det evaluated through difference stencils.

    Second differences of stored values of magnitude M carry absolute noise
    ~ eps(M); where the Hessian determinant is tiny this bounds the relative
    accuracy of log det no matter how the Newton iteration proceeds.
    """
    eps = float(np.finfo(bundle.values.dtype).eps)
    mag = float(np.max(np.abs(bundle.values))) + 1.0
    det_min = float(np.min(bundle.det))
    if det_min <= 0:
        return np.inf
    m = geom.dim
    # dominant term: the smallest axis curvature at the worst node
    curv_min = det_min ** (1.0 / m) if m > 1 else det_min
    return 16.0 * eps * mag / (geom.h**2 * curv_min)


def _backward_euler_solve(
    geom: GridGeometry,
    W: WeightData,
    u_old: np.ndarray,
    dt: float,
    guess: np.ndarray,
    newton_tol: float = 1e-12,
    accept_tol: float = 1e-10,
    max_iter: int = 50,
):
    """Solve v = u_old + dt*rhs(v); returns (v, bundle, rhs(v)).

    Terminates at residual < 1e-10 (scaled by dt against the evaluation
    noise floor of log det when that floor is higher) or 50 iterations;
    raises NewtonDivergence when the residual cannot be brought below the
    acceptance level.
    """

    def residual(bundle: FieldBundle) -> np.ndarray:
        r = bundle.rhs()
        return bundle.values - u_old - dt * r, r

    v = guess.copy()
    bundle = FieldBundle(geom, v, W)
    if not bundle.feasible:
        bundle = FieldBundle(geom, u_old, W)
        v = u_old.copy()
    F, r = residual(bundle)
    fnorm = float(np.max(np.abs(F)))
    for _ in range(max_iter):
        if fnorm < newton_tol:
            break
        hinv = geom.hessian_inverse(bundle.hess, bundle.det)
        A = _assemble_operator(geom, hinv, 1.0 - dt, -dt)
        delta = spla.spsolve(A, -F.ravel().astype(np.float64)).reshape(geom.shape)
        alpha = 1.0
        improved = False
        while alpha > 2.0**-24:
            cand = v + alpha * delta
            cand_bundle = FieldBundle(geom, cand, W)
            if cand_bundle.feasible:
                F_cand, r_cand = residual(cand_bundle)
                f_cand = float(np.max(np.abs(F_cand)))
                if f_cand < fnorm:
                    v, bundle, F, r, fnorm = cand, cand_bundle, F_cand, r_cand, f_cand
                    improved = True
                    break
            alpha *= 0.5
        if not improved:
            break  # evaluation noise floor reached
    accept = max(accept_tol, dt * log_residual_noise_floor(geom, bundle))
    if fnorm >= accept:
        raise NewtonDivergence(
            f"backward-Euler Newton stalled at residual {fnorm:.3e} "
            f"(acceptance {accept:.3e}, dt = {dt:.3e}); a smaller dt may help"
        )
    return v, bundle, r


def step(state: FlowState, W: WeightData, dt: float) -> FlowState:
    """One backward-Euler step; returns a new state with updated u and u_dot."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = state.u
    geom = u.geometry
    guess = (
        u.values + dt * state.u_dot if state.u_dot is not None else u.values
    )
    v, bundle, r = _backward_euler_solve(geom, W, u.values, dt, guess)
    if not bundle.pd_ok or np.any(bundle.det <= 0):
        raise ConvexityLoss("accepted step lost discrete convexity")
    new_u = u.with_values(v)
    return FlowState(
        time=state.time + dt,
        u=new_u,
        u_dot=r,
        c_t=state.c_t,
        p_t=state.p_t,
        m_t=state.m_t,
        monitors=None,
    )


# --------------------------------------------------------------------------
# gauge, recentering, monitors
# --------------------------------------------------------------------------

def normalize_c(state: FlowState, W: WeightData) -> float:
    """Gauge constant making the weighted exponential volume match its
    conserved value; stored on the state.

    c_t = log V - log integral exp(-du/dt) det D^2 u prod_i f_i(Du) dt,
    V = integral of the factor product over the polytope.
    """
    if state.u_dot is None:
        raise ValueError("state has no u_dot; run a step first")
    geom = state.u.geometry
    bundle = FieldBundle(geom, state.u.values, W)
    logw = bundle.log_weight_density()
    target = weighted_volume_target(W)
    mass = float(np.exp(logsumexp(logw) + geom.dim * np.log(geom.h)))
    if mass < 0.999 * target:
        raise QuadratureUnderflow(
            f"grid captures only {mass / target:.4%} of the conserved weighted "
            f"volume; increase box_radius"
        )
    log_num = float(
        logsumexp(logw - state.u_dot) + geom.dim * np.log(geom.h)
    )
    c = float(np.log(target) - log_num)
    state.c_t = c
    return c


def _edge_cap_slopes(geom: GridGeometry, axis: int, side: int) -> np.ndarray:
    """Asymptotic (vertex) slope along `axis` for every grid line, at the
    box face side=+1 (t_axis = +R) or side=-1 (t_axis = -R).

    Returns an array shaped like the grid with `axis` removed.
    """
    other_axes = [geom.axis.astype(float)] * (geom.dim - 1)
    if geom.dim == 1:
        pts = np.array([[side * geom.box_radius]])
    else:
        mesh = np.meshgrid(*other_axes, indexing="ij")
        cols = np.stack([g.ravel() for g in mesh], axis=-1)
        pts = np.insert(cols, axis, side * geom.box_radius, axis=1)
    verts = geom.polytope.vertices[geom.polytope.active_vertex_array(pts)]
    slopes = verts[:, axis]
    shape = geom.shape[:axis] + geom.shape[axis + 1 :]
    return slopes.reshape(shape)


def _roll_with_cap(geom: GridGeometry, values: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Exact translation by whole cells: new(t) = old(t + cells*h).

    Vacated strips are regenerated from the boundary model: the slope runs
    to the vertex (cap) slope, with the remaining slope deficit continued
    geometrically at the decay rate measured from the last two cells of
    each line.  This keeps the filled cells strictly convex.
    """
    out = values
    for a, c in enumerate(np.asarray(cells, dtype=int)):
        if c == 0:
            continue
        out = np.moveaxis(out.copy(), a, -1)
        n = geom.n
        k = abs(int(c))
        out = np.roll(out, -c, axis=-1)
        cap = _edge_cap_slopes(geom, a, +1 if c > 0 else -1) * geom.h
        cap = np.asarray(cap, dtype=out.dtype)
        if c > 0:
            valid_last = n - k - 1
            d_last = out[..., valid_last] - out[..., valid_last - 1]
            d_prev = out[..., valid_last - 1] - out[..., valid_last - 2]
            deficit = np.maximum(cap - d_last, 0.0)
            prev_deficit = np.maximum(cap - d_prev, deficit)
            with np.errstate(divide="ignore", invalid="ignore"):
                rho = np.where(prev_deficit > 0, deficit / prev_deficit, 0.0)
            rho = np.clip(rho, 0.0, 0.999)
            step_deficit = deficit.copy()
            for j in range(1, k + 1):
                step_deficit = step_deficit * rho
                out[..., valid_last + j] = (
                    out[..., valid_last + j - 1] + cap - step_deficit
                )
        else:
            valid_first = k
            d_last = out[..., valid_first + 1] - out[..., valid_first]
            d_prev = out[..., valid_first + 2] - out[..., valid_first + 1]
            deficit = np.maximum(d_last - cap, 0.0)
            prev_deficit = np.maximum(d_prev - cap, deficit)
            with np.errstate(divide="ignore", invalid="ignore"):
                rho = np.where(prev_deficit > 0, deficit / prev_deficit, 0.0)
            rho = np.clip(rho, 0.0, 0.999)
            step_deficit = deficit.copy()
            for j in range(1, k + 1):
                step_deficit = step_deficit * rho
                out[..., valid_first - j] = (
                    out[..., valid_first - j + 1] - (cap + step_deficit)
                )
        out = np.moveaxis(out, -1, a)
    return out


def _roll_nearest(values: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Translation by whole cells with edge replication (for du/dt fields)."""
    out = values
    for a, c in enumerate(cells):
        c = int(c)
        if c == 0:
            continue
        out = np.roll(out, -c, axis=a)
        sl = [slice(None)] * out.ndim
        edge = [slice(None)] * out.ndim
        if c > 0:
            sl[a] = slice(out.shape[a] - c, None)
            edge[a] = slice(out.shape[a] - c - 1, out.shape[a] - c)
        else:
            sl[a] = slice(0, -c)
            edge[a] = slice(-c, -c + 1)
        out[tuple(sl)] = out[tuple(edge)]
    return out


def recenter(state: FlowState) -> FlowState:
    """Translate the minimizer to the origin and subtract the minimum.

    The translation is applied in whole grid cells (exact roll against the
    capped extension, no resampling error); the recorded p_t is the
    sub-cell quadratic-fit minimizer, so after recentering the minimizer
    sits at the origin to within half a cell.
    """
    u = state.u
    geom = u.geometry
    p, min_val, _ = u.min_location()
    m_t = min_val - state.c_t
    cells = np.rint(np.asarray(p, dtype=float) / geom.h).astype(int)
    if np.any(cells != 0):
        values = _roll_with_cap(geom, u.values, cells)
        u_dot = (
            _roll_nearest(state.u_dot.copy(), cells)
            if state.u_dot is not None
            else None
        )
    else:
        values = u.values.copy()
        u_dot = None if state.u_dot is None else state.u_dot.copy()
    values -= values.min()
    return FlowState(
        time=state.time,
        u=u.with_values(values),
        u_dot=u_dot,
        c_t=state.c_t,
        p_t=np.asarray(p, dtype=float),
        m_t=float(m_t),
        monitors=state.monitors,
    )


def stationarity_fit(grad_points: np.ndarray, u_dot: np.ndarray):
    """Least-squares fit u_dot ~ <b, Du> + c over all nodes.

    Returns (b, c, residual_inf).
    """
    m = grad_points.shape[-1]
    X = np.concatenate(
        [grad_points.reshape(-1, m).astype(np.float64), np.ones((u_dot.size, 1))],
        axis=1,
    )
    y = u_dot.ravel().astype(np.float64)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.max(np.abs(y - X @ beta)))
    return beta[:m], float(beta[m]), resid


def monitors(
    state: FlowState,
    W: WeightData,
    u0_reference: np.ndarray | None = None,
) -> MonitorSnapshot:
    """Full diagnostic snapshot of a flow state.

    The state is expected to be recentered; the sublevel and sup_phi_bar
    fields are computed from values minus their minimum.  u0_reference is
    the recentered initial potential (defaults to the recentered reference
    potential of the polytope on the same grid).
    """
    u = state.u
    geom = u.geometry
    bundle = FieldBundle(geom, u.values, W)
    hm = geom.h**geom.dim
    vol_unweighted = float(bundle.det.sum() * hm)
    if bundle.factors is not None:
        vol_weighted = float(
            (bundle.det * np.prod(bundle.factors, axis=-1)).sum() * hm
        )
    else:
        vol_weighted = vol_unweighted
    grad_bound = float(np.sqrt((bundle.grad**2).sum(axis=0)).max())

    if state.u_dot is not None:
        perelman_gap = float(np.max(np.abs(-state.u_dot + state.c_t)))
        drift, gauge, resid = stationarity_fit(bundle.grad_points, state.u_dot)
    else:
        perelman_gap = 0.0
        drift, gauge, resid = np.zeros(geom.dim), 0.0, 0.0

    centered = u.values - u.values.min()
    if u0_reference is None:
        ref = sample_reference(u.polytope, u.box_radius, u.n_per_axis).values
        u0_reference = ref - ref.min()
    sup_phi_bar = float(np.max(centered - u0_reference))

    gamma = centered <= 1.0
    sublevel_vol = float(np.count_nonzero(gamma) * hm)
    lam = float(bundle.det[gamma].min()) if np.any(gamma) else 0.0
    sublevel_ratio = float(sublevel_vol * np.sqrt(max(lam, 0.0)))

    snapshot = MonitorSnapshot(
        grad_bound=grad_bound,
        vol_weighted=vol_weighted,
        vol_unweighted=vol_unweighted,
        m_t=float(state.m_t),
        sup_phi_bar=sup_phi_bar,
        perelman_gap=perelman_gap,
        sublevel_vol=sublevel_vol,
        sublevel_ratio=sublevel_ratio,
        stationarity_residual=resid,
        fitted_drift=np.asarray(drift, dtype=float),
        fitted_gauge=gauge,
    )
    state.monitors = snapshot
    return snapshot


# --------------------------------------------------------------------------
# consistency check against the dual picture
# --------------------------------------------------------------------------

def dual_rhs_check(u: PotentialGrid, W: WeightData, samples: np.ndarray) -> float:
    """Max discrepancy between rhs and its Legendre-dual expression.

    At x = Du(t):  log det D^2 u(t) = -log det Hess G(x)  and
    u(t) = <x,t> - G(x), so the rhs can be recomputed entirely from the
    numerical conjugate G.  Sample points snap to their nearest node.
    """
    geom = u.geometry
    bundle = FieldBundle(geom, u.values, W)
    r = bundle.rhs()
    G = legendre_transform(u)
    worst = 0.0
    for t in np.atleast_2d(samples):
        idx = u.node_index(t)
        t_node = u.node_point(idx)
        x = np.array([bundle.grad[(a,) + idx] for a in range(geom.dim)])
        val, _, HG = G.quadratic_model(x)
        dual_val = (
            -np.log(np.linalg.det(HG))
            + x @ t_node
            - val
            + W.log_factor_sum(x)
        )
        worst = max(worst, abs(float(r[idx]) - float(dual_val)))
    return worst


# --------------------------------------------------------------------------
# trajectory driver
# --------------------------------------------------------------------------

@dataclass(eq=False)
class RunResult:
    """Time series plus final recentered state of one flow run."""

    times: list[float] = field(default_factory=list)
    snapshots: list[MonitorSnapshot] = field(default_factory=list)
    c_values: list[float] = field(default_factory=list)
    p_values: list[np.ndarray] = field(default_factory=list)
    final: FlowState | None = None
    converged: bool = False
    n_steps: int = 0

    @property
    def drift(self) -> np.ndarray:
        return self.snapshots[-1].fitted_drift

    @property
    def gauge(self) -> float:
        return self.snapshots[-1].fitted_gauge

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.snapshots])

    def csv_rows(self):
        """Rows matching the emitted CSV column contract."""
        m = len(self.p_values[0]) if self.p_values else 0
        header = (
            ["t", "c_t", "m_t"]
            + [f"p_t_{a}" for a in range(m)]
            + [
                "vol_weighted",
                "vol_unweighted",
                "grad_bound",
                "perelman_gap",
                "sublevel_ratio",
                "stationarity_residual",
            ]
        )
        rows = []
        for t, c, p, s in zip(self.times, self.c_values, self.p_values, self.snapshots):
            rows.append(
                [t, c, s.m_t]
                + list(p)
                + [
                    s.vol_weighted,
                    s.vol_unweighted,
                    s.grad_bound,
                    s.perelman_gap,
                    s.sublevel_ratio,
                    s.stationarity_residual,
                ]
            )
        return header, rows


def run(
    P,
    W: WeightData,
    box_radius: float,
    n_per_axis: int,
    dt: float = 0.05,
    max_steps: int = 2000,
    stationarity_tol: float = 1e-6,
    initial_u: PotentialGrid | None = None,
    initial_translate=None,
    dt_floor: float = 1e-4,
    raise_on_max: bool = True,
    on_step=None,
) -> RunResult:
    """Evolve to stationarity modulo translation.

    Iterates step -> normalize_c -> recenter -> monitors until the residual
    of the fit u_dot ~ <b,Du> + c drops below stationarity_tol.  On
    NewtonDivergence the step is retried with dt halved (floor dt_floor).
    """
    if initial_u is None:
        u0 = sample_reference(
            P, box_radius, n_per_axis,
            translate=initial_translate, dtype=np.longdouble,
        )
    else:
        u0 = initial_u.with_values(initial_u.values.astype(np.longdouble))
    u0.validate()

    result = RunResult()
    state = FlowState(time=0.0, u=u0.copy())
    state.u_dot = rhs(state.u, W)
    normalize_c(state, W)
    state = recenter(state)
    u0_ref = state.u.values.copy()  # recentered initial potential
    snap = monitors(state, W, u0_ref)
    _record(result, state, snap, on_step)

    current_dt = float(dt)
    for n in range(1, max_steps + 1):
        while True:
            try:
                new_state = step(state, W, current_dt)
                break
            except NewtonDivergence:
                if current_dt <= dt_floor * (1 + 1e-12):
                    raise
                current_dt = max(current_dt / 2.0, dt_floor)
        normalize_c(new_state, W)
        new_state = recenter(new_state)
        snap = monitors(new_state, W, u0_ref)
        state = new_state
        result.n_steps = n
        _record(result, state, snap, on_step)
        if snap.stationarity_residual < stationarity_tol:
            result.converged = True
            break
    result.final = state
    if not result.converged and raise_on_max:
        raise MaxStepsExceeded(
            f"no stationarity after {result.n_steps} steps "
            f"(residual {result.snapshots[-1].stationarity_residual:.3e} "
            f"> tol {stationarity_tol:.1e})",
            result=result,
        )
    return result


def _record(result: RunResult, state: FlowState, snap: MonitorSnapshot, on_step):
    result.times.append(state.time)
    result.snapshots.append(snap)
    result.c_values.append(state.c_t)
    result.p_values.append(np.asarray(state.p_t, dtype=float))
    if on_step is not None:
        on_step(state, snap)
