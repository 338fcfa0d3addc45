"""Radial partial-mass solver up to blow-up.

The unknown is the partial mass m(r, t) (density integrated over balls,
divided by the unit-sphere measure), which satisfies

    m_t = m_rr - (d-1)/r m_r + m m_r / r^(d-1),    m(0) = 0.

Ring-type data concentrate at a radius R(t) -> 0 with width
lam(t) = R^(d-1)/M(t); the mesh follows the ring.  Stepping is IMEX:
implicit diffusion (tridiagonal), explicit upwinded transport and
nonlinearity, with an advective CFL step control since the stiffness sits
entirely in the diffusion of the thin ring.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from .profiles import Qbar_nu
from .timeseries import TimeSeries


class SolverDivergence(RuntimeError):
    pass


@dataclass
class PartialMassState:
    """Partial mass values on a radial grid (r[0] = 0 carries m = 0)."""

    d: int
    r: np.ndarray
    m: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.d < 3:
            raise ValueError(f"dimension must be >= 3, got {self.d}")
        if self.r[0] != 0.0:
            raise ValueError("grid must start at r = 0")
        if np.any(np.diff(self.r) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        if abs(self.m[0]) > 0.0:
            raise ValueError("m(0) must vanish")

    @property
    def total_mass(self):
        return float(self.m[-1])

    def monotonicity_defect(self):
        """min_r of dm/dr (negative values signal density < 0)."""
        return float(np.min(np.diff(self.m) / np.diff(self.r)))


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

def _geometric_block(length, h0, n):
    """Spacings h0*g, h0*g^2, ... summing to `length` over n cells."""
    if n <= 0 or length <= 0.0:
        return np.array([])
    if n * h0 >= length:
        return np.full(n, length / n)
    lo, hi = 1.0, 1.5
    while h0 * hi * (hi ** n - 1.0) / (hi - 1.0) < length:
        hi *= 1.5
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        total = h0 * mid * (mid ** n - 1.0) / (mid - 1.0)
        if total < length:
            lo = mid
        else:
            hi = mid
    g = 0.5 * (lo + hi)
    steps = h0 * g ** np.arange(1, n + 1)
    return steps * (length / steps.sum())


def build_ring_mesh(R, lam, r_max, n_nodes=1600, window=30.0, inner_fraction=0.6):
    """Graded mesh with ~inner_fraction of the nodes inside |r-R| <= window*lam."""
    half = window * lam
    lo = max(R - half, 0.0)
    hi = min(R + half, r_max)
    n_inner = int(inner_fraction * n_nodes)
    h_in = (hi - lo) / n_inner
    inner = np.linspace(lo, hi, n_inner + 1)

    n_out = n_nodes - n_inner
    n_left = int(n_out * lo / (lo + (r_max - hi) + 1e-300)) if lo > 0 else 0
    n_left = min(max(n_left, 8 if lo > 0 else 0), n_out - 8)
    n_right = n_out - n_left

    left_steps = _geometric_block(lo, h_in, n_left) if lo > 0 else np.array([])
    left = lo - np.cumsum(left_steps) if left_steps.size else np.array([])
    left = left[left > h_in * 0.25][::-1]

    right_steps = _geometric_block(r_max - hi, h_in, n_right)
    right = hi + np.cumsum(right_steps) if right_steps.size else np.array([])
    if right.size:
        right[-1] = r_max

    return np.concatenate(([0.0], left, inner, right))


def regrid(state, R, lam, r_max=None, **mesh_kw):
    """Re-interpolate the state onto a fresh ring-following mesh (monotone)."""
    r_max = state.r[-1] if r_max is None else r_max
    new_r = build_ring_mesh(R, lam, r_max, **mesh_kw)
    interp = PchipInterpolator(state.r, state.m, extrapolate=False)
    new_m = interp(np.clip(new_r, state.r[0], state.r[-1]))
    new_m[0] = 0.0
    return replace(state, r=new_r, m=new_m)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def init_ring(d, M0, R0, lam0, zeta0=0.25, r_max=None, n_nodes=1600, window=30.0):
    """Ring of mass scale M0 at radius R0 with width lam0 (truncated at 0)."""
    if lam0 >= R0:
        raise ValueError("ring width must be smaller than the ring radius")
    nu = lam0 / R0
    r_max = 4.0 * R0 if r_max is None else r_max
    r = build_ring_mesh(R0, lam0, r_max, n_nodes=n_nodes, window=window)
    m = M0 * Qbar_nu(np.maximum(r, 0.0) / R0, nu, zeta0)
    m[0] = 0.0
    return PartialMassState(d=d, r=r, m=m, t=0.0)


# ---------------------------------------------------------------------------
# spatial operators
# ---------------------------------------------------------------------------

def mass_equation_rhs(r, m, dm, d2m, d):
    """Right side of the partial-mass equation from supplied derivatives."""
    r = np.asarray(r, dtype=float)
    return d2m - (d - 1) / r * dm + m * dm / r ** (d - 1)


def _interior_first_derivative(r, m):
    """Nonuniform 3-point central first derivative on interior nodes."""
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    den = hp * hm * (hp + hm)
    return (hm ** 2 * m[2:] - hp ** 2 * m[:-2] + (hp ** 2 - hm ** 2) * m[1:-1]) / den


def density_of(state):
    """Recover the density u = r^(1-d) dm/dr; u(0) by even extension."""
    r, m, d = state.r, state.m, state.d
    u = np.empty_like(m)
    u[1:-1] = _interior_first_derivative(r, m) / r[1:-1] ** (d - 1)
    u[-1] = (m[-1] - m[-2]) / (r[-1] - r[-2]) / r[-1] ** (d - 1)
    # even extension: fit u = a + b r^2 through the first two interior nodes
    r1, r2 = r[1], r[2]
    u[0] = (u[1] * r2 ** 2 - u[2] * r1 ** 2) / (r2 ** 2 - r1 ** 2)
    return u


def advective_speed(state):
    """Speed of the explicit nonlinear transport, m/r^(d-1).

    The linear first-order term -(d-1)/r m_r belongs to the conservative
    radial operator r^(d-1) (r^(1-d) m_r)_r, which the stepper treats
    implicitly; only the nonlinearity rides on the CFL limit, and its speed
    vanishes at the origin (m = O(r^d)).
    """
    r, m, d = state.r, state.m, state.d
    a = np.zeros_like(m)
    a[1:] = m[1:] / r[1:] ** (d - 1)
    return a


def cfl_dt(state, cfl=0.4):
    """Advective step limit cfl * min(local spacing / |speed|)."""
    r = state.r
    a = advective_speed(state)[1:-1]
    h_local = np.minimum(np.diff(r)[:-1], np.diff(r)[1:])
    amax = np.abs(a)
    amax[amax < 1e-14] = 1e-14
    return cfl * float(np.min(h_local / amax))


def step(state, dt, forcing=None):
    """One IMEX step: implicit diffusion, explicit upwinded transport.

    Boundary conditions: m(0) = 0 and zero slope at r_max (ghost-node
    Neumann).  Raises SolverDivergence if nonfinite values appear.
    """
    r, m = state.r, state.m
    n = r.size
    hm = np.empty(n)
    hp = np.empty(n)
    hm[1:] = r[1:] - r[:-1]
    hp[:-1] = r[1:] - r[:-1]
    hm[0] = hm[1]
    hp[-1] = hp[-2]

    # explicit upwinded transport (m_t = a m_r: a > 0 biases to the forward
    # side).  Second-order three-point one-sided stencils keep the overall
    # scheme second order in h; rows lacking two upwind neighbours fall
    # back to first order.
    a = advective_speed(state)
    fwd = np.zeros(n)
    bwd = np.zeros(n)
    fwd[:-1] = (m[1:] - m[:-1]) / hp[:-1]
    bwd[1:] = (m[1:] - m[:-1]) / hm[1:]
    fwd2 = fwd.copy()
    bwd2 = bwd.copy()
    h1 = hp[:-2]
    h2 = hp[1:-1]
    fwd2[:-2] = (-(2.0 * h1 + h2) / (h1 * (h1 + h2)) * m[:-2]
                 + (h1 + h2) / (h1 * h2) * m[1:-1]
                 - h1 / (h2 * (h1 + h2)) * m[2:])
    g1 = hm[2:]
    g2 = hm[1:-1]
    bwd2[2:] = ((2.0 * g1 + g2) / (g1 * (g1 + g2)) * m[2:]
                - (g1 + g2) / (g1 * g2) * m[1:-1]
                + g1 / (g2 * (g1 + g2)) * m[:-2])
    adv = np.where(a > 0.0, a * fwd2, a * bwd2)
    adv[0] = 0.0
    adv[-1] = 0.0  # zero slope at the outer wall

    rhs = m + dt * adv
    if forcing is not None:
        rhs = rhs + dt * forcing(r, state.t)
        rhs[0] = 0.0

    # implicit conservative radial operator r^(d-1) d/dr (r^(1-d) dm/dr),
    # which equals m_rr - (d-1)/r m_r.  Face coefficients are harmonically
    # integrated (g_face = h d/(r_+^d - r_-^d)), which makes the operator
    # exact on the radial harmonic r^d and a monotone M-matrix through r=0.
    d = state.d
    gm = np.zeros(n)
    gp = np.zeros(n)
    gm[1:] = hm[1:] * d / (r[1:] ** d - r[:-1] ** d)
    gp[:-1] = hp[:-1] * d / (r[1:] ** d - r[:-1] ** d)
    pref = np.zeros(n)
    pref[1:] = r[1:] ** (d - 1)
    hc = 0.5 * (hm + hp)
    c_sub = pref * gm / (hm * hc)
    c_sup = pref * gp / (hp * hc)
    c_diag = -(c_sub + c_sup)

    ab = np.zeros((3, n))
    ab[0, 1:] = -dt * c_sup[:-1]
    ab[1, :] = 1.0 - dt * c_diag
    ab[2, :-1] = -dt * c_sub[1:]
    # r = 0: Dirichlet
    ab[1, 0] = 1.0
    ab[0, 1] = 0.0
    rhs[0] = 0.0
    # r = r_max: zero flux through the outer face
    ab[1, -1] = 1.0 + dt * c_sub[-1]
    ab[2, -2] = -dt * c_sub[-1]

    m_new = solve_banded((1, 1), ab, rhs, check_finite=False)
    if not np.all(np.isfinite(m_new)):
        raise SolverDivergence(
            f"nonfinite values after step at t={state.t:.6g}, dt={dt:.3g}")
    m_new[0] = 0.0   # partial pivoting may leave round-off in the pinned row
    return replace(state, m=m_new, t=state.t + dt)


# ---------------------------------------------------------------------------
# blow-up runs
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    series: TimeSeries
    state: PartialMassState
    T_est: float
    outcome: str   # "blowup" | "no-blowup"


def estimate_blowup_time(series, d):
    """T from the linear trend of R^d over the final decade of shrinking lam."""
    t = series.column("t")
    lam = series.column("lambda")
    R = series.column("R")
    mask = lam <= 10.0 * lam[-1]
    if mask.sum() < 8:
        mask = np.arange(len(t)) >= len(t) // 2
    A = np.vstack([np.ones(int(mask.sum())), -t[mask]]).T
    coef, *_ = np.linalg.lstsq(A, R[mask] ** d, rcond=None)
    c0, c1 = coef
    if c1 <= 0.0:
        return float("nan")
    return float(c0 / c1)


def run_to_blowup(state, stop_ratio=1e-3, density_cap=None, max_steps=400_000,
                  cfl=0.4, record_dtau=2e-3, remesh_lam=5.0, n_nodes=1600,
                  window=30.0, snapshot_dtau=None, snapshot_cb=None):
    """Integrate ring data toward collapse, tracking the ring with the mesh.

    Stops when lam/R <= stop_ratio (outcome "blowup"), when the maximum
    density exceeds density_cap, or after max_steps (outcome "no-blowup",
    not an exception).  Records (t, tau, R, M, lambda, nu, umax,
    mass_total) roughly every record_dtau units of the self-similar clock;
    snapshot_cb(state, tau) fires every snapshot_dtau units when given.
    """
    from . import modulation

    series = TimeSeries(columns=["t", "tau", "R", "M", "lambda", "nu",
                                 "umax", "mass_total"])
    series.dimension = state.d
    d = state.d
    tau = 0.0             # fine per-step accumulation (cadence control)
    rec_prev = None       # (t, M/R^d, tau_recorded) at the last record
    R_mesh = None

    def record(ring):
        # recorded tau is the trapezoid over the recorded values themselves,
        # which makes the series' clock-chain relation hold by construction
        nonlocal rec_prev
        R, lam, M = ring
        g = R ** d / M
        if rec_prev is None:
            tau_rec = 0.0
        else:
            t_prev, g_prev, tau_prev = rec_prev
            tau_rec = tau_prev + (state.t - t_prev) * 2.0 / (g + g_prev)
        rec_prev = (state.t, g, tau_rec)
        u = density_of(state)
        series.append(t=state.t, tau=tau_rec, R=R, M=M,
                      nu=lam / R, umax=float(np.max(u)),
                      mass_total=state.total_mass, **{"lambda": lam})

    ring = modulation.detect_ring(state)
    record(ring)
    if ring[1] / ring[0] <= stop_ratio:
        return RunResult(series, state, float("nan"), "blowup")

    last_tau_rec = 0.0
    last_tau_snap = 0.0
    for _ in range(max_steps):
        R, lam, M = ring
        if R_mesh is None or abs(R - R_mesh) > remesh_lam * lam:
            state = regrid(state, R, lam, n_nodes=n_nodes, window=window)
            R_mesh = R
        dt = cfl_dt(state, cfl)
        f_old = M / R ** d
        state = step(state, dt)
        ring = modulation.detect_ring(state)
        f_new = ring[2] / ring[0] ** d
        tau += 0.5 * (f_old + f_new) * dt

        if snapshot_dtau is not None and snapshot_cb is not None:
            if tau - last_tau_snap >= snapshot_dtau:
                snapshot_cb(state, tau)
                last_tau_snap = tau

        if tau - last_tau_rec >= record_dtau:
            record(ring)
            last_tau_rec = tau

        nu = ring[1] / ring[0]
        if nu <= stop_ratio:
            record(ring)
            return RunResult(series, state, estimate_blowup_time(series, d),
                             "blowup")
        if density_cap is not None:
            if float(np.max(density_of(state))) > density_cap:
                record(ring)
                return RunResult(series, state,
                                 estimate_blowup_time(series, d), "blowup")

    record(ring)
    return RunResult(series, state, float("nan"), "no-blowup")
