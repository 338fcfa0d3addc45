"""Ring decomposition, rate closure and blow-up-law fitting.

The decomposition of a partial-mass profile into (R, M, remainder) is fixed
by two integral conditions on the inner remainder

    G1 = int chi_A(xi) m_q dxi = 0,
    G2 = int chi0(xi - xi_Ap) m_q dxi = 0,

where m_q(xi) = m(R(1 + nu xi))/M - Qbar(xi) and nu = R^(d-2)/M.  Because
the weight satisfies dQ/dxi * omega0 = 1/2 pointwise, G1 is exactly twice
the weighted projection onto the kernel direction, so these are the
orthogonality conditions of the coercivity theory in unweighted disguise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from . import operators as ops
from .operators import _trapz
from .profiles import Q, W, chi_Aa, chi0_d1, chibar, chibar_d1

W_HALF_WIDTH = 7.0509886961563442    # full width at half max of dQ in xi units


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------

@dataclass
class ModulationState:
    """Ring frame (R, M) with the derived scales and the three clocks."""

    R: float
    M: float
    nu: float
    lam: float
    d: int
    t: float = 0.0
    tau: float = 0.0
    s: float = 0.0

    def __post_init__(self):
        if min(self.R, self.M, self.nu, self.lam) <= 0.0:
            raise ValueError("R, M, nu, lam must be positive")
        if abs(self.nu * self.M - self.R ** (self.d - 2)) > 1e-12 * self.R ** (self.d - 2):
            raise ValueError("nu * M must equal R^(d-2)")
        if abs(self.lam * self.M - self.R ** (self.d - 1)) > 1e-12 * self.R ** (self.d - 1):
            raise ValueError("lam must equal R^(d-1)/M")

    @classmethod
    def from_RM(cls, R, M, d, t=0.0, tau=0.0, s=0.0):
        nu = R ** (d - 2) / M
        return cls(R=R, M=M, nu=nu, lam=R * nu, d=d, t=t, tau=tau, s=s)


@dataclass
class BlowupFit:
    """Fitted blow-up law parameters and regression residuals."""

    T: float
    M_inf: float
    R_tilde_inf: float
    nu_tilde_inf: float
    resid_R: float
    resid_M: float
    R_slope: float      # free-slope regression of log R vs tau (ideal -1/2)
    nu_slope: float     # free-slope regression of log nu vs tau (ideal -(d-2)/2)

    def to_record(self):
        return {
            "T": self.T,
            "M_inf": self.M_inf,
            "R_tilde_inf": self.R_tilde_inf,
            "nu_tilde_inf": self.nu_tilde_inf,
            "resid_R": self.resid_R,
            "resid_M": self.resid_M,
            "R_slope": self.R_slope,
            "nu_slope": self.nu_slope,
        }


# ---------------------------------------------------------------------------
# ring detection (initial-guess provider)
# ---------------------------------------------------------------------------

def detect_ring(state, mass_window=25.0):
    """Locate the ring from the density maximum and its half-max width.

    Returns (R, lam, M): lam is the full width at half maximum divided by
    the reference width of the wave profile, M the mass inside +-
    mass_window*lam of the ring (clipped to the grid span).  Raises if the
    density has no interior maximum.  A second comparable interior peak is
    reported through the 'multimodal' attribute on the returned tuple-like.
    """
    from .physical import density_of

    r, m = state.r, state.m
    u = density_of(state)
    i = int(np.argmax(u))
    if i == 0 or i == u.size - 1 or u[i] <= 0.0:
        raise ValueError("density has no interior maximum (no visible ring)")

    # parabolic refinement of the peak location
    denom = u[i - 1] - 2.0 * u[i] + u[i + 1]
    shift = 0.0
    if denom < 0.0:
        shift = 0.5 * (u[i - 1] - u[i + 1]) / denom
        shift = float(np.clip(shift, -1.0, 1.0))
    R = r[i] + shift * (r[i + 1] - r[i] if shift >= 0 else r[i] - r[i - 1])
    umax = float(u[i])

    half = umax / 2.0
    j = i
    while j > 0 and u[j] > half:
        j -= 1
    if u[j] == u[j + 1]:
        r_left = r[j]
    else:
        r_left = r[j] + (half - u[j]) / (u[j + 1] - u[j]) * (r[j + 1] - r[j])
    k = i
    while k < u.size - 1 and u[k] > half:
        k += 1
    if u[k] == u[k - 1]:
        r_right = r[k]
    else:
        r_right = r[k - 1] + (half - u[k - 1]) / (u[k] - u[k - 1]) * (r[k] - r[k - 1])
    lam = (r_right - r_left) / W_HALF_WIDTH

    lo = max(R - mass_window * lam, r[0])
    hi = min(R + mass_window * lam, r[-1])
    M = float(np.interp(hi, r, m) - np.interp(lo, r, m))

    # flag a second comparable interior peak
    interior = u[1:-1]
    peaks = np.where((interior > np.roll(interior, 1))
                     & (interior > np.roll(interior, -1))
                     & (interior > 0.3 * umax))[0]
    multimodal = False
    if peaks.size > 1:
        gaps = np.diff(np.sort(peaks))
        multimodal = bool(np.any(gaps > 3))

    result = RingEstimate(R=float(R), lam=float(lam), M=M, umax=umax,
                          multimodal=multimodal)
    return result


@dataclass
class RingEstimate:
    R: float
    lam: float
    M: float
    umax: float
    multimodal: bool

    def __iter__(self):
        return iter((self.R, self.lam, self.M))

    def __getitem__(self, k):
        return (self.R, self.lam, self.M)[k]


# ---------------------------------------------------------------------------
# decomposition by the two integral conditions
# ---------------------------------------------------------------------------

def _remainder_on_grid(interp, r_span, R, M, d, xi, zeta0):
    nu = R ** (d - 2) / M
    rr = R * (1.0 + nu * xi)
    if rr[0] < r_span[0] - 1e-12 or rr[-1] > r_span[1] + 1e-12:
        raise ValueError("decomposition window leaves the radial grid")
    m_vals = interp(np.clip(rr, r_span[0], r_span[1]))
    zeta = 1.0 + nu * xi
    qbar = Q(xi) * chibar(zeta, zeta0)
    return m_vals / M - qbar, nu


def decompose(state, guess, A=10.0, zeta0=0.25, h_xi=0.05, tol=1e-13,
              max_iter=25, min_cond=1e-10):
    """Solve the two integral conditions for (R, M) by damped Newton.

    ``guess`` is (R, M) or a ModulationState within the basin (the ring
    detector provides one).  Returns (ModulationState, xi, m_q).
    """
    if isinstance(guess, ModulationState):
        R, M = guess.R, guess.M
    else:
        R, M = float(guess[0]), float(guess[1])
    d = state.d
    interp = PchipInterpolator(state.r, state.m, extrapolate=False)
    r_span = (state.r[0], state.r[-1])

    def conditions(Rv, Mv):
        nu = Rv ** (d - 2) / Mv
        xi_Ap = 4.0 * abs(np.log(nu)) + A
        # cover the full support of the localizing weight; the profile
        # truncation keeps the integrand well-defined down to r ~ 0
        lo = -min(2.0 * A + 2.0, (1.0 - 1e-3) / nu)
        hi = xi_Ap + 3.0
        n = int(np.ceil((hi - lo) / h_xi))
        xi = np.linspace(lo, hi, n + 1)
        mq, _ = _remainder_on_grid(interp, r_span, Rv, Mv, d, xi, zeta0)
        w1 = chi_Aa(xi, A)
        w2 = chi_Aa(xi, 1.0, xi_Ap)
        g1 = float(_trapz(w1 * mq, xi))
        g2 = float(_trapz(w2 * mq, xi))
        return np.array([g1, g2]), xi, mq

    g, xi, mq = conditions(R, M)
    for _ in range(max_iter):
        if np.linalg.norm(g) <= tol:
            break
        eps = 1e-6
        gR, _, _ = conditions(R * (1.0 + eps), M)
        gM, _, _ = conditions(R, M * (1.0 + eps))
        J = np.column_stack([(gR - g) / (R * eps), (gM - g) / (M * eps)])
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or 1.0 / cond < min_cond:
            raise RuntimeError(f"decomposition Jacobian ill-conditioned (1/cond={1.0/cond:.2e})")
        dRM = np.linalg.solve(J, -g)
        step_size = 1.0
        for _ in range(12):
            R_new = R + step_size * dRM[0]
            M_new = M + step_size * dRM[1]
            if R_new > 0.0 and M_new > 0.0:
                g_new, xi, mq = conditions(R_new, M_new)
                if np.linalg.norm(g_new) < np.linalg.norm(g):
                    break
            step_size *= 0.5
        else:
            raise RuntimeError("decomposition Newton stalled (damping exhausted)")
        R, M, g = R_new, M_new, g_new
    else:
        if np.linalg.norm(g) > tol:
            raise RuntimeError(
                f"decomposition Newton did not converge in {max_iter} iterations "
                f"(|G| = {np.linalg.norm(g):.3e})")

    mod = ModulationState.from_RM(R, M, d, t=state.t)
    return mod, xi, mq


# ---------------------------------------------------------------------------
# rate closure
# ---------------------------------------------------------------------------

def close_rates(xi, mq, nu, d, A=10.0, zeta0=0.25, dmq=None, d2mq=None):
    """Rates (a, b) = (R_tau/R + 1/2, M_s/M) killing the drift of G1, G2.

    Solves the 2x2 linear system obtained by inserting the inner equation
    into d/ds G1 = d/ds G2 = 0; both the lower-order linear term and the
    profile error are affine in (a, b), and the moving right cutoff of G2
    contributes its own affine correction.  Returns ((a, b), info) with the
    re-projected residuals in info.
    """
    xi = np.asarray(xi, dtype=float)
    h = xi[1] - xi[0]
    if dmq is None:
        dmq = np.gradient(mq, h, edge_order=2)
    if d2mq is None:
        d2mq = np.gradient(dmq, h, edge_order=2)

    xi_Ap = 4.0 * abs(np.log(nu)) + A
    row1 = chi_Aa(xi, A)
    row2 = chi_Aa(xi, 1.0, xi_Ap)
    drow2 = chi0_d1(xi - xi_Ap)

    base = (ops.l0_pointwise(xi, mq, dmq, d2mq)
            + mq * dmq / (1.0 + nu * xi) ** (d - 1))

    def total(a, b):
        return (base
                + ops.eval_L_term(xi, mq, dmq, nu, a, b, d, zeta0)
                + ops.eval_Psi(xi, nu, a, b, d, zeta0))

    t00 = total(0.0, 0.0)
    t10 = total(1.0, 0.0) - t00
    t01 = total(0.0, 1.0) - t00

    # moving-cutoff correction for G2: int mq d/ds chi0(xi - xi_Ap) dxi
    i2 = float(_trapz(mq * drow2, xi))
    corr_c = 4.0 * nu * (-(d - 2) / 2.0) * i2
    corr_a = 4.0 * nu * (d - 2) * i2
    corr_b = -4.0 * i2

    def proj(row, vals):
        return float(_trapz(row * vals, xi))

    c = np.array([proj(row1, t00), proj(row2, t00) + corr_c])
    mat = np.array([
        [proj(row1, t10), proj(row1, t01)],
        [proj(row2, t10) + corr_a, proj(row2, t01) + corr_b],
    ])
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > 1e12:
        raise RuntimeError(f"rate-closure projection matrix singular (cond={cond:.2e})")
    sol = np.linalg.solve(mat, -c)
    a, b = float(sol[0]), float(sol[1])

    resid = np.array([proj(row1, total(a, b)),
                      proj(row2, total(a, b)) + corr_c + a * corr_a + b * corr_b])
    info = {"cond": float(cond), "residuals": resid}
    return (a, b), info


# ---------------------------------------------------------------------------
# blow-up law fitting
# ---------------------------------------------------------------------------

def recompute_tau(t, R, M, d):
    """Trapezoid accumulation of M/R^d dt (for series lacking a tau column)."""
    f = M / R ** d
    out = np.zeros_like(t)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return out


def fit_blowup_law(series, d, decade=10.0):
    """Fit T, M_inf and the renormalized prefactors on the final decade.

    The window is the last decade of the shrinking width, lam <= decade *
    lam_min (the transient before it would bias T); requires the series to
    span at least 1.5 decades of lam overall.  M_inf is the late-time mean
    of M; T is the least-squares solution of R^d = (d/2) M_inf (T - t);
    R_tilde_inf is the pinned-slope intercept of log R + tau/2 and
    nu_tilde_inf is derived from it so the prefactor identity holds
    exactly.  Free-slope regressions of log R and log nu against tau are
    reported as diagnostics.
    """
    t = series.column("t")
    lam = series.column("lambda")
    R = series.column("R")
    M = series.column("M")
    try:
        tau = series.column("tau")
    except (ValueError, AttributeError):
        tau = recompute_tau(t, R, M, d)
    if np.ptp(tau) == 0.0:
        tau = recompute_tau(t, R, M, d)

    span = lam.max() / lam.min()
    if span < 10 ** 1.5:
        raise ValueError(
            f"insufficient dynamic range: lam spans {np.log10(span):.2f} decades, need 1.5")
    mask = lam <= decade * lam.min()
    if mask.sum() < 8:
        raise ValueError("fit window too small")

    tw, Rw, Mw, tauw = t[mask], R[mask], M[mask], tau[mask]
    M_inf = float(np.mean(Mw))
    # fit T in log space (relative residuals of the power law), which keeps
    # R^d/(T - t) flat all the way to the last record
    scale = Rw[-1] ** d / ((d / 2.0) * M_inf)
    logRd = d * np.log(Rw)

    def log_spread(T):
        return float(np.var(logRd - np.log(T - tw)))

    opt = minimize_scalar(log_spread, bounds=(tw[-1] + 0.05 * scale,
                                              tw[-1] + 100.0 * scale),
                          method="bounded", options={"xatol": 1e-16})
    T = float(opt.x)
    resid_law = 1.0 - (d / 2.0) * M_inf * (T - tw) / Rw ** d
    resid_R = float(np.sqrt(np.mean(resid_law ** 2)))
    resid_M = float(np.std(Mw) / M_inf)

    logR = np.log(Rw)
    lognu = np.log(Rw ** (d - 2) / Mw)
    R_tilde = float(np.exp(np.mean(logR + tauw / 2.0)))
    nu_tilde = R_tilde ** (d - 2) / M_inf
    R_slope = float(np.polyfit(tauw, logR, 1)[0])
    nu_slope = float(np.polyfit(tauw, lognu, 1)[0])

    return BlowupFit(T=T, M_inf=M_inf, R_tilde_inf=R_tilde,
                     nu_tilde_inf=nu_tilde, resid_R=resid_R, resid_M=resid_M,
                     R_slope=R_slope, nu_slope=nu_slope)
