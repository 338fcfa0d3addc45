"""Norms, bootstrap membership and comparison-principle audits.

Sup-norms are evaluated on grid nodes only; the barrier audit works from
closed-form derivatives so its margins measure the inequalities themselves,
not a discretization.  Fitted constants (Lyapunov rate, feasible damping
strength) are reported, never asserted against theoretical values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import WeightedGrid, _trapz, assemble_L0
from .profiles import (
    GeometryScales, W, barriers, chihat, chihat_d1, chihat_d2, chi_Aa,
)
from .spectral import dirichlet_form


# ---------------------------------------------------------------------------
# constants of the trapped regime
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapConstants:
    A: float = 10.0
    K: float = float(np.exp(4.0))   # e^(2A/5), midpoint of the allowed window
    kappa: float = 0.01
    eta: float = 0.05
    M0: float = 1.0

    def __post_init__(self):
        if min(self.A, self.K, self.kappa, self.eta, self.M0) <= 0.0:
            raise ValueError("all bootstrap constants must be positive")
        lo, hi = np.exp(0.3 * self.A), np.exp(0.5 * self.A)
        if not (lo <= self.K <= hi):
            raise ValueError(
                f"K={self.K:.4g} outside the admissible window "
                f"[e^(3A/10), e^(A/2)] = [{lo:.4g}, {hi:.4g}]")


@dataclass
class BootstrapReport:
    ok_R: bool
    ok_M: bool
    ok_out_right: bool
    ok_out_left: bool
    ok_inner_norm: bool
    margin_R: float
    margin_M: float
    margin_out_right: float
    margin_out_left: float
    margin_inner_norm: float
    worst_location: float

    @property
    def all_ok(self):
        return (self.ok_R and self.ok_M and self.ok_out_right
                and self.ok_out_left and self.ok_inner_norm)

    def to_record(self):
        return {
            "ok_R": self.ok_R, "ok_M": self.ok_M,
            "ok_out_right": self.ok_out_right, "ok_out_left": self.ok_out_left,
            "ok_inner_norm": self.ok_inner_norm,
            "margin_R": self.margin_R, "margin_M": self.margin_M,
            "margin_out_right": self.margin_out_right,
            "margin_out_left": self.margin_out_left,
            "margin_inner_norm": self.margin_inner_norm,
            "worst_location": self.worst_location,
        }


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def norm_in_sq(xi, m_q, nu, A=10.0, orth_tol=1e-6, check_orth=True):
    """Square of the adapted inner norm  -int (chi m_q) L0 (chi m_q) w0 dxi.

    Requires a uniform xi-grid extending past xi_Ap + 1 on the right.  The
    quadratic form can only be trusted under the first integral condition;
    violations beyond orth_tol raise.  Small negative values (round-off)
    are clipped to zero, values below -1e-12 raise.
    """
    xi = np.asarray(xi, dtype=float)
    h = xi[1] - xi[0]
    if not np.allclose(np.diff(xi), h, rtol=1e-9, atol=1e-12):
        raise ValueError("norm_in needs a uniform xi-grid")
    sc = GeometryScales(nu=nu, A=A)
    if xi[-1] < sc.xi_Ap + 1.0:
        raise ValueError("grid does not cover the inner-zone cutoff")
    if check_orth:
        g1 = float(_trapz(chi_Aa(xi, A) * m_q, xi))
        scale = 1.0 + float(np.max(np.abs(m_q)))
        if abs(g1) > orth_tol * scale:
            raise ValueError(
                f"first integral condition violated (G1={g1:.3e}); "
                "the norm equivalence does not apply")
    m_in = sc.chi_in(xi) * m_q
    grid = WeightedGrid.build_span(xi[0], xi[-1], h)
    L0 = assemble_L0(grid)
    val = -grid.inner(L0.apply(m_in), m_in)
    floor = -1e-12 * max(1.0, float(np.max(np.abs(m_in))) ** 2)
    if val < floor:
        raise ValueError(f"inner quadratic form came out negative ({val:.3e})")
    return max(val, 0.0)


def norm_in(xi, m_q, nu, A=10.0, **kw):
    return float(np.sqrt(norm_in_sq(xi, m_q, nu, A, **kw)))


def norm_in_state(state, **kw):
    xi, mq = state.inner_view()
    return norm_in(xi, mq, state.nu, A=state.A, **kw)


def norm_bou(zeta, m_eps, dm_eps, scales):
    """Boundary-collar quantity sup|m_eps| + nu sup|dm_eps/dzeta|.

    Collars are [zeta_Am -+ 2nu] and [zeta_Ap -+ 2nu]; raises when a collar
    leaves the grid.
    """
    zeta = np.asarray(zeta, dtype=float)
    nu = scales.nu
    collars = []
    for center in (scales.zeta_Am, scales.zeta_Ap):
        lo, hi = center - 2.0 * nu, center + 2.0 * nu
        if lo < zeta[0] or hi > zeta[-1]:
            raise ValueError(f"collar [{lo:.6g}, {hi:.6g}] outside the grid")
        collars.append((zeta >= lo) & (zeta <= hi))
    mask = collars[0] | collars[1]
    return float(np.max(np.abs(m_eps[mask]))
                 + nu * np.max(np.abs(dm_eps[mask])))


def norm_bou_state(state):
    meps = state.m_eps()
    dmeps = np.gradient(meps, state.zeta, edge_order=2)
    return norm_bou(state.zeta, meps, dmeps, state.scales)


# ---------------------------------------------------------------------------
# bootstrap membership
# ---------------------------------------------------------------------------

def bootstrap_check(state, consts, beta=0.375):
    """Evaluate the four trapped-regime inequality families on a state.

    ``state`` is a renormalized state (duck-typed: zeta, m_eps(), nu, R, M,
    tau, d, scales).  Margins are bound minus value, positive = pass.
    """
    sc = GeometryScales(nu=state.nu, A=consts.A, zeta0=state.zeta0,
                        eta=consts.eta)
    tau = state.tau
    zeta = state.zeta
    meps = state.m_eps()
    dmeps = np.gradient(meps, zeta, edge_order=2)

    margin_R = float(min(4.0 * np.exp(-tau / 2.0) - state.R,
                         state.R - np.exp(-tau / 2.0) / 4.0))
    margin_M = float(min(4.0 * consts.M0 - state.M,
                         state.M - consts.M0 / 4.0))

    right = zeta >= sc.zeta_p
    phi1, phi2 = barriers(zeta[right], tau, sc, consts.K, consts.kappa,
                          "right", state.d, beta)
    bound_r = 2.0 * (phi1 * chihat(zeta[right], consts.eta) + phi2)
    diff_r = bound_r - np.abs(dmeps[right])
    i_r = int(np.argmin(diff_r))
    margin_r = float(diff_r[i_r])

    left = (zeta <= sc.zeta_m) & (zeta > 0.0)
    phi1l, phi2l = barriers(zeta[left], tau, sc, consts.K, consts.kappa,
                            "left", state.d, beta)
    bound_l = 2.0 * (phi1l * chihat(zeta[left], consts.eta) + phi2l)
    diff_l = bound_l - np.abs(dmeps[left])
    i_l = int(np.argmin(diff_l))
    margin_l = float(diff_l[i_l])

    margin_n = float(consts.K * np.exp(-consts.kappa * tau)
                     - norm_in_state(state))

    worst = min((margin_r, float(zeta[right][i_r])),
                (margin_l, float(zeta[left][i_l])))[1]
    return BootstrapReport(
        ok_R=margin_R > 0.0, ok_M=margin_M > 0.0,
        ok_out_right=margin_r > 0.0, ok_out_left=margin_l > 0.0,
        ok_inner_norm=margin_n > 0.0,
        margin_R=margin_R, margin_M=margin_M,
        margin_out_right=margin_r, margin_out_left=margin_l,
        margin_inner_norm=margin_n, worst_location=worst)


# ---------------------------------------------------------------------------
# supersolution audit
# ---------------------------------------------------------------------------

def _parabolic_action_right(zeta, nu, d, kappa, K, eta, beta, rho, zeta_p, tau):
    """(d/dtau - A1)(phi1 chihat + phi2) from closed-form derivatives."""
    phi1 = 0.5 * K ** 1.25 * np.exp(-kappa * tau) * np.exp(-beta * (zeta - zeta_p) / nu)
    phi2 = 0.5 * np.exp(-kappa * tau) * zeta ** (d - 1)
    ch = chihat(zeta, eta)
    ch1 = chihat_d1(zeta, eta)
    ch2 = chihat_d2(zeta, eta)
    ratio1 = ((beta / nu) * (zeta ** (1 - d) - 0.5 * zeta - beta
                             + rho * (zeta - 1.0 - 4.0 * nu))
              + (d - 1) / zeta ** d + 0.5 - kappa)
    commutator = (2.0 * nu * ch1 * (-beta / nu) * phi1
                  + (nu * ch2 + (zeta ** (1 - d) - 0.5 * zeta) * ch1) * phi1)
    ratio2 = -kappa + d / 2.0 - nu * (d - 1) * (d - 2) / zeta ** 2
    return ch * ratio1 * phi1 - commutator + ratio2 * phi2, phi1, phi2, ch


def _parabolic_action_left(zeta, nu, d, kappa, K, eta, beta, rho, zeta_m, tau):
    phi1 = 0.5 * K ** 1.25 * np.exp(-kappa * tau) * np.exp(-beta * (zeta_m - zeta) / nu)
    phi2 = 0.5 * nu * np.exp(-kappa * tau) * zeta ** (d - 1)
    ch = chihat(zeta, eta)
    ch1 = chihat_d1(zeta, eta)
    ch2 = chihat_d2(zeta, eta)
    ratio1 = (-kappa + (beta / nu) * (rho * (1.0 - 4.0 * nu - zeta)
                                      + 0.5 * zeta - beta)
              + 0.5 + beta * (d - 1) / zeta - nu * (d - 1) / zeta ** 2)
    commutator = (-0.5 * zeta * ch1 * phi1
                  + nu * (ch2 * phi1 + 2.0 * ch1 * (beta / nu) * phi1
                          - (d - 1) / zeta * ch1 * phi1))
    ratio2 = -kappa + rho + d / 2.0
    return ch * ratio1 * phi1 - commutator + ratio2 * phi2, phi1, phi2, ch


def supersolution_audit(nu, d, kappa=0.01, eta=0.05, K=float(np.exp(4.0)),
                        A=10.0, beta=0.375, tau=0.0, n=6001):
    """Margins of the exterior barrier inequalities, from exact calculus.

    For each side the audit evaluates

        (d/dtau - A1)(phi1 chihat + phi2)
            - [phi1 chihat/(16 nu) + c2 phi2],    c2 = 3/16 (right), 1/4 (left)

    on a fine zeta-grid with d(log nu)/dtau frozen at -(d-2)/2, reporting
    the signed minimum (the claimed damping strength has a nonnegative
    margin iff the minimum is >= 0).  Two further outputs make the audit
    informative regardless of the claimed constants:

    * feasible_c_*: the largest damping constant c such that
      (d/dtau - A1)(barrier) >= (c/nu) phi1 chihat + c2 phi2 does hold on
      the grid (so the barrier is a genuine supersolution with strength
      feasible_c/nu);
    * varphi2_identity: residual of (d/dtau - A1) phi2 against the exact
      zero-order bracket [-kappa + d/2 - nu (d-1)(d-2)/zeta^2] phi2,
      computed through an independent code path (the pointwise operator
      evaluator), together with the deviation of the (1/(2 zeta))-variant
      of that bracket for reference.

    kappa >= 1/4 violates the validity window of the zero-order bound; the
    audit still runs but flags ``requirement_violated``.
    """
    from .operators import a1_pointwise

    if nu <= 0.0 or nu > 1e-2:
        raise ValueError("audit expects 0 < nu <= 1e-2")
    sc = GeometryScales(nu=nu, A=A, eta=eta)
    rho = -(d - 2) / 2.0

    # right side: dense through the cutoff transition, coarse beyond
    z_r = np.concatenate([
        np.linspace(sc.zeta_p, 1.0 + 3.0 * eta, n),
        np.linspace(1.0 + 3.0 * eta, 4.0, 400)[1:],
    ])
    act_r, phi1_r, phi2_r, ch_r = _parabolic_action_right(
        z_r, nu, d, kappa, K, eta, beta, rho, sc.zeta_p, tau)
    req_r = phi1_r * ch_r / (16.0 * nu) + (3.0 / 16.0) * phi2_r
    margin_r = act_r - req_r
    i_r = int(np.argmin(margin_r))

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        c_r = nu * (act_r - (3.0 / 16.0) * phi2_r) / (phi1_r * ch_r)
    c_r = c_r[ch_r > 0.5]
    feasible_c_r = float(np.min(c_r)) if c_r.size else float("inf")

    # left side
    z_l = np.concatenate([
        np.linspace(max(1.0 - 3.0 * eta, 1e-3), sc.zeta_m, n),
        np.linspace(1e-3, max(1.0 - 3.0 * eta, 2e-3), 400)[:-1],
    ])
    z_l = np.sort(z_l)
    act_l, phi1_l, phi2_l, ch_l = _parabolic_action_left(
        z_l, nu, d, kappa, K, eta, beta, rho, sc.zeta_m, tau)
    req_l = phi1_l * ch_l / (16.0 * nu) + 0.25 * phi2_l
    margin_l = act_l - req_l
    i_l = int(np.argmin(margin_l))

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        c_l = nu * (act_l - 0.25 * phi2_l) / (phi1_l * ch_l)
    c_l = c_l[ch_l > 0.5]
    feasible_c_l = float(np.min(c_l)) if c_l.size else float("inf")

    # independent check of the zero-order identity for phi2 (right side)
    zz = np.linspace(1.0, 3.0, 2001)
    phi2 = 0.5 * np.exp(-kappa * tau) * zz ** (d - 1)
    dphi2 = (d - 1) * phi2 / zz
    d2phi2 = (d - 1) * (d - 2) * phi2 / zz ** 2
    lhs = -kappa * phi2 - a1_pointwise(zz, phi2, dphi2, d2phi2, nu, d, "right")
    bracket_exact = (-kappa + d / 2.0 - nu * (d - 1) * (d - 2) / zz ** 2) * phi2
    bracket_halfzeta = (-kappa + 0.5 + (d - 1) / (2.0 * zz)
                        - nu * (d - 1) * (d - 2) / zz ** 2) * phi2
    ident = float(np.max(np.abs(lhs - bracket_exact)) / np.max(np.abs(phi2)))
    ident_halfzeta = float(np.max(np.abs(lhs - bracket_halfzeta))
                           / np.max(np.abs(phi2)))

    return {
        "min_margin_right": float(margin_r[i_r]),
        "argmin_right": float(z_r[i_r]),
        "min_margin_left": float(margin_l[i_l]),
        "argmin_left": float(z_l[i_l]),
        "normalized_margin_right": float(np.min(act_r / req_r)) - 1.0,
        "normalized_margin_left": float(np.min(act_l / req_l)) - 1.0,
        "feasible_c_right": feasible_c_r,
        "feasible_c_left": feasible_c_l,
        "positivity_right": float(np.min(act_r)),
        "positivity_left": float(np.min(act_l)),
        "varphi2_identity": ident,
        "varphi2_halfzeta_deviation": ident_halfzeta,
        "requirement_violated": bool(kappa >= 0.25),
        "localizer_reaches_edge": bool(4.0 * nu * abs(np.log(nu)) <= eta),
    }


# ---------------------------------------------------------------------------
# Lyapunov trend
# ---------------------------------------------------------------------------

def lyapunov_monitor(s, norm_in_sq_values, nu_values=None, bou_values=None,
                     A=10.0):
    """Fit the decay constant of the inner energy along a run (monitor).

    Given samples f(s) of the squared inner norm, reports

    * delta2: log-linear regression rate of f on the window where the
      source term is negligible (the pure-decay rate; 2/16 would be the
      clean spectral prediction),
    * C: smallest constant so that df/ds <= -delta2 f + C * source holds at
      every sample, with source = e^(A/2) nu^-2 bou^2 + nu^2 (taken as 0
      when no nu/bou data accompany the run).

    Raises on fewer than 10 samples; a vanishing f is flagged degenerate.
    """
    s = np.asarray(s, dtype=float)
    f = np.asarray(norm_in_sq_values, dtype=float)
    if s.size < 10:
        raise ValueError("need at least 10 consecutive samples")
    if float(np.max(f)) <= 1e-28:
        return {"degenerate": True, "delta2": float("nan"), "C": 0.0,
                "first_failure_s": float("nan")}

    df = np.gradient(f, s, edge_order=2)
    if nu_values is None or bou_values is None:
        source = np.zeros_like(f)
    else:
        nu_v = np.asarray(nu_values, dtype=float)
        bou = np.asarray(bou_values, dtype=float)
        source = np.exp(A / 2.0) * bou ** 2 / nu_v ** 2 + nu_v ** 2

    clean = source <= 0.05 * np.abs(df) + 1e-300
    window = clean & (f > 1e-14 * float(np.max(f)))
    if window.sum() >= 5:
        delta2 = -float(np.polyfit(s[window], np.log(f[window]), 1)[0])
    else:
        delta2 = -float(np.polyfit(s, np.log(np.maximum(f, 1e-300)), 1)[0])

    viol = df + delta2 * f
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(viol > 0.0, viol / np.where(source > 0, source, np.inf), 0.0)
    C = float(np.max(ratios))
    bad = np.where((viol > 0.0) & (source == 0.0))[0]
    first_failure = float(s[bad[0]]) if bad.size else float("nan")
    return {"degenerate": False, "delta2": delta2, "C": C,
            "first_failure_s": first_failure}
