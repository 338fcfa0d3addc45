"""Self-similar-frame solver, Burgers mode, and frame equivalence."""

import numpy as np
import pytest

from ringcollapse import modulation as MOD
from ringcollapse import physical as PH
from ringcollapse import renormalized as RN
from ringcollapse import operators as O
from ringcollapse import profiles as P
from ringcollapse.spectral import random_bump_sum


def test_zero_step_is_identity():
    st = RN.init_renormalized(3, 40.0)
    st2, rates = RN.step_renormalized(st, 0.0)
    assert st2 is st
    assert rates == (0.0, 0.0)


def test_smoothed_step_stationary_inviscid():
    # sharp-interface profile with frozen rates: stationary up to
    # discretization error of the upwind transport
    zeta = np.linspace(0.05, 3.0, 2951)
    mw = P.Q((zeta - 1.0) / 0.01)      # smoothed step of width 0.01
    mw[0] = 0.0
    st = RN.RenormalizedState(d=3, zeta=zeta, mw=mw, R=1.0, M=1e12, nu=1e-12)
    h = zeta[1] - zeta[0]
    sup0 = mw.copy()
    for _ in range(200):
        st, _ = RN.step_renormalized(st, 5e-4, rates=(0.0, 0.0),
                                     auto_regrid=False)
    drift = np.max(np.abs(st.mw - sup0))
    assert drift < 5.0 * h    # first-order transport: O(h) steady offset


def test_profile_error_identity():
    # outer equation applied to the truncated profile minus its tau
    # derivative reproduces the generated error (pure function identity)
    st = RN.init_renormalized(3, 40.0)
    a, mtau = 0.0, 0.0
    zeta = st.zeta
    qb = P.Qbar_nu(zeta, st.nu, st.zeta0)
    dqb = P.dQbar_nu(zeta, st.nu, st.zeta0)
    d2qb = P.d2Qbar_nu(zeta, st.nu, st.zeta0)
    lhs = O.rhs_phisfrsft(zeta, qb, dqb, d2qb, st.nu, a, mtau, st.d) \
        - O.dtau_Qbar(zeta, st.nu, a, mtau, st.d, st.zeta0)
    rhs = O.eval_mE(zeta, st.nu, a, mtau, st.d, st.zeta0)
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * (np.max(np.abs(rhs)) + 1e-30)


def test_equation_consistency_on_evolving_state():
    st = RN.init_renormalized(3, 40.0)
    rng = np.random.default_rng(2)
    bump = random_bump_sum(rng, st.zeta, n_max=3, center_span=0.3,
                           width_range=(0.05, 0.2))
    st.mw = st.mw + 0.01 * bump["f"]
    st.mw[0] = 0.0
    res = RN.equation_consistency(st, rates=(0.02, -0.01))
    assert res["max"] < 1e-8


def test_nu_identity_preserved_and_clocks_chain():
    st = RN.init_renormalized(3, 40.0)
    ser, st2 = RN.run_renormalized(st, 0.2, with_norms=False)
    assert abs(st2.nu - st2.R ** (st2.d - 2) / st2.M) <= 1e-8 * st2.nu
    assert ser.clock_chain_defect() < 1e-12
    # ds = dtau/nu chain, same trapezoid convention
    tau = ser.column("tau")
    s = ser.column("s")
    nu = ser.column("nu")
    pred = np.diff(tau) * 0.5 * (1.0 / nu[1:] + 1.0 / nu[:-1])
    assert np.max(np.abs(pred - np.diff(s)) / np.diff(s)) < 1e-12


def test_zone_bookkeeping_during_run():
    st = RN.init_renormalized(3, 40.0)
    ser, st2 = RN.run_renormalized(st, 0.2, with_norms=False)
    sc = st2.scales
    assert abs((sc.zeta_Ap - 1.0) / sc.nu - sc.xi_Ap) < 1e-10 * sc.xi_Ap
    assert abs((sc.zeta_p - 1.0) / sc.nu - sc.xi_p) < 1e-10 * sc.xi_p


def test_rates_settle_to_geometry_scale():
    # on the profile the closed rates are O(nu): check the magnitude chain
    st = RN.init_renormalized(3, 400.0)      # nu = 2.5e-3
    (a, b), info = RN.compute_rates(st)
    assert abs(a) < 10.0 * st.nu
    assert abs(b) < 10.0 * st.nu ** 2 + 1e-10
    assert np.max(np.abs(info["residuals"])) < 1e-10


@pytest.mark.slow
def test_frame_equivalence_with_physical_solver():
    # evolve the same ring through the physical and the renormalized
    # solvers over Delta tau = 1 and compare the renormalized fields
    st0 = RN.init_renormalized(3, 40.0)
    ser_r, str_ = RN.run_renormalized(st0, 1.0, with_norms=False)
    t_target = str_.t

    stp = PH.init_ring(3, 40.0, 1.0, 1.0 / 40.0, n_nodes=2400)
    ring = MOD.detect_ring(stp)
    R_mesh = ring.R
    while stp.t < t_target:
        ring = MOD.detect_ring(stp)
        if abs(ring.R - R_mesh) > 5.0 * ring.lam:
            stp = PH.regrid(stp, ring.R, ring.lam, n_nodes=2400)
            R_mesh = ring.R
        dt = min(PH.cfl_dt(stp), t_target - stp.t)
        stp = PH.step(stp, dt)
    mod, _, _ = MOD.decompose(stp, (ring.R, ring.M))
    assert abs(mod.R - str_.R) / str_.R < 5e-3
    assert abs(mod.M - str_.M) / str_.M < 5e-3
    mw_phys = np.interp(str_.zeta * mod.R, stp.r, stp.m) / mod.M
    mask = (str_.zeta > 0.1) & (str_.zeta < 3.5)
    assert np.max(np.abs((mw_phys - str_.mw)[mask])) < 5e-3


# ---------------------------------------------------------------------------
# Burgers mode
# ---------------------------------------------------------------------------

def burgers_box(h=0.02):
    xi = np.linspace(-80.0, 80.0, int(round(160.0 / h)) + 1)
    return xi, O.WeightedGrid.build_span(xi[0], xi[-1], h)


def test_wave_is_discretely_stationary():
    xi, _ = burgers_box()
    f, _ = RN.run_burgers(P.Q(xi), xi, 10.0)
    assert np.max(np.abs(f - P.Q(xi))) < 1e-6


def test_translate_relaxes_to_translate():
    from scipy.optimize import minimize_scalar
    xi, _ = burgers_box()
    f, _ = RN.run_burgers(P.Q(xi + 3.0), xi, 30.0)
    r = minimize_scalar(lambda c: float(np.max(np.abs(f - P.Q(xi + c)))),
                        bounds=(-1.0, 5.0), method="bounded")
    assert abs(r.x - 3.0) < 1e-3
    assert r.fun < 1e-4


def test_projected_perturbation_decays_at_gap_rate():
    xi, grid = burgers_box()
    rng = np.random.default_rng(7)
    bump = random_bump_sum(rng, xi, n_max=4, center_span=6.0)["f"]
    qp = P.W(xi)
    bump -= qp * grid.inner(bump, qp) / grid.inner(qp, qp)
    bump *= 0.05 / np.max(np.abs(bump))
    norms = []

    def obs(f, s):
        diff = f - P.Q(xi)
        norms.append((s, np.sqrt(grid.inner(diff, diff))))

    RN.run_burgers(P.Q(xi) + bump, xi, 40.0, observer=obs, observe_ds=0.5)
    arr = np.array(norms)
    keep = arr[:, 0] >= 5.0
    rate = -np.polyfit(arr[keep, 0], np.log(arr[keep, 1]), 1)[0]
    assert rate >= 0.05
    assert arr[-1, 1] < arr[0, 1]


def test_burgers_cfl_guard():
    xi, _ = burgers_box(h=0.1)
    with pytest.raises(RN.CFLViolation):
        RN.step_burgers(P.Q(xi), 1.0, 0.1)
