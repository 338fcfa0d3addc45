"""Partial-mass solver: initial data, stepping, conservation, convergence."""

import numpy as np
import pytest

from ringcollapse import physical as PH
from ringcollapse import profiles as P


def test_init_ring_profile_values():
    st = PH.init_ring(3, 40.0, 1.0, 1.0 / 40.0)
    assert abs(np.interp(1.0, st.r, st.m) - 20.0) < 1e-9
    assert np.all(st.m[st.r <= 0.25] == 0.0)
    nu = 1.0 / 40.0
    m_at = np.interp(1.0 + 20.0 * nu, st.r, st.m) / 40.0
    assert 1.0 - 1e-4 <= m_at <= 1.0


def test_init_ring_rejects_fat_ring():
    with pytest.raises(ValueError):
        PH.init_ring(3, 1.0, 1.0, 2.0)


def test_state_validation():
    with pytest.raises(ValueError):
        PH.PartialMassState(d=2, r=np.array([0.0, 1.0]), m=np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        PH.PartialMassState(d=3, r=np.array([0.1, 1.0]), m=np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        PH.PartialMassState(d=3, r=np.array([0.0, 1.0]), m=np.array([0.5, 1.0]))


def test_zero_state_is_equilibrium():
    r = np.linspace(0.0, 4.0, 200)
    st = PH.PartialMassState(d=3, r=r, m=np.zeros_like(r))
    out = PH.step(st, 1e-3)
    assert np.max(np.abs(out.m)) == 0.0


def test_rhs_algebra_on_uniform_density():
    # m = c r^d / d gives m_rr - (d-1)/r m_r + m m_r/r^(d-1) = c^2 r^d / d
    for d in (3, 4):
        r = np.linspace(0.1, 2.0, 500)
        c = 0.7
        m = c * r ** d / d
        dm = c * r ** (d - 1)
        d2m = c * (d - 1) * r ** (d - 2)
        rhs = PH.mass_equation_rhs(r, m, dm, d2m, d)
        assert np.max(np.abs(rhs - c ** 2 * r ** d / d)) < 1e-8


def test_single_step_conserves_outer_mass():
    st = PH.init_ring(3, 40.0, 1.0, 1.0 / 40.0)
    out = PH.step(st, PH.cfl_dt(st))
    assert abs(out.total_mass - st.total_mass) <= 1e-10 * st.total_mass


def test_density_recovery_uniform():
    # the centered difference of r^3/3 carries an O(h^2) absolute error that
    # the 1/r^2 factor amplifies near the origin, so the tight tolerance
    # applies away from it
    r = np.linspace(0.0, 2.0, 2001)
    st = PH.PartialMassState(d=3, r=r, m=r ** 3 / 3.0)
    u = PH.density_of(st)
    interior = (r >= 0.3) & (r < r[-1])
    assert np.max(np.abs(u[interior] - 1.0)) < 1e-5
    assert np.max(np.abs(u[(r >= 0.05) & (r < r[-1])] - 1.0)) < 1e-3
    assert abs(u[-1] - 1.0) < 1e-2   # one-sided boundary estimate


def test_density_recovery_zero():
    r = np.linspace(0.0, 2.0, 50)
    st = PH.PartialMassState(d=3, r=r, m=np.zeros_like(r))
    assert np.max(np.abs(PH.density_of(st))) == 0.0


def test_density_peak_matches_profile_height():
    # at nu = 1e-3 the geometric tilt is negligible and the peak sits
    # within 2% of (M0/(R0^(d-1) lam0)) W(0)
    st = PH.init_ring(3, 1000.0, 1.0, 1e-3)
    u = PH.density_of(st)
    predicted = 1000.0 / (1.0 ** 2 * 1e-3) * 0.125
    assert abs(np.max(u) - predicted) / predicted < 0.02


def test_monotonicity_preserved_over_steps():
    st = PH.init_ring(3, 40.0, 1.0, 1.0 / 40.0)
    for _ in range(50):
        st = PH.step(st, PH.cfl_dt(st))
        assert st.monotonicity_defect() >= -1e-10


def test_divergence_reported():
    r = np.linspace(0.0, 2.0, 100)
    st = PH.PartialMassState(d=3, r=r, m=r ** 3 / 3.0)
    st.m[50] = np.inf
    with pytest.raises(PH.SolverDivergence):
        PH.step(st, 1e-4)


@pytest.mark.slow
def test_manufactured_solution_convergence():
    # forced problem with exact solution m*(r,t) = (1 + 0.5 sin t) g(r),
    # g = r^3 exp(-r^2): expect 2nd order in h, 1st order in dt
    sp = pytest.importorskip("sympy")
    rs, ts = sp.symbols("r t", positive=True)
    d = 3
    g = rs ** 3 * sp.exp(-rs ** 2)
    mstar = (1 + sp.Rational(1, 2) * sp.sin(ts)) * g
    forcing = (sp.diff(mstar, ts) - sp.diff(mstar, rs, 2)
               + (d - 1) / rs * sp.diff(mstar, rs)
               - mstar * sp.diff(mstar, rs) / rs ** (d - 1))
    m_f = sp.lambdify((rs, ts), mstar, "numpy")
    f_f = sp.lambdify((rs, ts), forcing, "numpy")

    def run(n, dt, t_end=0.1):
        r = np.linspace(0.0, 4.0, n)
        m0 = m_f(np.maximum(r, 1e-12), 0.0)
        m0[0] = 0.0
        st = PH.PartialMassState(d=d, r=r, m=m0)
        steps = int(round(t_end / dt))
        for _ in range(steps):
            st = PH.step(st, dt, forcing=lambda rr, tt:
                         np.where(rr > 0, f_f(np.maximum(rr, 1e-12), tt), 0.0))
        exact = m_f(np.maximum(r, 1e-12), st.t)
        return np.max(np.abs(st.m - exact))

    # spatial order: tiny dt so the h-error dominates
    errs_h = [run(n, 1e-5) for n in (101, 201, 401)]
    order_h = np.log2(errs_h[0] / errs_h[1]), np.log2(errs_h[1] / errs_h[2])
    assert order_h[0] > 1.5 and order_h[1] > 1.5

    # temporal order: fine grid so the dt-error dominates
    errs_t = [run(801, dt) for dt in (4e-3, 2e-3, 1e-3)]
    order_t = np.log2(errs_t[0] / errs_t[1]), np.log2(errs_t[1] / errs_t[2])
    assert 0.6 < order_t[0] < 1.6 and 0.6 < order_t[1] < 1.6


def test_no_blowup_outcome_without_budget():
    st = PH.init_ring(3, 40.0, 1.0, 1.0 / 40.0)
    res = PH.run_to_blowup(st, stop_ratio=1e-6, max_steps=5)
    assert res.outcome == "no-blowup"
    assert np.isnan(res.T_est)


def test_degenerate_stop_ratio_returns_immediately():
    st = PH.init_ring(3, 40.0, 1.0, 1.0 / 40.0)
    res = PH.run_to_blowup(st, stop_ratio=1.0)
    assert res.outcome == "blowup"
    assert len(res.series) == 1
    assert res.state.t == 0.0


@pytest.mark.slow
def test_short_run_mass_and_monotonicity_invariants():
    st = PH.init_ring(3, 40.0, 1.0, 1.0 / 40.0)
    res = PH.run_to_blowup(st, stop_ratio=8e-3, max_steps=120_000)
    assert res.outcome == "blowup"
    mt = res.series.column("mass_total")
    assert np.max(np.abs(mt - mt[0])) <= 1e-8 * mt[0]
    assert res.state.monotonicity_defect() >= -1e-10
    assert res.series.clock_chain_defect() < 1e-6
