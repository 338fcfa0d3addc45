"""Closed forms, cutoffs, geometry and barriers."""

import numpy as np
import pytest
from fractions import Fraction
from scipy.integrate import quad

from ringcollapse import profiles as P

# high-precision reference values (mpmath, 30 digits)
Q4 = 0.880797077977882444059729141302
PHI1_AT_SHIFT = 0.343644639395486099272601169573


def test_wave_profile_values():
    assert P.Q(0.0) == 0.5
    assert abs(P.Q(4.0) - Q4) < 1e-15
    assert abs(P.Q(2.0) + P.Q(-2.0) - 1.0) < 1e-15


def test_wave_profile_overflow_safe():
    for x in (1e3, 1e5, 1e8, -1e3, -1e8):
        v = P.Q(x)
        assert np.isfinite(v) and 0.0 <= v <= 1.0
    assert P.Q(1e8) == 1.0 and P.Q(-1e8) == 0.0


def test_slope_values():
    assert P.W(0.0) == 0.125
    q3 = P.Q(3.0)
    assert abs(P.W(3.0) - q3 * (1.0 - q3) / 2.0) < 1e-16
    assert P.W(10.0) == P.W(-10.0)


def test_slope_matches_centered_difference():
    # relative to the slope scale max W = 1/8; pointwise-relative is not
    # meaningful where the centered difference hits its cancellation floor
    # (~1e-12 for step 1e-4)
    rng = np.random.default_rng(0)
    xi = rng.uniform(-50.0, 50.0, size=10_000)
    h = 1e-4
    fd = (P.Q(xi + h) - P.Q(xi - h)) / (2.0 * h)
    w = P.W(xi)
    assert np.max(np.abs(fd - w)) < 1e-8 * 0.125


def test_weight_values_and_reciprocal_identity():
    assert P.omega0(0.0) == 4.0
    assert abs(P.omega0(5.0) * 2.0 * P.W(5.0) - 1.0) < 1e-12
    assert abs(P.omega0(40.0) * np.exp(-20.0) - 1.0) < 1e-8
    xi = np.linspace(-60.0, 60.0, 5001)
    assert np.max(np.abs(P.omega0(xi) * 2.0 * P.W(xi) - 1.0)) < 1e-12


def test_conjugation_antiderivative_closed_form():
    assert P.B0(0.0) == 0.0
    for x in np.linspace(-40.0, 40.0, 33):
        val, _ = quad(lambda y: 0.25 - P.Q(y) / 2.0, 0.0, x, epsabs=1e-13,
                      epsrel=1e-13)
        assert abs(P.B0(x) - val) < 1e-10


def test_potential_values_and_limits():
    assert abs(P.V(0.0) - 1.0 / 16.0) < 1e-16
    assert abs(P.V(30.0) + 1.0 / 16.0) < 1e-6
    assert abs(P.V(-30.0) + 1.0 / 16.0) < 1e-6


def test_kernel_state():
    assert P.psi0(0.0) == 0.25
    assert P.psi0(6.0) == P.psi0(-6.0)
    # finite-difference residual of the symmetrized operator on psi0
    h = 1e-4
    for x in (-2.0, 0.0, 2.0):
        d2 = (P.psi0(x + h) - 2.0 * P.psi0(x) + P.psi0(x - h)) / h ** 2
        assert abs(d2 + P.V(x) * P.psi0(x)) < 1e-6


# ---------------------------------------------------------------------------
# cutoffs
# ---------------------------------------------------------------------------

def test_plateau_cutoff_shape():
    x = np.linspace(-3.0, 3.0, 1201)
    c = P.chi0(x)
    assert np.all((0.0 <= c) & (c <= 1.0))
    assert np.all(P.chi0(np.linspace(-1, 1, 101)) == 1.0)
    assert np.all(P.chi0(np.linspace(2.0, 5.0, 50)) == 0.0)
    # monotone on each transition interval (decreasing right, increasing left)
    t = np.linspace(1.0, 2.0, 300)
    assert np.all(np.diff(P.chi0(t)) <= 0.0)
    assert np.all(np.diff(P.chi0(np.linspace(-2.0, -1.0, 300))) >= 0.0)


def test_one_sided_cutoff():
    assert P.chi1(-0.5) == 1.0 and P.chi1(0.0) == 1.0
    assert P.chi1(1.0) == 0.0 and P.chi1(2.0) == 0.0
    t = np.linspace(0.0, 1.0, 200)
    assert np.all(np.diff(P.chi1(t)) <= 0.0)


def test_truncation_cutoff():
    z0 = 0.25
    assert np.all(P.chibar(np.linspace(0.0, z0, 40), z0) == 0.0)
    assert np.all(P.chibar(np.linspace(2 * z0, 3.0, 40), z0) == 1.0)
    t = np.linspace(z0, 2 * z0, 200)
    vals = P.chibar(t, z0)
    assert np.all((0.0 <= vals) & (vals <= 1.0))
    assert np.all(np.diff(vals) >= 0.0)


def test_barrier_localizer():
    eta = 0.05
    z = np.linspace(1.0 - eta, 1.0 + eta, 41)
    assert np.all(P.chihat(z, eta) == 1.0)
    assert P.chihat(1.0 + 2.5 * eta, eta) == 0.0
    assert P.chihat(1.0 - 2.5 * eta, eta) == 0.0


def test_inner_localizer_derivative_support():
    sc = P.GeometryScales(nu=1e-3, A=10.0)
    xi = np.linspace(sc.xi_Am - 5.0, sc.xi_Ap + 5.0, 20001)
    d = sc.chi_in_d1(xi)
    nz = xi[np.abs(d) > 0.0]
    assert nz.min() >= sc.xi_Am - 1.0 - 1e-9
    assert nz.max() <= sc.xi_Ap + 1.0 + 1e-9
    inside = (nz >= sc.xi_Am) & (nz <= sc.xi_Ap)
    assert not np.any(inside)


def test_smoothstep_derivatives_match_fd():
    x = np.linspace(0.05, 0.95, 91)
    h = 1e-6
    d1_fd = (P.smoothstep(x + h) - P.smoothstep(x - h)) / (2 * h)
    d2_fd = (P.smoothstep(x + h) - 2 * P.smoothstep(x) + P.smoothstep(x - h)) / h ** 2
    assert np.max(np.abs(P.smoothstep_d1(x) - d1_fd)) < 1e-6
    assert np.max(np.abs(P.smoothstep_d2(x) - d2_fd)) < 1e-3


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def test_zone_identities_exact_arithmetic():
    # the defining relations as exact rational identities, with a rational
    # stand-in for |log nu| and dyadic nu
    nu = Fraction(1, 1024)
    ell = Fraction(693147, 100000)   # any positive rational works
    A = Fraction(10)
    xi_p = 4 * ell
    xi_Ap = 4 * ell + A
    zeta_p = 1 + nu * xi_p
    zeta_Ap = 1 + nu * xi_Ap
    assert (zeta_Ap - 1) / nu == xi_Ap
    assert (zeta_p - 1) / nu == xi_p
    assert (1 - (1 - nu * xi_Ap)) / nu == xi_Ap


def test_zone_float_construction():
    sc = P.GeometryScales(nu=1e-3, A=10.0)
    assert abs((sc.zeta_Ap - 1.0) / sc.nu - sc.xi_Ap) < 1e-12 * sc.xi_Ap
    assert abs((1.0 - sc.zeta_Am) / sc.nu - sc.xi_Ap) < 1e-12 * sc.xi_Ap
    assert sc.xi_p == -sc.xi_m


def test_geometry_rejects_bad_nu():
    with pytest.raises(ValueError):
        P.GeometryScales(nu=1.0)
    with pytest.raises(ValueError):
        P.GeometryScales(nu=-0.1)


# ---------------------------------------------------------------------------
# barriers and the steady shock
# ---------------------------------------------------------------------------

def test_barriers_reference_points():
    sc = P.GeometryScales(nu=1e-3, A=10.0)
    phi1, _ = P.barriers(sc.zeta_p, 0.0, sc, 1.0, 0.01, "right", 3)
    assert abs(phi1 - 0.5) < 1e-14
    _, phi2 = P.barriers(1.0, 0.0, sc, 1.0, 0.01, "right", 3)
    assert phi2 == 0.5
    phi1s, _ = P.barriers(sc.zeta_p + sc.nu, 0.0, sc, 1.0, 0.01, "right", 3)
    assert abs(phi1s - PHI1_AT_SHIFT) < 1e-12


def test_barriers_left_side_scaling():
    sc = P.GeometryScales(nu=1e-3, A=10.0)
    phi1, phi2 = P.barriers(sc.zeta_m, 0.0, sc, 1.0, 0.01, "left", 3)
    assert abs(phi1 - 0.5) < 1e-14
    assert abs(phi2 - 0.5 * sc.nu * sc.zeta_m ** 2) < 1e-15


def test_barriers_input_validation():
    sc = P.GeometryScales(nu=1e-3)
    with pytest.raises(ValueError):
        P.barriers(1.0, 0.0, sc, 1.0, 0.01, "up", 3)
    with pytest.raises(ValueError):
        P.barriers(-1.0, 0.0, sc, 1.0, 0.01, "right", 3)
    with pytest.raises(ValueError):
        P.barriers(1.0, 0.0, sc, 1.0, 0.01, "right", 3, beta=0.6)


def test_steady_shock_speed():
    for d in (3, 4, 5, 6):
        assert P.rankine_hugoniot_check(d) == 0.0
    right, left = P.shock_flux_speed_limits(3)
    assert right == 0.5 and left == -0.5
