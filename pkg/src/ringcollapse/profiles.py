"""Closed-form ingredients of the collapsing-ring analysis.

Everything here is a pure function of its arguments: the logistic traveling
wave ``Q`` of the viscous Burgers equation and its derivatives, the
exponential weight ``omega0`` of the weighted spaces, the conjugation data
``B0``/``V`` that symmetrize the linearized operator, the mollifier-based
cutoff family, the zone geometry attached to a ring-width ratio ``nu``, the
supersolution barriers of the exterior comparison argument, and the
steady-shock (Rankine-Hugoniot) speed check.

Useful exact identities, all tested to round-off:

    W  = dQ/dxi = Q(1-Q)/2 = (1/8) cosh^-2(xi/4)
    omega0 * 2W = 1
    B0 = -log cosh(xi/4)
    V  = W - 1/16
    psi0 proportional to sech(xi/4), kernel state of d^2/dxi^2 + V
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG2 = float(np.log(2.0))


# ---------------------------------------------------------------------------
# traveling-wave profile and weights
# ---------------------------------------------------------------------------

def Q(xi):
    """Logistic front e^(xi/2) / (1 + e^(xi/2)), computed overflow-safely.

    For xi > 40 the complementary form 1 - e^(-xi/2)/(1 + e^(-xi/2)) is used,
    and symmetrically for xi < -40, so the result is finite and monotone for
    every float input.
    """
    xi = np.asarray(xi, dtype=float)
    t = np.exp(-np.abs(xi) / 2.0)
    pos = t / (1.0 + t)          # equals Q(-|xi|)
    return np.where(xi >= 0.0, 1.0 - pos, pos)[()]


def W(xi):
    """Derivative of Q: (1/8) cosh^-2(xi/4); even, positive, max 1/8 at 0."""
    xi = np.asarray(xi, dtype=float)
    t = np.exp(-np.abs(xi) / 2.0)
    return (0.5 * t / (1.0 + t) ** 2)[()]


def dW(xi):
    """Second derivative of Q, W * (1 - 2Q) / 2."""
    return W(xi) * (1.0 - 2.0 * Q(xi)) / 2.0


def d2W(xi):
    """Third derivative of Q, W * ((1 - 2Q)^2 / 4 - W)."""
    w = W(xi)
    return w * ((1.0 - 2.0 * Q(xi)) ** 2 / 4.0 - w)


def omega0(xi):
    """Weight (e^(xi/4) + e^(-xi/4))^2 = 1 / (2 dQ/dxi)."""
    xi = np.asarray(xi, dtype=float)
    return (np.exp(xi / 2.0) + 2.0 + np.exp(-xi / 2.0))[()]


def B0(xi):
    """Antiderivative of 1/4 - Q/2 from 0: xi/4 - log((1+e^(xi/2))/2).

    Equals -log cosh(xi/4); evaluated through logaddexp so large |xi| does
    not overflow.
    """
    xi = np.asarray(xi, dtype=float)
    return (xi / 4.0 - np.logaddexp(0.0, xi / 2.0) + LOG2)[()]


def V(xi):
    """Potential of the symmetrized operator: Q/(2(1+e^(xi/2))) - 1/16.

    Identical to W(xi) - 1/16; tends to -1/16 at both ends.
    """
    return W(xi) - 1.0 / 16.0


def psi0(xi):
    """Kernel state of d^2/dxi^2 + V, normalized so psi0(0) = 1/4.

    Proportional to e^(-B0) * W = sech(xi/4)/8; the fixed normalization
    1/(4 cosh(xi/4)) is what every consumer (all of which renormalize)
    receives.
    """
    xi = np.asarray(xi, dtype=float)
    t = np.exp(-np.abs(xi) / 4.0)
    # sech(u) = 2 e^-|u| / (1 + e^-2|u|)
    return (0.5 * t / (1.0 + t * t))[()]


# ---------------------------------------------------------------------------
# mollifier smoothstep and the cutoff family
# ---------------------------------------------------------------------------

def _h(x):
    return 1.0 / x - 1.0 / (1.0 - x)


def _sigmoid_neg_h(x):
    """1 / (1 + e^{h(x)}), overflow-free for x in (0, 1)."""
    h = _h(x)
    out = np.empty_like(h)
    pos = h >= 0.0
    e = np.exp(-np.abs(h))
    out[pos] = e[pos] / (1.0 + e[pos])
    out[~pos] = 1.0 / (1.0 + e[~pos])
    return out


def smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, built from e^(-1/x)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[x >= 1.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    if np.any(mid):
        out[mid] = _sigmoid_neg_h(x[mid])
    return out[()]


def smoothstep_d1(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    mid = (x > 0.0) & (x < 1.0)
    if np.any(mid):
        xm = x[mid]
        s = _sigmoid_neg_h(xm)
        hp = -1.0 / xm ** 2 - 1.0 / (1.0 - xm) ** 2
        out[mid] = -s * (1.0 - s) * hp
    return out[()]


def smoothstep_d2(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    mid = (x > 0.0) & (x < 1.0)
    if np.any(mid):
        xm = x[mid]
        s = _sigmoid_neg_h(xm)
        hp = -1.0 / xm ** 2 - 1.0 / (1.0 - xm) ** 2
        hpp = 2.0 / xm ** 3 - 2.0 / (1.0 - xm) ** 3
        sp = -s * (1.0 - s) * hp
        out[mid] = -(sp * (1.0 - 2.0 * s) * hp + s * (1.0 - s) * hpp)
    return out[()]


def chi0(x):
    """Base plateau cutoff: 1 on |x| <= 1, 0 on |x| >= 2, values in [0,1]."""
    return smoothstep(2.0 - np.abs(x))


def chi0_d1(x):
    x = np.asarray(x, dtype=float)
    return (-np.sign(x) * smoothstep_d1(2.0 - np.abs(x)))[()]


def chi0_d2(x):
    return smoothstep_d2(2.0 - np.abs(x))


def chi1(x):
    """One-sided cutoff: 1 for x <= 0, 0 for x >= 1."""
    return smoothstep(1.0 - np.asarray(x, dtype=float))


def chi1_d1(x):
    return -smoothstep_d1(1.0 - np.asarray(x, dtype=float))


def chi1_d2(x):
    return smoothstep_d2(1.0 - np.asarray(x, dtype=float))


def chi_Aa(xi, A, a=0.0):
    """Scaled/translated plateau cutoff chi0((xi - a)/A)."""
    return chi0((np.asarray(xi, dtype=float) - a) / A)


def chi_Aa_d1(xi, A, a=0.0):
    return chi0_d1((np.asarray(xi, dtype=float) - a) / A) / A


def chibar(zeta, zeta0):
    """Profile truncation: 0 on [0, zeta0], 1 on [2 zeta0, inf)."""
    return smoothstep(np.asarray(zeta, dtype=float) / zeta0 - 1.0)


def chibar_d1(zeta, zeta0):
    return smoothstep_d1(np.asarray(zeta, dtype=float) / zeta0 - 1.0) / zeta0


def chibar_d2(zeta, zeta0):
    return smoothstep_d2(np.asarray(zeta, dtype=float) / zeta0 - 1.0) / zeta0 ** 2


def chihat(zeta, eta):
    """Barrier localizer: 1 on |zeta - 1| <= eta, 0 on |zeta - 1| >= 2 eta."""
    return smoothstep(2.0 - np.abs(np.asarray(zeta, dtype=float) - 1.0) / eta)


def chihat_d1(zeta, eta):
    z = np.asarray(zeta, dtype=float) - 1.0
    return (-np.sign(z) * smoothstep_d1(2.0 - np.abs(z) / eta) / eta)[()]


def chihat_d2(zeta, eta):
    z = np.asarray(zeta, dtype=float) - 1.0
    return (smoothstep_d2(2.0 - np.abs(z) / eta) / eta ** 2)[()]


# ---------------------------------------------------------------------------
# zone geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometryScales:
    """Zone edges generated by the ring-width ratio nu and extension A.

    Exact relations (kept by construction):

        xi_pm    = +-4 |log nu|          zeta_pm   = 1 +- nu * 4|log nu|
        xi_Apm   = +-(4 |log nu| + A)    zeta_Apm  = 1 +- nu * xi_Apm

    lam is the dimensional ring width R*nu when a ring radius is attached;
    it is optional because most uses are dimensionless.
    """

    nu: float
    A: float = 10.0
    zeta0: float = 0.25
    eta: float = 0.05
    lam: float | None = None

    def __post_init__(self):
        if not (0.0 < self.nu < 1.0):
            raise ValueError(f"nu must be in (0, 1), got {self.nu}")
        if self.A <= 0.0 or self.zeta0 <= 0.0 or self.eta <= 0.0:
            raise ValueError("A, zeta0, eta must all be positive")

    @property
    def abs_log_nu(self):
        return -np.log(self.nu)

    @property
    def xi_p(self):
        return 4.0 * self.abs_log_nu

    @property
    def xi_m(self):
        return -self.xi_p

    @property
    def xi_Ap(self):
        return 4.0 * self.abs_log_nu + self.A

    @property
    def xi_Am(self):
        return -self.xi_Ap

    @property
    def zeta_p(self):
        return 1.0 + self.nu * self.xi_p

    @property
    def zeta_m(self):
        return 1.0 - self.nu * self.xi_p

    @property
    def zeta_Ap(self):
        return 1.0 + self.nu * self.xi_Ap

    @property
    def zeta_Am(self):
        return 1.0 - self.nu * self.xi_Ap

    def chi_in(self, xi):
        """Inner-zone localizer chi1(xi - xi_Ap) * chi1(xi_Am - xi)."""
        xi = np.asarray(xi, dtype=float)
        return chi1(xi - self.xi_Ap) * chi1(self.xi_Am - xi)

    def chi_in_d1(self, xi):
        xi = np.asarray(xi, dtype=float)
        return (chi1_d1(xi - self.xi_Ap) * chi1(self.xi_Am - xi)
                - chi1(xi - self.xi_Ap) * chi1_d1(self.xi_Am - xi))

    def chi_in_d2(self, xi):
        xi = np.asarray(xi, dtype=float)
        return (chi1_d2(xi - self.xi_Ap) * chi1(self.xi_Am - xi)
                - 2.0 * chi1_d1(xi - self.xi_Ap) * chi1_d1(self.xi_Am - xi)
                + chi1(xi - self.xi_Ap) * chi1_d2(self.xi_Am - xi))


# ---------------------------------------------------------------------------
# localized profile
# ---------------------------------------------------------------------------

def Qbar_nu(zeta, nu, zeta0):
    """Rescaled, origin-truncated profile Q((zeta-1)/nu) * chibar(zeta)."""
    zeta = np.asarray(zeta, dtype=float)
    return Q((zeta - 1.0) / nu) * chibar(zeta, zeta0)


def dQbar_nu(zeta, nu, zeta0):
    """d/dzeta of Qbar_nu (chain rule, analytic)."""
    zeta = np.asarray(zeta, dtype=float)
    xi = (zeta - 1.0) / nu
    return W(xi) / nu * chibar(zeta, zeta0) + Q(xi) * chibar_d1(zeta, zeta0)


def d2Qbar_nu(zeta, nu, zeta0):
    zeta = np.asarray(zeta, dtype=float)
    xi = (zeta - 1.0) / nu
    return (dW(xi) / nu ** 2 * chibar(zeta, zeta0)
            + 2.0 * W(xi) / nu * chibar_d1(zeta, zeta0)
            + Q(xi) * chibar_d2(zeta, zeta0))


# ---------------------------------------------------------------------------
# supersolution barriers
# ---------------------------------------------------------------------------

def barriers(zeta, tau, scales, K, kappa, side, d, beta=0.375):
    """Evaluate the exterior barrier pair (phi1, phi2).

    side='right' (zeta >= zeta_p):
        phi1 = (1/2) K^(5/4) e^(-kappa tau) e^(-beta (zeta - zeta_p)/nu)
        phi2 = (1/2) e^(-kappa tau) zeta^(d-1)
    side='left' (zeta <= zeta_m): the exponent is beta (zeta_m - zeta)/nu and
        phi2 carries an extra factor nu.

    beta defaults to 3/8 and is admissible anywhere in (1/4, 1/2).
    """
    if not isinstance(scales, GeometryScales):
        raise TypeError("scales must be a GeometryScales")
    if not (0.25 < beta < 0.5):
        raise ValueError(f"barrier exponent beta must lie in (1/4, 1/2), got {beta}")
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta <= 0.0):
        raise ValueError("zeta must be positive")
    nu = scales.nu
    amp = 0.5 * K ** 1.25 * np.exp(-kappa * tau)
    if side == "right":
        phi1 = amp * np.exp(-beta * (zeta - scales.zeta_p) / nu)
        phi2 = 0.5 * np.exp(-kappa * tau) * zeta ** (d - 1)
    elif side == "left":
        phi1 = amp * np.exp(-beta * (scales.zeta_m - zeta) / nu)
        phi2 = 0.5 * nu * np.exp(-kappa * tau) * zeta ** (d - 1)
    else:
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    return phi1[()], phi2[()]


# ---------------------------------------------------------------------------
# steady shock position
# ---------------------------------------------------------------------------

def shock_flux_speed_limits(d):
    """One-sided limits at zeta = 1 of the transport speed of the step profile.

    The speed field is m/zeta^(d-1) - zeta/2 evaluated on the unit step; its
    right and left limits at the jump are 1/2 and -1/2 for every d.
    """
    right = 1.0 / 1.0 ** (d - 1) - 0.5
    left = 0.0 - 0.5
    return right, left


def rankine_hugoniot_check(d):
    """Average of the two one-sided flux speeds; exactly 0 (steady shock)."""
    if d < 3:
        raise ValueError(f"dimension must be >= 3, got {d}")
    right, left = shock_flux_speed_limits(d)
    return 0.5 * (right + left)
