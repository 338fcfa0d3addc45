"""Numerical laboratory for collapsing-ring blow-up of the radial
parabolic-elliptic chemotaxis (Keller-Segel) system in partial-mass variables.

The package is organized around the renormalized description of the ring:

* ``profiles``      closed-form traveling-wave profile, weights, cutoffs,
                    zone geometry and supersolution barriers,
* ``operators``     banded discretizations of the linearized operators and
                    term-by-term evaluation of every equation form,
* ``spectral``      kernel / spectral-gap / coercivity verification,
* ``physical``      partial-mass solver on the radial grid up to blow-up,
* ``renormalized``  self-similar-frame solver and the pure Burgers mode,
* ``modulation``    (R, M) extraction, rate closure, blow-up-law fits,
* ``diagnostics``   norms, bootstrap membership, barrier audits,
* ``cli``           declarative experiment runner.
"""

from . import profiles
from . import operators
from . import spectral
from . import physical
from . import renormalized
from . import modulation
from . import diagnostics
from . import timeseries

__version__ = "0.1.0"

__all__ = [
    "profiles",
    "operators",
    "spectral",
    "physical",
    "renormalized",
    "modulation",
    "diagnostics",
    "timeseries",
]
