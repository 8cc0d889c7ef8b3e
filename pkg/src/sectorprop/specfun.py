"""Auxiliary kernels of the constant-reference transfer matrices.

For the scaled argument Z = 2*mu*(Vbar - E)*h**2 of a mesh step:

    xi(Z)   = cosh(sqrt(Z))           Z >= 0       cos(sqrt(-Z))        Z < 0
    eta0(Z) = sinh(sqrt(Z))/sqrt(Z)   Z > 0        sin(sqrt(-Z))/sqrt(-Z)
    eta1(Z) = (xi(Z) - eta0(Z)) / Z   with the limit 1/3 at Z = 0

Near Z = 0 all kernels switch to truncated Taylor series: the closed form of
eta1 cancels catastrophically there.  All functions accept scalars or numpy
arrays and are pure, so they are safe for unrestricted concurrent use.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

SERIES_CUT = 1e-3

# Taylor coefficients in Z: cosh(sqrt(Z)) = sum Z^k/(2k)!, etc.
_XI_C = (1.0, 1.0 / 2.0, 1.0 / 24.0, 1.0 / 720.0)
_ETA0_C = (1.0, 1.0 / 6.0, 1.0 / 120.0, 1.0 / 5040.0)
_ETA1_C = (1.0 / 3.0, 1.0 / 30.0, 1.0 / 840.0, 1.0 / 45360.0)
_ETA2_C = (1.0 / 15.0, 1.0 / 210.0, 1.0 / 7560.0, 1.0 / 498960.0)
_ETA3_C = (1.0 / 105.0, 1.0 / 1890.0, 1.0 / 83160.0, 1.0 / 6486480.0)


def _horner(z, coeffs):
    acc = np.zeros_like(z) + coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * z + c
    return acc


def _check_finite(z):
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite argument to xi/eta kernel")


def _split(z):
    """Return (z array, series mask, sqrt with sign handling)."""
    z = np.asarray(z, dtype=float)
    _check_finite(z)
    small = np.abs(z) < SERIES_CUT
    return z, small


def xi(z):
    """cosh-type kernel; cos regime for Z < 0."""
    z, small = _split(z)
    w = np.sqrt(np.abs(z))
    closed = np.where(z >= 0.0, np.cosh(np.where(z >= 0.0, w, 0.0)), np.cos(w))
    out = np.where(small, _horner(z, _XI_C), closed)
    return out if out.ndim else float(out)


def eta0(z):
    """sinhc-type kernel; sinc regime for Z < 0."""
    z, small = _split(z)
    w = np.sqrt(np.abs(z))
    w_safe = np.where(small, 1.0, w)
    closed = np.where(
        z >= 0.0,
        np.sinh(np.where(z >= 0.0, w_safe, 0.0)) / w_safe,
        np.sin(w_safe) / w_safe,
    )
    out = np.where(small, _horner(z, _ETA0_C), closed)
    return out if out.ndim else float(out)


def eta1(z):
    """(xi - eta0)/Z with its removable singularity at Z = 0 filled by series."""
    z, small = _split(z)
    z_safe = np.where(small, 1.0, z)
    closed = (xi(z) - eta0(z)) / z_safe
    out = np.where(small, _horner(z, _ETA1_C), closed)
    return out if out.ndim else float(out)


def eta(z, s):
    """eta_s kernel for s in {0, 1}."""
    if s == 0:
        return eta0(z)
    if s == 1:
        return eta1(z)
    raise ValueError(f"eta order must be 0 or 1, got {s}")


def _long_series():
    """Exact extended Taylor coefficients of (xi, eta0, eta1, eta2, eta3).

    The downward recurrences eta_{s+1} = (eta_{s-1} - (2s+1) eta_s)/Z cancel
    badly for |Z| well above the public 1e-3 switch, so the complex kernels
    used by the EF weight systems run the series out to |Z| ~ 2 instead.
    """
    from fractions import Fraction
    from math import factorial

    terms = 12
    xi_c = [Fraction(1, factorial(2 * k)) for k in range(terms + 3)]
    e0_c = [Fraction(1, factorial(2 * k + 1)) for k in range(terms + 3)]
    e1_c = [xi_c[k + 1] - e0_c[k + 1] for k in range(terms + 2)]
    e2_c = [e0_c[k + 1] - 3 * e1_c[k + 1] for k in range(terms + 1)]
    e3_c = [e1_c[k + 1] - 5 * e2_c[k + 1] for k in range(terms)]
    return tuple(tuple(float(c) for c in cs[:terms])
                 for cs in (xi_c, e0_c, e1_c, e2_c, e3_c))


_LONG_SERIES = _long_series()
_COMPLEX_SERIES_CUT = 2.0


def _kernels_complex(z):
    """(xi, eta0, eta1, eta2, eta3) on complex arguments, for the EF weight
    systems.

    eta2 and eta3 appear only in the derivative rows of those systems; they
    are internal machinery, not part of the public kernel surface.  Each
    branch is evaluated only on its own subset (this sits on the hot path of
    the composite pair integrals).
    """
    z = np.asarray(z, dtype=complex)
    flat = z.ravel()
    small = np.abs(flat) < _COMPLEX_SERIES_CUT
    big = ~small
    out = [np.empty_like(flat) for _ in range(5)]
    if np.any(small):
        zs = flat[small]
        for o, coeffs in zip(out, _LONG_SERIES):
            o[small] = _horner(zs, coeffs)
    if np.any(big):
        zb = flat[big]
        w = np.sqrt(zb)
        xi_v = np.cosh(w)
        e0_v = np.sinh(w) / w
        e1_v = (xi_v - e0_v) / zb
        e2_v = (e0_v - 3.0 * e1_v) / zb
        e3_v = (e1_v - 5.0 * e2_v) / zb
        for o, v in zip(out, (xi_v, e0_v, e1_v, e2_v, e3_v)):
            o[big] = v
    return tuple(o.reshape(z.shape) for o in out)
