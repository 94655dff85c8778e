"""
Scalar special functions: the Bessel kernel K_nu and the normal CDF.

K_nu is defined by

.. math::
    K_\\nu(z) = \\frac12 \\int_0^\\infty y^{\\nu-1}
        \\exp\\Big\\{-\\frac{z}{2}\\Big(y + \\frac1y\\Big)\\Big\\} dy,

which some texts call the modified Bessel function of the second kind and
others of the third kind; it is the same function.

Evaluation goes through the exponentially scaled AMOS routine ``kve``.
Half-integer orders use the terminating closed form. When ``kve`` over- or
underflows (large order, tiny argument) the log form falls back to a
log-space quadrature of the integral representation.
"""

import math
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import gammaln, kve, logsumexp, ndtr

from .errors import BesselOverflowError, DomainError

MAX_ORDER = 500.0
MAX_LINEAR_ARG = 700.0
# Largest half-integer order for which the terminating series is summed.
_HALF_INT_MAX_TERMS = 600


class LogValue(NamedTuple):
    """Overflow-safe real number ``sign * exp(log_magnitude)``."""

    log_magnitude: float
    sign: int

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)


def _check_args(nu, z):
    nu = float(nu)
    z = float(z)
    if not math.isfinite(nu):
        raise DomainError(f"Bessel order must be finite, got {nu}")
    if not (z > 0.0) or not math.isfinite(z):
        raise DomainError(f"K_nu(z) requires finite z > 0, got z={z}")
    return abs(nu), z


def _half_integer_index(nu):
    """Return n if nu == n + 1/2 for a small nonnegative integer n, else None."""
    twice = 2.0 * nu
    if twice == round(twice) and int(round(twice)) % 2 == 1:
        n = int(round(nu - 0.5))
        if n <= _HALF_INT_MAX_TERMS:
            return n
    return None


def _log_k_half_integer(n, z):
    # K_{n+1/2}(z) = sqrt(pi/(2z)) e^{-z} sum_k (n+k)! / (k! (n-k)!) (2z)^{-k}
    k = np.arange(n + 1, dtype=float)
    log_terms = gammaln(n + k + 1) - gammaln(k + 1) - gammaln(n - k + 1) - k * math.log(2 * z)
    return 0.5 * math.log(math.pi / (2 * z)) - z + float(logsumexp(log_terms))


def _log_k_quadrature(nu, z):
    """log K_nu(z) from int_0^inf cosh(nu s) exp(-z cosh s) ds, max factored out."""

    def log_f(s):
        return np.logaddexp(nu * s, -nu * s) - math.log(2.0) - z * np.cosh(s)

    # Mode of log_f solves nu tanh(nu s) = z sinh(s); bracket with bisection.
    if nu == 0.0 or nu * nu <= z:
        s_star = 0.0
    else:
        lo, hi = 0.0, max(1.0, math.asinh(nu / z) + 1.0)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if nu * math.tanh(nu * mid) > z * math.sinh(mid):
                lo = mid
            else:
                hi = mid
        s_star = 0.5 * (lo + hi)
    peak = float(log_f(s_star))
    s_hi = s_star + 1.0
    while float(log_f(s_hi)) > peak - 60.0:
        s_hi = s_star + 2.0 * (s_hi - s_star)
    points = [s_star] if 0.0 < s_star < s_hi else None
    value, _ = integrate.quad(
        lambda s: math.exp(float(log_f(s)) - peak),
        0.0,
        s_hi,
        points=points,
        epsabs=0.0,
        epsrel=1e-13,
        limit=400,
    )
    return peak + math.log(value)


def log_kv(nu, z):
    """Vectorized log K_nu(z) for scalar order and array argument (z > 0)."""
    nu = abs(float(nu))
    z = np.asarray(z, dtype=float)
    n = _half_integer_index(nu)
    if n is not None and n <= 20:
        zz = np.atleast_1d(z)
        k = np.arange(n + 1, dtype=float)
        log_coef = gammaln(n + k + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        log_terms = log_coef[None, :] - k[None, :] * np.log(2 * zz)[:, None]
        out = 0.5 * np.log(np.pi / (2 * zz)) - zz + logsumexp(log_terms, axis=1)
        return out.reshape(z.shape)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.log(kve(nu, z)) - z
    bad = ~np.isfinite(out)
    if np.any(bad):
        flat = out.reshape(-1)
        zf = np.broadcast_to(z, out.shape).reshape(-1)
        for i in np.flatnonzero(bad.reshape(-1)):
            flat[i] = _log_k_quadrature(nu, float(zf[i]))
        out = flat.reshape(out.shape)
    return out


def bessel_k_log(nu, z) -> LogValue:
    """log K_nu(z) as a :class:`LogValue`; finite for very large z and order.

    Raises
    ------
    DomainError
        If ``z <= 0`` or ``nu`` is not finite.
    """
    nu, z = _check_args(nu, z)
    n = _half_integer_index(nu)
    if n is not None:
        return LogValue(_log_k_half_integer(n, z), 1)
    return LogValue(float(log_kv(nu, z)), 1)


def bessel_k(nu, z) -> float:
    """K_nu(z) for real order and z > 0.

    The result is symmetric in the order. Arguments with ``|nu| > 500`` or
    ``z > 700`` are outside the supported linear-scale domain.

    Raises
    ------
    DomainError
        For ``z <= 0`` or an order outside ``[-500, 500]``.
    BesselOverflowError
        If the value overflows; ``bessel_k_log`` handles those arguments.
    """
    nu, z = _check_args(nu, z)
    if nu > MAX_ORDER:
        raise DomainError(f"|nu| must be <= {MAX_ORDER}, got {nu}")
    if z > MAX_LINEAR_ARG:
        raise DomainError(f"z must be <= {MAX_LINEAR_ARG} for bessel_k; use bessel_k_log")
    n = _half_integer_index(nu)
    if n is not None:
        log_value = _log_k_half_integer(n, z)
    else:
        scaled = float(kve(nu, z))
        if math.isinf(scaled):
            raise BesselOverflowError(f"K_{nu}({z}) overflows; use bessel_k_log")
        log_value = math.log(scaled) - z
    if log_value > 709.78:
        raise BesselOverflowError(f"K_{nu}({z}) overflows; use bessel_k_log")
    return math.exp(log_value)


def norm_cdf(x):
    """Standard normal CDF; accepts scalars or arrays."""
    out = ndtr(x)
    return float(out) if np.ndim(out) == 0 else out
