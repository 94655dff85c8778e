"""
Multivariate normal laws, normal variance-mean mixtures and the
generalized hyperbolic family.

Letters follow the measure form of the mixture,

    F = N(b + z a, z Sigma) o G,

so ``location`` is b and ``drift`` is the vector multiplied by the mixing
variable z.  A GH law with parameters (nu, mu, alpha, a, b, Sigma) is the
mixture with drift ``Sigma a`` and mixing law GIG(nu, mu, alpha^2 - <a, Sigma a>).
"""

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln

from . import _quad
from .errors import DomainError, QuadratureError
from .gig import (
    GigParams,
    gig_cdf,
    gig_moment,
    gig_ppf,
    gig_sample,
    log_normalizer,
    log_range,
)
from .specfun import log_kv, norm_cdf

NVMM_PDF_TOL = 1e-8
PROJECTION_TOL = 1e-10
_LOG_2PI = math.log(2 * math.pi)


def _vector(v, name):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be a finite vector")
    return arr


def _spd_factor(sigma):
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DomainError("sigma must be a square matrix")
    if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
        raise DomainError("sigma must be symmetric")
    sigma = 0.5 * (sigma + sigma.T)
    try:
        factor = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise DomainError("sigma must be positive definite") from None
    return sigma, factor


def _points(x, m):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != m:
        raise DomainError(f"points have dimension {x.shape[-1]}, expected {m}")
    return x, single


def _freeze(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MvnParams:
    mean: np.ndarray
    sigma: np.ndarray
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = _vector(self.mean, "mean")
        sigma, factor = _spd_factor(self.sigma)
        if sigma.shape[0] != mean.size:
            raise DomainError("mean and sigma dimensions disagree")
        object.__setattr__(self, "mean", _freeze(mean))
        object.__setattr__(self, "sigma", _freeze(sigma))
        object.__setattr__(self, "factor", _freeze(factor))

    @property
    def dim(self):
        return self.mean.size


def _mahalanobis(x, center, factor):
    """(x - center)^T Sigma^{-1} (x - center) for rows of x."""
    w = solve_triangular(factor, (x - center).T, lower=True)
    return np.sum(w * w, axis=0)


def _log_det(factor):
    return 2.0 * float(np.sum(np.log(np.diag(factor))))


def mvn_logpdf(x, p: MvnParams):
    x, single = _points(x, p.dim)
    q = _mahalanobis(x, p.mean, p.factor)
    out = -0.5 * (p.dim * _LOG_2PI + _log_det(p.factor) + q)
    return float(out[0]) if single else out


def mvn_pdf(x, p: MvnParams):
    """Multivariate normal density at a point or at each row of ``x``."""
    out = np.exp(mvn_logpdf(x, p))
    return float(out) if np.ndim(out) == 0 else out


# -- mixing laws -------------------------------------------------------------


@dataclass(frozen=True)
class GigMixing:
    params: GigParams

    def mean(self):
        return gig_moment(1, self.params)

    def sample(self, count, stream):
        return gig_sample(self.params, count, stream)

    def reciprocal(self):
        return GigMixing(self.params.reciprocal())

    def cdf(self, x):
        return gig_cdf(x, self.params)

    cdf_left = cdf

    def ppf(self, q):
        return gig_ppf(q, self.params)

    def nodes(self, level=0):
        """Quadrature nodes/weights in z for E[f(Z)] with smooth f."""
        lo, hi = log_range(self.params)
        log_c = log_normalizer(self.params)
        p = self.params
        t, w = _quad.panel_rule(np.asarray(lo), np.asarray(hi), 16 << level, 10)
        left, right = _quad._exp_terms(t, p.mu, p.lam)
        dens = np.exp(log_c + p.nu * t - left - right)
        return np.exp(t), w * dens


@dataclass(frozen=True)
class PointMass:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (v > 0 and math.isfinite(v)):
            raise DomainError("point mass must be a positive finite number")
        object.__setattr__(self, "value", v)

    def mean(self):
        return self.value

    def sample(self, count, stream):
        return np.full(int(count), self.value)

    def reciprocal(self):
        return PointMass(1.0 / self.value)

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def cdf_left(self, x):
        return np.where(np.asarray(x, dtype=float) > self.value, 1.0, 0.0)

    def ppf(self, q):
        return np.full(np.shape(q), self.value) if np.ndim(q) else self.value

    def nodes(self, level=0):
        return np.array([self.value]), np.array([1.0])


@dataclass(frozen=True, eq=False)
class EmpiricalMixing:
    sample_values: np.ndarray

    def __post_init__(self):
        s = np.sort(np.asarray(self.sample_values, dtype=float).ravel())
        if s.size == 0 or not np.all(s > 0) or not np.all(np.isfinite(s)):
            raise DomainError("empirical mixing sample must be nonempty, finite and positive")
        object.__setattr__(self, "sample_values", _freeze(s))

    def mean(self):
        return float(np.mean(self.sample_values))

    def sample(self, count, stream):
        return stream.choice(self.sample_values, size=int(count), replace=True)

    def reciprocal(self):
        return EmpiricalMixing(1.0 / self.sample_values)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.sample_values, x, side="right") / self.sample_values.size
        return out if out.ndim else float(out)

    def cdf_left(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.sample_values, x, side="left") / self.sample_values.size
        return out if out.ndim else float(out)

    def ppf(self, q):
        return np.quantile(self.sample_values, q, method="inverted_cdf")

    def nodes(self, level=0):
        s = self.sample_values
        return s, np.full(s.size, 1.0 / s.size)


MixingLaw = Union[GigMixing, PointMass, EmpiricalMixing]


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """F = N(location + z drift, z sigma) mixed over z ~ mixing."""

    drift: np.ndarray
    location: np.ndarray
    sigma: np.ndarray
    mixing: MixingLaw
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        drift = _vector(self.drift, "drift")
        location = _vector(self.location, "location")
        sigma, factor = _spd_factor(self.sigma)
        if not drift.size == location.size == sigma.shape[0]:
            raise DomainError("drift, location and sigma dimensions disagree")
        if not isinstance(self.mixing, (GigMixing, PointMass, EmpiricalMixing)):
            raise DomainError("mixing must be a GigMixing, PointMass or EmpiricalMixing")
        object.__setattr__(self, "drift", _freeze(drift))
        object.__setattr__(self, "location", _freeze(location))
        object.__setattr__(self, "sigma", _freeze(sigma))
        object.__setattr__(self, "factor", _freeze(factor))

    @property
    def dim(self):
        return self.drift.size


# -- generalized hyperbolic ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class GhParams:
    """GH(nu, mu, alpha, a, b, Sigma).

    With ``normalize=True`` the parameters are rescaled at construction to
    the equivalent representation with det(Sigma) = 1 (see
    :func:`normalize_det`); the distribution is unchanged.
    """

    nu: float
    mu: float
    alpha: float
    drift: np.ndarray
    location: np.ndarray
    sigma: np.ndarray
    normalize: bool = False
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nu, mu, alpha = float(self.nu), float(self.mu), float(self.alpha)
        drift = _vector(self.drift, "drift")
        location = _vector(self.location, "location")
        sigma, factor = _spd_factor(self.sigma)
        if not drift.size == location.size == sigma.shape[0]:
            raise DomainError("drift, location and sigma dimensions disagree")
        if not (alpha > 0 and math.isfinite(alpha)) or not (mu >= 0 and math.isfinite(mu)):
            raise DomainError("alpha must be positive and mu nonnegative")
        if self.normalize:
            c = math.exp(_log_det(factor) / sigma.shape[0])
            sigma = sigma / c
            factor = factor / math.sqrt(c)
            alpha = alpha / math.sqrt(c)
            mu = mu * c
        quad = float(drift @ sigma @ drift)
        if nu < 0:
            ok = mu > 0 and quad <= alpha**2
        elif nu == 0:
            ok = mu > 0 and quad < alpha**2
        else:
            ok = quad < alpha**2
        if not ok:
            raise DomainError(
                f"invalid GH parameters: nu={nu}, mu={mu}, alpha^2={alpha**2}, <a,Sigma a>={quad}"
            )
        for name, value in (("nu", nu), ("mu", mu), ("alpha", alpha)):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "drift", _freeze(drift))
        object.__setattr__(self, "location", _freeze(location))
        object.__setattr__(self, "sigma", _freeze(sigma))
        object.__setattr__(self, "factor", _freeze(factor))
        object.__setattr__(self, "normalize", False)

    @property
    def dim(self):
        return self.drift.size

    @property
    def mixing_lambda(self):
        """alpha^2 - <a, Sigma a>, the lambda of the GIG mixing law."""
        return max(self.alpha**2 - float(self.drift @ self.sigma @ self.drift), 0.0)

    @property
    def mixing(self):
        return GigParams(self.nu, self.mu, self.mixing_lambda)

    def to_mixture(self) -> MixtureSpec:
        return MixtureSpec(self.sigma @ self.drift, self.location, self.sigma, GigMixing(self.mixing))


def normalize_det(p: GhParams) -> GhParams:
    """Equivalent GH parameters with det(Sigma) = 1.

    With c = det(Sigma)^(1/m): Sigma -> Sigma/c, alpha -> alpha/sqrt(c),
    mu -> mu*c and the drift is unchanged.
    """
    return GhParams(p.nu, p.mu, p.alpha, p.drift, p.location, p.sigma, normalize=True)


def gh_logpdf(x, p: GhParams):
    """Log of the closed-form GH density (Bessel K of order nu - m/2)."""
    m = p.dim
    x, single = _points(x, m)
    q = _mahalanobis(x, p.location, p.factor)
    order = p.nu - 0.5 * m
    s = np.sqrt(q + p.mu)
    log_i = np.empty_like(s)
    pos = s > 0
    log_i[pos] = (
        math.log(2.0) + order * (np.log(s[pos]) - math.log(p.alpha)) + log_kv(order, p.alpha * s[pos])
    )
    if np.any(~pos):
        log_i[~pos] = gammaln(order) - order * math.log(0.5 * p.alpha**2) if order > 0 else np.inf
    out = (
        log_normalizer(p.mixing)
        - 0.5 * m * _LOG_2PI
        - 0.5 * _log_det(p.factor)
        + (x - p.location) @ p.drift
        + log_i
    )
    return float(out[0]) if single else out


def gh_pdf(x, p: GhParams):
    out = np.exp(gh_logpdf(x, p))
    return float(out) if np.ndim(out) == 0 else out


# -- mixture densities and samplers ---------------------------------------------


def _as_mixture(target) -> MixtureSpec:
    if isinstance(target, GhParams):
        return target.to_mixture()
    if isinstance(target, MixtureSpec):
        return target
    raise DomainError("target must be a MixtureSpec or GhParams")


def nvmm_logpdf(x, spec: MixtureSpec):
    m = spec.dim
    x, single = _points(x, m)
    q = _mahalanobis(x, spec.location, spec.factor)
    sig_inv_drift = cho_solve((spec.factor, True), spec.drift)
    cross = (x - spec.location) @ sig_inv_drift
    drift_quad = float(spec.drift @ sig_inv_drift)
    base = -0.5 * m * _LOG_2PI - 0.5 * _log_det(spec.factor) + cross

    mixing = spec.mixing
    if isinstance(mixing, GigMixing):
        g = mixing.params
        c = g.nu - 0.5 * m
        A = q + g.mu
        B = g.lam + drift_quad
        out = np.empty(q.size)
        singular = (A == 0) & (c <= 0)
        out[singular] = np.inf
        ok = ~singular
        if np.any(ok):
            lo, hi, mode = _quad.concave_range(c, A[ok], B)
            peak = _quad._log_f(mode, c, A[ok], B)

            def integrand(t):
                return np.exp(_quad._log_f(t, c, A[ok][:, None], B) - peak[:, None])

            # relative budget on the scaled integral keeps the absolute error
            # of the density far below NVMM_PDF_TOL
            val, _ = _quad.integrate_rows(integrand, lo, hi, tol=1e-11, rel=True)
            out[ok] = base[ok] + log_normalizer(g) + peak + np.log(val)
        return float(out[0]) if single else out

    z, w = mixing.nodes()
    out = np.empty(q.size)
    for start in range(0, q.size, 2048):
        sl = slice(start, start + 2048)
        log_terms = (
            -0.5 * m * np.log(z)[None, :]
            - 0.5 * q[sl, None] / z[None, :]
            - 0.5 * z[None, :] * drift_quad
            + np.log(w)[None, :]
        )
        peak = np.max(log_terms, axis=1)
        out[sl] = base[sl] + peak + np.log(np.sum(np.exp(log_terms - peak[:, None]), axis=1))
    return float(out[0]) if single else out


def nvmm_pdf(x, spec: MixtureSpec):
    """Mixture density by integration over the mixing variable.

    GIG mixing is integrated numerically in t = log z (absolute error well
    under 1e-8); point-mass and empirical mixing laws are summed exactly.

    Raises
    ------
    QuadratureError
        If the quadrature does not converge.
    """
    out = np.exp(nvmm_logpdf(x, spec))
    return float(out) if np.ndim(out) == 0 else out


def nvmm_sample(spec: MixtureSpec, count, stream: np.random.Generator) -> np.ndarray:
    """Draws location + Z drift + sqrt(Z) factor Y, shape (count, m)."""
    count = int(count)
    z = np.asarray(spec.mixing.sample(count, stream), dtype=float)
    y = stream.standard_normal((count, spec.dim))
    return spec.location + z[:, None] * spec.drift + np.sqrt(z)[:, None] * (y @ spec.factor.T)


def gh_sample(p: GhParams, count, stream: np.random.Generator) -> np.ndarray:
    return nvmm_sample(p.to_mixture(), count, stream)


def projection_cdf(y, direction, target, tol=PROJECTION_TOL):
    """CDF of <u, X> for X from a mixture or GH law.

    Equals E[Phi((y - <u,b> - Z <u,d>) / sqrt(Z u^T Sigma u))] with d the
    effective drift (Sigma a for GH parameters).

    Raises
    ------
    QuadratureError
        If node doubling does not reach ``tol``.
    """
    spec = _as_mixture(target)
    u = _vector(direction, "direction")
    if u.size != spec.dim:
        raise DomainError("direction has the wrong dimension")
    if abs(float(np.linalg.norm(u)) - 1.0) > 1e-9:
        raise DomainError("direction must be a unit vector")
    loc = float(u @ spec.location)
    d = float(u @ spec.drift)
    s2 = float(u @ spec.sigma @ u)
    y_arr = np.asarray(y, dtype=float)
    flat = y_arr.ravel()

    def evaluate(level):
        z, w = spec.mixing.nodes(level)
        out = np.empty(flat.size)
        scale = np.sqrt(z * s2)
        for start in range(0, flat.size, 4096):
            sl = slice(start, start + 4096)
            arg = (flat[sl, None] - loc - z[None, :] * d) / scale[None, :]
            out[sl] = norm_cdf(arg) @ w
        return out

    result = evaluate(0)
    if isinstance(spec.mixing, GigMixing):
        err = np.inf
        for level in range(1, 8):
            finer = evaluate(level)
            err = float(np.max(np.abs(finer - result))) if flat.size else 0.0
            result = finer
            if err <= tol:
                break
        else:
            raise QuadratureError("projection CDF quadrature did not converge", err)
    result = np.clip(result, 0.0, 1.0).reshape(y_arr.shape)
    return float(result) if result.ndim == 0 else result
