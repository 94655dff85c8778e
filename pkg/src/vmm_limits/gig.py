"""
Generalized inverse Gaussian family GIG(nu, mu, lambda).

Density on x > 0:

.. math::
    p(x) = \\frac{\\lambda^{\\nu/2}}{2\\mu^{\\nu/2}K_\\nu(\\sqrt{\\mu\\lambda})}
           x^{\\nu-1}\\exp\\Big\\{-\\frac12\\Big(\\frac{\\mu}{x} + \\lambda x\\Big)\\Big\\}.

``mu = 0`` (nu > 0) is the gamma law with shape nu and rate lambda/2 and
``lambda = 0`` (nu < 0) is the inverse gamma law with shape -nu and scale
mu/2; both are the analytic limits of the formula above.
"""

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import gammaln
from scipy.stats import geninvgauss

from . import _quad
from .errors import DomainError, MomentDivergenceError, QuadratureError
from .specfun import bessel_k_log

CDF_TOL = 1e-10


class GigBranch(enum.Enum):
    GENERAL = "general"
    GAMMA_LIMIT = "gamma_limit"
    INV_GAMMA_LIMIT = "inv_gamma_limit"


@dataclass(frozen=True)
class GigParams:
    """Parameters (nu, mu, lambda); ``lam`` stands for lambda."""

    nu: float
    mu: float
    lam: float

    def __post_init__(self):
        nu, mu, lam = float(self.nu), float(self.mu), float(self.lam)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)
        if not all(math.isfinite(v) for v in (nu, mu, lam)):
            raise DomainError("GIG parameters must be finite")
        if nu < 0:
            ok = mu > 0 and lam >= 0
        elif nu == 0:
            ok = mu > 0 and lam > 0
        else:
            ok = mu >= 0 and lam > 0
        if not ok:
            raise DomainError(f"invalid GIG parameters nu={nu}, mu={mu}, lambda={lam}")

    @property
    def branch(self) -> GigBranch:
        if self.mu == 0:
            return GigBranch.GAMMA_LIMIT
        if self.lam == 0:
            return GigBranch.INV_GAMMA_LIMIT
        return GigBranch.GENERAL

    def reciprocal(self) -> "GigParams":
        return GigParams(-self.nu, self.lam, self.mu)


def gig_reciprocal(p: GigParams) -> GigParams:
    """Parameters of the law of 1/X when X ~ GIG(nu, mu, lambda): (-nu, lambda, mu)."""
    return p.reciprocal()


def log_normalizer(p: GigParams) -> float:
    """log of the constant multiplying x^(nu-1) exp(-(mu/x + lambda x)/2)."""
    branch = p.branch
    if branch is GigBranch.GAMMA_LIMIT:
        return p.nu * math.log(p.lam / 2) - float(gammaln(p.nu))
    if branch is GigBranch.INV_GAMMA_LIMIT:
        return -p.nu * math.log(p.mu / 2) - float(gammaln(-p.nu))
    log_k = bessel_k_log(p.nu, math.sqrt(p.mu * p.lam)).log_magnitude
    return 0.5 * p.nu * math.log(p.lam / p.mu) - math.log(2.0) - log_k


def gig_logpdf(x, p: GigParams):
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, -np.inf)
    pos = x > 0
    xp = x[pos]
    out[pos] = log_normalizer(p) + (p.nu - 1) * np.log(xp) - 0.5 * (p.mu / xp + p.lam * xp)
    return out if out.ndim else float(out)


def gig_pdf(x, p: GigParams):
    """Density; zero on x <= 0."""
    out = np.exp(gig_logpdf(x, p))
    return out if np.ndim(out) else float(out)


def _log_density_t(p: GigParams):
    """Log-density of t = log X."""
    c0 = log_normalizer(p)

    def log_f(t):
        left, right = _quad._exp_terms(t, p.mu, p.lam)
        return c0 + p.nu * t - left - right

    return log_f


def log_range(p: GigParams, tail=1e-16):
    """Truncation interval in t = log x carrying all but a certified tail."""
    lo, hi, _ = _quad.concave_range(p.nu, p.mu, p.lam, tail=tail)
    return float(lo), float(hi)


@functools.lru_cache(maxsize=64)
def _cumulative(p: GigParams):
    log_f = _log_density_t(p)
    lo, hi = log_range(p)
    panels = 16
    rule = _quad.CumulativeRule(log_f, lo, hi, panels)
    while panels < 1 << 16:
        panels *= 2
        finer = _quad.CumulativeRule(log_f, lo, hi, panels)
        err = float(np.max(np.abs(finer.cumulative[::2] - rule.cumulative)))
        rule = finer
        if err <= CDF_TOL:
            return rule
    raise QuadratureError(f"GIG CDF quadrature failed for {p}", err)


def gig_cdf(x, p: GigParams):
    """CDF by quadrature of the density in t = log x.

    Raises
    ------
    QuadratureError
        If the panel quadrature cannot meet the error budget.
    """
    x = np.asarray(x, dtype=float)
    rule = _cumulative(p)
    out = np.zeros(x.shape)
    pos = x > 0
    out[pos] = rule(np.log(x[pos]))
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def gig_ppf(q, p: GigParams):
    """Quantile function by root-finding on :func:`gig_cdf`."""
    q = np.asarray(q, dtype=float)
    rule = _cumulative(p)
    out = np.empty(q.shape)
    for idx, qi in np.ndenumerate(q):
        if qi <= rule.cumulative[0]:
            out[idx] = math.exp(rule.lo)
            continue
        if qi >= rule.total:
            out[idx] = math.exp(rule.hi)
            continue
        j = int(np.searchsorted(rule.cumulative, qi) - 1)
        a, b = rule.edges[j], rule.edges[j + 1]
        out[idx] = math.exp(optimize.brentq(lambda t: float(rule(t)) - qi, a, b, xtol=1e-14))
    return out if out.ndim else float(out)


def gig_sample(p: GigParams, count: int, stream: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. variates.

    The general branch uses the ratio-of-uniforms generator behind
    ``scipy.stats.geninvgauss`` (scaled by sqrt(mu/lambda)); the limit
    branches use gamma / inverse gamma draws.
    """
    count = int(count)
    if count < 0:
        raise DomainError("count must be nonnegative")
    if count == 0:
        return np.empty(0)
    branch = p.branch
    if branch is GigBranch.GAMMA_LIMIT:
        return stream.gamma(p.nu, 2.0 / p.lam, size=count)
    if branch is GigBranch.INV_GAMMA_LIMIT:
        return 0.5 * p.mu / stream.gamma(-p.nu, 1.0, size=count)
    scale = math.sqrt(p.mu / p.lam)
    draws = geninvgauss.rvs(p.nu, math.sqrt(p.mu * p.lam), size=count, random_state=stream)
    return scale * np.asarray(draws, dtype=float)


def gig_moment(order: float, p: GigParams) -> float:
    """E X^order.

    Raises
    ------
    MomentDivergenceError
        For limit-branch moments that are infinite.
    """
    r = float(order)
    if r == 0:
        return 1.0
    branch = p.branch
    if branch is GigBranch.GAMMA_LIMIT:
        if p.nu + r <= 0:
            raise MomentDivergenceError(f"E X^{r} is infinite for gamma shape {p.nu}")
        return math.exp(gammaln(p.nu + r) - gammaln(p.nu) + r * math.log(2.0 / p.lam))
    if branch is GigBranch.INV_GAMMA_LIMIT:
        if -p.nu - r <= 0:
            raise MomentDivergenceError(f"E X^{r} is infinite for inverse gamma shape {-p.nu}")
        return math.exp(gammaln(-p.nu - r) - gammaln(-p.nu) + r * math.log(p.mu / 2.0))
    omega = math.sqrt(p.mu * p.lam)
    log_ratio = bessel_k_log(p.nu + r, omega).log_magnitude - bessel_k_log(p.nu, omega).log_magnitude
    return math.exp(0.5 * r * math.log(p.mu / p.lam) + log_ratio)
