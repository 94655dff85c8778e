"""
Random sample sizes, the bias-injected sample mean, and single replications
of the randomly indexed statistic.

For a nominal index n, a random size N = N_n, observations X_1..X_N and a
normalization scheme (sigma, drift a_n, location b_n, theta):

    T_{n,k} = mean(X_1..X_k) + sqrt(n) / (sigma k) * Sigma_lim a_n
    Z_n     = sigma sqrt(n) (T_{n,N} - theta) -/+ b_n
    U_n     = sqrt(n / N),   V_n = U_n^2 Sigma_lim a_n -/+ b_n

where Sigma_lim = sigma^2 Cov(X) is the covariance of the normal limit of
sigma sqrt(k) (mean - theta).  The upper sign is ``paper_minus``.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from scipy import stats

from .errors import DomainError
from .gig import GigParams
from .mixtures import (
    EmpiricalMixing,
    GhParams,
    GigMixing,
    MixingLaw,
    MixtureSpec,
    MvnParams,
    PointMass,
    _vector,
)

SIGN_CONVENTIONS = ("paper_minus", "mixture_plus")
# unit-width terms kept before switching to binned size-law terms
MAX_UNIT_TERMS = 200_000
# width in s = n/k of a merged bin
BIN_DS = 1e-5


class SizeTerms(NamedTuple):
    """Discrete law of s = n/N: atoms ``s`` with ``mass``.

    Binned atoms carry the width ``ds`` of the s-interval they stand for;
    ``tail`` is the probability left out by truncation.
    """

    s: np.ndarray
    mass: np.ndarray
    ds: np.ndarray
    tail: float


def _compress(n, s, mass, ds):
    """Merge atoms whose s-spacing is finer than BIN_DS into BIN_DS-wide bins.

    Each bin is represented by its mass-weighted mean s, so replacing the
    atoms of a bin by one atom changes E f(s) by at most
    sup|f''| * width^2 / 8.
    """
    keep = s > math.sqrt(n * BIN_DS) if n > 0 else np.zeros(s.size, bool)
    fine = ~keep & (mass > 0)
    if not np.any(fine):
        return s[keep], mass[keep], ds[keep]
    idx = np.floor(s[fine] / BIN_DS).astype(np.int64)
    uniq, inv = np.unique(idx, return_inverse=True)
    m_bin = np.bincount(inv, weights=mass[fine])
    s_bin = np.bincount(inv, weights=mass[fine] * s[fine]) / np.where(m_bin > 0, m_bin, 1.0)
    s_min = np.full(uniq.size, np.inf)
    s_max = np.full(uniq.size, -np.inf)
    np.minimum.at(s_min, inv, s[fine] - 0.5 * ds[fine])
    np.maximum.at(s_max, inv, s[fine] + 0.5 * ds[fine])
    return (
        np.concatenate([s[keep], s_bin]),
        np.concatenate([mass[keep], m_bin]),
        np.concatenate([ds[keep], s_max - s_min]),
    )


def _terms(n, s, mass, ds):
    mass = np.clip(mass, 0.0, None)
    s, mass, ds = _compress(n, s, mass, ds)
    return SizeTerms(s, mass, ds, max(0.0, 1.0 - float(mass.sum())))


def _unit_and_binned(n, cdf, k_lo, k_hi, finalize=True):
    """Size-law terms from a CDF of N on integers (F(k) = P(N <= k))."""
    k_lo = max(int(k_lo), 1)
    k_hi = max(int(k_hi), k_lo)
    unit_end = min(k_hi, k_lo + MAX_UNIT_TERMS - 1)
    k = np.arange(k_lo, unit_end + 1)
    F = cdf(np.arange(k_lo - 1, unit_end + 1))
    if k_lo == 1:
        F[0] = 0.0
    s = [n / k]
    mass = [np.diff(F)]
    ds = [np.zeros(k.size)]
    if unit_end < k_hi:
        s_edges = np.arange(n / (unit_end + 1), n / k_hi, -BIN_DS)
        k_edges = np.unique(np.concatenate([np.ceil(n / s_edges), [k_hi + 1]]).astype(np.int64))
        k_edges = k_edges[k_edges > unit_end]
        k_edges = np.concatenate([[unit_end + 1], k_edges])
        Fe = cdf(k_edges - 1)
        lo_k, hi_k = k_edges[:-1], k_edges[1:] - 1
        s.append(2.0 * n / (lo_k + hi_k))
        mass.append(np.diff(Fe))
        ds.append(n / lo_k - n / hi_k)
    s, mass, ds = (np.concatenate(v) for v in (s, mass, ds))
    if not finalize:
        return s, np.clip(mass, 0.0, None), ds
    return _terms(n, s, mass, ds)


def _atoms_from_sizes(n, sizes, weights):
    sizes = np.maximum(np.asarray(sizes, dtype=np.int64), 1)
    uniq, inv = np.unique(sizes, return_inverse=True)
    mass = np.bincount(inv, weights=weights)
    return _terms(n, n / uniq.astype(float), mass, np.zeros(uniq.size))


@dataclass(frozen=True)
class ScaledRound:
    """N_n = max(1, round(n W)) with W drawn from ``mixing``."""

    mixing: MixingLaw

    def draw(self, n, count, stream):
        w = self.mixing.sample(count, stream)
        return np.maximum(1, np.rint(n * w)).astype(np.int64)

    def limit_mixing(self) -> MixingLaw:
        return self.mixing.reciprocal()

    def size_terms(self, n, eps, level=0):
        if isinstance(self.mixing, (PointMass, EmpiricalMixing)):
            z, w = self.mixing.nodes()
            return _atoms_from_sizes(n, np.rint(n * z), w)
        w_lo, w_hi = self.mixing.ppf([0.5 * eps, 1.0 - 0.5 * eps])
        k_lo = math.floor(n * w_lo)
        k_hi = math.ceil(n * w_hi)
        return _unit_and_binned(n, lambda k: self.mixing.cdf((k + 0.5) / n), k_lo, k_hi)


@dataclass(frozen=True)
class MixedPoisson:
    """N_n = max(1, Poisson(n W)) with W drawn from ``mixing``."""

    mixing: MixingLaw

    def draw(self, n, count, stream):
        w = self.mixing.sample(count, stream)
        return np.maximum(1, stream.poisson(n * w)).astype(np.int64)

    def limit_mixing(self) -> MixingLaw:
        return self.mixing.reciprocal()

    def size_terms(self, n, eps, level=0):
        z, weights = self.mixing.nodes(level)
        lam = n * z
        # Poisson tails beyond lam +- (10 sqrt(lam) + 15) are below 1e-20
        half = 10.0 * np.sqrt(lam) + 15.0
        lo = np.maximum(0, (lam - half).astype(np.int64))
        hi = (lam + half).astype(np.int64) + 1
        small = (hi - lo <= MAX_UNIT_TERMS) & (weights > 0)
        pmf = np.zeros(int(hi[small].max()) + 1 if np.any(small) else 1)
        for lam_j, w_j, lo_j, hi_j in zip(lam[small], weights[small], lo[small], hi[small]):
            pmf[lo_j : hi_j + 1] += w_j * stats.poisson.pmf(np.arange(lo_j, hi_j + 1), lam_j)
        pmf[1] += pmf[0]
        k = np.flatnonzero(pmf[1:]) + 1
        parts = [(n / k, pmf[k], np.zeros(k.size))]
        for lam_j, w_j, lo_j, hi_j in zip(lam[~small], weights[~small], lo[~small], hi[~small]):
            if w_j > 0:
                cdf = lambda kk, lam_j=lam_j: stats.poisson.cdf(kk, lam_j)  # noqa: E731
                s_j, m_j, ds_j = _unit_and_binned(n, cdf, lo_j, hi_j, finalize=False)
                parts.append((s_j, w_j * m_j, ds_j))
        s, mass, ds = (np.concatenate([p[i] for p in parts]) for i in range(3))
        return _terms(n, s, mass, ds)


@dataclass(frozen=True)
class NegBinomial:
    """Negative binomial N_n with r successes and success probability r/(r+n).

    E N_n = n and N_n / n converges to Gamma(shape r, rate r).
    """

    r: float

    def __post_init__(self):
        if not (float(self.r) > 0):
            raise DomainError("negative binomial r must be positive")
        object.__setattr__(self, "r", float(self.r))

    def _law(self, n):
        return stats.nbinom(self.r, self.r / (self.r + n))

    def draw(self, n, count, stream):
        return np.maximum(1, stream.negative_binomial(self.r, self.r / (self.r + n), size=count)).astype(
            np.int64
        )

    def limit_mixing(self) -> MixingLaw:
        # reciprocal of Gamma(shape r, rate r) = GIG(r, 0, 2r)
        return GigMixing(GigParams(-self.r, 2.0 * self.r, 0.0))

    def size_terms(self, n, eps, level=0):
        law = self._law(n)
        k_lo = int(law.ppf(0.5 * eps))
        k_hi = int(law.isf(0.5 * eps)) + 1
        return _unit_and_binned(n, law.cdf, k_lo, k_hi)


SizeModel = Union[ScaledRound, MixedPoisson, NegBinomial]


def draw_size(model: SizeModel, n: int, stream: np.random.Generator, count=None):
    """One random size (or ``count`` of them) for nominal index n."""
    if int(n) < 1:
        raise DomainError("n must be >= 1")
    if count is None:
        return int(model.draw(int(n), 1, stream)[0])
    return model.draw(int(n), int(count), stream)


# -- data models -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianData:
    params: MvnParams

    @property
    def dim(self):
        return self.params.dim

    @property
    def mean(self):
        return self.params.mean

    @property
    def covariance(self):
        return self.params.sigma

    def draw(self, k, stream):
        y = stream.standard_normal((int(k), self.dim))
        return self.params.mean + y @ self.params.factor.T

    def draw_mean(self, k, stream):
        # the sample mean of k Gaussian observations is exactly N(mean, C/k)
        y = stream.standard_normal(self.dim)
        return self.params.mean + (self.params.factor @ y) / math.sqrt(k)


@dataclass(frozen=True, eq=False)
class UniformCubeData:
    center: np.ndarray
    half_width: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vector(self.center, "center"))
        if not float(self.half_width) > 0:
            raise DomainError("half_width must be positive")
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def dim(self):
        return self.center.size

    @property
    def mean(self):
        return self.center

    @property
    def covariance(self):
        return (self.half_width**2 / 3.0) * np.eye(self.dim)

    def draw(self, k, stream):
        return self.center + self.half_width * (2.0 * stream.random((int(k), self.dim)) - 1.0)

    def draw_mean(self, k, stream):
        total = np.zeros(self.dim)
        left = int(k)
        while left > 0:
            chunk = min(left, 1 << 20)
            total += np.sum(stream.random((chunk, self.dim)), axis=0)
            left -= chunk
        return self.center + self.half_width * (2.0 * total / k - 1.0)


@dataclass(frozen=True, eq=False)
class ExponentialData:
    """Independent exponential coordinates with the given rates."""

    rates: np.ndarray

    def __post_init__(self):
        rates = _vector(self.rates, "rates")
        if not np.all(rates > 0):
            raise DomainError("rates must be positive")
        object.__setattr__(self, "rates", rates)

    @property
    def dim(self):
        return self.rates.size

    @property
    def mean(self):
        return 1.0 / self.rates

    @property
    def covariance(self):
        return np.diag(1.0 / self.rates**2)

    def draw(self, k, stream):
        return stream.exponential(1.0 / self.rates, size=(int(k), self.dim))

    def draw_mean(self, k, stream):
        # a sum of k exponentials is gamma(k); exact and O(1) in k
        return stream.gamma(float(k), 1.0 / (k * self.rates))


DataModel = Union[GaussianData, UniformCubeData, ExponentialData]


# -- normalization -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormalizationScheme:
    """Constant normalizing sequences: sigma_n = sigma, a_n = drift, b_n = location.

    ``theta`` defaults to the data model's mean when left as None.
    """

    drift: np.ndarray
    location: np.ndarray
    sigma: float = 1.0
    theta: np.ndarray = None
    sign_convention: str = "paper_minus"

    def __post_init__(self):
        if not float(self.sigma) > 0:
            raise DomainError("sigma must be positive")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise DomainError(f"sign_convention must be one of {SIGN_CONVENTIONS}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "drift", _vector(self.drift, "drift"))
        object.__setattr__(self, "location", _vector(self.location, "location"))
        if self.theta is not None:
            object.__setattr__(self, "theta", _vector(self.theta, "theta"))
        if self.drift.size != self.location.size:
            raise DomainError("drift and location dimensions disagree")

    @property
    def location_sign(self):
        return -1.0 if self.sign_convention == "paper_minus" else 1.0


def asymptotic_sigma(data_model: DataModel, scheme: NormalizationScheme) -> np.ndarray:
    """Covariance of the normal limit of sigma sqrt(k) (mean_k - theta): sigma^2 C."""
    return scheme.sigma**2 * np.asarray(data_model.covariance, dtype=float)


def _statistic_from_mean(mean, k, n, scheme, sigma_lim):
    bias = math.sqrt(n) / (scheme.sigma * k) * (sigma_lim @ scheme.drift)
    return mean + bias


def compute_statistic(data, n, scheme: NormalizationScheme, sigma_lim=None) -> np.ndarray:
    """Sample mean of ``data`` plus the injected bias sqrt(n)/(sigma k) Sigma_lim a_n.

    ``sigma_lim`` defaults to the identity matrix.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    k = data.shape[0]
    if k == 0 or data.size == 0:
        raise DomainError("statistic needs at least one observation")
    m = data.shape[1]
    if m != scheme.drift.size:
        raise DomainError("data dimension does not match the scheme")
    sigma_lim = np.eye(m) if sigma_lim is None else np.asarray(sigma_lim, dtype=float)
    return _statistic_from_mean(data.mean(axis=0), k, n, scheme, sigma_lim)


@dataclass(frozen=True, eq=False)
class Design:
    """A data model, a size model and a normalization scheme."""

    data_model: DataModel
    size_model: SizeModel
    scheme: NormalizationScheme
    sigma_lim: np.ndarray = field(init=False, repr=False)
    theta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.data_model.dim != self.scheme.drift.size:
            raise DomainError("data model and scheme dimensions disagree")
        object.__setattr__(self, "sigma_lim", asymptotic_sigma(self.data_model, self.scheme))
        theta = self.scheme.theta if self.scheme.theta is not None else np.asarray(self.data_model.mean)
        object.__setattr__(self, "theta", np.asarray(theta, dtype=float))

    @property
    def dim(self):
        return self.data_model.dim

    @property
    def effective_drift(self):
        return self.sigma_lim @ self.scheme.drift

    @property
    def limit_location(self):
        return self.scheme.location_sign * self.scheme.location + 0.0

    def limit_mixture(self) -> MixtureSpec:
        """N(+-b + z Sigma_lim a, z Sigma_lim) mixed over the limit law of n/N_n."""
        return MixtureSpec(
            self.effective_drift, self.limit_location, self.sigma_lim, self.size_model.limit_mixing()
        )

    def limit_gh(self):
        """The same limit as GH parameters, when the mixing law is GIG."""
        mixing = self.size_model.limit_mixing()
        if not isinstance(mixing, GigMixing):
            return None
        g = mixing.params
        a = self.scheme.drift
        alpha2 = g.lam + float(a @ self.sigma_lim @ a)
        if alpha2 <= 0:
            return None
        return GhParams(g.nu, g.mu, math.sqrt(alpha2), a, self.limit_location, self.sigma_lim)


@dataclass(frozen=True)
class Replication:
    n: int
    size: int
    z: np.ndarray
    u: float
    v: np.ndarray


class ReplicationBatch(NamedTuple):
    sizes: np.ndarray
    z: np.ndarray
    u: np.ndarray
    v: np.ndarray


def run_replications(design: Design, n: int, count: int, stream: np.random.Generator) -> ReplicationBatch:
    """``count`` independent replications sharing one stream."""
    n = int(n)
    sizes = draw_size(design.size_model, n, stream, count=count)
    scheme = design.scheme
    sign = scheme.location_sign
    z = np.empty((int(count), design.dim))
    for i, k in enumerate(sizes):
        mean = design.data_model.draw_mean(int(k), stream)
        t = _statistic_from_mean(mean, int(k), n, scheme, design.sigma_lim)
        z[i] = scheme.sigma * math.sqrt(n) * (t - design.theta) + sign * scheme.location
    u = np.sqrt(n / sizes)
    v = (n / sizes)[:, None] * design.effective_drift + design.limit_location
    return ReplicationBatch(sizes, z, u, v)


def run_replication(design: Design, n: int, stream: np.random.Generator) -> Replication:
    """One replication: draw N_n, the N_n observations and form Z_n, U_n, V_n."""
    batch = run_replications(design, n, 1, stream)
    return Replication(int(n), int(batch.sizes[0]), batch.z[0], float(batch.u[0]), batch.v[0])
