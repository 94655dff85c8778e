import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from vmm_limits.errors import DomainError
from vmm_limits.gig import GigParams, gig_moment, gig_pdf
from vmm_limits.mixtures import (
    EmpiricalMixing,
    GhParams,
    GigMixing,
    MixtureSpec,
    MvnParams,
    PointMass,
    gh_logpdf,
    gh_pdf,
    gh_sample,
    mvn_pdf,
    normalize_det,
    nvmm_pdf,
    nvmm_sample,
    projection_cdf,
)
from vmm_limits.streams import make_stream

SIGMA = np.array([[2.0, 0.5], [0.5, 1.0]])

GH_CASES = [
    GhParams(1.0, 1.0, 2.0, [0.3, 0.0], [0.0, 0.0], np.eye(2)),
    GhParams(-2.0, 1.5, 1.2, [0.2, 0.1], [0.0, 0.5], [[1.0, -0.3], [-0.3, 0.8]]),
    GhParams(-0.5, 1.0, math.sqrt(1.25), [0.5, 0.0], [0.0, 0.0], np.eye(2)),
    GhParams(2.5, 0.0, 1.7, [-0.4, 0.3], [1.0, -1.0], SIGMA),
    GhParams(-1.5, 2.0, 0.9, [0.6, 0.0], [0.0, 0.0], np.eye(2)),  # alpha^2 - <a,Sa> = 0.45
]


def directions(k=8):
    angles = np.pi * np.arange(k) / k
    return np.column_stack([np.cos(angles), np.sin(angles)])


def quad_projection_cdf(y, u, spec):
    """E Phi((y - <u,b> - Z <u,d>) / sqrt(Z u'Su)) by scipy quad against the GIG density."""
    p = spec.mixing.params
    loc, d, s2 = float(u @ spec.location), float(u @ spec.drift), float(u @ spec.sigma @ u)

    def f(t):
        z = math.exp(t)
        return gig_pdf(z, p) * z * special.ndtr((y - loc - z * d) / math.sqrt(z * s2))

    return integrate.quad(f, -40, 15, epsabs=1e-13, limit=500, points=[-5, 0, 2])[0]


class TestMvn:
    def test_origin(self):
        assert mvn_pdf([0.0, 0.0], MvnParams([0, 0], np.eye(2))) == pytest.approx(1 / (2 * math.pi), rel=1e-15)

    def test_diagonal_product(self):
        p = MvnParams([0, 0], np.diag([4.0, 1.0]))
        expected = stats.norm.pdf(1.0, scale=2.0) * stats.norm.pdf(0.0)
        assert mvn_pdf([1.0, 0.0], p) == pytest.approx(expected, rel=1e-14)

    def test_symmetry_and_scipy(self):
        p = MvnParams([1.0, -1.0], SIGMA)
        x = make_stream(1).standard_normal((20, 2))
        assert np.allclose(mvn_pdf(x, p), mvn_pdf(2 * p.mean - x, p), rtol=1e-14)
        assert np.allclose(mvn_pdf(x, p), stats.multivariate_normal(p.mean, SIGMA).pdf(x), rtol=1e-12)

    def test_factor(self):
        p = MvnParams([0, 0], SIGMA)
        assert np.allclose(p.factor @ p.factor.T, SIGMA, atol=1e-12)
        assert np.all(np.diag(p.factor) > 0)

    def test_invalid(self):
        with pytest.raises(DomainError):
            MvnParams([0, 0], [[1, 2], [2, 1]])
        with pytest.raises(DomainError):
            MvnParams([0, 0], [[1, 0.2], [0.1, 1]])
        with pytest.raises(DomainError):
            mvn_pdf([0, 0, 0], MvnParams([0, 0], np.eye(2)))


class TestMixtureDensity:
    def test_point_mass_is_normal(self):
        spec = MixtureSpec([0.3, -0.2], [1.0, 0.0], SIGMA, PointMass(1.0))
        x = make_stream(2).standard_normal((10, 2))
        ref = mvn_pdf(x, MvnParams(spec.location + spec.drift, SIGMA))
        assert np.allclose(nvmm_pdf(x, spec), ref, rtol=1e-13)

    def test_laplace_value(self):
        spec = MixtureSpec([0, 0], [0, 0], np.eye(2), GigMixing(GigParams(1, 0, 2)))
        assert nvmm_pdf([1.0, 0.0], spec) == pytest.approx(special.k0(math.sqrt(2)) / math.pi, rel=1e-10)

    def test_against_scipy_quad(self):
        g = GigParams(0.7, 1.3, 0.8)
        spec = MixtureSpec([0.4, -0.1], [0.5, 0.5], SIGMA, GigMixing(g))
        for x in make_stream(3).standard_normal((6, 2)) * 2:

            def f(z):
                return mvn_pdf(x, MvnParams(spec.location + z * spec.drift, z * SIGMA)) * gig_pdf(z, g)

            ref = integrate.quad(f, 0, np.inf, epsabs=1e-14, limit=400)[0]
            assert nvmm_pdf(x, spec) == pytest.approx(ref, abs=1e-8)

    def test_empirical_is_average(self):
        values = np.array([0.5, 1.0, 2.5])
        spec = MixtureSpec([0.2, 0.1], [0, 0], SIGMA, EmpiricalMixing(values))
        x = make_stream(4).standard_normal((5, 2))
        ref = np.mean([mvn_pdf(x, MvnParams(z * spec.drift, z * SIGMA)) for z in values], axis=0)
        assert np.allclose(nvmm_pdf(x, spec), ref, rtol=1e-13)

    @pytest.mark.parametrize(
        "mixing",
        [GigMixing(GigParams(-0.5, 1, 1)), GigMixing(GigParams(2.0, 0, 3)), EmpiricalMixing([0.3, 1.1, 4.0])],
    )
    def test_integrates_to_one(self, mixing):
        # tensor rule in polar coordinates around the location: periodic
        # trapezoid in the angle, Gauss-Legendre in log radius
        spec = MixtureSpec([0.3, -0.2], [0.5, 0.0], SIGMA, mixing)
        theta = 2 * np.pi * np.arange(96) / 96
        gl_x, gl_w = np.polynomial.legendre.leggauss(40)
        edges = np.linspace(-14, 5, 21)
        u = np.concatenate([0.5 * (b - a) * gl_x + 0.5 * (a + b) for a, b in zip(edges, edges[1:])])
        wu = np.concatenate([0.5 * (b - a) * gl_w for a, b in zip(edges, edges[1:])])
        r = np.exp(u)
        pts = spec.location + np.stack(
            [np.outer(r, np.cos(theta)).ravel(), np.outer(r, np.sin(theta)).ravel()], axis=1
        )
        dens = nvmm_pdf(pts, spec).reshape(r.size, theta.size)
        total = float(np.sum(dens.sum(axis=1) * (2 * np.pi / theta.size) * wu * r * r))
        assert abs(total - 1.0) <= 1e-5


class TestGh:
    @pytest.mark.parametrize("p", GH_CASES)
    def test_closed_form_matches_quadrature(self, p):
        x = 1.5 * make_stream(5).standard_normal((50, 2)) + p.location
        closed = gh_pdf(x, p)
        assert np.max(np.abs(closed - nvmm_pdf(x, p.to_mixture())) / closed) <= 1e-6

    def test_laplace_limit(self):
        p = GhParams(1.0, 0.0, math.sqrt(2), [0, 0], [0, 0], np.eye(2))
        assert gh_pdf([1.0, 0.0], p) == pytest.approx(special.k0(math.sqrt(2)) / math.pi, rel=1e-13)
        near = GhParams(1.0, 1e-12, math.sqrt(2), [0, 0], [0, 0], np.eye(2))
        assert gh_pdf([1.0, 0.0], near) == pytest.approx(gh_pdf([1.0, 0.0], p), rel=1e-9)

    def test_symmetric_case(self):
        p = GhParams(0.8, 1.2, 1.4, [0, 0], [1.0, -0.5], SIGMA)
        # dyadic points, so that 2b - x and its offset from b are exact in floating point
        x = np.round(64 * make_stream(6).standard_normal((30, 2))) / 64
        assert np.array_equal(gh_pdf(x, p), gh_pdf(2 * p.location - x, p))

    def test_log_density_finite_far_out(self):
        p = GH_CASES[3]
        scales = np.sqrt(np.diag(p.sigma))
        x = p.location + np.array([[100.0, 0.0], [0.0, -100.0], [70.0, 70.0]]) * scales
        assert np.all(np.isfinite(gh_logpdf(x, p)))

    def test_det_normalization_invariant(self):
        for p in GH_CASES:
            q = normalize_det(p)
            assert np.linalg.det(q.sigma) == pytest.approx(1.0, rel=1e-12)
            x = make_stream(7).standard_normal((10, 2))
            assert np.allclose(gh_pdf(x, q), gh_pdf(x, p), rtol=1e-10)

    def test_student_edge_allowed(self):
        a = np.array([0.4, 0.0])
        alpha = math.sqrt(float(a @ a))
        p = GhParams(-1.5, 2.0, alpha, a, [0, 0], np.eye(2))
        assert p.mixing.lam == 0.0

    @pytest.mark.parametrize(
        "args",
        [
            (1.0, 1.0, 0.2, [0.3, 0.0]),  # <a,Sa> > alpha^2
            (-1.0, 0.0, 2.0, [0.0, 0.0]),  # nu < 0 needs mu > 0
            (0.0, 1.0, 0.3, [0.3, 0.0]),  # nu = 0 needs strict inequality
            (1.0, 1.0, -1.0, [0.0, 0.0]),
        ],
    )
    def test_invalid(self, args):
        nu, mu, alpha, a = args
        with pytest.raises(DomainError):
            GhParams(nu, mu, alpha, a, [0, 0], np.eye(2))


class TestSamplers:
    def test_point_mass_pure_normal(self):
        spec = MixtureSpec([0, 0], [1.0, 2.0], SIGMA, PointMass(1.0))
        x = nvmm_sample(spec, 5, make_stream(8))
        y = make_stream(8).standard_normal((5, 2))
        assert np.allclose(x, spec.location + y @ spec.factor.T, rtol=1e-15)

    def test_mean(self):
        p = GH_CASES[0]
        x = gh_sample(p, 100_000, make_stream(9))
        expected = p.location + gig_moment(1, p.mixing) * (p.sigma @ p.drift)
        se = x.std(axis=0) / math.sqrt(x.shape[0])
        assert np.all(np.abs(x.mean(axis=0) - expected) <= 3 * se)

    def test_covariance_symmetric(self):
        p = GhParams(0.8, 1.2, 1.4, [0, 0], [0, 0], SIGMA)
        x = gh_sample(p, 100_000, make_stream(10))
        expected = gig_moment(1, p.mixing) * SIGMA
        assert np.allclose(np.cov(x.T), expected, rtol=0.05)

    @pytest.mark.parametrize("i", range(len(GH_CASES)))
    def test_projection_ks(self, i):
        p = GH_CASES[i]
        x = gh_sample(p, 100_000, make_stream(11, i))
        for u in directions():
            y = np.sort(x @ u)
            assert stats.kstest(y, lambda v: projection_cdf(v, u, p)).statistic <= 0.01


class TestProjectionCdf:
    def test_total_mass(self):
        u = np.array([0.6, 0.8])
        for p in GH_CASES:
            assert projection_cdf(1e6, u, p) == pytest.approx(1.0, abs=1e-8)
            assert projection_cdf(-1e6, u, p) == pytest.approx(0.0, abs=1e-8)

    def test_point_mass_normal(self):
        spec = MixtureSpec([0, 0], [1.0, -1.0], SIGMA, PointMass(1.0))
        u = np.array([0.6, 0.8])
        y = np.linspace(-4, 4, 9)
        ref = stats.norm.cdf((y - u @ spec.location) / math.sqrt(u @ SIGMA @ u))
        assert np.allclose(projection_cdf(y, u, spec), ref, atol=1e-14)

    def test_symmetric_half(self):
        p = GhParams(0.8, 1.2, 1.4, [0, 0], [0, 0], SIGMA)
        for u in directions():
            assert projection_cdf(0.0, u, p) == pytest.approx(0.5, abs=1e-12)

    def test_against_scipy_quad(self):
        for p in GH_CASES[:3]:
            spec = p.to_mixture()
            for u in directions(3):
                for y in (-2.0, 0.0, 0.7, 3.0):
                    assert projection_cdf(y, u, p) == pytest.approx(quad_projection_cdf(y, u, spec), abs=1e-8)

    def test_requires_unit_direction(self):
        with pytest.raises(DomainError):
            projection_cdf(0.0, [1.0, 1.0], GH_CASES[0])

    def test_identifiability_separation(self):
        # equal-mean gamma mixing laws, a = 1, sigma = 1 in one dimension
        y = np.linspace(-6, 10, 801)
        f1 = projection_cdf(y, [1.0], MixtureSpec([1.0], [0.0], [[1.0]], GigMixing(GigParams(1, 0, 2))))
        f2 = projection_cdf(y, [1.0], MixtureSpec([1.0], [0.0], [[1.0]], GigMixing(GigParams(2, 0, 4))))
        assert np.max(np.abs(f1 - f2)) >= 0.01
