import json
import math

import jsonschema
import numpy as np
import pytest
from scipy import stats

from vmm_limits import schema
from vmm_limits.convlab import (
    CfGrid,
    ExperimentConfig,
    accompanying_cf,
    coherency_estimator,
    default_grid,
    empirical_cf,
    experiment_directions,
    grid_noise_bound,
    ks_one_sample,
    projection_distance,
    run_experiment,
    skewness_with_se,
)
from vmm_limits.errors import DomainError
from vmm_limits.gig import GigParams
from vmm_limits.mixtures import GigMixing, MixtureSpec, MvnParams, PointMass
from vmm_limits.randindex import (
    Design,
    GaussianData,
    MixedPoisson,
    NegBinomial,
    NormalizationScheme,
    ScaledRound,
    UniformCubeData,
)
from vmm_limits.streams import make_stream

ZERO = [0.0, 0.0]
C = np.array([[1.0, 0.3], [0.3, 2.0]])


def gaussian_design(size=None, drift=ZERO, location=ZERO):
    size = size or ScaledRound(PointMass(1.0))
    return Design(GaussianData(MvnParams([1.0, -2.0], C)), size, NormalizationScheme(drift, location))


class TestGrid:
    def test_default_grid(self):
        g = default_grid(2)
        # lattice points (i, j) in {-4..4}^2 with i^2 + j^2 <= 16
        assert g.size == sum(i * i + j * j <= 16 for i in range(-4, 5) for j in range(-4, 5)) == 49
        assert np.any(np.all(g.points == 0.0, axis=1))
        # closed under negation, bit for bit
        rows = {tuple(p) for p in g.points}
        assert all(tuple(-p + 0.0) in rows for p in g.points)

    def test_invalid(self):
        with pytest.raises(DomainError):
            default_grid(2, per_axis=8)
        with pytest.raises(DomainError):
            CfGrid(1.0, [[2.0, 0.0]])


class TestEmpiricalCf:
    def test_basic_properties(self):
        x = make_stream(1).standard_normal((500, 2))
        assert empirical_cf(x, [0.0, 0.0]) == 1.0
        t = default_grid(2).points
        v = empirical_cf(x, t)
        assert np.all(np.abs(v) <= 1 + 1e-12)
        assert np.allclose(empirical_cf(x, -t), np.conj(v), rtol=0, atol=1e-14)

    def test_single_point(self):
        t = np.array([0.3, -1.1])
        x = np.array([[2.0, 0.5]])
        assert empirical_cf(x, t) == pytest.approx(np.exp(1j * (t @ x[0])), abs=1e-15)

    def test_converges_to_gaussian(self):
        x = make_stream(2).multivariate_normal(ZERO, C, size=200_000)
        t = default_grid(2, radius=2.0).points
        exact = np.exp(-0.5 * np.einsum("gi,ij,gj->g", t, C, t))
        assert np.max(np.abs(empirical_cf(x, t) - exact)) <= 0.02

    def test_empty(self):
        with pytest.raises(DomainError):
            empirical_cf(np.empty((0, 2)), [1.0, 0.0])


class TestAccompanyingCf:
    def test_degenerate_is_gaussian(self):
        design = gaussian_design()
        t = default_grid(2).points
        value, bound = accompanying_cf(t, design, 100)
        exact = np.exp(-0.5 * np.einsum("gi,ij,gj->g", t, C, t))
        assert np.max(np.abs(value - exact)) <= 1e-14 + bound

    def test_at_origin(self):
        for size in (NegBinomial(2.0), MixedPoisson(GigMixing(GigParams(0.5, 1, 1)))):
            value, bound = accompanying_cf(np.zeros(2), gaussian_design(size), 1000)
            assert abs(value - 1.0) <= bound + 1e-12

    @pytest.mark.parametrize(
        "size", [NegBinomial(2.0), MixedPoisson(GigMixing(GigParams(0.5, 1, 1))), ScaledRound(GigMixing(GigParams(-1, 2, 0)))]
    )
    def test_bound_holds_across_eps(self, size):
        design = gaussian_design(size, drift=[0.4, -0.2], location=[0.1, 0.0])
        t = default_grid(2).points
        loose = accompanying_cf(t, design, 1000, eps=1e-5)
        tight = accompanying_cf(t, design, 1000, eps=1e-6)
        assert np.max(np.abs(loose.value - tight.value)) <= loose.bound + tight.bound

    def test_monte_carlo_agreement(self):
        # g_n is E h(t) with Z = U Y + V, Y ~ N(0, S): check against direct simulation
        design = gaussian_design(NegBinomial(1.5), drift=[0.5, 0.0])
        n = 200
        stream = make_stream(3)
        sizes = stream.negative_binomial(1.5, 1.5 / (1.5 + n), size=200_000)
        s = n / np.maximum(sizes, 1)
        y = stream.multivariate_normal(ZERO, C, size=s.size)
        z = np.sqrt(s)[:, None] * y + s[:, None] * (C @ np.array([0.5, 0.0]))
        t = default_grid(2, radius=2.0, per_axis=5).points
        value, bound = accompanying_cf(t, design, n)
        assert np.max(np.abs(value - empirical_cf(z, t))) <= 0.02 + bound

    def test_wrong_dimension(self):
        with pytest.raises(DomainError):
            accompanying_cf([1.0, 2.0, 3.0], gaussian_design(), 10)


class TestCoherency:
    def test_gaussian_is_noise_only(self):
        design = gaussian_design(NegBinomial(2.0))
        grid = default_grid(2)
        est = coherency_estimator(design, 1000, grid, sizes_per_stratum=500, strata=10, stream=make_stream(4))
        assert est.noise_bound == pytest.approx(grid_noise_bound(grid.size, 500))
        assert est.value <= 3 * est.noise_bound

    def test_origin_only_grid(self):
        grid = CfGrid(1.0, [[0.0, 0.0]])
        est = coherency_estimator(gaussian_design(), 50, grid, stream=make_stream(5), sizes_per_stratum=20)
        assert est.value == pytest.approx(0.0, abs=1e-15)

    def test_strata_minimum(self):
        with pytest.raises(DomainError):
            coherency_estimator(gaussian_design(), 50, default_grid(2), strata=9, stream=make_stream(6))

    def test_noise_bound_formula(self):
        assert grid_noise_bound(1, 10_000, 0.04) == pytest.approx(2 * math.sqrt(math.log(100) / 10_000))


class TestKs:
    def test_single_point(self):
        assert ks_one_sample([0.0], stats.norm.cdf) == pytest.approx(0.5)

    def test_matches_scipy(self):
        x = np.sort(make_stream(7).standard_normal(1000))
        assert ks_one_sample(x, stats.norm.cdf) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-14)

    def test_sampling_bound(self):
        r = 100_000
        x = np.sort(make_stream(8).standard_normal(r))
        assert ks_one_sample(x, stats.norm.cdf) <= 1.95 / math.sqrt(r)

    def test_point_mass_target(self):
        cdf = lambda v: (np.asarray(v) >= 1.0).astype(float)  # noqa: E731
        left = lambda v: (np.asarray(v) > 1.0).astype(float)  # noqa: E731
        assert ks_one_sample(np.ones(10), cdf, left) == 0.0
        # without the left limit the atom looks like a unit jump before the sample
        assert ks_one_sample(np.ones(10), cdf) == 1.0

    def test_invalid(self):
        with pytest.raises(DomainError):
            ks_one_sample([], stats.norm.cdf)
        with pytest.raises(DomainError):
            ks_one_sample([1.0, 0.0], stats.norm.cdf)


class TestProjection:
    def test_gaussian_target(self):
        target = MixtureSpec(ZERO, ZERO, C, PointMass(1.0))
        x = make_stream(9).multivariate_normal(ZERO, C, size=100_000)
        d = projection_distance(x, target, experiment_directions(2, "ab" * 32))
        assert d.shape == (8,) and np.all(d <= 0.01)

    def test_detects_shift(self):
        target = MixtureSpec(ZERO, ZERO, np.eye(2), PointMass(1.0))
        x = make_stream(10).standard_normal((20_000, 2)) + [0.5, 0.0]
        d = projection_distance(x, target, np.eye(2))
        assert d[0] >= 0.15 and d[1] <= 0.02

    def test_directions(self):
        u = experiment_directions(3, "0" * 64)
        assert u.shape == (8, 3)
        assert np.allclose(np.linalg.norm(u, axis=1), 1.0)
        assert np.array_equal(u[:3], np.eye(3))
        assert np.array_equal(u, experiment_directions(3, "0" * 64))


class TestSkewness:
    def test_normal_and_exponential(self):
        stream = make_stream(11)
        g, se = skewness_with_se(stream.standard_normal((100_000, 1)))
        assert abs(g[0]) <= 3 * se[0]
        assert se[0] == pytest.approx(math.sqrt(6 / 100_000), rel=0.1)
        g, se = skewness_with_se(stream.exponential(size=(100_000, 1)))
        assert abs(g[0] - 2.0) <= 4 * se[0]


def small_config(seed=7, coherency=False):
    design = Design(
        UniformCubeData(ZERO, math.sqrt(3.0)),
        MixedPoisson(GigMixing(GigParams(0.5, 1, 1))),
        NormalizationScheme([0.3, 0.0], ZERO),
    )
    return ExperimentConfig(
        design=design,
        n_grid=(50, 200),
        replications=1200,
        seed=seed,
        coherency=coherency,
        strata=10,
        sizes_per_stratum=50,
        block_size=500,
    )


class TestExperiment:
    def test_report_contents(self):
        report = run_experiment(small_config(coherency=True))
        assert [r.n for r in report.rows] == [50, 200]
        for row in report.rows:
            assert row.replications == 1200
            assert row.ks_proj_max == max(row.ks_proj)
            assert 0 <= row.ks_mixing <= 1 and row.coherency is not None
        lines = report.to_csv().splitlines()
        assert lines[0] == "n,replications,ks_proj_max,ks_mixing,cf_gap,coherency,wall_time_ms"
        assert len(lines) == 3

    def test_deterministic_and_worker_independent(self):
        a = run_experiment(small_config()).to_json()
        b = run_experiment(small_config()).to_json()
        c = run_experiment(small_config(), workers=2).to_json()
        assert a == b == c
        assert run_experiment(small_config(seed=8)).to_json() != a

    def test_json_round_trip(self):
        config = small_config()
        report = json.loads(run_experiment(config).to_json())
        jsonschema.validate(report["config"], schema.EXPERIMENT)
        again = ExperimentConfig.from_dict(report["config"], report["seed"])
        assert again.fingerprint() == config.fingerprint() == report["fingerprint"]
        assert "wall_time_ms" not in report["rows"][0]

    def test_invalid_config(self):
        with pytest.raises(DomainError):
            ExperimentConfig(design=small_config().design, n_grid=(100, 50), replications=10, seed=1)
        with pytest.raises(DomainError):
            ExperimentConfig(design=small_config().design, n_grid=(10,), replications=10, seed=None)
        with pytest.raises(DomainError):
            ExperimentConfig(design=small_config().design, n_grid=(10,), replications=10, seed=1, strata=5)
