"""
Empirical convergence diagnostics for randomly indexed statistics.

Given a :class:`~vmm_limits.randindex.Design`, the experiment driver draws
replications of Z_n for each n in a grid and compares them with the
mixture limit through

* projection KS distances of Z_n against the limit law,
* the KS distance of n/N_n against the limit mixing law,
* the sup over a frequency grid of the gap between the empirical CF of
  Z_n and the accompanying CF g_n (the exact CF of U_n Y + V_n with Y
  normal), and
* a stratified estimate of E sup_t |h_{n,N_n}(t) - exp(-t'St/2)|.
"""

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
from scipy import stats

from . import config as cfg
from .errors import DomainError
from .mixtures import GigMixing, projection_cdf
from .randindex import MixedPoisson, Design, draw_size, run_replications
from .streams import COHERENCY, DIRECTIONS, REPLICATIONS, make_stream

CF_CHUNK = 8192
# failure probability of the per-stratum grid-sup noise bound
NOISE_DELTA = 0.01


# -- frequency grids -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CfGrid:
    """Frequencies t with ||t|| <= radius; contains 0 and is closed under negation."""

    radius: float
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if not float(self.radius) > 0:
            raise DomainError("grid radius must be positive")
        if np.any(np.linalg.norm(pts, axis=1) > self.radius * (1 + 1e-12)):
            raise DomainError("grid points must lie in the ball of the given radius")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "points", pts)

    @property
    def size(self):
        return self.points.shape[0]


def default_grid(dim, radius=5.0, per_axis=9):
    """Tensor grid with ``per_axis`` (odd) points per axis, thinned to the ball."""
    if per_axis % 2 == 0:
        raise DomainError("per_axis must be odd so that the origin is a grid point")
    axis = np.linspace(-radius, radius, per_axis)
    pts = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    # exact zeros for the middle node, so the grid is symmetric bit for bit
    pts[np.abs(pts) < 1e-12 * radius] = 0.0
    keep = np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)
    return CfGrid(radius, pts[keep])


# -- characteristic functions ---------------------------------------------------


def _samples(samples):
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise DomainError("empirical CF needs at least one sample")
    return x


def empirical_cf(samples, t):
    """(1/R) sum_r exp(i <t, x_r>) at one frequency (shape (m,)) or many (shape (G, m))."""
    x = _samples(samples)
    t_arr = np.asarray(t, dtype=float)
    tt = np.atleast_2d(t_arr)
    re = np.zeros(tt.shape[0])
    im = np.zeros(tt.shape[0])
    for start in range(0, x.shape[0], CF_CHUNK):
        phase = x[start : start + CF_CHUNK] @ tt.T
        re += np.cos(phase).sum(axis=0)
        im += np.sin(phase).sum(axis=0)
    out = (re + 1j * im) / x.shape[0]
    return complex(out[0]) if t_arr.ndim <= 1 else out


class CfValue(NamedTuple):
    value: object
    bound: float


def _accompanying_sum(tt, terms, drift, location, sigma):
    # exponent of each summand: s*c(t) + i<t, loc>, with c(t) = i<t,d> - t'St/2
    c = 1j * (tt @ drift) - 0.5 * np.einsum("gi,ij,gj->g", tt, sigma, tt)
    values = np.exp(np.outer(c, terms.s)) @ terms.mass
    values = values * np.exp(1j * (tt @ location))
    # binned atoms: Jensen gap of exp(s c) over a bin of width ds
    binning = 0.125 * np.abs(c) ** 2 * float(np.sum(terms.mass * terms.ds**2))
    return values, terms.tail + binning


def accompanying_cf(t, design: Design, n: int, eps=1e-6):
    """g_n(t) = E exp(i<t, V_n> - U_n^2 t'St/2) summed over the law of N_n.

    Returns the value together with a bound on its truncation and
    discretization error.  The bound covers the pmf mass left out (at most
    ``eps``), binning of very large sizes, and, for mixed Poisson sizes with
    a continuous mixing law, the quadrature error of the mixing integral
    (estimated by comparing two node levels).
    """
    t_arr = np.asarray(t, dtype=float)
    tt = np.atleast_2d(t_arr)
    if tt.shape[1] != design.dim:
        raise DomainError("frequency has the wrong dimension")
    args = (design.effective_drift, design.limit_location, design.sigma_lim)
    model = design.size_model
    if isinstance(model, MixedPoisson) and isinstance(model.mixing, GigMixing):
        coarse, _ = _accompanying_sum(tt, model.size_terms(n, eps, level=0), *args)
        values, bound = _accompanying_sum(tt, model.size_terms(n, eps, level=1), *args)
        bound = bound + np.abs(values - coarse)
    else:
        values, bound = _accompanying_sum(tt, model.size_terms(n, eps), *args)
        bound = np.broadcast_to(bound, values.shape)
    if t_arr.ndim <= 1:
        return CfValue(complex(values[0]), float(bound[0]))
    return CfValue(values, float(np.max(bound)))


def normal_cf(tt, sigma):
    tt = np.atleast_2d(np.asarray(tt, dtype=float))
    return np.exp(-0.5 * np.einsum("gi,ij,gj->g", tt, sigma, tt))


class CoherencyEstimate(NamedTuple):
    value: float
    noise_bound: float


def grid_noise_bound(grid_size, samples_per_point, delta=NOISE_DELTA):
    """Hoeffding bound, holding with probability >= 1 - delta, on the grid-sup
    of |empirical CF - CF| from ``samples_per_point`` draws."""
    return 2.0 * math.sqrt(math.log(4.0 * grid_size / delta) / samples_per_point)


def coherency_estimator(design: Design, n, grid: CfGrid, sizes_per_stratum=500, strata=10, stream=None):
    """Average over random sizes k ~ N_n of sup_grid |h_hat_{n,k} - exp(-t'St/2)|.

    For every stratum a size k is drawn and ``sizes_per_stratum`` fresh
    copies of Y_{n,k} = sigma sqrt(k) (T_{n,k} - theta) - sqrt(n/k) S a are
    generated.  The estimate is biased upward by Monte Carlo noise; the
    returned ``noise_bound`` bounds that noise per stratum.
    """
    if int(strata) < 10:
        raise DomainError("the coherency estimator needs at least 10 strata")
    if stream is None:
        raise DomainError("a random stream is required")
    n = int(n)
    sizes = draw_size(design.size_model, n, stream, count=int(strata))
    target = normal_cf(grid.points, design.sigma_lim)
    scheme = design.scheme
    sups = np.empty(sizes.size)
    y = np.empty((int(sizes_per_stratum), design.dim))
    for j, k in enumerate(sizes):
        k = int(k)
        for i in range(y.shape[0]):
            y[i] = scheme.sigma * math.sqrt(k) * (design.data_model.draw_mean(k, stream) - design.theta)
        sups[j] = np.max(np.abs(empirical_cf(y, grid.points) - target))
    return CoherencyEstimate(float(np.mean(sups)), grid_noise_bound(grid.size, y.shape[0]))


# -- distances ---------------------------------------------------------------------


def ks_one_sample(sorted_sample, cdf, cdf_left=None):
    """Kolmogorov-Smirnov distance between a sorted sample and a CDF.

    ``cdf_left`` (x -> P(X < x)) is needed only for targets with atoms; it
    defaults to ``cdf``.
    """
    x = np.asarray(sorted_sample, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("KS distance needs a nonempty sample")
    if np.any(np.diff(x) < 0):
        raise DomainError("sample must be sorted ascending")
    r = x.size
    f_right = np.asarray(cdf(x), dtype=float)
    f_left = f_right if cdf_left is None else np.asarray(cdf_left(x), dtype=float)
    i = np.arange(1, r + 1)
    d_plus = np.max(i / r - f_right)
    d_minus = np.max(f_left - (i - 1) / r)
    return float(min(1.0, max(d_plus, d_minus, 0.0)))


def projection_distance(samples, target, directions):
    """Per-direction KS of <u, x_r> against the projected target CDF."""
    x = _samples(samples)
    out = []
    for u in np.atleast_2d(np.asarray(directions, dtype=float)):
        y = np.sort(x @ u)
        out.append(ks_one_sample(y, lambda v, u=u: projection_cdf(v, u, target)))
    return np.array(out)


def experiment_directions(dim, fingerprint, total=None):
    """Coordinate axes followed by pseudo-random unit vectors tied to the fingerprint."""
    total = max(8, dim) if total is None else int(total)
    stream = make_stream(int(fingerprint[:15], 16), DIRECTIONS)
    extra = stream.standard_normal((max(0, total - dim), dim))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    return np.vstack([np.eye(dim), extra])[:total]


def skewness_with_se(x):
    """Sample skewness per column and its influence-function standard error."""
    x = np.asarray(x, dtype=float)
    g1 = stats.skew(x, axis=0)
    zs = (x - x.mean(axis=0)) / x.std(axis=0)
    infl = zs**3 - 3.0 * zs - 1.5 * g1 * (zs**2 - 1.0)
    return g1, infl.std(axis=0) / math.sqrt(x.shape[0])


# -- experiments ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything that determines a convergence report.

    Replications for a given n are produced in blocks of ``block_size``;
    block b uses the stream keyed by (seed, n, b), so results do not depend
    on how blocks are spread over workers.
    """

    design: Design
    n_grid: tuple
    replications: int
    seed: int
    cf_radius: float = 5.0
    cf_points_per_axis: int = 9
    cf_eps: float = 1e-6
    strata: int = 10
    sizes_per_stratum: int = 500
    block_size: int = 500
    coherency: bool = True

    def __post_init__(self):
        grid = tuple(int(v) for v in self.n_grid)
        if not grid or any(v < 1 for v in grid) or list(grid) != sorted(set(grid)):
            raise DomainError("n_grid must be a nonempty strictly ascending list of positive integers")
        object.__setattr__(self, "n_grid", grid)
        if int(self.replications) < 1 or int(self.block_size) < 1:
            raise DomainError("replications and block_size must be positive")
        if self.seed is None:
            raise DomainError("a master seed is required")
        if self.coherency and int(self.strata) < 10:
            raise DomainError("the coherency estimator needs at least 10 strata")

    @classmethod
    def from_dict(cls, d, seed):
        """Build from a validated ``experiment`` document and a master seed."""
        options = {k: v for k, v in d.items() if k not in ("data_model", "size_model", "normalization")}
        return cls(design=cfg.design_from_dict(d), seed=seed, **options)

    def to_dict(self):
        """The ``experiment`` section of a configuration document (seed excluded)."""
        return {
            **cfg.design_to_dict(self.design),
            "n_grid": list(self.n_grid),
            "replications": int(self.replications),
            "cf_radius": float(self.cf_radius),
            "cf_points_per_axis": int(self.cf_points_per_axis),
            "cf_eps": float(self.cf_eps),
            "strata": int(self.strata),
            "sizes_per_stratum": int(self.sizes_per_stratum),
            "block_size": int(self.block_size),
            "coherency": bool(self.coherency),
        }

    def fingerprint(self):
        doc = {"experiment": self.to_dict(), "seed": int(self.seed)}
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class ReportRow:
    n: int
    replications: int
    ks_proj: List[float]
    ks_proj_max: float
    ks_mixing: float
    cf_gap: float
    cf_bound: float
    cf_budget: float
    coherency: Optional[float]
    coherency_noise: Optional[float]
    mean: List[float]
    skewness: List[float]
    skewness_se: List[float]
    wall_time_ms: float = field(default=0.0, compare=False)

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "wall_time_ms"}
        return out


CSV_COLUMNS = ("n", "replications", "ks_proj_max", "ks_mixing", "cf_gap", "coherency", "wall_time_ms")


@dataclass
class ConvergenceReport:
    fingerprint: str
    seed: int
    config: dict
    target: dict
    directions: list
    rows: List[ReportRow]

    def to_dict(self):
        return {
            "fingerprint": self.fingerprint,
            "seed": self.seed,
            "config": self.config,
            "target": self.target,
            "directions": self.directions,
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_json(self):
        """Canonical JSON: sorted keys, floats with 17 significant digits.

        Wall times are left out so that the text depends only on the
        configuration and the seed.
        """
        return dumps_canonical(self.to_dict())

    def to_csv(self):
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            vals = [getattr(r, c) for c in CSV_COLUMNS]
            lines.append(",".join(_csv_field(v) for v in vals))
        return "\n".join(lines) + "\n"


def _csv_field(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def dumps_canonical(obj):
    """JSON text with sorted keys and every float written with 17 significant digits."""
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise ValueError("non-finite number in report")
        text = format(v, ".17g")
        if not any(ch in text for ch in ".e"):
            text += ".0"
        return text
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ",".join(json.dumps(str(k)) + ":" + dumps_canonical(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(dumps_canonical(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _run_block(design, seed, n, block, count):
    return run_replications(design, n, count, make_stream(seed, REPLICATIONS, n, block))


def _run_coherency(config, n, grid):
    stream = make_stream(config.seed, COHERENCY, n)
    return coherency_estimator(config.design, n, grid, config.sizes_per_stratum, config.strata, stream)


def _target_description(design):
    gh = design.limit_gh()
    if gh is not None:
        out = {"kind": "gh", **cfg.gh_to_dict(gh)}
    else:
        out = {"kind": "mixture"}
    mix = design.limit_mixture()
    out["mixture"] = {
        "drift": [float(v) for v in mix.drift],
        "location": [float(v) for v in mix.location],
        "sigma": [[float(v) for v in row] for row in mix.sigma],
        "mixing": cfg.mixing_to_dict(mix.mixing),
    }
    return out


def run_experiment(config: ExperimentConfig, workers=1, log=None) -> ConvergenceReport:
    """Run all replications for every n of the grid and assemble the report.

    ``workers`` only changes how blocks are scheduled; the report is
    identical for every worker count.  ``log`` (optional callable) receives
    one line per finished n.
    """
    design = config.design
    fingerprint = config.fingerprint()
    directions = experiment_directions(design.dim, fingerprint)
    grid = default_grid(design.dim, config.cf_radius, config.cf_points_per_axis)
    target = design.limit_mixture()
    mixing = target.mixing
    budget = 3.0 * math.sqrt(math.log(grid.size)) / math.sqrt(config.replications)
    pool = ProcessPoolExecutor(max_workers=int(workers)) if int(workers) > 1 else None
    rows = []
    try:
        for n in config.n_grid:
            start = time.perf_counter()
            counts = [
                min(config.block_size, config.replications - b0)
                for b0 in range(0, config.replications, config.block_size)
            ]
            jobs = [(design, config.seed, n, b, c) for b, c in enumerate(counts)]
            coh_future = None
            if pool is None:
                batches = [_run_block(*job) for job in jobs]
            else:
                if config.coherency:
                    coh_future = pool.submit(_run_coherency, config, n, grid)
                batches = list(pool.map(_run_block, *zip(*jobs)))
            z = np.concatenate([b.z for b in batches])
            sizes = np.concatenate([b.sizes for b in batches])

            ks_proj = projection_distance(z, target, directions)
            s = np.sort(n / sizes.astype(float))
            ks_mix = ks_one_sample(s, mixing.cdf, mixing.cdf_left)
            g = accompanying_cf(grid.points, design, n, config.cf_eps)
            cf_gap = float(np.max(np.abs(empirical_cf(z, grid.points) - g.value)))
            coh = None
            if config.coherency:
                coh = coh_future.result() if coh_future is not None else _run_coherency(config, n, grid)
            skew, skew_se = skewness_with_se(z)
            row = ReportRow(
                n=n,
                replications=config.replications,
                ks_proj=[float(v) for v in ks_proj],
                ks_proj_max=float(np.max(ks_proj)),
                ks_mixing=ks_mix,
                cf_gap=cf_gap,
                cf_bound=g.bound,
                cf_budget=budget,
                coherency=None if coh is None else coh.value,
                coherency_noise=None if coh is None else coh.noise_bound,
                mean=[float(v) for v in z.mean(axis=0)],
                skewness=[float(v) for v in skew],
                skewness_se=[float(v) for v in skew_se],
                wall_time_ms=1e3 * (time.perf_counter() - start),
            )
            rows.append(row)
            if log is not None:
                log(
                    f"n={n} ks_proj_max={row.ks_proj_max:.4g} ks_mixing={ks_mix:.4g} "
                    f"cf_gap={cf_gap:.4g} coherency={'-' if coh is None else format(coh.value, '.4g')} "
                    f"({row.wall_time_ms:.0f} ms)"
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return ConvergenceReport(
        fingerprint=fingerprint,
        seed=int(config.seed),
        config=config.to_dict(),
        target=_target_description(design),
        directions=[[float(v) for v in u] for u in directions],
        rows=rows,
    )
