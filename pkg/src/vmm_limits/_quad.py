"""Quadrature kernels for integrals over the positive half-line on a log scale.

Every mixing integral in the package has, after the substitution z = e^t,
a log-integrand of the form

    c*t - A*exp(-t)/2 - B*exp(t)/2 + const,

which is concave in t.  Concavity gives a certified tail bound: beyond a
point t0 on the decreasing side the remaining mass is at most
exp(l(t0)) / |l'(t0)|.  The helpers here locate the mode, pick truncation
points from that bound, and integrate with composite Gauss-Legendre rules
whose error is estimated by panel doubling.
"""

import numpy as np

from .errors import QuadratureError

_GL_CACHE = {}


def gauss_legendre(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def concave_mode(c, A, B):
    """Mode of c*t - A e^{-t}/2 - B e^t/2 (elementwise, arrays allowed)."""
    c, A, B = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (c, A, B)))
    root = np.sqrt(c * c + A * B)
    with np.errstate(divide="ignore", invalid="ignore"):
        # B y^2 - 2 c y - A = 0, solved without cancellation
        y = np.where(c >= 0, (c + root) / B, A / (root - c))
        y = np.where(B == 0, A / (-2.0 * c), y)
        y = np.where(A == 0, 2.0 * c / B, y)
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("log-integrand has no interior mode (non-integrable)")
    return np.log(y)


def _exp_terms(t, A, B):
    with np.errstate(over="ignore", invalid="ignore"):
        left = np.where(A == 0, 0.0, 0.5 * A * np.exp(-t))
        right = np.where(B == 0, 0.0, 0.5 * B * np.exp(t))
    return left, right


def _log_f(t, c, A, B):
    left, right = _exp_terms(t, A, B)
    return c * t - left - right


def _slope(t, c, A, B):
    left, right = _exp_terms(t, A, B)
    return c + left - right


def concave_range(c, A, B, drop=45.0, tail=1e-16):
    """Truncation interval [lo, hi] for exp(c t - A e^{-t}/2 - B e^t/2).

    Each side is pushed out until the log-integrand has fallen by ``drop``
    below its peak and the concavity tail bound, measured in units of the
    curvature width times the peak value, is below ``tail``.
    """
    c, A, B = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (c, A, B)))
    mode = concave_mode(c, A, B)
    peak = _log_f(mode, c, A, B)
    curv = 0.5 * A * np.exp(-mode) + 0.5 * B * np.exp(mode)
    width = 1.0 / np.sqrt(curv)
    bounds = []
    for direction in (-1.0, 1.0):
        step = np.maximum(width, 0.25)
        edge = mode + direction * step
        for _ in range(200):
            lf = _log_f(edge, c, A, B)
            slope = np.abs(_slope(edge, c, A, B))
            with np.errstate(divide="ignore", over="ignore"):
                bound = np.exp(lf - peak) / slope / width
            done = (lf - peak <= -drop) & (bound <= tail)
            if np.all(done):
                break
            step = np.where(done, step, 2.0 * step)
            edge = np.where(done, edge, mode + direction * step)
        else:  # pragma: no cover - only for pathological inputs
            raise ValueError("could not bracket the integrand tails")
        bounds.append(edge)
    return bounds[0], bounds[1], mode


def panel_rule(lo, hi, panels, order):
    """Composite Gauss-Legendre nodes/weights on rows [lo_i, hi_i].

    Returns arrays of shape ``lo.shape + (panels * order,)``.
    """
    x, w = gauss_legendre(order)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    h = (hi - lo) / panels
    starts = lo[..., None] + h[..., None] * np.arange(panels)
    nodes = starts[..., None] + 0.5 * h[..., None, None] * (x + 1.0)
    weights = 0.5 * h[..., None, None] * np.broadcast_to(w, nodes.shape)
    shape = lo.shape + (panels * order,)
    return nodes.reshape(shape), weights.reshape(shape)


def integrate_rows(fn, lo, hi, tol, order=10, panels=8, max_panels=4096, rel=False):
    """Integrate ``fn(t)`` over each row interval with panel doubling.

    ``fn`` receives node arrays of shape ``lo.shape + (K,)`` and returns
    values of the same shape.  Stops when successive estimates differ by
    at most ``tol`` (absolute, or relative to the estimate if ``rel``).
    """
    nodes, weights = panel_rule(lo, hi, panels, order)
    prev = np.sum(fn(nodes) * weights, axis=-1)
    err = np.inf
    while panels < max_panels:
        panels *= 2
        nodes, weights = panel_rule(lo, hi, panels, order)
        cur = np.sum(fn(nodes) * weights, axis=-1)
        diff = np.abs(cur - prev)
        scale = np.abs(cur) if rel else 1.0
        err = float(np.max(diff / np.where(scale > 0, scale, 1.0))) if diff.size else 0.0
        prev = cur
        if err <= tol:
            return cur, err
    raise QuadratureError("panel quadrature did not converge", err)


class CumulativeRule:
    """Running integral of exp(log_f(t)) over [lo, hi] with a fixed panel grid.

    ``__call__(t)`` returns the integral from ``lo`` to ``min(t, hi)`` for an
    array of upper limits, using the stored panel sums plus one partial
    Gauss-Legendre panel per query point.
    """

    def __init__(self, log_f, lo, hi, panels, order=12):
        self.log_f = log_f
        self.lo = float(lo)
        self.hi = float(hi)
        self.panels = panels
        self.order = order
        self.edges = np.linspace(self.lo, self.hi, panels + 1)
        nodes, weights = panel_rule(self.edges[:-1], self.edges[1:], 1, order)
        sums = np.sum(np.exp(log_f(nodes)) * weights, axis=-1)
        self.cumulative = np.concatenate([[0.0], np.cumsum(sums)])

    @property
    def total(self):
        return float(self.cumulative[-1])

    def __call__(self, t):
        t = np.clip(np.asarray(t, dtype=float), self.lo, self.hi)
        j = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, self.panels - 1)
        start = self.edges[j]
        nodes, weights = panel_rule(start, t, 1, self.order)
        partial = np.sum(np.exp(self.log_f(nodes)) * weights, axis=-1)
        return self.cumulative[j] + partial
