"""Univariate piecewise-affine approximators and their exact ReLU form.

Every scheme returns a :class:`PiecewiseAffine` (or, for step activations, a
:class:`UnivariateFragment`) whose piece count follows a closed-form ceiling
that is carried alongside the weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate

Univariate = Callable[[np.ndarray], np.ndarray]

BISECTION_WIDTH = 1e-14
MONOTONE_SAMPLES = 1000
CURVATURE_SAMPLES = 10_000
CURVATURE_INFLATION = 1.1


@dataclass(frozen=True)
class PiecewiseAffine:
    """Continuous piecewise-affine function on the real line.

    Parameters
    ----------
    knots : array_like
        Strictly increasing breakpoints ``x_1 < ... < x_{m-1}``.
    values : array_like
        Function values at the knots.
    left_slope, right_slope : float
        Slopes of the unbounded end pieces.
    domain : tuple of float
        Interval where the function is used.  Pieces lying entirely outside
        the domain are not counted and get no neuron.
    """

    knots: np.ndarray
    values: np.ndarray
    left_slope: float = 0.0
    right_slope: float = 0.0
    domain: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        if knots.size == 0:
            raise ValueError("need at least one knot; use PiecewiseAffine.affine for lines")
        if knots.shape != values.shape:
            raise ValueError("knots and values must have the same length")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError("domain must be a non-empty interval")
        knots.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "domain", (float(lo), float(hi)))

    @classmethod
    def affine(cls, slope: float, intercept: float, domain=(-math.inf, math.inf)) -> "PiecewiseAffine":
        """A single line, stored with a pseudo-knot at the left end of the domain (or 0)."""
        ref = domain[0] if math.isfinite(domain[0]) else 0.0
        return cls([ref], [intercept + slope * ref], slope, slope, domain)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k, v = self.knots, self.values
        out = np.interp(x, k, v)
        out = np.where(x < k[0], v[0] + self.left_slope * (x - k[0]), out)
        out = np.where(x > k[-1], v[-1] + self.right_slope * (x - k[-1]), out)
        return float(out) if out.ndim == 0 else out

    @property
    def slopes(self) -> np.ndarray:
        """Slopes of all pieces, left to right (length ``len(knots) + 1``)."""
        inner = np.diff(self.values) / np.diff(self.knots)
        return np.concatenate([[self.left_slope], inner, [self.right_slope]])

    @property
    def active_knots(self) -> np.ndarray:
        """Knots strictly inside the domain."""
        lo, hi = self.domain
        return self.knots[(self.knots > lo) & (self.knots < hi)]

    @property
    def pieces(self) -> int:
        """Number of pieces meeting the interior of the domain."""
        return len(self.active_knots) + 1

    def with_domain(self, lo: float, hi: float) -> "PiecewiseAffine":
        return replace(self, domain=(lo, hi))

    def with_slopes(self, left: float | None = None, right: float | None = None) -> "PiecewiseAffine":
        return replace(
            self,
            left_slope=self.left_slope if left is None else left,
            right_slope=self.right_slope if right is None else right,
        )


@dataclass(frozen=True)
class UnivariateFragment:
    """One hidden layer acting on a scalar: ``x -> out_b + sum_k out_w[k] act(in_w[k] x + in_b[k])``."""

    in_w: np.ndarray
    in_b: np.ndarray
    out_w: np.ndarray
    out_b: float
    activation: str = "relu"
    act_params: dict = field(default_factory=dict)
    pieces: int | None = None

    @property
    def neurons(self) -> int:
        return len(self.in_w)

    def __call__(self, x):
        from korobov.network import activation_fn

        x = np.asarray(x, dtype=float)
        act = activation_fn(self.activation, self.act_params)
        z = np.multiply.outer(x, self.in_w) + self.in_b
        out = act(z) @ self.out_w + self.out_b
        return float(out) if np.ndim(out) == 0 else out


def relu_weights(p: PiecewiseAffine, method: str = "recursion") -> tuple[float, np.ndarray]:
    """Weights ``w_0, w_1, ..., w_{m-1}`` of ``f(x_1) + sum w_k (x - x_k)_+ - w_0 (x_1 - x)_+``.

    ``method="recursion"`` follows the interpolation recursion, which makes
    the network agree with ``p`` at every knot and carries running sums so the
    cost is linear.  ``method="slopes"`` takes successive slope differences.
    """
    slopes = p.slopes
    if method == "slopes":
        # the left neuron is inactive right of x_1, so w_1 is the first inner slope
        w = np.diff(slopes)
        w[0] = slopes[1]
        return float(slopes[0]), w
    if method != "recursion":
        raise ValueError(f"unknown method {method!r}")
    x, f = p.knots, p.values
    m1 = len(x)
    w = np.empty(m1)
    sum_w = 0.0
    sum_wx = 0.0
    for k in range(m1 - 1):
        # f(x_{k+1}) - f(x_1) - sum_{i<k} w_i (x_{k+1} - x_i), over (x_{k+1} - x_k)
        acc = f[k + 1] - f[0] - (x[k + 1] * sum_w - sum_wx)
        w[k] = acc / (x[k + 1] - x[k])
        sum_w += w[k]
        sum_wx += w[k] * x[k]
    w[m1 - 1] = p.right_slope - sum_w
    return float(p.left_slope), w


def pwl_to_relu(p: PiecewiseAffine, method: str = "recursion") -> UnivariateFragment:
    """Exact one-layer ReLU network for ``p`` on its domain.

    One neuron per knot inside the domain plus one for the left end piece,
    so the neuron count equals ``p.pieces``.  Neurons that vanish on the whole
    domain are dropped; a flat left piece keeps a zero-weight neuron so the
    count stays tied to the piece structure.
    """
    lo, hi = p.domain
    x = p.knots
    w0, w = relu_weights(p, method)
    if p.pieces == 1:
        inside = np.searchsorted(x, lo, side="right") if math.isfinite(lo) else 0
        if p.slopes[inside] == 0.0:
            ref = lo if math.isfinite(lo) else (hi if math.isfinite(hi) else 0.0)
            return UnivariateFragment(np.zeros(0), np.zeros(0), np.zeros(0), float(p(ref)), "relu", {}, 1)
    in_w, in_b, out_w = [], [], []
    if x[0] > lo:
        in_w.append(-1.0)
        in_b.append(x[0])
        out_w.append(-w0)
    keep = x < hi
    if x[0] <= lo:
        # knots left of the domain merge into the first in-domain piece
        keep &= x > lo
        below = x <= lo
        # right of x_k the slope is w_1 + ... + w_k; w_0 only acts left of x_1
        slope_in = float(np.sum(w[below]))
        base = float(p(lo)) if math.isfinite(lo) else float(p.values[0])
        ref = lo if math.isfinite(lo) else x[0]
        in_w.append(1.0)
        in_b.append(-ref)
        out_w.append(slope_in)
        out_b = base
    else:
        out_b = float(p.values[0])
    in_w.extend(np.ones(int(keep.sum())))
    in_b.extend(-x[keep])
    out_w.extend(w[keep])
    return UnivariateFragment(
        np.asarray(in_w, dtype=float),
        np.asarray(in_b, dtype=float),
        np.asarray(out_w, dtype=float),
        out_b,
        "relu",
        {},
        p.pieces,
    )


def _check_monotone(f: Univariate, a: float, b: float) -> None:
    xs = np.linspace(a, b, MONOTONE_SAMPLES)
    ys = np.asarray(f(xs), dtype=float)
    scale = max(1.0, float(np.max(np.abs(ys))))
    if np.any(np.diff(ys) < -1e-12 * scale):
        raise ValueError("f is not non-decreasing on the sampled points")


def _sup_below(f: Univariate, a: float, b: float, levels: np.ndarray) -> np.ndarray:
    """``sup{x in [a, b] : f(x) <= y}`` for every ``y`` in ``levels``, by vectorised bisection."""
    levels = np.asarray(levels, dtype=float)
    lo = np.full(levels.shape, a)
    hi = np.full(levels.shape, b)
    fa = float(f(np.array([a]))[0])
    fb = float(f(np.array([b]))[0])
    done_hi = fb <= levels
    done_lo = fa > levels
    width = max(BISECTION_WIDTH, 4 * np.spacing(max(abs(a), abs(b), 1.0)))
    while np.any(hi - lo > width):
        mid = 0.5 * (lo + hi)
        below = np.asarray(f(mid), dtype=float) <= levels
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = lo
    out = np.where(done_hi, b, out)
    out = np.where(done_lo, a, out)
    return out


def _level_knots(f, interval, yrange, eps, inverse):
    a, b = map(float, interval)
    c, d = map(float, yrange)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if d < c:
        raise ValueError("range must satisfy c <= d")
    _check_monotone(f, a, b)
    m = int(math.floor((d - c) / eps))
    y = c + eps * np.arange(1, m + 1)
    if inverse is not None:
        x = np.clip(np.asarray(inverse(y), dtype=float), a, b)
    else:
        x = _sup_below(f, a, b, y)
    return a, b, c, d, m, x, y


def approx_increasing(
    f: Univariate,
    interval: tuple[float, float],
    yrange: tuple[float, float],
    eps: float,
    inverse: Univariate | None = None,
) -> PiecewiseAffine:
    """Piecewise-affine approximation of a right-continuous increasing function.

    The range is cut into levels ``y_k = c + k eps`` and the knots are
    ``x_k = sup{x : f(x) <= y_k}``; the approximant interpolates ``(x_k, y_k)``
    and is constant outside ``[x_1, x_m]``.  At most ``ceil((d - c) / eps)``
    pieces meet the interval.

    Parameters
    ----------
    f : callable
        Vectorised increasing function on ``interval``.
    interval : tuple of float
        Finite interval ``[a, b]``.
    yrange : tuple of float
        Bounds ``[c, d]`` on the values of ``f``.
    eps : float
        Sup-norm tolerance.
    inverse : callable, optional
        Analytic generalised inverse; replaces the bisection when given.
    """
    a, b, c, d, m, x, y = _level_knots(f, interval, yrange, eps, inverse)
    if m == 0:
        return PiecewiseAffine([a], [0.5 * (c + d)], 0.0, 0.0, (a, b))
    # coincident knots (jumps of f) keep the highest level
    keep = np.append(np.diff(x) > 0, True)
    x, y = x[keep], y[keep]
    return PiecewiseAffine(x, y, 0.0, 0.0, (a, b))


def _estimate_curvature(f2: Univariate, a: float, b: float) -> float:
    xs = np.linspace(a, b, CURVATURE_SAMPLES)
    return CURVATURE_INFLATION * float(np.max(np.abs(f2(xs))))


def approx_c2_uniform(
    f: Univariate,
    interval: tuple[float, float],
    eps: float,
    f2: Univariate | None = None,
    f2_bound: float | None = None,
) -> PiecewiseAffine:
    """Chord interpolation of a C^2 function on a regular subdivision.

    The step is ``sqrt(2 eps / B)`` with ``B`` a bound on ``|f''|``, giving
    ``ceil((b - a) sqrt(B) / sqrt(2 eps))`` pieces (one piece when ``B = 0``).
    ``B`` is ``f2_bound`` when given, else estimated from ``f2`` on 10^4
    samples and inflated by 10%.  End pieces extend linearly.
    """
    a, b = map(float, interval)
    if not b > a:
        raise ValueError("interval must have b > a")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if f2_bound is None:
        if f2 is None:
            raise ValueError("supply f2 or f2_bound")
        f2_bound = _estimate_curvature(f2, a, b)
    pieces = max(1, math.ceil((b - a) * math.sqrt(f2_bound) / math.sqrt(2 * eps)))
    nodes = np.linspace(a, b, pieces + 1)
    return _chord(f, nodes, (a, b))


def _chord(f: Univariate, nodes: np.ndarray, domain) -> PiecewiseAffine:
    vals = np.asarray(f(nodes), dtype=float)
    left = (vals[1] - vals[0]) / (nodes[1] - nodes[0])
    right = (vals[-1] - vals[-2]) / (nodes[-1] - nodes[-2])
    return PiecewiseAffine(nodes, vals, left, right, domain)


@dataclass(frozen=True)
class RiemannPartition:
    """Partition used by :func:`approx_c2_riemann` and its piece-count bound."""

    cells: int
    upper_sum: float
    integral: float
    bound: float


def approx_c2_riemann(
    f: Univariate,
    interval: tuple[float, float],
    eps: float,
    mu: float,
    f2: Univariate,
    max_cells: int = 4096,
) -> tuple[PiecewiseAffine, RiemannPartition]:
    """Chord interpolation adapted to the local size of ``f''``.

    ``[a, b]`` is split into ``K`` equal cells (``K`` doubled until the upper
    Riemann sum of ``sqrt|f''|`` is within ``1 + mu/2`` of its integral), and
    each cell gets a regular subdivision with its own curvature bound.  The
    piece count is at most ``R / sqrt(2 eps) + K``.
    """
    a, b = map(float, interval)
    if not mu > 0:
        raise ValueError("mu must be positive")
    root = lambda t: np.sqrt(np.abs(f2(np.asarray(t, dtype=float))))
    integral = float(integrate.quad(root, a, b, limit=200)[0])
    k = 1
    while True:
        edges = np.linspace(a, b, k + 1)
        sups = np.array(
            [float(np.max(root(np.linspace(lo, hi, 65)))) for lo, hi in zip(edges[:-1], edges[1:])]
        )
        upper = float(np.sum(sups * np.diff(edges)))
        if upper <= (1 + mu / 2) * integral or k >= max_cells:
            break
        k *= 2
    nodes = [a]
    for lo, hi, s in zip(edges[:-1], edges[1:], sups):
        n = max(1, math.ceil((hi - lo) * s / math.sqrt(2 * eps)))
        nodes.extend(np.linspace(lo, hi, n + 1)[1:])
    poly = _chord(f, np.array(nodes), (a, b))
    part = RiemannPartition(k, upper, integral, upper / math.sqrt(2 * eps) + k)
    return poly, part


def log_step(eps: float) -> float:
    """Geometric ratio exponent ``log(1 + sqrt(2 eps))`` for the truncated logarithm."""
    return math.log1p(math.sqrt(2 * eps))


def approx_log_truncated(delta: float, eps: float, pieces: int | None = None) -> PiecewiseAffine:
    """Approximation of ``max(log x, log delta)`` on ``[0, 1]``.

    Nodes ``x_k = delta e^{k t}`` with ``t = log(1 + sqrt(2 eps))`` for
    ``k = 0..m``, ``m = floor(log(1/delta) / t)``, closed by the node 1; the
    function is constant ``log delta`` on ``[0, delta]``.  With ``pieces``
    given, exactly that many geometric pieces cover ``[delta, 1]`` instead,
    provided they still meet ``eps``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not eps > 0:
        raise ValueError("eps must be positive")
    span = math.log(1 / delta)
    if pieces is None:
        t = log_step(eps)
        m = int(math.floor(span / t))
        nodes = delta * np.exp(t * np.arange(m + 1))
        if 1.0 - nodes[-1] > 1e-15:
            nodes = np.append(nodes, 1.0)
        else:
            nodes[-1] = 1.0
    else:
        t = span / pieces
        if (math.expm1(t)) ** 2 / 2 > eps:
            raise ValueError(f"{pieces} geometric pieces cannot meet eps={eps}")
        nodes = delta * np.exp(t * np.arange(pieces + 1))
        nodes[-1] = 1.0
    nodes[0] = delta
    vals = np.log(nodes)
    vals[0] = math.log(delta)
    vals[-1] = 0.0
    right = (vals[-1] - vals[-2]) / (nodes[-1] - nodes[-2])
    return PiecewiseAffine(nodes, vals, 0.0, right, (0.0, 1.0))


def heaviside_levels(
    f: Univariate,
    interval: tuple[float, float],
    yrange: tuple[float, float],
    eps: float,
    inverse: Univariate | None = None,
) -> tuple[float, np.ndarray]:
    """Bias ``y_1`` and thresholds ``(x_i + x_{i+1}) / 2`` of the step-sum approximant."""
    a, b, c, d, m, x, y = _level_knots(f, interval, yrange, eps, inverse)
    if m == 0:
        return 0.5 * (c + d), np.zeros(0)
    return float(y[0]), 0.5 * (x[:-1] + x[1:])


def approx_increasing_heaviside(
    f: Univariate,
    interval: tuple[float, float],
    yrange: tuple[float, float],
    eps: float,
    activation: str = "heaviside",
    inverse: Univariate | None = None,
) -> UnivariateFragment:
    """Step-sum network ``y_1 + eps sum_i act(x - (x_i + x_{i+1})/2)`` for an increasing ``f``.

    With the Heaviside activation the error is at most ``eps`` away from the
    jumps.  Other sigmoid-like activations are rescaled so each unit is within
    ``1/m`` of a step outside a quarter of the smallest threshold gap, which
    keeps the total error below ``2 eps``.
    """
    from korobov.network import scale_sigmoid_like

    bias, thresholds = heaviside_levels(f, interval, yrange, eps, inverse)
    n = len(thresholds)
    if n == 0:
        return UnivariateFragment(np.zeros(0), np.zeros(0), np.zeros(0), bias, "heaviside", {}, 1)
    name, params = "heaviside", {}
    if activation != "heaviside":
        gaps = np.diff(thresholds)
        width = float(gaps.min()) / 4 if len(gaps) else 1.0
        width = width if width > 0 else BISECTION_WIDTH
        scaled = scale_sigmoid_like(activation, width, 1.0 / (n + 1))
        name, params = scaled.name, scaled.params
    return UnivariateFragment(
        np.ones(n), -thresholds, np.full(n, eps), bias, name, params, n + 1
    )
