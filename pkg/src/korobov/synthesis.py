"""Compilers from sparse-grid interpolants to explicit networks.

* :func:`synth_product_shallow` - two hidden layers computing ``x_1 ... x_d``
  as ``exp(sum log x_j)``.
* :func:`synth_korobov_shallow` - two hidden ReLU layers: the first holds
  truncated ``log phi_{l_j, i_j}`` blocks, the second one exponential block per
  sparse-grid basis function, the output layer the surpluses.
* :func:`synth_korobov_shallow_general` - the same network for ReLU-like
  (rescaled) and sigmoid-like (step-sum) activations.
* :func:`synth_korobov_deep` - exact hat functions on the first layer and a
  binary tree of product gadgets per basis function.

``plan_*`` functions return the layer sizes without building anything.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import sparse

from korobov.hierarchy import (
    ErrorBudget,
    LevelIndex,
    SparseGridInterpolant,
    count_indices,
    error_bound,
    hierarchize_hat,
    select_level,
)
from korobov.network import (
    RELU_LIKE_SLOPE,
    SIGMOID_LIMITS,
    Factored,
    Layer,
    NetSpec,
    scale_relu_like,
    scale_sigmoid_like,
    select_lambda,
    substitute_activation,
    substitution_error_bound,
    tree_layers,
    tree_layout,
)
from korobov.univariate import (
    PiecewiseAffine,
    UnivariateFragment,
    approx_c2_uniform,
    approx_log_truncated,
    heaviside_levels,
    pwl_to_relu,
)

EPS_MAX = 0.25
DENSE_LAYER_LIMIT = 2_000_000


class Target(Protocol):
    dimension: int
    seminorm: float

    def __call__(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SynthesisReport:
    """Network plus the bookkeeping needed to check it against the construction's formulas.

    ``counts`` holds the implemented layer sizes, ``predicted_counts`` the
    closed forms they should match (``*_bound`` entries are upper bounds,
    ``*_asymptotic`` entries are reported for comparison only).
    """

    net: NetSpec
    n_used: int | None
    counts: dict
    predicted_counts: dict
    target_eps: float
    eps_tilde: float | None
    details: dict = field(default_factory=dict)
    interpolant: SparseGridInterpolant | None = None

    def to_dict(self) -> dict:
        return {
            "n_used": self.n_used,
            "counts": self.counts,
            "predicted_counts": self.predicted_counts,
            "target_eps": self.target_eps,
            "eps_tilde": self.eps_tilde,
            "details": {k: v for k, v in self.details.items() if _jsonable(v)},
            "meta": {
                "neurons": self.net.neuron_count(),
                "trainable": self.net.trainable_count(),
                "depth": self.net.depth,
            },
        }


def _jsonable(v) -> bool:
    return isinstance(v, (int, float, str, bool, type(None), list, dict, tuple))


def _check_eps(eps: float) -> None:
    if not 0 < eps < EPS_MAX:
        raise ValueError(f"eps must lie in (0, {EPS_MAX}), got {eps}")


def _counts(net: NetSpec, trainable: int) -> dict:
    widths = net.widths()
    out = {f"layer{k + 1}": w for k, w in enumerate(widths)}
    out["total"] = net.neuron_count()
    out["trainable"] = trainable
    return out


def _stack_fragments(frags: list[UnivariateFragment], coords: list[int], d: int):
    """Layer-1 weights for univariate blocks, and the block read-out matrix ``C`` with biases."""
    sizes = [f.neurons for f in frags]
    total = int(sum(sizes))
    rows = np.arange(total)
    cols = np.repeat(np.asarray(coords, dtype=np.int64), sizes)
    in_w = np.concatenate([f.in_w for f in frags]) if total else np.zeros(0)
    in_b = np.concatenate([f.in_b for f in frags]) if total else np.zeros(0)
    w = sparse.csr_matrix((in_w, (rows, cols)), shape=(total, d))
    if total * d <= DENSE_LAYER_LIMIT:
        w = w.toarray()
    block_rows = np.repeat(np.arange(len(frags)), sizes)
    out_w = np.concatenate([f.out_w for f in frags]) if total else np.zeros(0)
    C = sparse.csr_matrix((out_w, (block_rows, rows)), shape=(len(frags), total))
    c0 = np.array([f.out_b for f in frags])
    return w, in_b, C, c0


def _exp_layer(frag: UnivariateFragment, selector: sparse.csr_matrix, C, c0):
    """Second layer: one copy of the univariate fragment per row of ``selector``.

    The copy for row ``u`` reads ``sum_j block_j`` where ``selector[u]`` picks
    the blocks; the weight matrix is kept as ``E @ selector @ C``.
    """
    U = selector.shape[0]
    k = frag.neurons
    rows = np.arange(U * k)
    cols = np.repeat(np.arange(U), k)
    E = sparse.csr_matrix((np.tile(frag.in_w, U), (rows, cols)), shape=(U * k, U))
    inner = np.asarray(selector @ c0).reshape(-1)
    b = np.repeat(inner, k) * np.tile(frag.in_w, U) + np.tile(frag.in_b, U)
    return Factored((E, sparse.csr_matrix(selector), C)), b


# -- product network ---------------------------------------------------------


def product_counts(d: int, e: float) -> dict:
    """Block sizes ``1 + ceil(sqrt(d/e) log(1/e))`` (log) and ``1 + ceil(log(1/e)/sqrt(2e))`` (exp)."""
    log_pieces = math.ceil(math.sqrt(d / e) * math.log(1 / e))
    exp_pieces = math.ceil(math.log(1 / e) / math.sqrt(2 * e))
    return {"log_block": 1 + log_pieces, "exp_block": 1 + exp_pieces,
            "layer1": d * (1 + log_pieces), "layer2": 1 + exp_pieces}


def plan_product_shallow(d: int, eps: float, family: str = "relu") -> dict:
    """Layer sizes of :func:`synth_product_shallow` without building it."""
    _check_eps(eps)
    if d < 2:
        raise ValueError("product network needs d >= 2")
    kind = activation_family(family)
    if kind == "sigmoid":
        e = eps / 3
        m_log = int(math.floor(math.log(1 / e) / (e / (2 * d))))
        m_exp = int(math.floor((1 - e) / (e / 2)))
        layer1, layer2 = d * max(m_log - 1, 0), max(m_exp - 1, 0)
    else:
        e = eps / 3 if kind == "relu" else 0.9 * eps / 3
        c = product_counts(d, e)
        layer1, layer2 = c["layer1"], c["layer2"]
    return {"layer1": layer1, "layer2": layer2, "total": layer1 + layer2, "internal_eps": e}


def activation_family(name: str) -> str:
    if name == "relu":
        return "relu"
    if name in RELU_LIKE_SLOPE:
        return "relu_like"
    if name in SIGMOID_LIMITS:
        return "sigmoid"
    raise ValueError(f"unsupported activation {name!r}")


def synth_product_shallow(d: int, eps: float, activation: str = "relu") -> NetSpec:
    """Two-hidden-layer network within ``eps`` of ``x_1 ... x_d`` on ``[0, 1]^d``.

    The construction is run at ``e = eps/3`` so that its worst-case ``3 e``
    error meets ``eps``.  Layer 1 holds ``d`` copies of a truncated-log block
    (error ``e/d``, truncated at ``log e``), layer 2 one exponential block
    (error ``e``, constant below ``log e``).
    """
    return synth_product_report(d, eps, activation).net


def synth_product_report(d: int, eps: float, activation: str = "relu") -> SynthesisReport:
    _check_eps(eps)
    if d < 2:
        raise ValueError("product network needs d >= 2")
    kind = activation_family(activation)
    if kind == "sigmoid":
        return _product_sigmoid(d, eps, activation)
    e = eps / 3 if kind == "relu" else 0.9 * eps / 3
    pred = product_counts(d, e)
    log_poly = approx_log_truncated(e, e / d, pieces=pred["log_block"] - 1)
    exp_poly = approx_c2_uniform(np.exp, (math.log(e), 0.0), e, f2_bound=1.0)
    exp_poly = exp_poly.with_slopes(left=0.0).with_domain(-math.inf, 0.0)
    log_frag = pwl_to_relu(log_poly)
    exp_frag = pwl_to_relu(exp_poly)
    w1, b1, C, c0 = _stack_fragments([log_frag] * d, list(range(d)), d)
    selector = sparse.csr_matrix(np.ones((1, d)))
    w2, b2 = _exp_layer(exp_frag, selector, C, c0)
    layers = (Layer(w1, b1, "relu"), Layer(w2.todense() if w2.shape[0] * w2.shape[1] <= DENSE_LAYER_LIMIT else w2, b2, "relu"))
    net = NetSpec(d, layers, exp_frag.out_w, exp_frag.out_b, 0)
    details = {"internal_eps": e, "log_block": log_frag.neurons, "exp_block": exp_frag.neurons}
    if kind == "relu_like":
        budget = eps - 3 * e
        gain = substitution_error_bound(net, 1.0)
        act = scale_relu_like(activation, budget / gain)
        net = substitute_activation(net, act)
        details.update({"M": act.params["M"], "eta": act.params["eta"],
                        "substitution_bound": act.params["eta"] * gain})
    counts = _counts(net, 0)
    predicted = {"layer1": pred["layer1"], "layer2": pred["layer2"],
                 "total": pred["layer1"] + pred["layer2"]}
    return SynthesisReport(net, None, counts, predicted, eps, None, details)


def _step_block(bias: float, thresholds: np.ndarray, step: float, signs=None) -> UnivariateFragment:
    n = len(thresholds)
    signs = np.ones(n) if signs is None else np.asarray(signs, dtype=float)
    return UnivariateFragment(np.ones(n), -np.asarray(thresholds, dtype=float), step * signs, bias,
                              "heaviside", {}, n + 1)


def _sigmoid_activation(name: str, frags: list[UnivariateFragment]) -> tuple[str, dict]:
    """One scaling for a whole layer of step blocks: tolerance from the widest block, width from the tightest gap."""
    if name == "heaviside":
        return "heaviside", {}
    gaps = []
    units = 1
    for f in frags:
        t = np.sort(-f.in_b)
        units = max(units, len(t))
        if len(t) > 1:
            gaps.append(float(np.min(np.diff(t))))
    delta = min(gaps) / 4 if gaps else 1.0
    delta = delta if delta > 0 else 1e-15
    act = scale_sigmoid_like(name, delta, 1.0 / (units + 1))
    return act.name, act.params


def _product_sigmoid(d: int, eps: float, activation: str) -> SynthesisReport:
    e = eps / 3
    # half budgets: a rescaled step sum is within twice its step size
    lb, lt = heaviside_levels(lambda x: np.log(np.maximum(x, e)), (0.0, 1.0), (math.log(e), 0.0),
                              e / (2 * d), inverse=lambda y: np.exp(y))
    eb, et = heaviside_levels(lambda x: np.exp(np.maximum(x, math.log(e))), (math.log(e), 0.0), (e, 1.0),
                              e / 2, inverse=lambda y: np.log(y))
    log_frag = _step_block(lb, lt, e / (2 * d))
    exp_frag = _step_block(eb, et, e / 2)
    w1, b1, C, c0 = _stack_fragments([log_frag] * d, list(range(d)), d)
    w2, b2 = _exp_layer(exp_frag, sparse.csr_matrix(np.ones((1, d))), C, c0)
    a1, p1 = _sigmoid_activation(activation, [log_frag])
    a2, p2 = _sigmoid_activation(activation, [exp_frag])
    net = NetSpec(d, (Layer(w1, b1, a1, p1), Layer(w2, b2, a2, p2)), exp_frag.out_w, exp_frag.out_b, 0)
    plan = plan_product_shallow(d, eps, activation)
    predicted = {"layer1_bound": math.ceil(2 * d * math.log(1 / e) * d / e),
                 "layer2_bound": math.ceil(2 / e), "layer1": plan["layer1"], "layer2": plan["layer2"]}
    return SynthesisReport(net, None, _counts(net, 0), predicted, eps, None, {"internal_eps": e})


# -- shallow Korobov network -------------------------------------------------


def korobov_eps_tilde(eps: float, seminorm: float) -> float:
    """Per-basis-function tolerance ``eps / (2 max(s, 1))``."""
    return eps / (2 * max(seminorm, 1.0))


def univariate_keys(d: int, n: int) -> list[tuple[int, int, int]]:
    """All ``(j, l, i)`` with ``1 <= l <= n`` and odd ``i``: ``d (2^n - 1)`` entries."""
    return [(j, l, i) for j in range(d) for l in range(1, n + 1) for i in range(1, 2**l, 2)]


def shallow_parameters(eps_tilde: float, d: int) -> dict:
    """Truncation ``tau``, geometric step ``eps0``, node count ``m`` and exp-block pieces."""
    tau = eps_tilde / 3
    eps0 = math.log1p(math.sqrt(2 * eps_tilde / (3 * d)))
    m = int(math.floor(math.log(3 / eps_tilde) / eps0))
    exp_pieces = math.ceil(math.log(1 / tau) / math.sqrt(2 * tau))
    return {"tau": tau, "eps0": eps0, "m": m, "log_block": 2 * m + 4, "exp_block": 1 + exp_pieces}


def log_hat_block(l: int, i: int, tau: float, eps0: float, m: int) -> PiecewiseAffine:
    """Approximation of ``max(log phi_{l,i}, log tau)`` on ``[0, 1]``.

    Nodes sit where the hat takes the values ``tau e^{k eps0}`` (``k = 0..m``)
    on its rising half, then the peak, then the mirror images on the falling
    half.  Constant ``log tau`` outside the outermost nodes.
    """
    t = tau * np.exp(eps0 * np.arange(m + 1))
    t = t[t < 1.0]
    h = 2.0**-l
    left = (i - 1 + t) * h
    right = (i + 1 - t[::-1]) * h
    knots = np.concatenate([left, [i * h], right])
    logs = np.log(t)
    values = np.concatenate([logs, [0.0], logs[::-1]])
    return PiecewiseAffine(knots, values, 0.0, 0.0, (0.0, 1.0))


def exp_block(tau: float) -> PiecewiseAffine:
    """Chord interpolant of ``exp`` on ``[log tau, 0]``, constant ``tau`` below."""
    poly = approx_c2_uniform(np.exp, (math.log(tau), 0.0), tau, f2_bound=1.0)
    return poly.with_slopes(left=0.0).with_domain(-math.inf, 0.0)


def _interpolant(f: Target, d: int, eps: float) -> tuple[SparseGridInterpolant, int]:
    if getattr(f, "dimension", d) != d:
        raise ValueError(f"target has dimension {f.dimension}, requested {d}")
    n = select_level(d, ErrorBudget(eps, f.seminorm))
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        g = hierarchize_hat(f, d, n)
    return g, n


def _selector(indices: list[LevelIndex], keys: list[tuple[int, int, int]]) -> sparse.csr_matrix:
    pos = {k: r for r, k in enumerate(keys)}
    rows, cols = [], []
    for u, li in enumerate(indices):
        for j, (l, i) in enumerate(zip(li.level, li.index)):
            rows.append(u)
            cols.append(pos[(j, l, i)])
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(indices), len(keys)))


def plan_korobov_shallow(d: int, seminorm: float, eps: float, family: str = "relu") -> dict:
    """Layer sizes of the shallow Korobov network without building it."""
    _check_eps(eps)
    n = select_level(d, ErrorBudget(eps, seminorm))
    U = count_indices(d, n)
    et = korobov_eps_tilde(eps, seminorm)
    blocks = d * (2**n - 1)
    kind = activation_family(family)
    if kind == "sigmoid":
        sp = sigmoid_parameters(et, d)
        b1, b2 = sp["log_block"], sp["exp_block"]
    else:
        sp = shallow_parameters(et, d)
        b1, b2 = sp["log_block"], sp["exp_block"]
    return {"n": n, "trainable": U, "eps_tilde": et, "log_block": b1, "exp_block": b2,
            "layer1": blocks * b1, "layer2": U * b2, "total": blocks * b1 + U * b2}


def shallow_predictions(d: int, n: int, eps_tilde: float, seminorm: float, eps: float, sigmoid: bool = False) -> dict:
    """Closed forms for the shallow network: exact block sizes, upper bounds, and asymptotic sizes."""
    U = count_indices(d, n)
    blocks = d * (2**n - 1)
    et = eps_tilde
    log_e = math.log(1 / eps)
    fact = math.factorial(d)
    if not sigmoid:
        exp_block = 1 + math.ceil(math.sqrt(3 / (2 * et)) * math.log(3 / et))
        return {
            "exp_block": exp_block,
            "layer2": U * exp_block,
            "trainable": U,
            "log_block_bound": 2 * math.sqrt(3 * d / et) * math.log(1 / et),
            "layer1_bound": 2 ** (n + 1) * d * math.sqrt(3 * d / et) * math.log(1 / et),
            "N1_asymptotic": 8 * math.sqrt(6) * d**2 / (8 ** (d / 2) * (2 * math.log(2)) ** ((d - 1) / 2) * math.sqrt(fact))
            * seminorm / eps * log_e ** ((d + 1) / 2),
            "N2_asymptotic": 4 * math.sqrt(3) * d**1.5 / (8 ** (d / 2) * (2 * math.log(2)) ** (3 * (d - 1) / 2) * fact**1.5)
            * seminorm / eps * log_e ** ((3 * d - 1) / 2),
        }
    return {
        "exp_block_bound": math.ceil(6 / et),
        "log_block_bound": 12 * d / et * math.log(3 / et),
        "layer1_bound": blocks * 12 * d / et * math.log(3 / et),
        "layer2_bound": U * math.ceil(6 / et),
        "trainable": U,
        "N1_asymptotic": 3 * 2**5 * d**2.5 / (8 ** (d / 2) * (2 * math.log(2)) ** ((d - 1) / 2) * math.sqrt(fact))
        * (seminorm / eps) ** 1.5 * log_e ** ((d + 1) / 2),
        "N2_asymptotic": 24 * d**1.5 / (8 ** (d / 2) * (2 * math.log(2)) ** (3 * (d - 1) / 2) * fact**1.5)
        * (seminorm / eps) ** 1.5 * log_e ** (3 * (d - 1) / 2),
    }


def _assemble_shallow(g: SparseGridInterpolant, d: int, n: int, log_frags, exp_frag, act1=("relu", {}), act2=("relu", {})):
    keys = univariate_keys(d, n)
    w1, b1, C, c0 = _stack_fragments(log_frags, [k[0] for k in keys], d)
    indices = sorted(g.surpluses, key=LevelIndex.sort_key)
    sel = _selector(indices, keys)
    w2, b2 = _exp_layer(exp_frag, sel, C, c0)
    v = np.array([g.surpluses[li] for li in indices])
    out_w = np.kron(v, exp_frag.out_w)
    out_b = float(v.sum() * exp_frag.out_b)
    layers = (Layer(w1, b1, act1[0], act1[1]), Layer(w2, b2, act2[0], act2[1]))
    return NetSpec(d, layers, out_w, out_b, len(indices)), indices


def synth_korobov_shallow(f: Target, d: int, eps: float) -> SynthesisReport:
    """Two-hidden-layer ReLU network within ``eps`` of ``f`` on ``[0, 1]^d``.

    ``n`` is the smallest level whose interpolation bound is ``eps/2``; the
    remaining ``eps/2`` covers the product blocks, each accurate to
    ``eps_tilde = eps / (2 max(s, 1))``.
    """
    _check_eps(eps)
    g, n = _interpolant(f, d, eps)
    et = korobov_eps_tilde(eps, f.seminorm)
    sp = shallow_parameters(et, d)
    keys = univariate_keys(d, n)
    frags = [pwl_to_relu(log_hat_block(l, i, sp["tau"], sp["eps0"], sp["m"])) for _, l, i in keys]
    exp_frag = pwl_to_relu(exp_block(sp["tau"]))
    net, indices = _assemble_shallow(g, d, n, frags, exp_frag)
    counts = _counts(net, len(indices))
    counts.update({"log_block": frags[0].neurons, "exp_block": exp_frag.neurons})
    predicted = shallow_predictions(d, n, et, f.seminorm, eps)
    details = dict(sp)
    details.update({
        "abs_sum": g.abs_sum(),
        "interpolation_bound": error_bound(d, n, f.seminorm),
        "certified_error": error_bound(d, n, f.seminorm) + g.abs_sum() * et,
        "univariate_blocks": len(keys),
    })
    return SynthesisReport(net, n, counts, predicted, eps, et, details, g)


def sigmoid_parameters(eps_tilde: float, d: int) -> dict:
    """Step counts of the sigmoid-like shallow network (half budgets, see :func:`synth_korobov_shallow_general`)."""
    tau = eps_tilde / 3
    step1 = eps_tilde / (6 * d)
    step2 = eps_tilde / 6
    m1 = int(math.floor(math.log(1 / tau) / step1))
    m2 = int(math.floor((1 - tau) / step2))
    return {"tau": tau, "step1": step1, "step2": step2,
            "log_block": 2 * max(m1 - 1, 0), "exp_block": max(m2 - 1, 0)}


def _sigmoid_blocks(keys, tau, step1, step2):
    frags = []
    span = (math.log(tau), 0.0)
    for _, l, i in keys:
        h = 2.0**-l
        bias, th = heaviside_levels(
            lambda x: np.log(np.clip((x / h) - (i - 1), tau, 1.0)),
            ((i - 1) * h, i * h), span, step1,
            inverse=lambda y: (i - 1 + np.exp(y)) * h,
        )
        mirror = 2 * i * h - th[::-1]
        thresholds = np.concatenate([th, mirror])
        signs = np.concatenate([np.ones(len(th)), -np.ones(len(th))])
        frags.append(_step_block(bias, thresholds, step1, signs))
    eb, et_ = heaviside_levels(lambda x: np.exp(np.maximum(x, math.log(tau))), (math.log(tau), 0.0),
                               (tau, 1.0), step2, inverse=lambda y: np.log(y))
    return frags, _step_block(eb, et_, step2)


def synth_korobov_shallow_general(f: Target, d: int, eps: float, activation: str = "softplus") -> SynthesisReport:
    """Shallow Korobov network for a ReLU-like or sigmoid-like activation.

    ReLU-like: the ReLU network with every unit replaced by
    ``sigma(M z)/(M b)``; ``M`` keeps the propagated substitution error within
    ``min(eps/10, eps - certified ReLU error)``.

    Sigmoid-like: both hidden layers are step sums.  Steps are taken at half
    the tolerance of the ReLU blocks (``eps_tilde/(6d)`` and ``eps_tilde/6``)
    because a rescaled step sum is only within twice its step size.
    """
    kind = activation_family(activation)
    if kind == "relu":
        return synth_korobov_shallow(f, d, eps)
    if kind == "relu_like":
        base = synth_korobov_shallow(f, d, eps)
        certified = base.details["certified_error"]
        budget = min(0.1 * eps, eps - certified)
        if budget <= 0:
            raise ValueError("no error budget left for the activation substitution")
        gain = substitution_error_bound(base.net, 1.0)
        act = scale_relu_like(activation, budget / gain)
        net = substitute_activation(base.net, act)
        details = dict(base.details)
        details.update({"M": act.params["M"], "eta": act.params["eta"],
                        "substitution_bound": act.params["eta"] * gain, "substitution_budget": budget})
        return SynthesisReport(net, base.n_used, base.counts, base.predicted_counts, eps,
                               base.eps_tilde, details, base.interpolant)
    _check_eps(eps)
    g, n = _interpolant(f, d, eps)
    et = korobov_eps_tilde(eps, f.seminorm)
    sp = sigmoid_parameters(et, d)
    keys = univariate_keys(d, n)
    frags, exp_frag = _sigmoid_blocks(keys, sp["tau"], sp["step1"], sp["step2"])
    act1 = _sigmoid_activation(activation, frags)
    act2 = _sigmoid_activation(activation, [exp_frag])
    net, indices = _assemble_shallow(g, d, n, frags, exp_frag, act1, act2)
    counts = _counts(net, len(indices))
    counts.update({"log_block": frags[0].neurons, "exp_block": exp_frag.neurons})
    predicted = shallow_predictions(d, n, et, f.seminorm, eps, sigmoid=True)
    details = dict(sp)
    details.update({"abs_sum": g.abs_sum(), "interpolation_bound": error_bound(d, n, f.seminorm)})
    if act1[1]:
        details.update({"M1": act1[1]["M"], "M2": act2[1]["M"]})
    return SynthesisReport(net, n, counts, predicted, eps, et, details, g)


# -- deep Korobov network ----------------------------------------------------


def hat_block(l: int, i: int) -> PiecewiseAffine:
    h = 2.0**-l
    return PiecewiseAffine([(i - 1) * h, i * h, (i + 1) * h], [0.0, 1.0, 0.0], 0.0, 0.0)


def tree_widths(d: int) -> list[int]:
    return [4 * len(pairs) + len(odd) for pairs, odd in tree_layout(d).levels]


def plan_korobov_deep(d: int, seminorm: float, eps: float) -> dict:
    """Layer sizes of the deep Korobov network without building it."""
    _check_eps(eps)
    if d < 2:
        raise ValueError("the deep construction needs d >= 2")
    n = select_level(d, ErrorBudget(eps, seminorm))
    U = count_indices(d, n)
    first = 4 * d * (2**n - 1)
    tree = [U * w for w in tree_widths(d)]
    return {"n": n, "trainable": U, "layer1": first, "tree_layers": tree,
            "total": first + sum(tree), "depth": 1 + len(tree)}


def synth_korobov_deep(f: Target, d: int, eps: float, sigma: str = "softplus") -> SynthesisReport:
    """Deep network: exact hats (4 ReLU units each), then one product tree per basis function.

    Trees have depth ``ceil(log2 d)``; ``lambda`` is chosen so that each
    tree's product error is at most ``(eps/2) / sum |v|``.
    """
    _check_eps(eps)
    if d < 2:
        raise ValueError("the deep construction needs d >= 2")
    g, n = _interpolant(f, d, eps)
    keys = univariate_keys(d, n)
    frags = [pwl_to_relu(hat_block(l, i)) for _, l, i in keys]
    w1, b1, H, h0 = _stack_fragments(frags, [k[0] for k in keys], d)
    indices = sorted(g.surpluses, key=LevelIndex.sort_key)
    # leaf rows: leaf j of basis u is block (j, l_j, i_j)
    pos = {k: r for r, k in enumerate(keys)}
    leaf_cols = [pos[(j, l, i)] for li in indices for j, (l, i) in enumerate(zip(li.level, li.index))]
    Leaf = sparse.csr_matrix((np.ones(len(leaf_cols)), (np.arange(len(leaf_cols)), leaf_cols)),
                             shape=(len(leaf_cols), len(keys)))
    abs_sum = g.abs_sum()
    tree_tol = (eps / 2) / abs_sum if abs_sum > 0 else eps / 2
    lam = select_lambda(sigma, tree_tol, d)
    blocks, tree_out, tree_b = tree_layers(d, sigma, lam, np.eye(d), np.zeros(d))
    U = len(indices)
    eye = sparse.identity(U, format="csr")
    layers = [Layer(w1, b1, "relu")]
    leaf_bias = np.asarray(Leaf @ h0).reshape(-1)
    for k, (w, b, ids) in enumerate(blocks):
        big = sparse.kron(eye, sparse.csr_matrix(w), format="csr")
        width = w.shape[0]
        if k == 0:
            weight = Factored((big, Leaf, H))
            bias = np.tile(b, U) + np.asarray(big @ leaf_bias).reshape(-1)
        else:
            weight = big
            bias = np.tile(b, U)
        params = {}
        if ids:
            params["identity_units"] = [u * width + t for u in range(U) for t in ids]
        layers.append(Layer(weight, bias, sigma, params))
    v = np.array([g.surpluses[li] for li in indices])
    out_w = np.kron(v, tree_out)
    out_b = float(v.sum() * tree_b)
    net = NetSpec(d, tuple(layers), out_w, out_b, U)
    counts = _counts(net, U)
    predicted = {
        "depth": math.ceil(math.log2(d)) + 1,
        "layer1_bound": d * 2 ** (n + 2),
        "tree_bound": 8 * d * U,
        "total_bound": d * 2 ** (n + 2) + 8 * d * U,
        "trainable": U,
    }
    details = {"lambda": lam, "tree_tolerance": tree_tol, "abs_sum": abs_sum,
               "interpolation_bound": error_bound(d, n, f.seminorm)}
    return SynthesisReport(net, n, counts, predicted, eps, None, details, g)
