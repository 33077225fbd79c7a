"""Layered feed-forward network representation, evaluator and activation library.

A :class:`NetSpec` is a stack of hidden layers followed by one linear output
neuron.  Layer weights may be dense arrays, scipy sparse matrices, or a
:class:`Factored` product of such matrices, which keeps very wide synthesised
networks cheap to store and evaluate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse, special

# limits (a, b) at -inf and +inf of the bounded activations
SIGMOID_LIMITS = {"heaviside": (0.0, 1.0), "logistic": (0.0, 1.0), "tanh": (-1.0, 1.0)}
# asymptotic slope b at +inf of the ReLU-like activations
RELU_LIKE_SLOPE = {"relu": 1.0, "softplus": 1.0, "elu": 1.0}
# sigma''(0) of the smooth activations usable in the product gadget
SECOND_DERIVATIVE_AT_0 = {"softplus": 0.25, "silu": 0.5, "logistic": 0.0, "tanh": 0.0}

DENSE_JSON_LIMIT = 1_000_000
EVAL_BUDGET = 2**20
SEARCH_LIMIT = 1e9


def _heaviside(z):
    return (z >= 0).astype(float)


def _elu(z, alpha=1.0):
    return np.where(z > 0, z, alpha * np.expm1(np.minimum(z, 0.0)))


BASE_ACTIVATIONS: dict[str, Callable] = {
    "identity": lambda z: z,
    "relu": lambda z: np.maximum(z, 0.0),
    "heaviside": _heaviside,
    "logistic": special.expit,
    "tanh": np.tanh,
    "softplus": lambda z: np.logaddexp(0.0, z),
    "elu": _elu,
    "silu": lambda z: z * special.expit(z),
}


@dataclass(frozen=True)
class Activation:
    """Named activation with parameters; scaled wrappers carry ``base`` and ``M``."""

    name: str
    params: dict = field(default_factory=dict)

    def __call__(self, z):
        return activation_fn(self.name, self.params)(z)


def activation_fn(name: str, params: dict | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised activation function for a layer's ``act`` and ``act_params``."""
    params = params or {}
    if name == "scaled_sigmoid_like":
        base = BASE_ACTIVATIONS[params["base"]]
        M, a, b = params["M"], params["a"], params["b"]
        if not (M > 0 and b > a):
            raise ValueError("scaled sigmoid-like needs M > 0 and b > a")
        return lambda z: (base(M * z) - a) / (b - a)
    if name == "scaled_relu_like":
        base = BASE_ACTIVATIONS[params["base"]]
        M, b = params["M"], params["b"]
        if not (M > 0 and b > 0):
            raise ValueError("scaled ReLU-like needs M > 0 and b > 0")
        return lambda z: base(M * z) / (M * b)
    if name == "elu" and "alpha" in params:
        return lambda z: _elu(z, params["alpha"])
    try:
        return BASE_ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


@dataclass(frozen=True)
class Factored:
    """Weight matrix stored as a product ``F_1 @ F_2 @ ... @ F_k``."""

    factors: tuple

    def __post_init__(self):
        for left, right in zip(self.factors[:-1], self.factors[1:]):
            if left.shape[1] != right.shape[0]:
                raise ValueError("factor shapes do not compose")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.factors[0].shape[0], self.factors[-1].shape[1])

    def apply(self, y: np.ndarray) -> np.ndarray:
        """``W @ y`` for ``y`` of shape (cols, m)."""
        for f in reversed(self.factors):
            y = f @ y
        return np.asarray(y)

    def abs_apply(self, y: np.ndarray) -> np.ndarray:
        """``|F_1| ... |F_k| @ y``, an entrywise upper bound of ``|W| @ y`` for ``y >= 0``."""
        for f in reversed(self.factors):
            y = abs(f) @ y
        return np.asarray(y)

    def todense(self) -> np.ndarray:
        out = np.eye(self.shape[1])
        return self.apply(out)


def _apply(w, y):
    if isinstance(w, Factored):
        return w.apply(y)
    return np.asarray(w @ y)


def _abs_apply(w, y):
    if isinstance(w, Factored):
        return w.abs_apply(y)
    return np.asarray(abs(w) @ y)


@dataclass(frozen=True)
class Layer:
    """Hidden layer ``act(W x + b)``; neurons listed in ``identity_units`` skip the activation."""

    w: object
    b: np.ndarray
    act: str
    act_params: dict = field(default_factory=dict)

    def __post_init__(self):
        w = self.w
        if not (isinstance(w, Factored) or sparse.issparse(w)):
            w = np.atleast_2d(np.asarray(w, dtype=float))
        elif sparse.issparse(w):
            w = sparse.csr_matrix(w)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if b.shape[0] != w.shape[0]:
            raise ValueError("bias length must equal layer width")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)
        activation_fn(self.act, self.act_params)

    @property
    def width(self) -> int:
        return self.w.shape[0]

    @property
    def fan_in(self) -> int:
        return self.w.shape[1]

    @property
    def identity_units(self) -> np.ndarray:
        return np.asarray(self.act_params.get("identity_units", []), dtype=np.int64)

    def forward(self, y: np.ndarray) -> np.ndarray:
        """Activations for inputs ``y`` of shape (fan_in, m); returns (width, m)."""
        z = _apply(self.w, y)
        z += self.b[:, None]
        ids = self.identity_units
        if self.act == "relu" and not ids.size:
            return np.maximum(z, 0.0, out=z)
        params = {k: v for k, v in self.act_params.items() if k != "identity_units"}
        out = activation_fn(self.act, params)(z)
        if ids.size:
            out[ids] = z[ids]
        return out


@dataclass(frozen=True)
class NetSpec:
    """Feed-forward network with hidden ``layers`` and linear output ``out_w . h + out_b``.

    ``trainable`` records how many parameters depend on the target function;
    for synthesised networks these are the surpluses feeding the output layer.
    """

    input_dim: int
    layers: tuple
    out_w: np.ndarray
    out_b: float = 0.0
    trainable: int = 0

    def __post_init__(self):
        layers = tuple(self.layers)
        fan = self.input_dim
        for k, layer in enumerate(layers):
            if layer.fan_in != fan:
                raise ValueError(f"layer {k} expects {layer.fan_in} inputs, previous width is {fan}")
            fan = layer.width
        out_w = np.asarray(self.out_w, dtype=float).reshape(-1)
        if out_w.shape[0] != fan:
            raise ValueError("output weights do not match the last layer width")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "out_w", out_w)
        object.__setattr__(self, "out_b", float(self.out_b))

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.layers)

    def neuron_count(self) -> int:
        """Sum of hidden-layer widths (input and output nodes excluded)."""
        return sum(layer.width for layer in self.layers)

    def trainable_count(self) -> int:
        return self.trainable

    def widths(self) -> list[int]:
        return [layer.width for layer in self.layers]

    def __call__(self, x):
        return net_eval(self, x)


def net_eval(net: NetSpec, x, chunk: int | None = None) -> np.ndarray | float:
    """Evaluate ``net`` at one point (shape (d,)) or a batch (shape (m, d)).

    Batches are processed in chunks so that the widest layer's activations
    stay below a fixed memory budget.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim <= 1
    pts = np.atleast_2d(x)
    if net.input_dim == 1 and pts.shape[0] == 1 and pts.shape[1] != 1 and x.ndim == 1:
        pts = pts.reshape(-1, 1)
        scalar = False
    if pts.shape[1] != net.input_dim:
        raise ValueError(f"expected points of dimension {net.input_dim}, got {pts.shape[1]}")
    if chunk is None:
        widest = max([layer.width for layer in net.layers] + [1])
        chunk = max(1, EVAL_BUDGET // widest)
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        y = pts[start : start + chunk].T
        for layer in net.layers:
            y = layer.forward(y)
        out[start : start + chunk] = net.out_w @ y + net.out_b
    return float(out[0]) if scalar else out


def parallel_sum(nets: Sequence[NetSpec], coeffs: Sequence[float] | None = None) -> NetSpec:
    """Network computing ``sum_k c_k net_k(x)`` by stacking equal-depth networks side by side.

    Neuron and trainable counts add up.
    """
    nets = list(nets)
    if not nets:
        raise ValueError("need at least one network")
    coeffs = np.ones(len(nets)) if coeffs is None else np.asarray(coeffs, dtype=float)
    d, depth = nets[0].input_dim, nets[0].depth
    if any(n.input_dim != d or n.depth != depth for n in nets):
        raise ValueError("networks must share input dimension and depth")
    layers = []
    for k in range(depth):
        parts = [n.layers[k] for n in nets]
        acts = {(p.act, json.dumps(_plain_params(p.act_params), sort_keys=True)) for p in parts}
        base_params = {kk: v for kk, v in parts[0].act_params.items() if kk != "identity_units"}
        if len({a for a, _ in acts}) != 1 or any(
            {kk: v for kk, v in p.act_params.items() if kk != "identity_units"} != base_params for p in parts
        ):
            raise ValueError("stacked layers must share one activation")
        mats = [p.w.todense() if isinstance(p.w, Factored) else p.w for p in parts]
        if k == 0:
            w = sparse.vstack([sparse.csr_matrix(m) for m in mats])
        else:
            w = sparse.block_diag([sparse.csr_matrix(m) for m in mats])
        ids, offset = [], 0
        for p in parts:
            ids.extend((p.identity_units + offset).tolist())
            offset += p.width
        params = dict(base_params)
        if ids:
            params["identity_units"] = ids
        layers.append(Layer(w.tocsr(), np.concatenate([p.b for p in parts]), parts[0].act, params))
    out_w = np.concatenate([c * n.out_w for c, n in zip(coeffs, nets)])
    out_b = float(sum(c * n.out_b for c, n in zip(coeffs, nets)))
    return NetSpec(d, tuple(layers), out_w, out_b, sum(n.trainable for n in nets))


# -- serialisation -----------------------------------------------------------


def _plain_params(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, (np.floating, np.integer)):
            v = v.item()
        out[k] = v
    return out


def _coo_json(m) -> dict:
    coo = sparse.coo_matrix(m)
    return {
        "shape": list(coo.shape),
        "row": coo.row.tolist(),
        "col": coo.col.tolist(),
        "data": coo.data.tolist(),
    }


def _coo_from_json(obj) -> sparse.csr_matrix:
    return sparse.csr_matrix(
        (np.asarray(obj["data"], dtype=float), (np.asarray(obj["row"]), np.asarray(obj["col"]))),
        shape=tuple(obj["shape"]),
    )


def net_to_dict(net: NetSpec, dense_limit: int = DENSE_JSON_LIMIT) -> dict:
    """JSON-ready dictionary.  Large or structured weights go to ``w_factors`` (COO triplets)."""
    layers = []
    for layer in net.layers:
        entry = {"b": layer.b.tolist(), "act": layer.act, "act_params": _plain_params(layer.act_params)}
        w = layer.w
        if isinstance(w, np.ndarray) and w.size <= dense_limit:
            entry["w"] = w.tolist()
        elif isinstance(w, Factored):
            entry["w_factors"] = [_coo_json(f) for f in w.factors]
        else:
            entry["w_factors"] = [_coo_json(w)]
        layers.append(entry)
    return {
        "input_dim": net.input_dim,
        "layers": layers,
        "out_w": net.out_w.tolist(),
        "out_b": net.out_b,
        "meta": {"neurons": net.neuron_count(), "trainable": net.trainable, "depth": net.depth},
    }


def net_from_dict(obj: dict) -> NetSpec:
    layers = []
    for entry in obj["layers"]:
        if "w" in entry:
            w = np.asarray(entry["w"], dtype=float).reshape(len(entry["b"]), -1)
        else:
            factors = tuple(_coo_from_json(f) for f in entry["w_factors"])
            w = factors[0] if len(factors) == 1 else Factored(factors)
        layers.append(Layer(w, entry["b"], entry["act"], dict(entry.get("act_params", {}))))
    meta = obj.get("meta", {})
    net = NetSpec(obj["input_dim"], tuple(layers), obj["out_w"], obj["out_b"], meta.get("trainable", 0))
    if "neurons" in meta and meta["neurons"] != net.neuron_count():
        raise ValueError("meta.neurons disagrees with the layer widths")
    return net


def net_to_json(net: NetSpec) -> str:
    return json.dumps(net_to_dict(net))


def net_from_json(text: str) -> NetSpec:
    return net_from_dict(json.loads(text))


# -- activation scaling ------------------------------------------------------


def scale_sigmoid_like(sigma: str, delta: float, eps: float) -> Activation:
    """Rescaled ``x -> (sigma(M x) - a)/(b - a)`` within ``eps`` of the Heaviside step for ``|x| >= delta``.

    ``M`` is found by doubling from 1.  Monotonicity of ``sigma`` means the
    check at ``x = +-delta`` covers the whole region.  The wrapped function
    takes values in ``[0, 1]``.
    """
    if sigma not in SIGMOID_LIMITS:
        raise ValueError(f"{sigma!r} is not a known sigmoid-like activation")
    if not (delta > 0 and eps > 0):
        raise ValueError("delta and eps must be positive")
    a, b = SIGMOID_LIMITS[sigma]
    base = BASE_ACTIVATIONS[sigma]
    M = 1.0
    while True:
        lo = (base(np.array(-M * delta)) - a) / (b - a)
        hi = (base(np.array(M * delta)) - a) / (b - a)
        if lo <= eps and hi >= 1 - eps:
            break
        if M * delta > SEARCH_LIMIT:
            raise ValueError(f"{sigma} does not reach its limits within |x| <= {SEARCH_LIMIT:g}")
        M *= 2
    return Activation("scaled_sigmoid_like", {"base": sigma, "M": M, "a": a, "b": b})


def relu_like_grid() -> np.ndarray:
    pos = np.logspace(-12, 6, 2000)
    return np.concatenate([-pos[::-1], [0.0], pos])


def scale_relu_like(sigma: str, eps: float) -> Activation:
    """Rescaled ``x -> sigma(M x)/(M b)`` within ``eps`` of ReLU on a log-spaced grid.

    ``M`` is found by doubling from 1; the measured sup-distance is stored as
    ``eta`` in the parameters.
    """
    if sigma not in RELU_LIKE_SLOPE:
        raise ValueError(f"{sigma!r} is not a known ReLU-like activation")
    if not eps > 0:
        raise ValueError("eps must be positive")
    b = RELU_LIKE_SLOPE[sigma]
    base = BASE_ACTIVATIONS[sigma]
    z = relu_like_grid()
    target = np.maximum(z, 0.0)
    M = 1.0
    while True:
        gap = float(np.max(np.abs(base(M * z) / (M * b) - target)))
        if gap <= eps:
            break
        if M > SEARCH_LIMIT:
            raise ValueError(f"{sigma} does not approach ReLU within M <= {SEARCH_LIMIT:g}")
        M *= 2
    return Activation("scaled_relu_like", {"base": sigma, "M": M, "b": b, "eta": gap})


def substitution_error_bound(net: NetSpec, eta: float, lipschitz: float = 1.0) -> float:
    """Sup-norm change of the output when every activation moves by at most ``eta``.

    Uses ``e_1 = eta`` and ``e_k = eta + L |W_k| e_{k-1}`` elementwise, then
    ``|out_w| . e_last``.  Identity units are exact and contribute no ``eta``.
    """
    e = None
    for layer in net.layers:
        own = np.full(layer.width, eta)
        ids = layer.identity_units
        if e is None:
            e = own
            if ids.size:
                e[ids] = 0.0
            continue
        prop = _abs_apply(layer.w, e[:, None])[:, 0]
        scale = np.full(layer.width, lipschitz)
        if ids.size:
            own[ids] = 0.0
            scale[ids] = 1.0
        e = own + scale * prop
    if e is None:
        return 0.0
    return float(np.abs(net.out_w) @ e)


def substitute_activation(net: NetSpec, act: Activation, only: str = "relu") -> NetSpec:
    """Copy of ``net`` with every ``only`` layer switched to ``act``."""
    layers = []
    for layer in net.layers:
        if layer.act == only:
            params = dict(act.params)
            if "identity_units" in layer.act_params:
                params["identity_units"] = layer.act_params["identity_units"]
            layers.append(Layer(layer.w, layer.b, act.name, params))
        else:
            layers.append(layer)
    return NetSpec(net.input_dim, tuple(layers), net.out_w, net.out_b, net.trainable)


# -- deep product ------------------------------------------------------------


def second_derivative_at_zero(sigma: str) -> float:
    if sigma not in SECOND_DERIVATIVE_AT_0:
        raise ValueError(f"no known C^2 curvature for activation {sigma!r}")
    c = SECOND_DERIVATIVE_AT_0[sigma]
    if abs(c) < 1e-6:
        raise ValueError(f"{sigma} has sigma''(0) = {c}; the product gadget needs a non-zero value")
    return c


def gadget_weights(lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Input rows for ``sigma(+-lam (x + y))`` and ``sigma(+-lam (x - y))``, and the output signs."""
    rows = lam * np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    signs = np.array([1.0, 1.0, -1.0, -1.0])
    return rows, signs


def product_gadget(sigma: str = "softplus", lam: float = 1e-2) -> NetSpec:
    """Four-neuron network approximating ``x y`` with error ``O(lam^2)`` on bounded inputs."""
    c = second_derivative_at_zero(sigma)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    rows, signs = gadget_weights(lam)
    return NetSpec(2, (Layer(rows, np.zeros(4), sigma),), signs / (4 * lam**2 * c), 0.0, 0)


@dataclass(frozen=True)
class TreeLayout:
    """Wiring of a balanced product tree: per level, gadget pairs and pass-through slots."""

    levels: tuple

    @property
    def depth(self) -> int:
        return len(self.levels)


def tree_layout(d: int) -> TreeLayout:
    """Pairs ``(a, b)`` and odd leftovers at each level of a balanced binary tree over ``d`` leaves."""
    if d < 2:
        raise ValueError("a product tree needs at least two factors")
    levels = []
    count = d
    while count > 1:
        pairs = tuple((2 * k, 2 * k + 1) for k in range(count // 2))
        odd = (count - 1,) if count % 2 else ()
        levels.append((pairs, odd))
        count = len(pairs) + len(odd)
    return TreeLayout(tuple(levels))


def tree_layers(
    d: int, sigma: str, lam: float, inputs: np.ndarray, input_bias: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray, list[int]]], np.ndarray, float]:
    """Dense layer blocks of one product tree whose leaves are affine in the previous layer.

    ``inputs`` (d, fan_in) and ``input_bias`` (d,) express the leaves.
    Returns per-level ``(w, b, identity_units)`` and the final output form
    ``(out_w, out_b)`` over the last level.
    """
    c = second_derivative_at_zero(sigma)
    rows, signs = gadget_weights(lam)
    scale = 1.0 / (4 * lam**2 * c)
    forms = [(inputs[k], float(input_bias[k])) for k in range(d)]
    blocks = []
    for pairs, odd in tree_layout(d).levels:
        w_rows, b_rows, ids, new_forms = [], [], [], []
        for a, bidx in pairs:
            (wa, ba), (wb, bb) = forms[a], forms[bidx]
            start = len(w_rows)
            for r in rows:
                w_rows.append(r[0] * wa + r[1] * wb)
                b_rows.append(r[0] * ba + r[1] * bb)
            new_forms.append((start, "gadget"))
        for o in odd:
            wo, bo = forms[o]
            ids.append(len(w_rows))
            new_forms.append((len(w_rows), "identity"))
            w_rows.append(wo)
            b_rows.append(bo)
        width = len(w_rows)
        forms = []
        for start, kind in new_forms:
            vec = np.zeros(width)
            if kind == "gadget":
                vec[start : start + 4] = signs * scale
            else:
                vec[start] = 1.0
            forms.append((vec, 0.0))
        blocks.append((np.array(w_rows), np.array(b_rows), ids))
    (out_w, out_b), = forms
    return blocks, out_w, out_b


def product_tree(d: int, sigma: str = "softplus", lam: float = 1e-2) -> NetSpec:
    """Balanced binary tree of product gadgets computing ``x_1 ... x_d``.

    Depth ``ceil(log2 d)``; each gadget uses 4 neurons and an odd factor at a
    level is carried by one identity unit.
    """
    blocks, out_w, out_b = tree_layers(d, sigma, lam, np.eye(d), np.zeros(d))
    layers = []
    for w, b, ids in blocks:
        params = {"identity_units": ids} if ids else {}
        layers.append(Layer(w, b, sigma, params))
    return NetSpec(d, tuple(layers), out_w, out_b, 0)


def gadget_error(sigma: str, lam: float, grid: int = 41, lo: float = 0.0, hi: float = 1.0) -> float:
    """Max ``|gadget(x, y) - x y|`` over a ``grid x grid`` mesh of ``[lo, hi]^2``."""
    g = product_gadget(sigma, lam)
    t = np.linspace(lo, hi, grid)
    X, Y = np.meshgrid(t, t)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return float(np.max(np.abs(net_eval(g, pts) - pts[:, 0] * pts[:, 1])))


def select_lambda(sigma: str, tol: float, factors: int, margin: float = 0.05) -> float:
    """Gadget scale for a product tree over ``factors`` inputs with total error ``tol``.

    Gadget errors roughly add up along the tree, so each of the
    ``factors - 1`` gadgets gets ``tol / (factors - 1)``.  The constant in
    ``error ~ C lam^2`` is measured at ``lam = 0.1`` on a slightly enlarged
    square, then ``lam`` is halved until the measured error fits.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    per = tol / max(factors - 1, 1)
    lo, hi = -margin, 1.0 + margin
    ref = 0.1
    C = gadget_error(sigma, ref, lo=lo, hi=hi) / ref**2
    lam = math.sqrt(per / (2 * C)) if C > 0 else ref
    lam = min(lam, 1.0)
    while gadget_error(sigma, lam, lo=lo, hi=hi) > per:
        lam /= 2
        if lam < 1e-7:
            raise ValueError("gadget tolerance is below floating-point resolution")
    return lam
