import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from korobov.network import (
    BASE_ACTIVATIONS,
    Factored,
    Layer,
    NetSpec,
    activation_fn,
    gadget_error,
    net_eval,
    net_from_dict,
    net_from_json,
    net_to_dict,
    net_to_json,
    parallel_sum,
    product_gadget,
    product_tree,
    relu_like_grid,
    scale_relu_like,
    scale_sigmoid_like,
    second_derivative_at_zero,
    select_lambda,
    substitute_activation,
    substitution_error_bound,
    tree_layout,
)


def dense_reference(net, x):
    """Plain forward pass with dense matrices."""
    y = np.atleast_2d(x).T
    for layer in net.layers:
        w = layer.w.todense() if isinstance(layer.w, Factored) else layer.w
        w = w.toarray() if sparse.issparse(w) else np.asarray(w)
        z = w @ y + layer.b[:, None]
        a = activation_fn(layer.act, layer.act_params)(z)
        ids = layer.identity_units
        if ids.size:
            a[ids] = z[ids]
        y = a
    return net.out_w @ y + net.out_b


def random_net(r, d=3, widths=(5, 4), act="relu"):
    layers, fan = [], d
    for w in widths:
        layers.append(Layer(r.normal(size=(w, fan)), r.normal(size=w), act))
        fan = w
    return NetSpec(d, tuple(layers), r.normal(size=fan), float(r.normal()), 7)


class TestActivations:
    def test_base_values(self):
        z = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_allclose(BASE_ACTIVATIONS["relu"](z), [0, 0, 2])
        np.testing.assert_allclose(BASE_ACTIVATIONS["heaviside"](z), [0, 1, 1])
        np.testing.assert_allclose(BASE_ACTIVATIONS["softplus"](np.array([0.0])), [math.log(2)])
        np.testing.assert_allclose(BASE_ACTIVATIONS["logistic"](np.array([0.0])), [0.5])

    def test_softplus_large_input(self):
        assert np.isfinite(BASE_ACTIVATIONS["softplus"](np.array([1e4])))[0]

    def test_unknown(self):
        with pytest.raises(ValueError):
            activation_fn("gelu-ish")

    def test_second_derivatives(self):
        # softplus'' = s(1 - s) at 0; silu'' = 2 s'(0) at 0
        assert second_derivative_at_zero("softplus") == pytest.approx(0.25)
        assert second_derivative_at_zero("silu") == pytest.approx(0.5)
        for name in ("logistic", "tanh"):
            with pytest.raises(ValueError):
                second_derivative_at_zero(name)

    @pytest.mark.parametrize("name", ["softplus", "silu"])
    def test_second_derivative_finite_difference(self, name):
        f, h = BASE_ACTIVATIONS[name], 1e-4
        fd = (f(np.array([h])) - 2 * f(np.array([0.0])) + f(np.array([-h]))) / h**2
        assert fd[0] == pytest.approx(second_derivative_at_zero(name), rel=1e-5)

    @pytest.mark.parametrize("name", ["logistic", "tanh"])
    def test_scaled_sigmoid(self, name):
        act = scale_sigmoid_like(name, 0.01, 1e-3)
        z = np.concatenate([np.linspace(-5, -0.01, 1000), np.linspace(0.01, 5, 1000)])
        assert np.max(np.abs(act(z) - (z >= 0))) <= 1e-3
        assert act.params["M"] > 0 and act.params["b"] > act.params["a"]

    @pytest.mark.parametrize("name", ["softplus", "elu"])
    def test_scaled_relu_like(self, name):
        act = scale_relu_like(name, 1e-3)
        z = relu_like_grid()
        assert np.max(np.abs(act(z) - np.maximum(z, 0))) <= 1e-3
        assert act.params["eta"] <= 1e-3

    def test_scaling_rejects_unknown(self):
        with pytest.raises(ValueError):
            scale_sigmoid_like("relu", 0.1, 0.1)
        with pytest.raises(ValueError):
            scale_relu_like("logistic", 0.1)


class TestNetSpec:
    def test_eval_matches_dense(self, rng):
        net = random_net(rng)
        x = rng.uniform(size=(50, 3))
        np.testing.assert_allclose(net_eval(net, x), dense_reference(net, x), atol=1e-12)

    def test_scalar_and_chunks(self, rng):
        net = random_net(rng, act="softplus")
        x = rng.uniform(size=(37, 3))
        full = net_eval(net, x)
        np.testing.assert_allclose(net_eval(net, x, chunk=5), full, atol=1e-14)
        assert net_eval(net, x[3]) == pytest.approx(full[3])

    def test_counts(self, rng):
        net = random_net(rng, widths=(5, 4, 2))
        assert net.neuron_count() == 11 and net.depth == 3 and net.widths() == [5, 4, 2]

    def test_shape_validation(self, rng):
        with pytest.raises(ValueError):
            NetSpec(2, (Layer(np.ones((3, 4)), np.zeros(3), "relu"),), np.ones(3))
        with pytest.raises(ValueError):
            net_eval(random_net(rng), np.zeros((2, 5)))

    def test_parallel_sum(self, rng):
        a, b = random_net(rng), random_net(rng)
        s = parallel_sum([a, b], [2.0, -0.5])
        x = rng.uniform(size=(20, 3))
        np.testing.assert_allclose(s(x), 2 * a(x) - 0.5 * b(x), atol=1e-12)
        assert s.neuron_count() == a.neuron_count() + b.neuron_count()
        assert s.trainable == 14

    def test_factored_layer(self, rng):
        f1 = sparse.csr_matrix(rng.normal(size=(4, 6)))
        f2 = rng.normal(size=(6, 2))
        layer = Layer(Factored((f1, f2)), np.zeros(4), "relu")
        net = NetSpec(2, (layer,), np.ones(4))
        x = rng.uniform(size=(10, 2))
        np.testing.assert_allclose(net(x), dense_reference(net, x), atol=1e-12)


class TestJson:
    def test_round_trip_dense(self, rng):
        net = random_net(rng, act="tanh")
        back = net_from_json(net_to_json(net))
        x = rng.uniform(size=(30, 3))
        np.testing.assert_array_equal(back(x), net(x))
        assert back.trainable == 7

    def test_schema(self, rng):
        obj = net_to_dict(random_net(rng))
        assert set(obj) == {"input_dim", "layers", "out_w", "out_b", "meta"}
        assert obj["meta"] == {"neurons": 9, "trainable": 7, "depth": 2}
        assert set(obj["layers"][0]) == {"w", "b", "act", "act_params"}

    def test_sparse_round_trip(self, rng):
        f1 = sparse.random(8, 5, density=0.4, random_state=1, format="csr")
        layer = Layer(Factored((f1, sparse.csr_matrix(rng.normal(size=(5, 2))))), rng.normal(size=8), "relu")
        act = scale_sigmoid_like("logistic", 0.1, 0.01)
        net = NetSpec(2, (layer, Layer(rng.normal(size=(3, 8)), np.zeros(3), act.name, act.params)), np.ones(3))
        obj = json.loads(net_to_json(net))
        assert "w_factors" in obj["layers"][0]
        back = net_from_dict(obj)
        x = rng.uniform(size=(20, 2))
        np.testing.assert_array_equal(back(x), net(x))

    def test_meta_checked(self, rng):
        obj = net_to_dict(random_net(rng))
        obj["meta"]["neurons"] = 99
        with pytest.raises(ValueError):
            net_from_dict(obj)


class TestSubstitution:
    def test_bound_holds(self, rng):
        net = random_net(rng, widths=(6, 5))
        act = scale_relu_like("softplus", 1e-3)
        sub = substitute_activation(net, act)
        x = rng.uniform(size=(500, 3))
        bound = substitution_error_bound(net, act.params["eta"])
        assert np.max(np.abs(sub(x) - net(x))) <= bound
        assert sub.layers[0].act == "scaled_relu_like"


class TestGadget:
    def test_four_neurons(self):
        g = product_gadget("softplus", 0.05)
        assert g.neuron_count() == 4 and g.depth == 1

    def test_error_shrinks_quadratically(self):
        lams = np.geomspace(1e-3, 1e-1, 7)
        errs = [gadget_error("softplus", lam) for lam in lams]
        slope = np.polyfit(np.log(lams), np.log(errs), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.15)

    def test_rejects_bad_lambda(self):
        with pytest.raises(ValueError):
            product_gadget("softplus", 0.0)

    def test_select_lambda(self):
        lam = select_lambda("softplus", 1e-3, 3)
        assert gadget_error("softplus", lam, lo=-0.05, hi=1.05) <= 1e-3 / 2


class TestTree:
    @pytest.mark.parametrize("d,neurons", [(2, 4), (3, 9), (4, 12), (5, 18), (8, 28)])
    def test_counts(self, d, neurons):
        # d - 1 gadgets of 4 neurons, plus one identity unit per carried odd factor
        t = product_tree(d, "softplus", 1e-3)
        assert t.neuron_count() == neurons
        assert t.neuron_count() <= 8 * d
        assert t.depth == math.ceil(math.log2(d))

    @pytest.mark.parametrize("d", [2, 3, 4, 5, 7, 8])
    def test_product(self, rng, d):
        t = product_tree(d, "softplus", 1e-3)
        x = rng.uniform(size=(200, d))
        np.testing.assert_allclose(t(x), np.prod(x, axis=1), atol=1e-4)
        assert t.depth == math.ceil(math.log2(d))

    def test_layout(self):
        lay = tree_layout(5)
        assert lay.depth == 3
        assert lay.levels[0] == (((0, 1), (2, 3)), (4,))

    def test_layout_rejects_one(self):
        with pytest.raises(ValueError):
            tree_layout(1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), act=st.sampled_from(["relu", "softplus", "tanh", "elu", "silu"]))
def test_json_round_trip_property(seed, act):
    r = np.random.default_rng(seed)
    net = random_net(r, d=int(r.integers(1, 4)), widths=tuple(r.integers(1, 6, size=int(r.integers(1, 4)))), act=act)
    back = net_from_json(net_to_json(net))
    x = r.uniform(size=(10, net.input_dim))
    np.testing.assert_array_equal(back(x), net(x))
    assert back.neuron_count() == net.neuron_count()
