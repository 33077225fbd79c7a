import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from korobov.univariate import (
    PiecewiseAffine,
    approx_c2_riemann,
    approx_c2_uniform,
    approx_increasing,
    approx_increasing_heaviside,
    approx_log_truncated,
    heaviside_levels,
    log_step,
    pwl_to_relu,
    relu_weights,
)


def random_pwl(r, pieces, domain=(0.0, 1.0)):
    knots = np.sort(r.uniform(0, 1, pieces - 1))
    slopes = r.uniform(-1, 1, pieces)
    v0 = r.uniform(-1, 1)
    values = v0 + np.concatenate([[0.0], np.cumsum(slopes[1:-1] * np.diff(knots))])
    return PiecewiseAffine(knots, values, slopes[0], slopes[-1], domain)


class TestPiecewiseAffine:
    def test_evaluation(self):
        p = PiecewiseAffine([0.0, 1.0], [0.0, 2.0], -1.0, 0.5)
        np.testing.assert_allclose(p(np.array([-1.0, 0.5, 3.0])), [1.0, 1.0, 3.0])

    def test_slopes(self):
        p = PiecewiseAffine([0.0, 1.0, 3.0], [0.0, 2.0, 0.0], -1.0, 0.5)
        np.testing.assert_allclose(p.slopes, [-1.0, 2.0, -1.0, 0.5])

    def test_validation(self):
        with pytest.raises(ValueError):
            PiecewiseAffine([1.0, 0.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            PiecewiseAffine([], [])
        with pytest.raises(ValueError):
            PiecewiseAffine([0.0], [0.0], domain=(1.0, 1.0))

    def test_pieces_counted_in_domain(self):
        p = PiecewiseAffine([-2.0, 0.5, 3.0], [0.0, 1.0, 0.0], domain=(0.0, 1.0))
        assert p.pieces == 2


class TestReluForm:
    def test_weights_match_slope_differences(self, rng):
        for _ in range(20):
            p = random_pwl(rng, int(rng.integers(2, 40)), (-math.inf, math.inf))
            w0a, wa = relu_weights(p, "recursion")
            w0b, wb = relu_weights(p, "slopes")
            assert w0a == w0b
            np.testing.assert_allclose(wa, wb, atol=1e-9)

    @pytest.mark.parametrize("method", ["recursion", "slopes"])
    def test_exact_on_real_line(self, rng, method):
        x = np.linspace(-3, 4, 5001)
        for _ in range(20):
            p = random_pwl(rng, int(rng.integers(2, 65)), (-math.inf, math.inf))
            net = pwl_to_relu(p, method)
            assert net.neurons == p.pieces
            np.testing.assert_allclose(net(x), p(x), atol=1e-12)

    def test_domain_pruning(self):
        p = PiecewiseAffine([-1.0, 0.25, 0.5, 2.0], [1.0, 0.0, 1.0, 0.0], domain=(0.0, 1.0))
        net = pwl_to_relu(p)
        assert net.neurons == p.pieces == 3
        x = np.linspace(0, 1, 1001)
        np.testing.assert_allclose(net(x), p(x), atol=1e-14)

    def test_knots_left_of_domain(self, rng):
        p = PiecewiseAffine([-2.0, -1.0, 0.0, 0.5], [3.0, 1.0, 2.0, -1.0], 1.5, -0.5, (0.0, 1.0))
        x = np.linspace(0, 1, 1001)
        for method in ("recursion", "slopes"):
            net = pwl_to_relu(p, method)
            assert net.neurons == p.pieces == 2
            np.testing.assert_allclose(net(x), p(x), atol=1e-14)

    def test_flat_function_has_no_neurons(self):
        net = pwl_to_relu(PiecewiseAffine.affine(0.0, 2.5, (0.0, 1.0)))
        assert net.neurons == 0
        assert net(0.3) == 2.5

    def test_affine(self):
        p = PiecewiseAffine.affine(2.0, -1.0, (0.0, 1.0))
        net = pwl_to_relu(p)
        assert net.neurons == 1
        np.testing.assert_allclose(net(np.linspace(0, 1, 11)), 2 * np.linspace(0, 1, 11) - 1, atol=1e-15)

    def test_rejects_method(self):
        with pytest.raises(ValueError):
            relu_weights(PiecewiseAffine([0.0], [0.0]), "other")


class TestIncreasing:
    @pytest.mark.parametrize(
        "f,interval,yrange",
        [
            (np.sqrt, (0.0, 1.0), (0.0, 1.0)),
            (np.exp, (-2.0, 1.0), (math.exp(-2), math.e)),
            (lambda x: x**3, (-1.0, 1.0), (-1.0, 1.0)),
        ],
    )
    @pytest.mark.parametrize("eps", [0.1, 0.02])
    def test_error_and_count(self, f, interval, yrange, eps):
        p = approx_increasing(f, interval, yrange, eps)
        x = np.linspace(*interval, 20001)
        assert np.max(np.abs(p(x) - f(x))) <= eps * (1 + 1e-9)
        assert p.pieces <= math.ceil((yrange[1] - yrange[0]) / eps)

    def test_analytic_inverse_agrees(self):
        a = approx_increasing(np.exp, (-1.0, 0.0), (math.exp(-1), 1.0), 0.05)
        b = approx_increasing(np.exp, (-1.0, 0.0), (math.exp(-1), 1.0), 0.05, inverse=np.log)
        np.testing.assert_allclose(a.knots, b.knots, atol=1e-12)

    def test_coarse_eps_gives_constant(self):
        p = approx_increasing(np.sqrt, (0.0, 1.0), (0.0, 1.0), 2.0)
        assert p.pieces == 1 and p(0.3) == 0.5

    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            approx_increasing(lambda x: -x, (0.0, 1.0), (-1.0, 0.0), 0.1)


class TestC2:
    def test_chord_error_of_parabola(self):
        # interpolating x^2 on a step h errs by exactly h^2 / 4 at cell midpoints
        eps = 1e-3
        p = approx_c2_uniform(np.square, (0.0, 1.0), eps, f2_bound=2.0)
        h = np.diff(p.knots)[0]
        assert p.pieces == math.ceil(1 / math.sqrt(eps))
        x = np.linspace(0, 1, 200001)
        assert np.max(np.abs(p(x) - x**2)) == pytest.approx(h**2 / 4, rel=1e-3)

    @pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
    def test_uniform_error(self, eps):
        f, f2 = np.sin, lambda t: -np.sin(t)
        p = approx_c2_uniform(f, (0.0, 3.0), eps, f2=f2)
        x = np.linspace(0, 3, 100001)
        assert np.max(np.abs(p(x) - f(x))) <= eps
        B = 1.1 * np.max(np.abs(f2(np.linspace(0, 3, 10000))))
        assert p.pieces == math.ceil(3 * math.sqrt(B) / math.sqrt(2 * eps))

    def test_needs_curvature(self):
        with pytest.raises(ValueError):
            approx_c2_uniform(np.sin, (0.0, 1.0), 0.1)

    @pytest.mark.parametrize("eps", [1e-2, 1e-3])
    def test_riemann(self, eps):
        f, f2 = np.log, lambda t: -1 / t**2
        p, part = approx_c2_riemann(f, (0.1, 1.0), eps, 0.5, f2)
        x = np.linspace(0.1, 1, 100001)
        assert np.max(np.abs(p(x) - f(x))) <= eps
        assert p.pieces <= part.bound
        assert part.upper_sum <= 1.25 * part.integral
        # fewer pieces than the uniform rule, which is driven by the worst curvature
        assert p.pieces < approx_c2_uniform(f, (0.1, 1.0), eps, f2_bound=100.0).pieces


class TestLog:
    @pytest.mark.parametrize("delta,eps", [(1e-2, 1e-2), (1e-3, 1e-3), (0.3, 0.05)])
    def test_error(self, delta, eps):
        p = approx_log_truncated(delta, eps)
        x = np.concatenate([np.linspace(0, delta, 101), np.geomspace(delta, 1, 100001)])
        want = np.log(np.maximum(x, delta))
        assert np.max(np.abs(p(x) - want)) <= eps
        m = math.floor(math.log(1 / delta) / log_step(eps))
        assert p.pieces in (m + 1, m + 2)

    def test_fixed_pieces(self):
        p = approx_log_truncated(1e-2, 1e-2, pieces=40)
        assert p.pieces == 41
        with pytest.raises(ValueError):
            approx_log_truncated(1e-2, 1e-2, pieces=3)

    def test_validation(self):
        with pytest.raises(ValueError):
            approx_log_truncated(1.5, 0.1)


class TestHeaviside:
    def test_step_sum(self):
        eps = 0.05
        net = approx_increasing_heaviside(np.sqrt, (0.0, 1.0), (0.0, 1.0), eps)
        bias, thr = heaviside_levels(np.sqrt, (0.0, 1.0), (0.0, 1.0), eps)
        assert net.neurons == len(thr)
        assert net.neurons <= math.ceil(1 / eps)
        x = np.linspace(0, 1, 20001)
        assert np.max(np.abs(net(x) - np.sqrt(x))) <= eps * (1 + 1e-9)

    def test_logistic(self):
        eps = 0.1
        net = approx_increasing_heaviside(np.sqrt, (0.0, 1.0), (0.0, 1.0), eps, activation="logistic")
        x = np.linspace(0, 1, 20001)
        assert np.max(np.abs(net(x) - np.sqrt(x))) <= 2 * eps


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), pieces=st.integers(2, 64), lo=st.floats(-0.5, 0.5))
def test_relu_form_exact_property(seed, pieces, lo):
    r = np.random.default_rng(seed)
    p = random_pwl(r, pieces).with_domain(lo, 1.0)
    net = pwl_to_relu(p)
    x = np.linspace(lo, 1, 2001)
    np.testing.assert_allclose(net(x), p(x), atol=1e-12)
    assert net.neurons <= p.pieces
