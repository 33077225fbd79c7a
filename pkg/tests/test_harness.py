import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from korobov.harness.errors import grid_level_cap, sample_points, sup_error
from korobov.harness.experiments import (
    ExperimentRow,
    bound_table,
    fit_slope,
    lower_bound_params,
    measured_row,
    plan_row,
    rows_from_csv,
    rows_from_json,
    rows_to_csv,
    rows_to_json,
    scaling_experiment,
)
from korobov.harness.targets import custom_target, estimate_seminorm, get_target, registry
from korobov.hierarchy import count_indices, error_bound, hierarchize_hat


class TestTargets:
    def test_registry(self):
        names = {t.name: t for t in registry(3)}
        assert set(names) == {"P", "S", "Z"}
        assert names["P"].seminorm == 8.0**3
        assert names["S"].seminorm == pytest.approx(math.pi**6)
        assert names["Z"].seminorm == 0.0

    def test_values(self):
        p, s = get_target("P", 2), get_target("S", 2)
        assert p(np.array([0.5, 0.5])) == 1.0
        assert s(np.array([0.5, 0.5])) == pytest.approx(1.0)
        np.testing.assert_allclose(p(np.array([[0.0, 0.3], [1.0, 0.2]])), 0.0)

    def test_aliases(self):
        assert get_target("sine", 2).name == "S"
        with pytest.raises(KeyError):
            get_target("Q", 2)

    @pytest.mark.parametrize("name", ["P", "S"])
    @pytest.mark.parametrize("d", [1, 2])
    def test_seminorm_matches_estimate(self, name, d):
        t = get_target(name, d)
        est = estimate_seminorm(t, d, inflation=1.0, samples=2000)
        assert est <= t.seminorm * (1 + 1e-3)
        assert est >= 0.9 * t.seminorm

    def test_custom(self):
        t = custom_target("cube", 1, lambda x: (x[:, 0] * (1 - x[:, 0])) ** 2)
        assert not t.seminorm_exact
        # (x - x^2)^2 has |f''| = |2 - 12x + 12x^2| <= 2
        assert 2.0 <= t.seminorm <= 2.3


class TestSupError:
    def test_identical(self):
        p = get_target("P", 2)
        assert sup_error(p, p, 2).value == 0.0

    def test_zero_vs_p1(self):
        p = get_target("P", 1)
        err = sup_error(lambda x: np.zeros(len(x)), p, 1)
        assert err.value == 1.0
        np.testing.assert_array_equal(err.argmax, [0.5])

    def test_interpolant_dominated(self):
        p = get_target("P", 2)
        g = hierarchize_hat(p, 2, 3)
        assert sup_error(g, p, 2, level=3).value <= error_bound(2, 3, 64.0)

    def test_deterministic(self):
        p, s = get_target("P", 2), get_target("S", 2)
        a = sup_error(p, s, 2, seed=7)
        b = sup_error(p, s, 2, seed=7)
        assert a.value == b.value
        np.testing.assert_array_equal(a.argmax, b.argmax)

    def test_point_set(self):
        pts = sample_points(2, level=3)
        assert np.all((pts >= 0) & (pts <= 1))
        assert len(pts) == 2**14 + 33**2
        with pytest.raises(ValueError):
            sample_points(2, samples=100)

    def test_grid_cap(self):
        for d in range(1, 7):
            L = grid_level_cap(d)
            assert (2**L + 1) ** d <= 2**17 < (2 ** (L + 1) + 1) ** d or L == 1


class TestRows:
    def row(self, **kw):
        base = dict(d=2, n=3, eps_target=0.1, synthesizer="shallow", activation="relu",
                    neurons_by_layer=(10, 5), depth=2, trainable=17, sup_error_measured=0.01,
                    bound_theoretical=0.1, wall_time=0.5)
        base.update(kw)
        return ExperimentRow(**base)

    def test_invariants(self):
        with pytest.raises(ValueError):
            self.row(trainable=5)
        with pytest.raises(ValueError):
            self.row(sup_error_measured=-1.0)

    def test_csv_header(self):
        text = rows_to_csv([self.row()])
        assert text.splitlines()[0] == ("d,n,eps_target,synthesizer,activation,neurons_by_layer,depth,"
                                        "trainable,sup_error_measured,bound_theoretical,wall_time")
        assert "10;5" in text

    def test_round_trips(self):
        rows = [self.row(), self.row(sup_error_measured=None, eps_target=1 / 3)]
        assert rows_from_csv(rows_to_csv(rows)) == rows
        assert rows_from_json(rows_to_json(rows)) == rows
        assert rows_from_json(rows_to_json(rows_from_csv(rows_to_csv(rows)))) == rows

    def test_plan_row(self):
        r = plan_row(get_target("P", 2), 0.1, "deep")
        assert r.trainable == count_indices(2, r.n) and r.depth == 2
        with pytest.raises(ValueError):
            plan_row(get_target("P", 2), 0.1, "other")

    def test_measured_row(self):
        r = measured_row(get_target("S", 2), 0.2, "interpolant")
        assert 0 <= r.sup_error_measured <= r.bound_theoretical


class TestScaling:
    def test_d1(self):
        res = scaling_experiment(get_target("P", 1), 1, "interpolant", np.logspace(-1, -4, 31))
        for r in res.rows:
            assert r.trainable == 2**r.n - 1
        assert res.slope == pytest.approx(0.5, abs=0.1)

    def test_d2(self):
        res = scaling_experiment(get_target("P", 2), 2, "shallow", np.logspace(-1, -4, 31))
        assert 0.35 <= res.slope <= 0.65

    def test_zero(self):
        res = scaling_experiment(get_target("Z", 2), 2, "shallow", [0.2, 0.1, 0.05, 0.01])
        assert all(r.n == 1 for r in res.rows)

    def test_validation(self):
        with pytest.raises(ValueError):
            scaling_experiment(get_target("P", 1), 1, "shallow", [0.1, 0.05, 0.01])
        with pytest.raises(ValueError):
            scaling_experiment(get_target("P", 1), 1, "shallow", [0.1, 0.2, 0.01, 0.001])

    def test_fit_recovers_power(self):
        eps = np.logspace(-1, -5, 20)
        slope, _, k = fit_slope(eps, 3 * eps**-0.5 * np.log(1 / eps) ** 3, 3)
        assert slope == pytest.approx(0.5, abs=1e-12) and k == 10

    def test_measured(self):
        res = scaling_experiment(get_target("S", 1), 1, "interpolant", [0.1, 0.05, 0.02, 0.01], measure=True)
        assert all(r.sup_error_measured <= r.bound_theoretical for r in res.rows)


class TestTables:
    def test_bound_table(self):
        table = bound_table(6, 12)
        assert all(r["agree"] for r in table)
        cell = next(r for r in table if r["d"] == 2 and r["n"] == 3)
        assert (cell["A"], cell["count"], cell["closed_form"]) == (5, 17, 17)

    def test_limits(self):
        with pytest.raises(ValueError):
            bound_table(7, 3)
        with pytest.raises(ValueError):
            bound_table(2, 13)

    def test_lower_bound(self):
        assert lower_bound_params(1, 1e-4) == pytest.approx(100.0)
        assert lower_bound_params(3, math.exp(-1)) == pytest.approx(math.exp(0.5))
        with pytest.raises(ValueError):
            lower_bound_params(2, 1.0)

    def test_ratio_grows_like_log_power(self):
        # trainable / comparator over (log 1/eps)^(d-1) stays within a constant band
        d = 2
        ratios = []
        for eps in np.logspace(-2, -6, 5):
            r = plan_row(get_target("P", d), eps, "interpolant")
            ratios.append(r.trainable / lower_bound_params(d, eps) / math.log(1 / eps) ** (d - 1))
        assert max(ratios) / min(ratios) < 4


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 3), eps=st.floats(1e-3, 0.24), synth=st.sampled_from(["interpolant", "shallow"]))
def test_plan_rows_round_trip(d, eps, synth):
    row = plan_row(get_target("S", d), eps, synth)
    assert rows_from_csv(rows_to_csv([row])) == [row]
