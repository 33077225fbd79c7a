"""Count and bound tables, scaling experiments, and CSV/JSON emission."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from korobov.hierarchy import (
    ErrorBudget,
    a_factor,
    count_indices,
    count_indices_closed_form,
    error_bound,
    hierarchize_hat,
    select_level,
)
from korobov.network import net_eval
from korobov.synthesis import (
    plan_korobov_deep,
    plan_korobov_shallow,
    synth_korobov_deep,
    synth_korobov_shallow,
    synth_korobov_shallow_general,
)

from .errors import sup_error
from .targets import KorobovTarget

SYNTHESIZERS = ("interpolant", "shallow", "shallow_general", "deep")
BOUND_TABLE_LIMITS = (6, 12)


@dataclass(frozen=True)
class ExperimentRow:
    """One (target, eps, synthesizer) measurement.

    ``neurons_by_layer`` lists hidden-layer widths; ``sup_error_measured`` is
    None when only counts were computed.
    """

    d: int
    n: int
    eps_target: float
    synthesizer: str
    activation: str
    neurons_by_layer: tuple[int, ...]
    depth: int
    trainable: int
    sup_error_measured: float | None
    bound_theoretical: float
    wall_time: float

    def __post_init__(self):
        if self.sup_error_measured is not None and not self.sup_error_measured >= 0:
            raise ValueError("sup_error_measured must be non-negative")
        if self.trainable != count_indices(self.d, self.n):
            raise ValueError("trainable must equal the sparse-grid index count")


FIELDS = [f.name for f in dataclasses.fields(ExperimentRow)]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, tuple):
        return ";".join(str(int(x)) for x in v)
    return str(v)


def rows_to_csv(rows: Iterable[ExperimentRow]) -> str:
    """CSV with one column per :class:`ExperimentRow` field, in field order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in FIELDS])
    return buf.getvalue()


def _parse(name: str, text: str):
    if name in ("d", "n", "depth", "trainable"):
        return int(text)
    if name in ("synthesizer", "activation"):
        return text
    if name == "neurons_by_layer":
        return tuple(int(x) for x in text.split(";")) if text else ()
    if name == "sup_error_measured" and text == "":
        return None
    return float(text)


def rows_from_csv(text: str) -> list[ExperimentRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != FIELDS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [ExperimentRow(**{k: _parse(k, rec[k]) for k in FIELDS}) for rec in reader]


def rows_to_json(rows: Iterable[ExperimentRow]) -> str:
    return json.dumps([{k: (list(v) if isinstance(v, tuple) else v)
                        for k, v in dataclasses.asdict(r).items()} for r in rows])


def rows_from_json(text: str) -> list[ExperimentRow]:
    out = []
    for rec in json.loads(text):
        rec["neurons_by_layer"] = tuple(rec["neurons_by_layer"])
        out.append(ExperimentRow(**rec))
    return out


def plan_row(target: KorobovTarget, eps: float, synthesizer: str = "shallow",
             activation: str = "relu") -> ExperimentRow:
    """Counts for one configuration without building the network."""
    d, s = target.dimension, target.seminorm
    t0 = time.perf_counter()
    if synthesizer == "interpolant":
        n = select_level(d, ErrorBudget(eps, s))
        widths, depth, bound = (), 0, error_bound(d, n, s)
    elif synthesizer in ("shallow", "shallow_general"):
        p = plan_korobov_shallow(d, s, eps, activation)
        n, widths, depth, bound = p["n"], (p["layer1"], p["layer2"]), 2, eps
    elif synthesizer == "deep":
        p = plan_korobov_deep(d, s, eps)
        n, widths, depth, bound = p["n"], (p["layer1"], *p["tree_layers"]), p["depth"], eps
    else:
        raise ValueError(f"unknown synthesizer {synthesizer!r}; choose from {SYNTHESIZERS}")
    return ExperimentRow(d, n, float(eps), synthesizer, activation, tuple(int(w) for w in widths),
                         depth, count_indices(d, n), None, float(bound), time.perf_counter() - t0)


def measured_row(target: KorobovTarget, eps: float, synthesizer: str = "shallow",
                 activation: str = "relu", samples: int = 2**14, seed: int = 0) -> ExperimentRow:
    """Build the approximant and measure its sup-error."""
    d, s = target.dimension, target.seminorm
    t0 = time.perf_counter()
    if synthesizer == "interpolant":
        n = select_level(d, ErrorBudget(eps, s))
        g = hierarchize_hat(target, d, n)
        widths, depth, bound, approx = (), 0, error_bound(d, n, s), g
    else:
        if synthesizer == "shallow":
            rep = synth_korobov_shallow(target, d, eps)
        elif synthesizer == "shallow_general":
            rep = synth_korobov_shallow_general(target, d, eps, activation)
        elif synthesizer == "deep":
            rep = synth_korobov_deep(target, d, eps, activation)
        else:
            raise ValueError(f"unknown synthesizer {synthesizer!r}; choose from {SYNTHESIZERS}")
        net = rep.net
        n, widths, depth, bound = rep.n_used, tuple(net.widths), net.depth, eps
        approx = lambda x: net_eval(net, x)  # noqa: E731
    err = sup_error(approx, target, d, samples=samples, level=n, seed=seed)
    return ExperimentRow(d, n, float(eps), synthesizer, activation, tuple(int(w) for w in widths),
                         depth, count_indices(d, n), err.value, float(bound), time.perf_counter() - t0)


@dataclass(frozen=True)
class ScalingResult:
    rows: list[ExperimentRow]
    slope: float
    intercept: float
    fitted: int


def fit_slope(eps: Sequence[float], trainable: Sequence[int], d: int) -> tuple[float, float, int]:
    """Least-squares slope of ``log(trainable / (log 1/eps)^{3(d-1)/2})`` against ``log(1/eps)``.

    Only the last half of the series enters the fit.
    """
    x = np.log(1.0 / np.asarray(eps, dtype=float))
    y = np.log(np.asarray(trainable, dtype=float)) - 1.5 * (d - 1) * np.log(x)
    k = len(x) // 2
    xs, ys = x[k:], y[k:]
    if np.ptp(xs) == 0:
        return 0.0, float(ys.mean()), len(xs)
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(intercept), len(xs)


def scaling_experiment(target: KorobovTarget, d: int | None = None, synthesizer: str = "shallow",
                       eps_list: Sequence[float] = (), activation: str = "relu",
                       measure: bool = False, samples: int = 2**14, seed: int = 0) -> ScalingResult:
    """Trainable-parameter counts over a decreasing eps series and the fitted exponent."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4:
        raise ValueError("need at least 4 eps values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if d is not None and d != target.dimension:
        raise ValueError("d does not match the target dimension")
    if measure:
        rows = [measured_row(target, e, synthesizer, activation, samples, seed) for e in eps_list]
    else:
        rows = [plan_row(target, e, synthesizer, activation) for e in eps_list]
    slope, intercept, k = fit_slope(eps_list, [r.trainable for r in rows], target.dimension)
    return ScalingResult(rows, slope, intercept, k)


def bound_table(d_max: int, n_max: int) -> list[dict]:
    """``A(d, n)``, the enumerated count and the alternating closed form side by side."""
    if d_max > BOUND_TABLE_LIMITS[0] or n_max > BOUND_TABLE_LIMITS[1]:
        raise ValueError(f"bound_table is limited to d <= {BOUND_TABLE_LIMITS[0]}, n <= {BOUND_TABLE_LIMITS[1]}")
    out = []
    for d in range(1, d_max + 1):
        for n in range(1, n_max + 1):
            a, c, cf = a_factor(d, n), count_indices(d, n), count_indices_closed_form(d, n)
            if max(a, c, abs(cf)) >= 2**53:
                raise OverflowError(f"table entry for d={d}, n={n} exceeds exact float range")
            out.append({"d": d, "n": n, "A": a, "count": c, "closed_form": cf, "agree": c == cf})
    return out


def lower_bound_params(d: int, eps: float) -> float:
    """Constant-free comparator ``eps^{-1/2} (log 1/eps)^{(d-1)/2}``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return eps**-0.5 * math.log(1.0 / eps) ** ((d - 1) / 2)
