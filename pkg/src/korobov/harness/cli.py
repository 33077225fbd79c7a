"""Command-line entry point ``korobov``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from korobov.hierarchy import ErrorBudget, error_bound, hierarchize_hat, select_level
from korobov.network import net_eval, net_from_json, net_to_json
from korobov.synthesis import (
    synth_korobov_deep,
    synth_korobov_shallow,
    synth_korobov_shallow_general,
    synth_product_report,
)

from .errors import sup_error
from .experiments import (
    SYNTHESIZERS,
    bound_table,
    lower_bound_params,
    measured_row,
    rows_to_csv,
    rows_to_json,
    scaling_experiment,
)
from .targets import get_target


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _dicts_to_csv(records: list[dict]) -> str:
    if not records:
        return ""
    keys = list(records[0])
    lines = [",".join(keys)]
    for r in records:
        lines.append(",".join("%.17g" % v if isinstance(v, float) else str(v) for v in r.values()))
    return "\n".join(lines) + "\n"


def _level(args, target) -> int:
    if args.level is not None:
        return args.level
    if args.eps is None:
        raise SystemExit("give --level or --eps")
    return select_level(target.dimension, ErrorBudget(args.eps, target.seminorm))


def cmd_grid_build(args) -> int:
    t = get_target(args.target, args.dim)
    n = _level(args, t)
    g = hierarchize_hat(t, t.dimension, n)
    doc = {
        "dimension": g.dimension,
        "level": n,
        "mother": g.mother.name.lower(),
        "error_bound": error_bound(g.dimension, n, t.seminorm),
        "surpluses": [{"level": list(li.level), "index": list(li.index), "value": v}
                      for li, v in g.surpluses.items()],
    }
    _emit(json.dumps(doc), args.out)
    return 0


def cmd_grid_error(args) -> int:
    t = get_target(args.target, args.dim)
    n = _level(args, t)
    g = hierarchize_hat(t, t.dimension, n)
    err = sup_error(g, t, t.dimension, samples=args.samples, level=n, seed=args.seed)
    rec = {"target": t.name, "d": t.dimension, "n": n, "sup_error": err.value,
           "argmax": err.argmax.tolist(), "bound": error_bound(t.dimension, n, t.seminorm),
           "points": err.points}
    if args.format == "csv":
        rec["argmax"] = ";".join("%.17g" % v for v in rec["argmax"])
        _emit(_dicts_to_csv([rec]), args.out)
    else:
        _emit(json.dumps(rec), args.out)
    return 0


def _write_report(rep, args) -> int:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(net_to_json(rep.net))
    summary = rep.to_dict()
    if args.measure:
        d = rep.net.input_dim
        t = get_target(args.target, d)
        net = rep.net
        err = sup_error(lambda x: net_eval(net, x), t, d, samples=args.samples,
                        level=rep.n_used, seed=args.seed)
        summary["sup_error"] = err.value
        summary["argmax"] = err.argmax.tolist()
    sys.stdout.write(json.dumps(summary, default=float) + "\n")
    return 0


def cmd_synth_shallow(args) -> int:
    t = get_target(args.target, args.dim)
    return _write_report(synth_korobov_shallow(t, t.dimension, args.eps), args)


def cmd_synth_shallow_general(args) -> int:
    t = get_target(args.target, args.dim)
    return _write_report(synth_korobov_shallow_general(t, t.dimension, args.eps, args.activation), args)


def cmd_synth_deep(args) -> int:
    t = get_target(args.target, args.dim)
    return _write_report(synth_korobov_deep(t, t.dimension, args.eps, args.activation), args)


def cmd_synth_product(args) -> int:
    rep = synth_product_report(args.dim, args.eps, args.activation)
    args.measure = False
    return _write_report(rep, args)


def cmd_net_eval(args) -> int:
    with open(args.net) as fh:
        net = net_from_json(fh.read())
    if args.points:
        x = np.loadtxt(args.points, delimiter=",", ndmin=2)
    else:
        x = np.array([[float(v) for v in p.split(",")] for p in args.x])
    y = np.atleast_1d(net_eval(net, x))
    if args.format == "csv":
        _emit("\n".join("%.17g" % v for v in y), args.out)
    else:
        _emit(json.dumps(y.tolist()), args.out)
    return 0


def cmd_report_bounds(args) -> int:
    table = bound_table(args.dim, args.level)
    if args.format == "csv":
        _emit(_dicts_to_csv(table), args.out)
    else:
        _emit(json.dumps(table), args.out)
    return 0 if all(r["agree"] for r in table) else 1


def cmd_report_scaling(args) -> int:
    t = get_target(args.target, args.dim)
    if args.eps is None:
        eps = np.logspace(-1, -4, args.points_per_series).tolist()
    else:
        eps = args.eps
    if args.measure and len(eps) == 1:
        rows = [measured_row(t, eps[0], args.synthesizer, args.activation, args.samples, args.seed)]
        _emit(rows_to_csv(rows) if args.format == "csv" else rows_to_json(rows), args.out)
        return 0
    res = scaling_experiment(t, t.dimension, args.synthesizer, eps, args.activation,
                             measure=args.measure, samples=args.samples, seed=args.seed)
    if args.format == "csv":
        _emit(rows_to_csv(res.rows), args.out)
    else:
        _emit(json.dumps({"rows": json.loads(rows_to_json(res.rows)), "slope": res.slope,
                          "intercept": res.intercept, "fitted_points": res.fitted}), args.out)
    ratios = ", ".join("%.3g" % (r.trainable / lower_bound_params(r.d, r.eps_target)) for r in res.rows)
    sys.stderr.write(f"fitted slope {res.slope:.4f} over {res.fitted} points\n")
    sys.stderr.write(f"trainable / lower-bound comparator: {ratios}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dim", type=int, default=2, help="input dimension d")
    common.add_argument("--target", default="P", help="registry name: P, S or Z")
    common.add_argument("--activation", default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path (stdout if omitted)")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--samples", type=int, default=2**14, help="low-discrepancy samples for sup-error")

    parser = argparse.ArgumentParser(prog="korobov", description="Sparse-grid approximation and training-free network synthesis.")
    top = parser.add_subparsers(dest="group", required=True)

    grid = top.add_parser("grid").add_subparsers(dest="cmd", required=True)
    for name, fn in (("build", cmd_grid_build), ("error", cmd_grid_error)):
        p = grid.add_parser(name, parents=[common])
        p.add_argument("--level", type=int, default=None)
        p.add_argument("--eps", type=float, default=None)
        p.set_defaults(func=fn)

    net = top.add_parser("net").add_subparsers(dest="cmd", required=True)
    synths = (
        ("synth-shallow", cmd_synth_shallow, "relu"),
        ("synth-shallow-general", cmd_synth_shallow_general, "softplus"),
        ("synth-deep", cmd_synth_deep, "softplus"),
        ("synth-product", cmd_synth_product, "relu"),
    )
    for name, fn, act in synths:
        p = net.add_parser(name, parents=[common])
        p.add_argument("--eps", type=float, required=True)
        p.add_argument("--measure", action="store_true", help="also estimate the sup-error")
        p.set_defaults(func=fn, default_activation=act)
    p = net.add_parser("eval", parents=[common])
    p.add_argument("--net", required=True, help="NetSpec JSON file")
    p.add_argument("--points", default=None, help="CSV file of points, one per row")
    p.add_argument("--x", nargs="*", default=[], help="points as comma-separated coordinates")
    p.set_defaults(func=cmd_net_eval)

    report = top.add_parser("report").add_subparsers(dest="cmd", required=True)
    p = report.add_parser("bounds", parents=[common])
    p.add_argument("--level", type=int, default=8, help="largest n in the table")
    p.set_defaults(func=cmd_report_bounds)
    p = report.add_parser("scaling", parents=[common])
    p.add_argument("--eps", type=float, nargs="+", default=None, help="decreasing eps series")
    p.add_argument("--points-per-series", type=int, default=31)
    p.add_argument("--synthesizer", choices=SYNTHESIZERS, default="shallow")
    p.add_argument("--measure", action="store_true")
    p.set_defaults(func=cmd_report_scaling, default_activation="relu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.activation is None:
        args.activation = getattr(args, "default_activation", "relu")
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
