"""Command-line entry point: ``mpmpg <command> ...``.

On failure the last line on stderr is a single JSON object with an ``error``
code and context fields, and the exit status is nonzero.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks
from .biaslab import KINDS, REWARDS, BiasExperiment, grid_search, run_bias_experiment
from .errors import MpmpgError
from .harness import emit_plot, parse_config, read_aggregate, read_curve_csv, run_suite, speedup_factor


def _series(path, name):
    """(x, mean, ci) from an aggregate CSV or a single-run CSV."""
    with open(path) as f:
        header = f.readline()
    if header.startswith("config,"):
        series = read_aggregate(path)
        if name is None:
            if len(series) != 1:
                raise ValueError(f"{path} holds {sorted(series)}; pick one with --*-series")
            name = next(iter(series))
        if name not in series:
            raise ValueError(f"{path} has no series {name!r}")
        return series[name]
    c = read_curve_csv(path)
    return c["collected"], c["mean_return"], np.zeros_like(c["mean_return"])


def cmd_run(args):
    suite = parse_config(args.config)
    agg, faults = run_suite(suite, args.out_dir, args.threads)
    print(f"aggregate: {agg}")
    if not args.no_plot:
        print(f"plot: {emit_plot(agg, agg.with_suffix('.svg'))}")
    for name, seed, err in faults:
        print(f"fault: {name} seed {seed}: {err}")
    return 0


def cmd_speedup(args):
    res = speedup_factor(
        _series(args.rpg, args.rpg_series), _series(args.baseline, args.baseline_series), args.omega
    )
    print(f"s = {res.factor:.2f}  [{res.ci_low:.2f}, {res.ci_high:.2f}]  mse = {res.mse:.4g}")
    return 0


def cmd_plot(args):
    print(emit_plot(args.aggregate, args.out))
    return 0


def cmd_biaslab(args):
    kinds = KINDS if args.kind == "all" else [args.kind]
    for kind in kinds:
        if args.grid:
            reports = grid_search(kind, args.reps, args.seed, theta_bar=args.theta_bar)
        else:
            exp = BiasExperiment(
                kind, args.reward, args.zeta, theta_bar=args.theta_bar, reps=args.reps, seed=args.seed
            )
            reports = [run_bias_experiment(exp)]
        for r in reports:
            e = r.experiment
            print(
                f"{kind:17s} {e.reward:9s} zeta={e.zeta:<5} bias={r.bias:+.5f} "
                f"se={r.std_error:.5f} z={r.z:+8.2f} {r.verdict}"
            )
    return 0


def cmd_divcheck(args):
    ok = True
    for line, passed in checks.divergence_checks(args.samples, args.seed):
        print(line)
        ok &= passed
    return 0 if ok else 1


def cmd_oracle(args):
    ok = True
    for line, passed in checks.oracle_checks(args.samples, args.seed):
        print(line)
        ok &= passed
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="mpmpg", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=1, help="parallel jobs for suites")
    p.add_argument("--out-dir", type=Path, default=None, help="override the output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment suite from a config file")
    r.add_argument("config", type=Path)
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("speedup", help="speedup factor of one learning curve over another")
    s.add_argument("rpg", type=Path)
    s.add_argument("baseline", type=Path)
    s.add_argument("--omega", type=float, required=True)
    s.add_argument("--rpg-series", default=None)
    s.add_argument("--baseline-series", default=None)
    s.set_defaults(func=cmd_speedup)

    pl = sub.add_parser("plot", help="plot an aggregate CSV as SVG")
    pl.add_argument("aggregate", type=Path)
    pl.add_argument("out", type=Path)
    pl.set_defaults(func=cmd_plot)

    b = sub.add_parser("biaslab", help="Monte-Carlo bias checks on the Gaussian bandit")
    b.add_argument("kind", choices=list(KINDS) + ["all"])
    b.add_argument("--reps", type=int, default=10**6)
    b.add_argument("--reward", choices=REWARDS, default="LINEAR")
    b.add_argument("--zeta", type=float, default=0.5)
    b.add_argument("--theta-bar", type=float, default=0.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--grid", action="store_true", help="sweep zeta and reward map")
    b.set_defaults(func=cmd_biaslab)

    d = sub.add_parser("divcheck", help="closed-form vs Monte-Carlo divergence checks")
    d.add_argument("--samples", type=int, default=10**6)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_divcheck)

    o = sub.add_parser("oracle", help="estimator unbiasedness against exact enumeration")
    o.add_argument("--samples", type=int, default=10**5)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except MpmpgError as err:
        print(json.dumps({"error": err.code, "message": str(err), **err.fields()}), file=sys.stderr)
        return 2
    except (ValueError, OSError) as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
