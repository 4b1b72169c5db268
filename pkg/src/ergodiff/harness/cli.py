"""Command line entry point.

Exit codes: 0 when the command succeeds and its checks pass, 2 on an
experiment failure, 3 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from ..bounds import FORMULAS, BoundParams, evaluate_formula
from ..entropy import (
    entropy_report,
    hat_translate_class,
    kernel_translate_class,
    l2_metric,
    write_entropy_report,
)
from ..errors import ConfigurationError, Error, ExperimentError, ParameterError
from ..estimators import (
    bias_bound,
    evaluation_grid,
    exact_bias,
    kernel_density,
    local_time_density,
    make_kernel,
    write_density_csv,
)
from ..functionals import local_time_occupation, local_time_tanaka, write_local_time_csv
from ..model import make_drift, validate_drift
from ..simulate import SeedStream, simulate_path, write_path_csv
from .config import TAIL_TARGETS, ExperimentConfig
from .experiments import (
    law_for,
    run_decomposition_experiment,
    run_localtime_check,
    run_risk_experiment,
    run_tail_experiment,
)

EXIT_OK = 0
EXIT_EXPERIMENT = 2
EXIT_CONFIG = 3


def _parse_at(text: str) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"expected name=value in --at, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ConfigurationError(f"not a number in --at: {item!r}") from None
    return out


def _alpha(text: str) -> float:
    values = {"2/3": 2.0 / 3.0, "1": 1.0, "2": 2.0}
    if text not in values:
        raise ConfigurationError(f"alpha must be one of {sorted(values)}")
    return values[text]


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    data = cfg.to_dict()
    if args.seed is not None:
        data["root_seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = args.out
    return ExperimentConfig.from_dict(data)


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _out_file(cfg, name):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _path(cfg, args):
    horizon = args.horizon if args.horizon is not None else cfg.horizons[0]
    return simulate_path(law_for(cfg), cfg.delta, horizon, SeedStream(cfg.root_seed, args.stream))


# --------------------------------------------------------------------------
# commands


def cmd_validate_drift(cfg, args):
    rep = validate_drift(make_drift(cfg.drift, cfg.drift_params, cfg.certificate, cfg.holder))
    _emit({"passed": rep.passed, "first_violation": rep.first_violation, "violation_kind": rep.violation_kind,
           "growth_margin": rep.growth_margin, "dissipativity_margin": rep.dissipativity_margin})
    return EXIT_OK if rep.passed else EXIT_EXPERIMENT


def cmd_simulate(cfg, args):
    path = _path(cfg, args)
    file = _out_file(cfg, f"path_{path.stream_index}.csv")
    write_path_csv(path, file)
    _emit({"file": file, "n_steps": path.n_steps, "path": path.ident})
    return EXIT_OK


def cmd_local_time(cfg, args):
    path = _path(cfg, args)
    method = args.method or cfg.local_time_method
    lt = local_time_tanaka(path) if method == "tanaka" else local_time_occupation(path, epsilon=cfg.epsilon)
    file = _out_file(cfg, f"local_time_{method}_{path.stream_index}.csv")
    write_local_time_csv(lt, file)
    _emit({"file": file, "method": method, "total_occupation": lt.total_occupation(), "horizon": path.horizon})
    return EXIT_OK


def cmd_estimate_density(cfg, args):
    path = _path(cfg, args)
    law = law_for(cfg)
    h = cfg.bandwidth_for(path.horizon)
    grid = evaluation_grid(law, h)
    if args.estimator == "kernel":
        est = kernel_density(path, make_kernel(cfg.kernel_order), h, grid)
    else:
        est = local_time_density(local_time_tanaka(path, grid), path.horizon)
    file = _out_file(cfg, f"density_{args.estimator}_{path.stream_index}.csv")
    write_density_csv(est, law, file, {"estimator": args.estimator})
    truth = np.atleast_1d(law.density(est.xs))
    _emit({"file": file, "sup_error": float(np.max(np.abs(est.ys - truth))), "bandwidth": h})
    return EXIT_OK


def cmd_bias(cfg, args):
    law = law_for(cfg)
    hold = law.drift.holder
    if hold is None:
        raise ConfigurationError("the drift has no Hoelder certificate; set holder in the configuration")
    kernel = make_kernel(cfg.kernel_order)
    rows = []
    for h in args.h:
        grid = evaluation_grid(law, h)
        sup = float(np.max(np.abs(exact_bias(law, kernel, h, grid).ys)))
        bound = bias_bound(kernel, h, hold.beta, hold.L_holder)
        rows.append({"h": h, "sup_bias": sup, "bound": bound, "pass": sup <= bound})
    _emit({"beta": hold.beta, "L_holder": hold.L_holder, "rows": rows})
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_EXPERIMENT


def cmd_decompose(cfg, args):
    res = run_decomposition_experiment(cfg, workers=args.workers, out_dir=cfg.output_dir)
    _emit(res.report)
    return EXIT_OK if res.passed else EXIT_EXPERIMENT


def cmd_entropy(cfg, args):
    alpha = _alpha(args.alpha)
    centers = np.linspace(-1.0, 1.0, args.members)
    if args.cls == "kernel":
        fc = kernel_translate_class(make_kernel(cfg.kernel_order), args.h, centers)
    else:
        fc = hat_translate_class(args.h, centers)
    ctx = {"p": args.p, "Lambda_t": args.lambda_t, "Gamma": args.gamma}
    report = entropy_report(fc, l2_metric(), alpha, args.mode, ctx)
    write_entropy_report(report, _out_file(cfg, f"entropy_{args.cls}_{args.mode}.json"))
    _emit(report)
    return EXIT_OK


def cmd_bounds_eval(cfg, args):
    data = {}
    if args.params:
        try:
            with open(args.params) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read bound parameters {args.params}: {exc}") from None
    bp = BoundParams.from_dict(data)
    at = _parse_at(args.at)
    value = evaluate_formula(args.formula, bp, at)
    _emit({"formula": args.formula, "inputs": at, "value": value, "finite": math.isfinite(value)})
    return EXIT_OK


def cmd_mc_risk(cfg, args):
    res = run_risk_experiment(cfg, workers=args.workers, out_dir=cfg.output_dir)
    _emit(res.report)
    return EXIT_OK if res.passed else EXIT_EXPERIMENT


def cmd_mc_tail(cfg, args):
    res = run_tail_experiment(cfg, args.target, workers=args.workers, out_dir=cfg.output_dir)
    _emit(res.report)
    return EXIT_OK if res.passed else EXIT_EXPERIMENT


def cmd_localtime_check(cfg, args):
    res = run_localtime_check(cfg, args.horizon or 400.0, args.paths, workers=args.workers,
                              out_dir=cfg.output_dir)
    _emit(res.report)
    return EXIT_OK if res.passed else EXIT_EXPERIMENT


# --------------------------------------------------------------------------
# parser


def _global_flags(parser, suppress):
    # subcommands repeat the flags with suppressed defaults so that a value
    # given before the subcommand is not reset by the subparser
    keep = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", help="JSON experiment configuration", **keep)
    parser.add_argument("--seed", type=int, help="root seed, overrides the configuration", **keep)
    parser.add_argument("--out", help="output directory, overrides the configuration", **keep)
    parser.add_argument("--workers", type=int, help="worker processes",
                        **(keep or {"default": 1}))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    parser = argparse.ArgumentParser(prog="ergodiff", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=fn)
        return p

    def path_args(p):
        p.add_argument("--horizon", type=float, help="defaults to the first configured horizon")
        p.add_argument("--stream", type=int, default=0, help="stream index under the root seed")

    add("validate-drift", cmd_validate_drift, "check the drift class inequalities on a grid")
    path_args(add("simulate", cmd_simulate, "simulate one stationary path to CSV"))
    p = add("local-time", cmd_local_time, "local time field of one path")
    path_args(p)
    p.add_argument("--method", choices=["tanaka", "occupation"])
    p = add("local-time-check", cmd_localtime_check, "occupation formula and Tanaka identity check")
    p.add_argument("--horizon", type=float)
    p.add_argument("--paths", type=int, default=1)
    p = add("estimate-density", cmd_estimate_density, "density estimate of one path")
    path_args(p)
    p.add_argument("--estimator", choices=["kernel", "localtime"], default="kernel")
    p = add("bias", cmd_bias, "exact kernel bias against its bound")
    p.add_argument("--h", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.01])
    add("decompose", cmd_decompose, "martingale decomposition experiment")
    p = add("entropy", cmd_entropy, "entropy integral of a translation class")
    p.add_argument("--class", dest="cls", choices=["kernel", "hat"], default="kernel")
    p.add_argument("--alpha", default="1", help="one of 2/3, 1, 2")
    p.add_argument("--mode", choices=["numeric", "closed_form"], default="numeric")
    p.add_argument("--h", type=float, default=0.1, help="bandwidth or half width")
    p.add_argument("--members", type=int, default=20)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--lambda-t", dest="lambda_t", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)

    bounds = sub.add_parser("bounds", parents=[common], help="evaluate a bound formula")
    bsub = bounds.add_subparsers(dest="bounds_command", required=True)
    ev = bsub.add_parser("eval", parents=[common], help="evaluate a named formula")
    ev.set_defaults(func=cmd_bounds_eval)
    ev.add_argument("--formula", required=True, choices=sorted(FORMULAS))
    ev.add_argument("--params", help="JSON file of bound parameters")
    ev.add_argument("--at", default="", help="inputs such as t=100,p=2,u=1")

    add("mc-risk", cmd_mc_risk, "sup-norm risk experiment")
    p = add("mc-tail", cmd_mc_tail, "calibrated tail experiment")
    p.add_argument("--target", choices=list(TAIL_TARGETS), required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; report them as configuration errors
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = _load_config(args)
        return args.func(cfg, args)
    except (ConfigurationError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentError, Error) as exc:
        print(f"experiment failure: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())
