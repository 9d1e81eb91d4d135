"""Command-line interface: ``oneshot {fit,ci,wald,gof,tune,simulate}``.

Every command prints a JSON report (or writes it with ``--out``).  Exit
codes: 0 success, 2 invalid input, 3 non-convergence or numerically
singular inference, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys

import numpy as np

from . import __version__, kernels
from .adequacy import DEFAULT_PILOT, goodness_of_fit, select_beta_distance, select_beta_wj
from .errors import EstimationPrecisionError, OneShotError, PowerUndefinedError, ValidationError
from .estimation import FitOptions, fit
from .inference import ci_logit, ci_plain, sandwich_sigma
from .io import (
    design_from_config,
    dump_report,
    file_sha256,
    load_config,
    read_device_table,
    write_long_csv,
)
from .model import WeibullTruth, inspection_index
from .simulation import DEFAULT_SEED, mc_bias_mse, mc_level_power, power_alternative, unbalanced_design
from .wald import AffineConstraint, wald_statistic

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NONCONVERGED = 3
EXIT_USAGE = 64

log = logging.getLogger("oneshot")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _provenance(args, input_path=None):
    return {
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "input_sha256": file_sha256(input_path) if input_path else None,
        "backend": kernels.BACKEND,
    }


def _options(args):
    return FitOptions(
        max_iterations=args.max_iter,
        gradient_tolerance=args.tol,
        restarts=args.restarts,
        seed=args.seed,
    )


def _load(args):
    return read_device_table(args.data)


def _fit_all(data, betas, options):
    fits = [fit(data, b, options) for b in betas]
    return fits, all(f.converged for f in fits)


def _fit_entry(f, names):
    d = f.as_dict()
    d["parameters"] = dict(zip(names, f.theta_hat.vector.tolist()))
    return d


def cmd_fit(args):
    table = _load(args)
    fits, ok = _fit_all(table.data, args.beta, _options(args))
    names = fits[0].theta_hat.names()
    report = {"fits": [_fit_entry(f, names) for f in fits]}
    return report, ok


def cmd_ci(args):
    table = _load(args)
    data = table.data
    plan = data.plan
    x0 = np.asarray(args.x0, dtype=float)
    if x0.shape != (plan.n_factors,):
        raise ValidationError(f"--x0 needs {plan.n_factors} values")
    idx = [inspection_index(plan, t) for t in args.time] if args.time else range(plan.n_times)
    methods = ("plain", "logit") if args.method == "both" else (args.method,)
    out, ok = [], True
    for b in args.beta:
        f = fit(data, b, _options(args))
        ok &= f.converged
        cov = sandwich_sigma(plan, f.theta_hat, b)
        for i in idx:
            for m in methods:
                ci = (ci_logit if m == "logit" else ci_plain)(f, cov, i, x0, args.level)
                entry = {"beta": b, "time": float(plan.inspection_times[i]), "x0": x0.tolist()}
                entry.update(ci.as_dict())
                out.append(entry)
    return {"intervals": out}, ok


_COEF = re.compile(r"^\s*(eta|alpha)(\d+)\s*=\s*(\S+)\s*$")


def _constraint(args, theta_names):
    dim = len(theta_names)
    rows, rhs, labels = [], [], []
    for spec in args.coef or []:
        m = _COEF.match(spec)
        if not m or f"{m.group(1)}{m.group(2)}" not in theta_names:
            raise ValidationError(f"--coef expects NAME=VALUE with NAME in {theta_names}, got {spec!r}")
        name = f"{m.group(1)}{m.group(2)}"
        row = np.zeros(dim)
        row[theta_names.index(name)] = 1.0
        rows.append(row)
        rhs.append(float(m.group(3)))
        labels.append(spec.strip())
    for spec in args.row or []:
        try:
            lhs, value = spec.split(":")
            row = np.array([float(v) for v in lhs.split(",")])
            value = float(value)
        except ValueError:
            raise ValidationError(f"--row expects 'c1,...,cP:rhs', got {spec!r}") from None
        if row.shape != (dim,):
            raise ValidationError(f"--row needs {dim} coefficients")
        rows.append(row)
        rhs.append(value)
        labels.append(spec.strip())
    if not rows:
        raise ValidationError("give at least one --coef or --row hypothesis")
    return AffineConstraint(np.array(rows), rhs, labels)


def cmd_wald(args):
    table = _load(args)
    data = table.data
    out, ok = [], True
    for b in args.beta:
        f = fit(data, b, _options(args))
        ok &= f.converged
        constraint = _constraint(args, f.theta_hat.names())
        cov = sandwich_sigma(data.plan, f.theta_hat, b)
        res = wald_statistic(f, cov, constraint, args.level)
        entry = res.as_dict()
        entry["hypotheses"] = list(constraint.labels)
        out.append(entry)
    return {"wald": out}, ok


def cmd_gof(args):
    table = _load(args)
    out, ok = [], True
    for b in args.beta:
        f = fit(table.data, b, _options(args))
        ok &= f.converged
        out.append(goodness_of_fit(table.data, f).as_dict())
    return {"gof": out}, ok


def cmd_tune(args):
    table = _load(args)
    options = _options(args)
    if args.criterion == "distance":
        sel = select_beta_distance(table.data, args.grid, options)
    else:
        sel = select_beta_wj(table.data, args.grid, args.pilot, options)
    return {"tuning": sel.as_dict()}, True


def _alternative(exp, design):
    alt = exp.get("alternative")
    if alt is None:
        return None
    if alt == "default":
        return power_alternative(design.truth)
    return WeibullTruth(float(alt["b"]), float(alt["c0"]), [float(v) for v in alt["c"]])


def cmd_simulate(args):
    cfg = load_config(args.config)
    exp = cfg.get("experiment", {})
    kind = exp.get("type", "bias_mse")
    design = design_from_config(cfg, args.seed, args.replicates)
    args.seed = design.seed
    sweep = exp.get("sweep_r")
    if sweep and cfg["design"].get("kind") != "unbalanced":
        raise ValidationError("sweep_r applies to unbalanced designs only")
    designs = [(None, design)]
    if sweep:
        designs = [
            (int(r), unbalanced_design(int(r), design.contamination is not None,
                                       design.replicates, design.betas, design.seed, design.truth.c0))
            for r in sweep
        ]
    runs, rows = [], []
    for r, d in designs:
        if kind == "bias_mse":
            s = mc_bias_mse(d)
        elif kind == "level_power":
            constraint = None
            if "null_alpha1" in exp:
                constraint = AffineConstraint.coordinate(
                    d.plan.n_times, float(exp["null_alpha1"]), d.plan.n_times + d.plan.n_factors, "alpha1"
                )
            s = mc_level_power(d, constraint, float(exp.get("level", 0.05)), _alternative(exp, d))
        else:
            raise ValidationError(f"unknown experiment type {kind!r}")
        entry = s.as_dict()
        if r is not None:
            entry["r"] = r
        runs.append(entry)
        rows.extend(s.long_rows("r", r) if r is not None else s.long_rows())
    if args.emit_plot_data:
        write_long_csv(rows, args.emit_plot_data)
    return {"simulation": {"type": kind, "runs": runs}}, True


def build_parser():
    p = _Parser(prog="oneshot", description="Robust DPD inference for one-shot device test data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True, help="device CSV file")
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        sp.add_argument("--raw", action="store_true", help="full float precision in the report")
        sp.add_argument("--seed", type=int, default=None, help=f"random seed (default {DEFAULT_SEED})")
        sp.add_argument("--max-iter", type=int, default=500)
        sp.add_argument("--tol", type=float, default=1e-8, help="gradient tolerance")
        sp.add_argument("--restarts", type=int, default=3)
        sp.add_argument("-v", "--verbose", action="store_true")

    def betas(sp, default=(0.0,)):
        sp.add_argument("--beta", type=float, nargs="+", default=list(default), help="tuning parameter(s)")

    sp = sub.add_parser("fit", help="weighted minimum DPD estimates")
    common(sp)
    betas(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("ci", help="reliability confidence intervals")
    common(sp)
    betas(sp)
    sp.add_argument("--x0", type=float, nargs="+", required=True, help="normal operating condition")
    sp.add_argument("--time", type=float, nargs="+", help="inspection time(s); default all")
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--method", choices=("logit", "plain", "both"), default="logit")
    sp.set_defaults(func=cmd_ci)

    sp = sub.add_parser("wald", help="Wald-type test of affine hypotheses")
    common(sp)
    betas(sp)
    sp.add_argument("--coef", action="append", help="coordinate hypothesis NAME=VALUE, e.g. alpha1=0.02")
    sp.add_argument("--row", action="append", help="general row 'c1,...,cP:rhs'")
    sp.add_argument("--level", type=float, default=0.05)
    sp.set_defaults(func=cmd_wald)

    sp = sub.add_parser("gof", help="distance statistic and exact p-value")
    common(sp)
    betas(sp)
    sp.set_defaults(func=cmd_gof)

    sp = sub.add_parser("tune", help="select the tuning parameter")
    common(sp)
    sp.add_argument("--criterion", choices=("distance", "wj"), default="distance")
    sp.add_argument("--grid", type=float, nargs="+", help="beta grid (default depends on criterion)")
    sp.add_argument("--pilot", type=float, default=DEFAULT_PILOT, help="pilot beta for wj")
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("simulate", help="Monte Carlo bias/MSE or Wald level/power")
    common(sp, data=False)
    sp.add_argument("--config", required=True, help="TOML experiment config")
    sp.add_argument("--replicates", type=int, help="override the config's replicate count")
    sp.add_argument("--emit-plot-data", metavar="CSV", help="also write long-format CSV for plotting")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None:
        args.seed = DEFAULT_SEED if args.command != "simulate" else None
    try:
        report, ok = args.func(args)
    except (ValidationError, PowerUndefinedError) as exc:
        print(f"oneshot: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EstimationPrecisionError as exc:
        print(f"oneshot: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except OneShotError as exc:
        print(f"oneshot: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    source = getattr(args, "data", None) or getattr(args, "config", None)
    full = {"command": args.command, "provenance": _provenance(args, source)}
    full.update(report)
    text = dump_report(full, raw=args.raw)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not ok:
        print("oneshot: at least one fit did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
