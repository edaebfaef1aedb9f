"""``medmarg`` command-line interface.

Subcommands: ``fit``, ``mediate``, ``marginal``, ``sensitivity``, ``simulate``.
Exit codes: 0 success, 2 input error, 3 numerical failure, 4 partial study.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import InputError, InvalidConfig, NonConvergence, NumericalError
from .marginalize import StructuralModel, marginal_logit_terms, marginal_prob_exact
from .mediation import mediate
from .regression import _irls, fit_joint
from .reports import (
    dump_json,
    fit_parameter_rows,
    fit_to_dict,
    load_study_config,
    mediation_to_csv,
    mediation_to_dict,
    read_csv_columns,
    read_dataset,
    rows_to_csv,
    study_to_csv,
    study_to_dict,
    PARAM_COLUMNS,
    SCHEMA_VERSION,
)
from .sensitivity import SensitivityGrid, SensitivityInput, sweep
from .simulation import GENERATOR, run_study

log = logging.getLogger("medmarg")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4

MARGINAL_COLUMNS = ["x", "eta_x", "marginal_logit_approx", "marginal_prob_exact", "ok"]
SENSITIVITY_COLUMNS = ["beta_w", "rho", "beta_x_adjusted", "sign_flipped", "valid"]


def _interaction_flag(value):
    return {"on": True, "off": False, "auto": "auto"}[value]


def parse_values(spec, name):
    """Comma list ``"0,0.5,1"`` or inclusive range ``"start:stop:step"``."""
    spec = (spec or "").strip()
    if not spec:
        raise InvalidConfig(f"{name}: empty grid")
    try:
        if ":" in spec:
            start, stop, step = (float(v) for v in spec.split(":"))
            if step <= 0 or stop < start:
                raise ValueError("need step > 0 and stop >= start")
            k = int(math.floor((stop - start) / step + 1e-9))
            return [start + i * step for i in range(k + 1)]
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidConfig(f"{name}: cannot parse {spec!r} ({exc})") from None


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(args):
    return read_dataset(args.input, args.y_col, args.x_col, args.w_col)


def cmd_fit(args):
    data = _load(args)
    fit = fit_joint(data, _interaction_flag(args.interaction) is not False, args.firth)
    if args.format == "json":
        d = fit_to_dict(fit, args.level)
        d["n"] = data.n
        _emit(dump_json(d), args.out)
    else:
        _emit(rows_to_csv(fit_parameter_rows(fit, args.level), PARAM_COLUMNS), args.out)
    return EXIT_OK


def cmd_mediate(args):
    data = _load(args)
    report = mediate(
        data, tuple(args.contrast), args.methods, _interaction_flag(args.interaction), args.firth,
        args.boot_reps, args.level, args.seed, n_jobs=args.jobs,
    )
    if report.interaction_test is not None:
        t = report.interaction_test
        log.info("interaction Wald test: z=%.3f p=%.4f -> %s", t["z"], t["p_value"],
                 "kept" if t["kept"] else "dropped")
    for w in report.warnings:
        log.warning("%s", w)
    if args.format == "json":
        _emit(dump_json(mediation_to_dict(report)), args.out)
    else:
        _emit(mediation_to_csv(report), args.out)
    return EXIT_OK


def _marginal_model(args):
    if args.params is not None:
        b0, bx, bw, bxw, t0, tx, sigma = args.params
        if not sigma > 0:
            raise InputError("--params: sigma must be positive")
        return StructuralModel.from_values(b0, bx, bw, bxw, t0, tx, sigma)
    if args.input is None:
        raise InputError("marginal needs --input or --params")
    return StructuralModel.from_fit(fit_joint(_load(args), True, args.firth))


def cmd_marginal(args):
    model = _marginal_model(args)
    rows = []
    for x in parse_values(args.grid, "--grid"):
        intercept, eta = marginal_logit_terms(model, x)
        try:
            p, ok = marginal_prob_exact(model, x), True
        except NonConvergence as exc:
            log.warning("x=%g: %s", x, exc)
            p, ok = float("nan"), False
        rows.append({"x": x, "eta_x": float(eta), "marginal_logit_approx": float(intercept + eta),
                     "marginal_prob_exact": float(p), "ok": ok})
    if args.format == "json":
        _emit(dump_json({"schema_version": SCHEMA_VERSION, "kind": "marginal", "rows": rows}), args.out)
    else:
        _emit(rows_to_csv(rows, MARGINAL_COLUMNS), args.out)
    return EXIT_OK


def _eta_from_data(args):
    cols, _ = read_csv_columns(args.input, {"y": args.y_col, "x": args.x_col})
    y, x = cols["y"], cols["x"]
    if len(y) < 10 or y.min() == y.max():
        raise InputError("need at least 10 rows with both outcome classes")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise InputError("exposure is constant")
    xs = (x - x.mean()) / sd if args.standardized else x
    beta, _, _ = _irls(np.column_stack([np.ones_like(xs), xs]), y, False, 100)
    return float(beta[1]), (1.0 if args.standardized else sd)


def cmd_sensitivity(args):
    if args.eta_x is not None:
        eta, sigma_x = args.eta_x, args.sigma_x
    elif args.input is not None:
        eta, sigma_x = _eta_from_data(args)
        log.info("marginal exposure slope from data: %.6g (sigma_x=%.6g)", eta, sigma_x)
    else:
        raise InputError("sensitivity needs --eta-x or --input")
    inp = SensitivityInput(eta, sigma_x, args.standardized)
    grid = SensitivityGrid(parse_values(args.beta_w, "--beta-w"), parse_values(args.rho, "--rho"))
    rows = sweep(inp, grid)
    if args.format == "json":
        doc = {"schema_version": SCHEMA_VERSION, "kind": "sensitivity", "eta_x": eta,
               "sigma_x": sigma_x, "standardized": args.standardized, "rows": rows}
        _emit(dump_json(doc), args.out)
    else:
        _emit(rows_to_csv(rows, SENSITIVITY_COLUMNS), args.out)
    return EXIT_OK


def cmd_simulate(args):
    cfgs = load_study_config(args.config)
    if args.seed is not None:
        cfgs = [dataclasses.replace(c, seed=args.seed) for c in cfgs]
    t0 = time.perf_counter()
    report = run_study(cfgs, n_jobs=args.jobs)
    report.metadata.update({
        "seed": sorted({c.seed for c in cfgs}),
        "generator": GENERATOR,
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "n_scenarios": len(cfgs),
    })
    csv_text = study_to_csv(report)
    json_text = dump_json(study_to_dict(report))
    if args.out:
        prefix = Path(args.out)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        prefix.with_suffix(".csv").write_text(csv_text, encoding="utf-8")
        prefix.with_suffix(".json").write_text(json_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text if args.format == "csv" else json_text)
    for i, msg in report.errors:
        log.error("scenario %d failed: %s", i, msg)
    return EXIT_PARTIAL if report.partial else EXIT_OK


def _add_data_args(p, need_w=True):
    p.add_argument("--input", "-i", help="CSV file with a header row")
    p.add_argument("--y-col", default="y", help="binary outcome column (default: y)")
    p.add_argument("--x-col", default="x", help="exposure column (default: x)")
    if need_w:
        p.add_argument("--w-col", default="w", help="mediator column (default: w)")


def _add_model_args(p):
    p.add_argument("--interaction", choices=("auto", "on", "off"), default="on",
                   help="exposure-mediator term; auto keeps it when its Wald p < 0.10")
    p.add_argument("--firth", action="store_true", help="Firth-penalised outcome model")


def _add_output_args(p, default_format="json"):
    p.add_argument("--format", choices=("json", "csv"), default=default_format)
    p.add_argument("--out", "-o", help="output path (default: stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="medmarg", description="Marginalized mediation analysis for a binary outcome")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit outcome and mediator models")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--level", type=float, default=0.90, help="Wald CI level (default: 0.90)")
    _add_output_args(p)
    p.set_defaults(func=cmd_fit, need_input=True)

    p = sub.add_parser("mediate", parents=[common], help="natural direct and indirect effects")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--contrast", nargs=2, type=float, default=[0.0, 1.0], metavar=("X_STAR", "X"))
    p.add_argument("--methods", default="closed", help="comma list of closed,exact,vv,gaynor")
    p.add_argument("--boot-reps", type=int, default=0, help="bootstrap replications (0: none)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    _add_output_args(p)
    p.set_defaults(func=cmd_mediate, need_input=True)

    p = sub.add_parser("marginal", parents=[common], help="marginal log-odds curve over an exposure grid")
    _add_data_args(p)
    p.add_argument("--firth", action="store_true")
    p.add_argument("--params", nargs=7, type=float, default=None,
                   metavar=("B0", "BX", "BW", "BXW", "T0", "TX", "SIGMA"),
                   help="use these parameters instead of fitting --input")
    p.add_argument("--grid", default="0:3:0.1", help="x values: list or start:stop:step")
    _add_output_args(p, "csv")
    p.set_defaults(func=cmd_marginal, need_input=False)

    p = sub.add_parser("sensitivity", parents=[common], help="unmeasured-confounder sweep")
    _add_data_args(p, need_w=False)
    p.add_argument("--eta-x", type=float, default=None, help="observed marginal log-OR")
    p.add_argument("--sigma-x", type=float, default=1.0)
    p.add_argument("--non-standardized", dest="standardized", action="store_false",
                   help="exposure on its original scale (uses sigma_x)")
    p.add_argument("--beta-w", default="-2:2:0.25", help="confounder effects: list or start:stop:step")
    p.add_argument("--rho", default="-0.9:0.9:0.1", help="correlations: list or start:stop:step")
    _add_output_args(p, "csv")
    p.set_defaults(func=cmd_sensitivity, need_input=False)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo study from a YAML/JSON config")
    p.add_argument("config", help="study config file")
    p.add_argument("--seed", type=int, default=None, help="override the study seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", "-o", help="output prefix; writes PREFIX.csv and PREFIX.json")
    p.add_argument("--format", choices=("json", "csv"), default="csv",
                   help="stdout format when --out is not given")
    p.set_defaults(func=cmd_simulate, need_input=False)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="medmarg: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.need_input and not args.input:
            raise InputError("--input is required")
        return args.func(args)
    except InputError as exc:
        print(f"medmarg: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"medmarg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
