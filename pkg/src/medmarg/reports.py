"""CSV ingestion, report serialisation and study-config loading.

Every writer here has a matching reader that rebuilds the in-memory
objects. Floats are written with ``repr`` so CSV and JSON round-trip
exactly and repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
from pathlib import Path

import numpy as np
import yaml
from scipy.stats import norm

from ._validation import Dataset, check_dataset
from .exceptions import InputError, InvalidConfig, ParseError
from .mediation import Contrast, EffectEstimate, MediationReport
from .regression import JointFit, MediatorParams, OutcomeParams, assemble_joint
from .simulation import MethodSummary, ScenarioResult, SimConfig, StudyReport

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"

STUDY_COLUMNS = [
    "scenario", "effect", "method", "beta0", "n", "true_value", "mean_estimate", "bias", "sd",
    "coverage_delta", "coverage_boot", "n_valid", "n_failed",
]
ESTIMATE_COLUMNS = ["effect", "method", "estimate", "se_delta", "ci_lower", "ci_upper", "ci_level"]
PARAM_COLUMNS = ["model", "name", "estimate", "se", "ci_lower", "ci_upper", "level"]


# ---------------------------------------------------------------- CSV input

def _sniff_delimiter(sample):
    try:
        return csv.Sniffer().sniff(sample, delimiters=",;").delimiter
    except csv.Error:
        first = sample.splitlines()[0] if sample else ""
        return ";" if first.count(";") > first.count(",") else ","


def _find_column(header, name, flag):
    lookup = {h.strip().lower(): i for i, h in enumerate(header)}
    try:
        return lookup[name.strip().lower()]
    except KeyError:
        raise ParseError(f"column {name!r} ({flag}) not found in header {header}", line=1) from None


def read_csv_columns(path, columns):
    """Read named numeric columns from a headed CSV file.

    ``columns`` maps a flag name to a header name. Returns
    ``({flag: ndarray}, delimiter)``. Header matching ignores case and
    surrounding whitespace; comma and semicolon delimiters are detected.
    """
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    if not text.strip():
        raise ParseError("file is empty", line=1)
    delim = _sniff_delimiter(text[:4096])
    log.info("detected CSV delimiter %r in %s", delim, path)
    reader = csv.reader(io.StringIO(text), delimiter=delim)
    header = next(reader)
    idx = {flag: _find_column(header, name, flag) for flag, name in columns.items()}
    values = {flag: [] for flag in columns}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=line)
        for flag, j in idx.items():
            cell = row[j].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r} in column {header[j]!r}", line=line) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {cell!r} in column {header[j]!r}", line=line)
            if flag == "y" and v not in (0.0, 1.0):
                raise ParseError(f"outcome must be binary (0/1), got {cell!r}", line=line)
            values[flag].append(v)
    return {k: np.asarray(v, dtype=float) for k, v in values.items()}, delim


def read_dataset(path, y_col="y", x_col="x", w_col="w") -> Dataset:
    cols, _ = read_csv_columns(path, {"y": y_col, "x": x_col, "w": w_col})
    return check_dataset(cols["y"], cols["x"], cols["w"])


# ---------------------------------------------------------------- CSV output

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _parse_cell(s):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    if s.lstrip("-").isdigit():
        return int(s)
    try:
        return float(s)
    except ValueError:
        return s


def csv_to_rows(text):
    reader = csv.DictReader(io.StringIO(text))
    return [{k: _parse_cell(v) for k, v in row.items()} for row in reader]


# ---------------------------------------------------------------- fitted models

def _cov_list(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def fit_parameter_rows(fit: JointFit, level=0.90):
    """Estimates, SEs and Wald CIs for every fitted parameter."""
    z = float(norm.ppf(0.5 + level / 2.0))
    rows = []
    o, m = fit.outcome, fit.mediator
    blocks = [("outcome", o.names, o.coef, o.se), ("mediator", m.names, m.coef, m.se),
              ("mediator", ["sigma2"], [m.sigma2], [math.sqrt(m.var_sigma2)])]
    for model, names, est, se in blocks:
        for name, e, s in zip(names, est, se):
            rows.append({"model": model, "name": name, "estimate": float(e), "se": float(s),
                         "ci_lower": float(e - z * s), "ci_upper": float(e + z * s),
                         "level": float(level)})
    return rows


def fit_to_dict(fit: JointFit, level=0.90):
    o, m = fit.outcome, fit.mediator
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "fit",
        "level": float(level),
        "parameters": fit_parameter_rows(fit, level),
        "outcome": {"beta0": o.beta0, "beta_x": o.beta_x, "beta_w": o.beta_w, "beta_xw": o.beta_xw,
                    "cov": _cov_list(o.cov), "interaction_included": o.interaction_included,
                    "firth_used": o.firth_used, "n_iter": o.n_iter},
        "mediator": {"theta0": m.theta0, "theta_x": m.theta_x, "sigma2": m.sigma2,
                     "cov_theta": _cov_list(m.cov_theta), "var_sigma2": m.var_sigma2, "n": m.n},
    }


def fit_from_dict(d) -> JointFit:
    o, m = dict(d["outcome"]), dict(d["mediator"])
    if o.get("cov") is not None:
        o["cov"] = np.asarray(o["cov"], dtype=float)
    if m.get("cov_theta") is not None:
        m["cov_theta"] = np.asarray(m["cov_theta"], dtype=float)
    return assemble_joint(OutcomeParams(**o), MediatorParams(**m))


# ---------------------------------------------------------------- mediation

def mediation_to_dict(report: MediationReport):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "mediation",
        "contrast": {"x_star": report.contrast.x_star, "x": report.contrast.x},
        "estimates": report.rows(),
        "bootstrap": report.bootstrap_meta,
        "interaction_test": report.interaction_test,
        "warnings": list(report.warnings),
        "fit": fit_to_dict(report.fit),
    }


def mediation_from_dict(d) -> MediationReport:
    _check_schema(d, "mediation")
    c = Contrast(d["contrast"]["x_star"], d["contrast"]["x"])
    est = [EffectEstimate.from_dict(r) for r in d["estimates"]]
    return MediationReport(fit_from_dict(d["fit"]), c, est, d.get("bootstrap"),
                           d.get("interaction_test"), list(d.get("warnings", [])))


def mediation_to_csv(report: MediationReport) -> str:
    return rows_to_csv(report.rows(), ESTIMATE_COLUMNS)


def estimates_from_csv(text):
    return [EffectEstimate.from_dict(r) for r in csv_to_rows(text)]


# ---------------------------------------------------------------- simulation study

def _config_dict(cfg: SimConfig):
    d = dataclasses.asdict(cfg)
    d["contrast"] = list(cfg.contrast)
    d["methods"] = list(cfg.methods)
    return d


def _config_from_dict(d):
    d = dict(d)
    d["contrast"] = tuple(d["contrast"])
    d["methods"] = tuple(d["methods"])
    return SimConfig(**d)


def study_rows(report: StudyReport):
    rows = []
    for i, res in enumerate(report.results):
        if res is None:
            continue
        for s in res.summaries:
            r = {"scenario": i, "beta0": res.config.beta0, "n": res.config.n,
                 "n_valid": res.n_valid, "n_failed": res.n_failed}
            r.update(dataclasses.asdict(s))
            rows.append(r)
    return rows


def study_to_csv(report: StudyReport) -> str:
    return rows_to_csv(study_rows(report), STUDY_COLUMNS)


def study_to_dict(report: StudyReport):
    scenarios = []
    for i, res in enumerate(report.results):
        if res is None:
            continue
        scenarios.append({
            "scenario": i,
            "config": _config_dict(res.config),
            "true_nde": res.true_nde,
            "true_nie": res.true_nie,
            "n_valid": res.n_valid,
            "n_failed": res.n_failed,
            "n_boot_failed": res.n_boot_failed,
            "rows": [dataclasses.asdict(s) for s in res.summaries],
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "simulation_study",
        "metadata": dict(report.metadata),
        "scenarios": scenarios,
        "errors": [{"scenario": i, "message": msg} for i, msg in report.errors],
    }


def study_from_dict(d) -> StudyReport:
    _check_schema(d, "simulation_study")
    n_total = len(d["scenarios"]) + len(d["errors"])
    results = [None] * n_total
    for s in d["scenarios"]:
        results[s["scenario"]] = ScenarioResult(
            _config_from_dict(s["config"]), s["true_nde"], s["true_nie"],
            [MethodSummary(**r) for r in s["rows"]], s["n_valid"], s["n_failed"],
            s.get("n_boot_failed", 0),
        )
    errors = [(e["scenario"], e["message"]) for e in d["errors"]]
    return StudyReport(results, errors, dict(d.get("metadata", {})))


def study_summaries_from_csv(text):
    """``{scenario index: [MethodSummary, ...]}`` from a study CSV."""
    fields = {f.name for f in dataclasses.fields(MethodSummary)}
    out = {}
    for r in csv_to_rows(text):
        out.setdefault(r["scenario"], []).append(
            MethodSummary(**{k: (float(v) if k not in ("effect", "method") and v is not None else v)
                             for k, v in r.items() if k in fields}))
    return out


def _check_schema(d, kind):
    if d.get("kind") != kind:
        raise ParseError(f"expected a {kind!r} report, got kind={d.get('kind')!r}")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {d.get('schema_version')!r}")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------- study configs

_SIM_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}
_CONFIG_KEYS = {"defaults", "grid", "scenarios"}


def _coerce(name, value):
    if name not in _SIM_FIELDS:
        raise InvalidConfig(f"unknown field {name!r}; valid fields: {sorted(_SIM_FIELDS)}")
    try:
        if name == "contrast":
            vals = tuple(float(v) for v in value)
            if len(vals) != 2:
                raise ValueError("need two values")
            return vals
        if name == "methods":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(str(v).strip().lower() for v in value)
        if name == "firth":
            if not isinstance(value, bool):
                raise ValueError("expected true or false")
            return value
        if name in ("n", "replications", "bootstrap_reps", "seed"):
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError("expected an integer")
            return int(value)
        return float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{name}: invalid value {value!r} ({exc})") from None


def configs_from_mapping(doc):
    """Expand a study-config mapping into a list of :class:`SimConfig`.

    Top-level scalar keys and the ``defaults`` mapping set shared fields;
    ``grid`` maps field names to value lists (Cartesian product, first key
    outermost); ``scenarios`` lists explicit overrides appended after the
    grid. With neither, the defaults form a single scenario.
    """
    if not isinstance(doc, dict):
        raise InvalidConfig("study config must be a mapping")
    base = {}
    for k, v in doc.items():
        if k not in _CONFIG_KEYS:
            base[k] = _coerce(k, v)
    for k, v in (doc.get("defaults") or {}).items():
        base[k] = _coerce(k, v)
    overrides = []
    grid = doc.get("grid") or {}
    if not isinstance(grid, dict):
        raise InvalidConfig("grid: must map field names to value lists")
    if grid:
        keys = list(grid)
        lists = []
        for k in keys:
            vals = grid[k] if isinstance(grid[k], list) else [grid[k]]
            if not vals:
                raise InvalidConfig(f"grid.{k}: empty value list")
            lists.append([_coerce(k, v) for v in vals])
        overrides += [dict(zip(keys, combo)) for combo in itertools.product(*lists)]
    for i, s in enumerate(doc.get("scenarios") or []):
        if not isinstance(s, dict):
            raise InvalidConfig(f"scenarios[{i}]: must be a mapping")
        overrides.append({k: _coerce(k, v) for k, v in s.items()})
    if not overrides:
        overrides = [{}]
    cfgs = []
    for i, o in enumerate(overrides):
        cfg = SimConfig(**{**base, **o})
        try:
            cfg.validate()
        except InvalidConfig as exc:
            raise InvalidConfig(f"scenario {i}: {exc}") from None
        cfgs.append(cfg)
    return cfgs


def load_study_config(path):
    """Read a YAML (or JSON) study config file; see :func:`configs_from_mapping`."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"invalid config: {getattr(exc, 'problem', exc)}",
                         line=None if mark is None else mark.line + 1) from None
    return configs_from_mapping(doc)
