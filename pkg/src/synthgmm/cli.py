"""Command-line interface: ``estimate``, ``simulate`` and ``validate-data``.

Configuration is a YAML or JSON document; every section and key is
optional and unknown keys are rejected::

    seed: 0
    link: logistic
    level: 0.95
    method: gmm-synth          # estimate only
    methods: [human-only, gmm-synth]
    trials: 200
    workers: 1
    target: 1
    ess_grid: [50, 100, 200, 400, 800]
    dgp: {d: 2, theta_star: [-0.5, 1.0], n: 100, m: 900, ...}
    ppi: {alpha: tune, lambda_power: tune, folds: 2, alpha_grid: [...]}
    solver: {max_iterations: 200, gradient_tolerance: 1.0e-9, ...}

Command-line flags override the matching keys. Exit status is 0 on success
and otherwise identifies the error category (see :data:`EXIT_CODES`).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import warnings
from typing import List, Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ._errors import ConvergenceWarning, SynthGMMError, UsageError
from .baselines import PpiConfig
from .dataio import parse_dataset_csv, write_dataset_csv
from .estimators import METHODS, fit_method
from .gmm import SolverConfig
from .simulation import DgpConfig, StudyConfig, monte_carlo_study

__all__ = [
    "RunConfig",
    "EXIT_CODES",
    "load_config",
    "study_from_config",
    "cmd_estimate",
    "cmd_simulate",
    "cmd_validate_data",
    "parse_dataset_csv",
    "write_dataset_csv",
    "main",
]

EXIT_CODES = {
    "usage": 2,
    "parse": 3,
    "schema": 4,
    "structural": 5,
    "domain": 6,
    "identification": 7,
    "degenerate-moments": 7,
    "convergence-warning": 8,
}

_PPI_DEFAULT = PpiConfig()
_SOLVER_DEFAULT = SolverConfig()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=False)


class DgpSection(_Section):
    d: int = DgpConfig.d
    theta_star: List[float] = list(DgpConfig.theta_star)
    n: int = DgpConfig.n
    m: int = DgpConfig.m
    intercept: bool = DgpConfig.intercept
    noise_sd: float = DgpConfig.noise_sd
    text_signal: float = DgpConfig.text_signal
    proxy_x_noise: float = DgpConfig.proxy_x_noise
    proxy_y_flip: float = DgpConfig.proxy_y_flip
    proxy_y_noise: float = DgpConfig.proxy_y_noise
    proxy_independent: bool = DgpConfig.proxy_independent
    synth_fidelity: float = DgpConfig.synth_fidelity
    synth_shift: Union[float, List[float]] = DgpConfig.synth_shift


class PpiSection(_Section):
    alpha: Union[float, Literal["tune"]] = _PPI_DEFAULT.alpha
    alpha_grid: List[float] = list(_PPI_DEFAULT.alpha_grid)
    lambda_power: Union[float, Literal["tune"]] = _PPI_DEFAULT.lambda_power
    folds: int = _PPI_DEFAULT.folds


class SolverSection(_Section):
    max_iterations: int = _SOLVER_DEFAULT.max_iterations
    gradient_tolerance: float = _SOLVER_DEFAULT.gradient_tolerance
    step_tolerance: float = _SOLVER_DEFAULT.step_tolerance
    ridge_epsilon: float = _SOLVER_DEFAULT.ridge_epsilon
    backtrack_factor: float = _SOLVER_DEFAULT.backtrack_factor
    sufficient_decrease: float = _SOLVER_DEFAULT.sufficient_decrease


class RunConfig(_Section):
    """Resolved run configuration; see the module docstring for the layout."""

    seed: int = 0
    link: Literal["identity", "logistic"] = "logistic"
    level: float = 0.95
    method: Literal[METHODS] = "gmm-synth"
    methods: List[Literal[METHODS]] = list(METHODS)
    trials: int = 200
    workers: int = 1
    target: int = 1
    ess_grid: List[int] = [50, 100, 200, 400, 800]
    dgp: DgpSection = Field(default_factory=DgpSection)
    ppi: PpiSection = Field(default_factory=PpiSection)
    solver: SolverSection = Field(default_factory=SolverSection)


def _key_path(loc) -> str:
    return ".".join(str(p) for p in loc)


def _validation_message(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        path = _key_path(err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            parts.append(f"unknown key {path!r}")
        else:
            parts.append(f"invalid value at {path!r}: {err['msg']}")
    return "; ".join(parts)


def load_config(path=None, overrides: dict = None) -> RunConfig:
    """Parse a YAML/JSON config file and apply flag ``overrides``."""
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            doc = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise UsageError(f"config {path} is not valid YAML/JSON: {exc}") from None
        doc = doc or {}
        if not isinstance(doc, dict):
            raise UsageError(f"config {path} must be a mapping at the top level")
    doc = dict(doc)
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise UsageError(f"config: {_validation_message(exc)}") from None
    study_from_config(cfg)  # semantic checks
    return cfg


def _build(section, fn):
    try:
        return fn()
    except UsageError as exc:
        raise UsageError(f"config section {section!r}: {exc}") from None


def ppi_from_config(cfg: RunConfig) -> PpiConfig:
    p = cfg.ppi
    return _build("ppi", lambda: PpiConfig(p.alpha, tuple(p.alpha_grid), p.lambda_power, p.folds, cfg.level))


def solver_from_config(cfg: RunConfig) -> SolverConfig:
    return _build("solver", lambda: SolverConfig(**cfg.solver.model_dump()))


def study_from_config(cfg: RunConfig) -> StudyConfig:
    dgp = _build("dgp", lambda: DgpConfig(link=cfg.link, seed=cfg.seed, **cfg.dgp.model_dump()))
    return _build("<root>", lambda: StudyConfig(
        dgp=dgp,
        methods=tuple(cfg.methods),
        trials=cfg.trials,
        level=cfg.level,
        ess_grid=tuple(cfg.ess_grid),
        seed=cfg.seed,
        workers=cfg.workers,
        target=cfg.target,
        ppi=ppi_from_config(cfg),
        solver=solver_from_config(cfg),
    ))


# -- serialisation helpers ------------------------------------------------------


def _clean(v):
    """JSON-safe scalar: non-finite floats become null."""
    if v is None or isinstance(v, (bool, str)):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g") if math.isfinite(v) else ""
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _table(header, rows) -> str:
    def fmt(v):
        if isinstance(v, float):
            return "nan" if not math.isfinite(v) else f"{v:.5g}"
        return "-" if v is None else str(v)

    cells = [list(header)] + [[fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


# -- commands -------------------------------------------------------------------


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def cmd_estimate(data_path, method=None, config_path=None, output_path=None, overrides=None):
    """Fit one method on a dataset file and build its report.

    Returns
    -------
    report : dict
        The machine-readable report; also written to ``output_path`` as JSON
        when given.
    text : str
        Human-readable table.
    """
    overrides = dict(overrides or {})
    if method is not None:
        overrides["method"] = method
    cfg = load_config(config_path, overrides)
    data = parse_dataset_csv(data_path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = fit_method(
            cfg.method, data, cfg.link, cfg.level, ppi_from_config(cfg), solver_from_config(cfg), seed=cfg.seed
        )
    coords = [
        {
            "index": j,
            "estimate": _clean(res.theta[j]),
            "std_error": _clean(res.se[j]),
            "lower": _clean(res.lower[j]),
            "upper": _clean(res.upper[j]),
        }
        for j in range(len(res.theta))
    ]
    report = {
        "method": res.method,
        "level": cfg.level,
        "coefficients": coords,
        "diagnostics": {
            "converged": bool(res.converged),
            "alpha": _clean(res.alpha),
            "lambda": _clean(res.lam),
            "ridge": _clean(res.ridge),
            "iterations": _clean(res.iterations),
        },
        "data": {
            "path": os.fspath(data_path),
            "sha256": _file_digest(data_path),
            "rows": data.T,
            "labeled": data.n,
            "d": data.d,
            "M": data.M,
        },
        "config": cfg.model_dump(mode="json"),
    }
    rows = [[c["index"], c["estimate"], c["std_error"], c["lower"], c["upper"]] for c in coords]
    text = f"method: {res.method}  (T={data.T}, n={data.n}, M={data.M}, level={cfg.level})\n"
    text += _table(["coef", "estimate", "std_error", "lower", "upper"], rows)
    diag = report["diagnostics"]
    text += "  ".join(f"{k}={v}" for k, v in diag.items()) + "\n"
    if output_path is not None:
        _write(output_path, _dumps(report))
    return report, text


def _summary_rows(metrics):
    study = metrics.config
    theta_star = study.dgp.theta_star
    rows = []
    for name in study.methods:
        mm = metrics[name]
        for j in range(study.dgp.d):
            is_target = j == study.target
            rows.append([
                name, j, int(is_target), theta_star[j], mm.mse[j], mm.coverage[j], mm.mean_width[j],
                mm.n_converged, mm.n_nonconverged, mm.n_failed,
                mm.effective_sample_size if is_target else None,
                int(mm.ess_out_of_range) if is_target and mm.effective_sample_size is not None else None,
            ])
    header = ["method", "coef", "target", "theta_star", "mse", "coverage", "mean_width",
              "converged", "nonconverged", "failed", "effective_sample_size", "ess_out_of_range"]
    return header, rows


def _trial_rows(metrics):
    d = metrics.config.dgp.d
    rows = []
    for r in sorted(metrics.trials, key=lambda r: (r["trial"], metrics.config.methods.index(r["method"]))):
        for j in range(d):
            if r["failed"]:
                vals = [None] * 4
                hyper = [None] * 4
            else:
                vals = [r["theta"][j], r["se"][j], r["lower"][j], r["upper"][j]]
                hyper = [r["alpha"], r["lambda"], r["ridge"], r["iterations"]]
            rows.append([r["trial"], r["method"], j, *vals, int(r["converged"]), int(r["failed"]), *hyper,
                         r["error"]])
    header = ["trial", "method", "coef", "estimate", "std_error", "lower", "upper", "converged", "failed",
              "alpha", "lambda", "ridge", "iterations", "error"]
    return header, rows


def _metrics_doc(metrics):
    study = metrics.config
    doc = {"theta_star": list(study.dgp.theta_star), "target": study.target, "trials": study.trials,
           "methods": {}, "human_curve": [[int(n), _clean(v)] for n, v in metrics.human_curve]}
    for name in study.methods:
        mm = metrics[name]
        doc["methods"][name] = {
            "mse": [_clean(v) for v in mm.mse],
            "coverage": [_clean(v) for v in mm.coverage],
            "mean_width": [_clean(v) for v in mm.mean_width],
            "mse_target": _clean(mm.mse_target),
            "coverage_target": _clean(mm.coverage_target),
            "mean_width_target": _clean(mm.width_target),
            "converged": mm.n_converged,
            "nonconverged": mm.n_nonconverged,
            "failed": mm.n_failed,
            "effective_sample_size": _clean(mm.effective_sample_size),
            "ess_out_of_range": bool(mm.ess_out_of_range),
        }
    return doc


def cmd_simulate(config_path=None, output_dir="synthgmm-study", overrides=None):
    """Run a Monte Carlo study and write its tables.

    Writes ``summary.csv`` (per method and coefficient), ``trials.csv``
    (long format, one row per trial, method and coefficient),
    ``metrics.json`` and ``config.json`` (the resolved configuration) into
    ``output_dir``. Numeric outputs do not depend on the worker count.

    Returns
    -------
    metrics : StudyMetrics
    text : str
        Human-readable summary of the target coefficient.
    """
    cfg = load_config(config_path, overrides)
    study = study_from_config(cfg)
    metrics = monte_carlo_study(study)
    summary_header, summary_rows = _summary_rows(metrics)
    trial_header, trial_rows = _trial_rows(metrics)
    files = {
        "summary.csv": _csv_text(summary_header, summary_rows),
        "trials.csv": _csv_text(trial_header, trial_rows),
        "metrics.json": _dumps(_metrics_doc(metrics)),
        "config.json": _dumps(cfg.model_dump(mode="json")),
    }
    os.makedirs(output_dir, exist_ok=True)
    for name, text in files.items():
        _write(os.path.join(output_dir, name), text)
    rows = []
    for name in study.methods:
        mm = metrics[name]
        rows.append([name, mm.mse_target, mm.coverage_target, mm.width_target, mm.effective_sample_size,
                     f"{mm.n_converged}/{mm.n_nonconverged}/{mm.n_failed}"])
    text = (f"{study.trials} trials, target coefficient {study.target}, "
            f"n={study.dgp.n}, m={study.dgp.m}, fidelity={study.dgp.synth_fidelity}\n")
    text += _table(["method", "mse", "coverage", "mean_width", "ess", "conv/nonconv/failed"], rows)
    return metrics, text


def cmd_validate_data(data_path):
    """Schema and row check of a dataset file; returns a one-line summary."""
    data = parse_dataset_csv(data_path)
    return f"{data_path}: ok (T={data.T}, n={data.n}, d={data.d}, M={data.M})\n"


# -- entry point ----------------------------------------------------------------


def _parser():
    parser = argparse.ArgumentParser(prog="synthgmm", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, study=False):
        p.add_argument("--config", help="YAML or JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--level", type=float, help="confidence level, e.g. 0.95")
        if study:
            p.add_argument("--trials", type=int)
            p.add_argument("--workers", type=int)
            p.add_argument("--method", action="append", dest="methods", choices=METHODS,
                           help="method to include (repeatable); default: all")
            p.add_argument("--output", default="synthgmm-study", help="output directory")
        else:
            p.add_argument("--method", choices=METHODS)
            p.add_argument("--output", help="write the JSON report here")

    est = sub.add_parser("estimate", help="fit one method on a dataset file")
    est.add_argument("data")
    common(est)
    sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    common(sim, study=True)
    val = sub.add_parser("validate-data", help="check a dataset file against the schema")
    val.add_argument("data")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate-data":
            sys.stdout.write(cmd_validate_data(args.data))
            return 0
        overrides = {"seed": args.seed, "level": args.level}
        if args.command == "estimate":
            report, text = cmd_estimate(args.data, args.method, args.config, args.output, overrides)
            sys.stdout.write(text)
            if not report["diagnostics"]["converged"]:
                sys.stderr.write("synthgmm: convergence-warning: solver did not converge\n")
                return EXIT_CODES["convergence-warning"]
            return 0
        overrides.update(trials=args.trials, methods=args.methods)
        overrides["workers"] = args.workers
        _, text = cmd_simulate(args.config, args.output, overrides)
        sys.stdout.write(text)
        return 0
    except SynthGMMError as exc:
        sys.stderr.write(f"synthgmm: {exc.category} error: {exc}\n")
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        sys.stderr.write(f"synthgmm: usage error: {exc}\n")
        return EXIT_CODES["usage"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
