"""Simulated data-generating processes and Monte Carlo studies.

The language model is replaced by two noisy channels attached to each row.

Every row has a latent "text" made of its real covariates ``x`` and a
standard normal text signal ``zeta``. The real label's noise is
``w = rho * zeta + sqrt(1 - rho**2) * xi`` with fresh ``xi``, so that
``P(y = 1 | x) = sigmoid(x' theta_star)`` (logistic link) or
``y = x' theta_star + noise_sd * w`` (identity link); ``rho`` is
``text_signal``.

* Proxy channel: ``x_hat = x + proxy_x_noise * N(0, 1)`` on non-intercept
  coordinates, and ``y_hat`` is ``y`` with labels flipped at rate
  ``proxy_y_flip`` (logistic) or ``y + proxy_y_noise * N(0, 1)`` (identity).
  With ``proxy_independent`` the proxy pair is an independent fresh draw.
* Synthetic channel: with probability ``synth_fidelity`` the pair is redrawn
  from the real conditional law given the anchor's latent text
  (``x_syn = x`` and a label built from the same ``zeta`` with fresh noise);
  otherwise it is an independent draw from the model at
  ``theta_star + synth_shift``.

Rows are i.i.d.; the first ``n`` rows are labeled.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence, Union

import numpy as np
from scipy.special import expit, ndtr, ndtri
from sklearn.isotonic import isotonic_regression

from ._errors import SynthGMMError, UsageError
from .baselines import PpiConfig
from .data import Dataset
from .estimators import METHODS, fit_method
from .gmm import SolverConfig
from .moments import LINKS
from .rng import row_uniforms

__all__ = [
    "DgpConfig",
    "StudyConfig",
    "MethodMetrics",
    "StudyMetrics",
    "EffectiveSampleSize",
    "generate_dgp_sample",
    "run_trial",
    "monte_carlo_study",
    "human_mse_curve",
    "effective_sample_size",
    "fidelity_sweep",
    "resolve_workers",
]

logger = logging.getLogger(__name__)

WORKER_CAP_ENV = "SYNTHGMM_MAX_WORKERS"
MAIN_STREAM, CURVE_STREAM, FOLD_STREAM = 0, 1, 2


@dataclass(frozen=True)
class DgpConfig:
    d: int = 2
    theta_star: tuple = (-0.5, 1.0)
    link: str = "logistic"
    n: int = 100
    m: int = 900
    intercept: bool = True
    noise_sd: float = 1.0
    text_signal: float = 0.9
    proxy_x_noise: float = 0.1
    proxy_y_flip: float = 0.1
    proxy_y_noise: float = 0.3
    proxy_independent: bool = False
    synth_fidelity: float = 1.0
    synth_shift: Union[float, tuple] = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta_star", tuple(float(t) for t in self.theta_star))
        if not isinstance(self.synth_shift, (int, float)):
            object.__setattr__(self, "synth_shift", tuple(float(t) for t in self.synth_shift))
        if self.d < 1 or len(self.theta_star) != self.d:
            raise UsageError(f"theta_star must have length d={self.d}")
        if self.link not in LINKS:
            raise UsageError(f"link must be one of {LINKS}")
        if self.n < 1 or self.m < 0:
            raise UsageError("need n >= 1 and m >= 0")
        for name in ("text_signal", "proxy_y_flip", "synth_fidelity"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1]")
        for name in ("noise_sd", "proxy_x_noise", "proxy_y_noise"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be nonnegative")
        if isinstance(self.synth_shift, tuple) and len(self.synth_shift) != self.d:
            raise UsageError(f"synth_shift must be a scalar or have length d={self.d}")
        if self.seed < 0:
            raise UsageError("seed must be nonnegative")

    @property
    def shifted_theta(self) -> np.ndarray:
        return np.asarray(self.theta_star) + np.asarray(self.synth_shift, dtype=float)


@dataclass(frozen=True)
class StudyConfig:
    dgp: DgpConfig = field(default_factory=DgpConfig)
    methods: tuple = METHODS
    trials: int = 200
    level: float = 0.95
    ess_grid: tuple = ()
    seed: int = 0
    workers: int = 1
    target: int = 1
    ppi: PpiConfig = field(default_factory=PpiConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "ess_grid", tuple(int(n) for n in self.ess_grid))
        if not self.methods:
            raise UsageError("methods must be nonempty")
        for name in self.methods:
            if name not in METHODS:
                raise UsageError(f"unknown method {name!r}")
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise UsageError("level must lie in (0, 1)")
        if not 0 <= self.target < self.dgp.d:
            raise UsageError(f"target must index a coordinate of theta (d={self.dgp.d})")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")
        if any(n < 1 for n in self.ess_grid):
            raise UsageError("ess_grid entries must be positive")


# -- data generation ------------------------------------------------------------


def _labels(dgp: DgpConfig, eta, noise):
    """Real-law labels at linear index ``eta`` driven by standard normal ``noise``."""
    if dgp.link == "logistic":
        return (ndtr(noise) < expit(eta)).astype(float)
    return eta + dgp.noise_sd * noise


def generate_dgp_sample(dgp: DgpConfig, trial_seed=0) -> Dataset:
    """One dataset of ``n + m`` rows with proxy (slot 0) and synthetic (slot 1) pairs.

    ``trial_seed`` is an int or a tuple of ints; together with ``dgp.seed``
    it keys the per-row counter streams.
    """
    stream = tuple(trial_seed) if isinstance(trial_seed, (tuple, list)) else (trial_seed,)
    d, T = dgp.d, dgp.n + dgp.m
    U = row_uniforms(T, 4 * d + 7, dgp.seed, *stream)
    Z = ndtri(U)
    theta = np.asarray(dgp.theta_star)
    free = slice(1, d) if dgp.intercept else slice(0, d)

    def covariates(cols):
        x = Z[:, cols].copy()
        if dgp.intercept:
            x[:, 0] = 1.0
        return x

    o = d
    x = covariates(slice(0, d))
    zeta, xi = Z[:, o], Z[:, o + 1]
    rho = dgp.text_signal
    root = np.sqrt(1.0 - rho * rho)
    y = _labels(dgp, x @ theta, rho * zeta + root * xi)

    # proxy channel
    o = d + 2
    if dgp.proxy_independent:
        x_hat = covariates(slice(2 * d + 3, 3 * d + 3))
        y_hat = _labels(dgp, x_hat @ theta, Z[:, 3 * d + 3])
    else:
        x_hat = x.copy()
        x_hat[:, free] += dgp.proxy_x_noise * Z[:, o:o + d][:, free]
        if dgp.link == "logistic":
            flip = U[:, 2 * d + 2] < dgp.proxy_y_flip
            y_hat = np.where(flip, 1.0 - y, y)
        else:
            y_hat = y + dgp.proxy_y_noise * Z[:, 2 * d + 2]

    # synthetic channel
    o = 3 * d + 4
    calibrated = U[:, o] < dgp.synth_fidelity
    y_cal = _labels(dgp, x @ theta, rho * zeta + root * Z[:, o + 1])
    x_mis = covariates(slice(o + 2, o + 2 + d))
    y_mis = _labels(dgp, x_mis @ dgp.shifted_theta, Z[:, o + 2 + d])
    x_syn = np.where(calibrated[:, None], x, x_mis)
    y_syn = np.where(calibrated, y_cal, y_mis)

    s = np.zeros(T, dtype=np.int8)
    s[: dgp.n] = 1
    return Dataset(
        s=s,
        x=x[: dgp.n],
        y=y[: dgp.n],
        aux_x=np.stack([x_hat, x_syn]),
        aux_y=np.stack([y_hat, y_syn]),
        ids=[f"r{t}" for t in range(T)],
    )


# -- trials ---------------------------------------------------------------------


def _fit_one(name, data, study: StudyConfig, fold_seed: int):
    import warnings

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit_method(name, data, study.dgp.link, study.level, study.ppi, study.solver, seed=fold_seed)
    except (SynthGMMError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        return {"method": name, "failed": True, "converged": False, "error": f"{type(exc).__name__}: {exc}"}
    return {
        "method": name,
        "failed": False,
        "converged": bool(res.converged),
        "error": "",
        "theta": np.asarray(res.theta, dtype=float),
        "se": np.asarray(res.se, dtype=float),
        "lower": np.asarray(res.lower, dtype=float),
        "upper": np.asarray(res.upper, dtype=float),
        "alpha": res.alpha,
        "lambda": res.lam,
        "ridge": res.ridge,
        "iterations": res.iterations,
    }


def run_trial(study: StudyConfig, trial_index: int) -> list:
    """Generate one dataset and fit every listed method on it.

    The dataset is keyed by ``(dgp.seed, study.seed, trial_index)``, so
    every method sees the same rows and no result depends on scheduling.
    """
    data = generate_dgp_sample(study.dgp, (study.seed, MAIN_STREAM, trial_index))
    fold_seed = int(np.random.SeedSequence([study.seed, FOLD_STREAM, trial_index]).generate_state(1)[0])
    out = []
    for name in study.methods:
        rec = _fit_one(name, data, study, fold_seed)
        rec["trial"] = trial_index
        out.append(rec)
    return out


def _curve_trial(args):
    study, n, trial_index = args
    dgp = replace(study.dgp, n=n, m=0)
    data = generate_dgp_sample(dgp, (study.seed, CURVE_STREAM, n, trial_index))
    rec = _fit_one("human-only", data, study, 0)
    return rec


def _trial_job(args):
    study, trial_index = args
    return run_trial(study, trial_index)


def resolve_workers(requested: int) -> int:
    cap = os.environ.get(WORKER_CAP_ENV)
    if cap:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            raise UsageError(f"{WORKER_CAP_ENV} must be an integer, got {cap!r}") from None
    return max(1, requested)


def _map(fn, jobs, workers):
    workers = resolve_workers(workers)
    if workers == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=chunk))


# -- metrics --------------------------------------------------------------------


class EffectiveSampleSize(NamedTuple):
    n_eff: float
    out_of_range: bool = False
    monotonized: bool = False


def effective_sample_size(method_mse: float, human_curve) -> EffectiveSampleSize:
    """Labeled count at which the human-only MSE curve reaches ``method_mse``.

    Interpolates linearly in ``(log n, log MSE)``, which is exact for a
    ``1/n`` decay. A curve that is not nonincreasing is first replaced by
    its antitonic regression; values beyond the curve clamp to its end
    points.
    """
    curve = sorted((float(n), float(v)) for n, v in human_curve)
    if len(curve) < 2:
        raise UsageError("human MSE curve needs at least two points")
    ns = np.array([c[0] for c in curve])
    mses = np.array([c[1] for c in curve])
    if np.any(mses <= 0) or not method_mse > 0:
        raise UsageError("MSE values must be strictly positive")
    if np.any(np.diff(ns) <= 0):
        raise UsageError("human MSE curve has duplicate n values")
    monotonized = bool(np.any(np.diff(mses) > 0))
    if monotonized:
        mses = isotonic_regression(mses, increasing=False)
    log_mse = np.log(mses)
    target = np.log(method_mse)
    if target >= log_mse[0]:
        return EffectiveSampleSize(float(ns[0]), target > log_mse[0], monotonized)
    if target <= log_mse[-1]:
        return EffectiveSampleSize(float(ns[-1]), target < log_mse[-1], monotonized)
    log_n = np.interp(target, log_mse[::-1], np.log(ns)[::-1])
    return EffectiveSampleSize(float(np.exp(log_n)), False, monotonized)


@dataclass
class MethodMetrics:
    method: str
    mse: np.ndarray
    coverage: np.ndarray
    mean_width: np.ndarray
    target: int
    n_converged: int
    n_nonconverged: int
    n_failed: int
    effective_sample_size: float = None
    ess_out_of_range: bool = False

    @property
    def mse_target(self) -> float:
        return float(self.mse[self.target])

    @property
    def coverage_target(self) -> float:
        return float(self.coverage[self.target])

    @property
    def width_target(self) -> float:
        return float(self.mean_width[self.target])

    @property
    def trials(self) -> int:
        return self.n_converged + self.n_nonconverged + self.n_failed


@dataclass
class StudyMetrics:
    config: StudyConfig
    methods: dict
    trials: list
    human_curve: list = field(default_factory=list)

    @property
    def theta_star(self) -> np.ndarray:
        return np.asarray(self.config.dgp.theta_star)

    def __getitem__(self, method) -> MethodMetrics:
        return self.methods[method]

    def estimates(self, method) -> np.ndarray:
        """Per-trial estimates, NaN rows for failed fits."""
        d = self.config.dgp.d
        rows = [r for r in self.trials if r["method"] == method]
        return np.array([r["theta"] if not r["failed"] else np.full(d, np.nan) for r in rows])


def _aggregate(name, records, theta_star, target) -> MethodMetrics:
    d = theta_star.size
    ok = [r for r in records if not r["failed"]]
    conv = [r for r in ok if r["converged"]]
    if ok:
        est = np.array([r["theta"] for r in ok])
        lower = np.array([r["lower"] for r in ok])
        upper = np.array([r["upper"] for r in ok])
        mse = np.mean((est - theta_star) ** 2, axis=0)
        coverage = np.mean((lower <= theta_star) & (theta_star <= upper), axis=0)
    else:
        mse = coverage = np.full(d, np.nan)
    if conv:
        width = np.mean([r["upper"] - r["lower"] for r in conv], axis=0)
    else:
        width = np.full(d, np.nan)
    return MethodMetrics(
        name, mse, coverage, width, target,
        n_converged=len(conv), n_nonconverged=len(ok) - len(conv), n_failed=len(records) - len(ok),
    )


def human_mse_curve(study: StudyConfig) -> list:
    """Human-only target MSE at each ``n`` of ``study.ess_grid``."""
    theta_star = np.asarray(study.dgp.theta_star)
    jobs = [(study, n, t) for n in study.ess_grid for t in range(study.trials)]
    recs = _map(_curve_trial, jobs, study.workers)
    curve = []
    for i, n in enumerate(study.ess_grid):
        block = recs[i * study.trials:(i + 1) * study.trials]
        curve.append((n, _aggregate("human-only", block, theta_star, study.target).mse_target))
    return curve


def monte_carlo_study(study: StudyConfig) -> StudyMetrics:
    """Run ``study.trials`` independent trials and aggregate per method.

    MSE and coverage use every trial that produced an estimate; interval
    widths use converged trials only. Failures are counted, never raised.
    """
    jobs = [(study, t) for t in range(study.trials)]
    per_trial = _map(_trial_job, jobs, study.workers)
    records = [r for trial in per_trial for r in trial]
    theta_star = np.asarray(study.dgp.theta_star)
    methods = {
        name: _aggregate(name, [r for r in records if r["method"] == name], theta_star, study.target)
        for name in study.methods
    }
    curve = human_mse_curve(study) if len(study.ess_grid) >= 2 else []
    if curve:
        for metrics in methods.values():
            if metrics.mse_target > 0:
                ess = effective_sample_size(metrics.mse_target, curve)
                metrics.effective_sample_size = ess.n_eff
                metrics.ess_out_of_range = ess.out_of_range
    for name, mm in methods.items():
        if mm.n_failed:
            logger.warning("%s failed on %d of %d trials", name, mm.n_failed, study.trials)
    return StudyMetrics(study, methods, records, curve)


def fidelity_sweep(study: StudyConfig, gamma_values: Sequence[float]) -> list:
    """Monte Carlo study per synthetic fidelity; one table row per gamma.

    Each row holds the target-coordinate MSE and the empirical variance of the
    target estimates for every method.
    """
    rows = []
    for gamma in gamma_values:
        if not 0.0 <= gamma <= 1.0:
            raise UsageError(f"fidelity values must lie in [0, 1], got {gamma}")
        sub = replace(study, dgp=replace(study.dgp, synth_fidelity=float(gamma)), ess_grid=())
        metrics = monte_carlo_study(sub)
        row = {"gamma": float(gamma)}
        for name in study.methods:
            est = metrics.estimates(name)[:, study.target]
            row[f"mse[{name}]"] = metrics[name].mse_target
            row[f"var[{name}]"] = float(np.nanvar(est)) if np.any(np.isfinite(est)) else float("nan")
        rows.append(row)
    return rows
