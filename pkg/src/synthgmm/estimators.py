"""Scikit-learn style wrappers and the method-name registry.

Each estimator takes a :class:`~synthgmm.data.Dataset` (or a list of
records) as ``X`` in :meth:`fit`, exposes fitted attributes with trailing
underscores and predicts the GLM mean for new designs. Hyperparameters live
in ``__init__`` so ``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._errors import StructuralError, UsageError
from .augmented import AugmentedSystem
from .baselines import (
    PpiConfig,
    human_only_estimate,
    ppi_estimate,
    reppi_estimate,
    select_alpha_crossfit,
)
from .gmm import SolverConfig, two_step_estimate
from .moments import MomentModel
from .validation import check_dataset, check_design, check_level

__all__ = [
    "METHODS",
    "MethodResult",
    "fit_method",
    "HumanOnly",
    "AugmentedGMM",
    "PPIPlusPlus",
    "CrossFitPPI",
    "RePPI",
]

METHODS = (
    "human-only",
    "gmm-proxy",
    "gmm-synth",
    "ppi-proxy",
    "ppi-synth",
    "ppi-synth-crossfit",
    "reppi",
)


@dataclass
class MethodResult:
    """Method-agnostic view of a fitted estimate (target parameter only)."""

    method: str
    theta: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    converged: bool
    alpha: float = None
    lam: float = None
    ridge: float = None
    iterations: int = None
    extra: dict = field(default_factory=dict)


def _from_baseline(est, level):
    ci = est.ci
    return MethodResult(
        est.method, est.theta, est.se, ci.lower, ci.upper, bool(est.converged),
        alpha=est.chosen_alpha, lam=est.chosen_lambda,
        iterations=est.diagnostics.get("iterations"),
    )


def _from_gmm(method, est, level):
    ci = est.conf_int(level)
    return MethodResult(
        method, est.theta, est.theta_se, ci.lower, ci.upper, bool(est.converged),
        ridge=float(est.weight.ridge_applied), iterations=int(est.iterations),
        extra={"first_step_theta": est.diagnostics["first_step_theta"]},
    )


def fit_method(name, data, link="logistic", level=0.95, ppi: PpiConfig = None,
               solver: SolverConfig = None, seed: int = 0) -> MethodResult:
    """Run estimator ``name`` (one of :data:`METHODS`) on ``data``."""
    if name not in METHODS:
        raise UsageError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
    level = check_level(level)
    ppi = ppi or PpiConfig(level=level)
    if ppi.level != level:
        ppi = PpiConfig(ppi.alpha, ppi.alpha_grid, ppi.lambda_power, ppi.folds, level)
    data = check_dataset(data)
    model = MomentModel(data.d, link)
    if name == "human-only":
        return _from_baseline(human_only_estimate(model, data, level), level)
    if name == "gmm-proxy":
        if data.M < 1:
            raise StructuralError("gmm-proxy: M=1 required (a proxy source)")
        est = two_step_estimate(AugmentedSystem(model, 1), data.select_sources([0]), solver)
        return _from_gmm(name, est, level)
    if name == "gmm-synth":
        if data.M < 2:
            raise StructuralError(f"gmm-synth: M=2 required, dataset has M={data.M}")
        est = two_step_estimate(AugmentedSystem(model, data.M), data, solver)
        return _from_gmm(name, est, level)
    if name == "ppi-proxy":
        cfg = PpiConfig(1.0, ppi.alpha_grid, ppi.lambda_power, ppi.folds, level)
        return _from_baseline(ppi_estimate(model, data, cfg, method=name), level)
    if name == "ppi-synth":
        return _from_baseline(ppi_estimate(model, data, ppi, method=name), level)
    if name == "ppi-synth-crossfit":
        return _from_baseline(select_alpha_crossfit(model, data, ppi, seed=seed), level)
    return _from_baseline(reppi_estimate(model, data, level, ppi.lambda_power), level)


class _FusionEstimator(BaseEstimator):
    """Shared fit/predict plumbing; subclasses implement ``_estimate``."""

    def fit(self, X, y=None):
        """Fit on a dataset.

        Parameters
        ----------
        X : Dataset or list of ObservationRecord
        y : ignored
            Present for pipeline compatibility; labels live inside ``X``.
        """
        data = check_dataset(X)
        level = check_level(self.level)
        self.model_ = MomentModel(data.d, self.link)
        result = self._estimate(data, level)
        self.result_ = result
        self.coef_ = np.asarray(result.theta)
        self.stderr_ = np.asarray(result.se)
        self.conf_int_ = np.column_stack([result.lower, result.upper])
        self.converged_ = result.converged
        self.n_features_in_ = data.d
        return self

    def predict(self, X):
        """GLM mean ``mu(X coef_)`` for a covariate design."""
        check_is_fitted(self, "coef_")
        X = check_design(X, self.n_features_in_)
        return self.model_.mean(X @ self.coef_)

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_design(X, self.n_features_in_) @ self.coef_


class HumanOnly(_FusionEstimator):
    def __init__(self, link="logistic", level=0.95):
        self.link = link
        self.level = level

    def _estimate(self, data, level):
        return fit_method("human-only", data, self.link, level)


class AugmentedGMM(_FusionEstimator):
    """Two-step GMM over real and auxiliary moments.

    Parameters
    ----------
    link : {"identity", "logistic"}
    sources : list of int, optional
        Auxiliary slots to use (0 is the proxy). All slots by default.
    level : float
    solver : SolverConfig, optional
    """

    def __init__(self, link="logistic", sources=None, level=0.95, solver=None):
        self.link = link
        self.sources = sources
        self.level = level
        self.solver = solver

    def _estimate(self, data, level):
        if self.sources is not None:
            data = data.select_sources(self.sources)
        est = two_step_estimate(AugmentedSystem(self.model_, data.M), data, self.solver)
        self.estimate_ = est
        self.aux_coef_ = np.array(est.params.etas).reshape(data.M, data.d)
        self.cov_ = est.covariance
        self.n_iter_ = est.iterations
        return _from_gmm("gmm", est, level)


class PPIPlusPlus(_FusionEstimator):
    """PPI++ with a proxy/synthetic mixture; ``alpha=1`` is PPI++Proxy."""

    def __init__(self, link="logistic", alpha="tune", lambda_power="tune", alpha_grid=None, level=0.95):
        self.link = link
        self.alpha = alpha
        self.lambda_power = lambda_power
        self.alpha_grid = alpha_grid
        self.level = level

    def _config(self, level, folds=2):
        kw = {} if self.alpha_grid is None else {"alpha_grid": tuple(self.alpha_grid)}
        return PpiConfig(alpha=self.alpha, lambda_power=self.lambda_power, folds=folds, level=level, **kw)

    def _estimate(self, data, level):
        est = ppi_estimate(self.model_, data, self._config(level))
        self.alpha_, self.lambda_ = est.chosen_alpha, est.chosen_lambda
        return _from_baseline(est, level)


class CrossFitPPI(_FusionEstimator):
    def __init__(self, link="logistic", lambda_power="tune", folds=2, alpha_grid=None, level=0.95,
                 random_state=0):
        self.link = link
        self.lambda_power = lambda_power
        self.folds = folds
        self.alpha_grid = alpha_grid
        self.level = level
        self.random_state = random_state

    def _estimate(self, data, level):
        kw = {} if self.alpha_grid is None else {"alpha_grid": tuple(self.alpha_grid)}
        cfg = PpiConfig(alpha="tune", lambda_power=self.lambda_power, folds=self.folds, level=level, **kw)
        est = select_alpha_crossfit(self.model_, data, cfg, seed=self.random_state)
        self.fold_coef_ = est.diagnostics["fold_thetas"]
        self.fold_alpha_ = est.diagnostics["fold_alphas"]
        return _from_baseline(est, level)


class RePPI(_FusionEstimator):
    def __init__(self, link="logistic", lambda_power="tune", level=0.95):
        self.link = link
        self.lambda_power = lambda_power
        self.level = level

    def _estimate(self, data, level):
        est = reppi_estimate(self.model_, data, level, self.lambda_power)
        self.lambda_ = est.chosen_lambda
        return _from_baseline(est, level)
