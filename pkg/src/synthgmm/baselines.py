"""Debiasing baselines: human-only, PPI++ with proxy/synthetic mixing, RePPI.

The mixed prediction-powered loss at mixing weight ``alpha`` and power
``lam`` is

    L(theta) = lam * mean_all[(1 - alpha) l(x_syn, y_syn) + alpha l(x_hat, y_hat)]
             + mean_lab[l(x, y) - lam * ((1 - alpha) l(x_syn, y_syn) + alpha l(x_hat, y_hat))]

where ``mean_all`` runs over all ``N = n + m`` rows (labeled rows included)
and ``mean_lab`` over the ``n`` labeled rows. Its expectation is the real
loss for every ``alpha``. ``alpha = 1`` drops the synthetic terms entirely.

Auxiliary slot 0 of the dataset is the proxy source and slot 1 the
synthetic source.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ._errors import ConvergenceWarning, IdentificationError, StructuralError, UsageError
from ._linalg import symmetrize
from ._optim import fit_glm, newton_minimize
from .augmented import _as_dataset
from .data import Dataset
from .inference import ConfidenceInterval, confidence_interval
from .moments import MomentModel, hessian_rows, loss_rows

__all__ = [
    "PpiConfig",
    "BaselineEstimate",
    "human_only_estimate",
    "ppi_loss",
    "ppi_loss_gradient",
    "power_tuning_lambda",
    "select_alpha",
    "ppi_estimate",
    "crossfit_folds",
    "select_alpha_crossfit",
    "reppi_estimate",
]

PROXY, SYNTHETIC = 0, 1


@dataclass(frozen=True)
class PpiConfig:
    """Settings for the PPI++ baselines.

    ``alpha`` and ``lambda_power`` are numbers or ``"tune"``. A tuned alpha
    minimises the mixed loss at the human-only estimate over ``alpha_grid``
    (in-sample, without cross-fitting); a tuned lambda is the plug-in
    variance minimiser from :func:`power_tuning_lambda`.
    """

    alpha: Union[float, str] = "tune"
    alpha_grid: tuple = tuple(np.linspace(0.0, 1.0, 21))
    lambda_power: Union[float, str] = "tune"
    folds: int = 2
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        if not self.alpha_grid or any(not 0.0 <= a <= 1.0 for a in self.alpha_grid):
            raise UsageError("alpha_grid must be a nonempty subset of [0, 1]")
        if self.alpha != "tune" and not 0.0 <= float(self.alpha) <= 1.0:
            raise UsageError(f"alpha must lie in [0, 1] or be 'tune', got {self.alpha!r}")
        if self.lambda_power != "tune" and not np.isfinite(float(self.lambda_power)):
            raise UsageError("lambda_power must be finite or 'tune'")
        if int(self.folds) != self.folds or self.folds < 2:
            raise UsageError("folds must be an integer >= 2")
        if not 0.0 < self.level < 1.0:
            raise UsageError("level must lie in (0, 1)")


@dataclass
class BaselineEstimate:
    theta: np.ndarray
    se: np.ndarray
    ci: ConfidenceInterval
    method: str
    chosen_alpha: Optional[float] = None
    chosen_lambda: Optional[float] = None
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


# -- helpers ------------------------------------------------------------------


def _check_labeled(model: MomentModel, data: Dataset, minimum: int = None):
    if data.d != model.d:
        raise StructuralError(f"dataset has d={data.d}, model expects d={model.d}")
    if data.n == 0:
        raise UsageError("no labeled records: target parameter unidentifiable")
    minimum = model.d if minimum is None else minimum
    if data.n < minimum:
        raise IdentificationError(f"{data.n} labeled records, at least {minimum} required")
    if np.linalg.matrix_rank(data.x) < model.d:
        raise IdentificationError("labeled design matrix is rank deficient")


def _check_alpha_sources(data: Dataset, alpha: float):
    need = 1 if alpha == 1.0 else 2
    if data.M < need:
        raise StructuralError(
            f"alpha={alpha} needs {'a proxy' if need == 1 else 'proxy and synthetic'} "
            f"source(s); dataset has M={data.M}"
        )


def _imputed_terms(model, data, theta, alpha):
    """Row-wise imputed loss, gradient and a Hessian callback (all rows)."""
    terms = [(alpha, PROXY)] if alpha == 1.0 else [(1.0 - alpha, SYNTHETIC), (alpha, PROXY)]
    terms = [(w, j) for w, j in terms if w != 0.0]
    T, d = data.T, data.d
    loss = np.zeros(T)
    grad = np.zeros((T, d))
    for w, j in terms:
        X, y = data.aux_x[j], data.aux_y[j]
        loss = loss + w * loss_rows(model, theta, X, y)
        grad = grad + w * X * (model.mean(X @ theta) - y)[:, None]

    def hessian(weights):
        H = np.zeros((d, d))
        for w, j in terms:
            H = H + w * hessian_rows(model, theta, data.aux_x[j], weights)
        return H

    return loss, grad, hessian


def _real_grad_rows(model, data, theta):
    return data.x * (model.mean(data.x @ theta) - data.y)[:, None]


def _cov(a, b=None):
    """Centred (1/n) cross-covariance of row samples."""
    b = a if b is None else b
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    return ac.T @ bc / a.shape[0]


def _sandwich(H, meat):
    H_inv = np.linalg.inv(H)
    return symmetrize(H_inv @ meat @ H_inv.T)


def _result(theta, cov, level, method, **kw):
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return BaselineEstimate(theta, se, confidence_interval(theta, se, level), method, **kw)


def _lam_value(lam):
    return 1.0 if lam == "tune" else float(lam)


# -- human-only ---------------------------------------------------------------


def human_only_estimate(model: MomentModel, dataset, level: float = 0.95) -> BaselineEstimate:
    """GLM M-estimate on the labeled rows with heteroskedasticity-robust errors."""
    data = _as_dataset(dataset)
    _check_labeled(model, data)
    fit = fit_glm(model, data.x, data.y, tol=1e-12)
    theta = fit.x
    n = data.n
    H = hessian_rows(model, theta, data.x) / n
    psi = _real_grad_rows(model, data, theta)
    meat = psi.T @ psi / n
    cov = _sandwich(H, meat) / n
    if not fit.converged:
        warnings.warn("human-only fit did not converge", ConvergenceWarning, stacklevel=2)
    return _result(
        theta, cov, level, "human-only", converged=fit.converged,
        diagnostics={"iterations": fit.n_iter, "grad_norm": fit.grad_norm},
    )


# -- PPI++ --------------------------------------------------------------------


def ppi_loss(model: MomentModel, dataset, theta, alpha: float, lambda_power: float = 1.0) -> float:
    """Mixed prediction-powered loss at ``theta``."""
    data = _as_dataset(dataset)
    if data.n == 0:
        raise UsageError("ppi_loss needs at least one labeled record")
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"alpha must lie in [0, 1], got {alpha}")
    _check_alpha_sources(data, alpha)
    theta = np.asarray(theta, dtype=float)
    lam = float(lambda_power)
    imp, _, _ = _imputed_terms(model, data, theta, alpha)
    real = loss_rows(model, theta, data.x, data.y)
    return float(lam * imp.mean() + np.mean(real - lam * imp[data.labeled_index]))


def ppi_loss_gradient(model: MomentModel, dataset, theta, alpha: float, lambda_power: float = 1.0):
    data = _as_dataset(dataset)
    if data.n == 0:
        raise UsageError("ppi_loss needs at least one labeled record")
    alpha = float(alpha)
    _check_alpha_sources(data, alpha)
    theta = np.asarray(theta, dtype=float)
    lam = float(lambda_power)
    _, imp_g, _ = _imputed_terms(model, data, theta, alpha)
    real_g = _real_grad_rows(model, data, theta)
    return lam * imp_g.mean(axis=0) + np.mean(real_g - lam * imp_g[data.labeled_index], axis=0)


def power_tuning_lambda(real_grad, imputed_grad_lab, imputed_grad_all, H) -> float:
    """Variance-minimising power for the estimating equation.

    With all-rows means taken over the labeled rows too, the asymptotic
    variance of the tuned estimating equation is proportional to
    ``Var(a) - 2 lam (m/N) Cov(a, b) + lam**2 (m/N) Var(b)``, so the
    ``m/N`` factors cancel and the minimiser of its ``H^-1``-weighted trace is
    ``tr(H^-1 Cov_sym H^-1) / tr(H^-1 Var(b) H^-1)``, clipped to ``[0, 1]``.
    """
    H_inv = np.linalg.inv(H)
    cross = symmetrize(_cov(real_grad, imputed_grad_lab))
    var_b = _cov(imputed_grad_all)
    num = np.trace(H_inv @ cross @ H_inv.T)
    den = np.trace(H_inv @ var_b @ H_inv.T)
    if not den > 0:
        return 0.0
    return float(np.clip(num / den, 0.0, 1.0))


def _ppi_covariance(model, data, theta, alpha, lam):
    n, N = data.n, data.T
    m = N - n
    _, imp_g, imp_h = _imputed_terms(model, data, theta, alpha)
    a = _real_grad_rows(model, data, theta)
    b_lab = imp_g[data.labeled_index]
    lab_w = data.s.astype(float)
    H = (
        hessian_rows(model, theta, data.x) / n
        + lam * imp_h(None) / N
        - lam * imp_h(lab_w) / n
    )
    meat = _cov(a - lam * (m / N) * b_lab) / n
    if m:
        meat = meat + lam**2 * (m / N**2) * _cov(imp_g)
    return _sandwich(H, meat)


def select_alpha(model, dataset, theta, grid, lambda_power=1.0):
    """Grid minimiser of the mixed loss in alpha at fixed ``theta``.

    Ties (within 1e-12 relative) go to the smaller alpha.
    """
    grid = sorted(float(a) for a in grid)
    values = np.array([ppi_loss(model, dataset, theta, a, lambda_power) for a in grid])
    best = values.min()
    tol = 1e-12 * (1.0 + abs(best))
    return grid[int(np.flatnonzero(values <= best + tol)[0])], values


def ppi_estimate(model: MomentModel, dataset, cfg: PpiConfig = None, method: str = None) -> BaselineEstimate:
    """Minimiser of the mixed loss with a plug-in sandwich interval."""
    cfg = cfg or PpiConfig()
    data = _as_dataset(dataset)
    _check_labeled(model, data)
    pilot = fit_glm(model, data.x, data.y, tol=1e-12).x

    if cfg.alpha == "tune":
        _check_alpha_sources(data, 0.0)
        alpha, _ = select_alpha(model, data, pilot, cfg.alpha_grid, _lam_value(cfg.lambda_power))
    else:
        alpha = float(cfg.alpha)
    _check_alpha_sources(data, alpha)

    if cfg.lambda_power == "tune":
        _, imp_g, _ = _imputed_terms(model, data, pilot, alpha)
        a = _real_grad_rows(model, data, pilot)
        H = hessian_rows(model, pilot, data.x) / data.n
        lam = power_tuning_lambda(a, imp_g[data.labeled_index], imp_g, H)
    else:
        lam = float(cfg.lambda_power)

    def fun(theta):
        return ppi_loss(model, data, theta, alpha, lam)

    def grad(theta):
        return ppi_loss_gradient(model, data, theta, alpha, lam)

    def hess(theta):
        _, _, imp_h = _imputed_terms(model, data, theta, alpha)
        return (
            hessian_rows(model, theta, data.x) / data.n
            + lam * imp_h(None) / data.T
            - lam * imp_h(data.s.astype(float)) / data.n
        )

    fit = newton_minimize(fun, grad, hess, pilot, tol=1e-12)
    if not fit.converged:
        warnings.warn("PPI++ fit did not converge", ConvergenceWarning, stacklevel=2)
    theta = fit.x
    cov = _ppi_covariance(model, data, theta, alpha, lam)
    if method is None:
        method = "ppi-proxy" if alpha == 1.0 else "ppi-synth"
    return _result(
        theta, cov, cfg.level, method, chosen_alpha=alpha, chosen_lambda=lam,
        converged=fit.converged,
        diagnostics={"iterations": fit.n_iter, "grad_norm": fit.grad_norm},
    )


# -- cross-fitting ------------------------------------------------------------


def crossfit_folds(data: Dataset, K: int, seed: int = 0) -> np.ndarray:
    """Fold label per row; labeled and unlabeled rows are dealt separately so
    every fold gets an even share of each."""
    rng = np.random.default_rng(seed)
    folds = np.empty(data.T, dtype=np.intp)
    for rows in (data.labeled_index, np.flatnonzero(data.s == 0)):
        perm = rng.permutation(rows)
        folds[perm] = np.arange(perm.size) % K
    return folds


def select_alpha_crossfit(
    model: MomentModel, dataset, cfg: PpiConfig = None, folds: Sequence[int] = None, seed: int = 0
) -> BaselineEstimate:
    """Cross-fitted PPI++Synth.

    For each fold ``k``: fit the human-only estimate on the other folds, pick
    alpha there by minimising the mixed loss over the grid, refit on fold
    ``k`` at that alpha. The estimate is the mean of the fold estimates; the
    folds are independent, so its variance is the sum of the fold variances
    over ``K**2``.
    """
    cfg = cfg or PpiConfig()
    data = _as_dataset(dataset)
    _check_labeled(model, data)
    _check_alpha_sources(data, 0.0)
    K = int(cfg.folds)
    folds = crossfit_folds(data, K, seed) if folds is None else np.asarray(folds)
    if folds.shape != (data.T,) or set(np.unique(folds)) != set(range(K)):
        raise UsageError(f"folds must label every row with 0..{K - 1}")
    lam_sel = _lam_value(cfg.lambda_power)
    fold_thetas, fold_se, alphas, lams = [], [], [], []
    converged = True
    for k in range(K):
        train = data.subset(folds != k)
        held = data.subset(folds == k)
        for name, part in (("train", train), ("held-out", held)):
            if part.n < model.d or np.linalg.matrix_rank(part.x) < model.d:
                raise UsageError(
                    f"fold {k} ({name} part) has {part.n} labeled rows; "
                    f"at least {model.d} with full rank are required"
                )
        theta1 = fit_glm(model, train.x, train.y, tol=1e-12).x
        alpha_k, _ = select_alpha(model, train, theta1, cfg.alpha_grid, lam_sel)
        fit_k = ppi_estimate(
            model, held,
            PpiConfig(alpha=alpha_k, alpha_grid=cfg.alpha_grid, lambda_power=cfg.lambda_power,
                      folds=cfg.folds, level=cfg.level),
        )
        fold_thetas.append(fit_k.theta)
        fold_se.append(fit_k.se)
        alphas.append(alpha_k)
        lams.append(fit_k.chosen_lambda)
        converged = converged and fit_k.converged
    fold_thetas = np.array(fold_thetas)
    theta = fold_thetas.mean(axis=0)
    se = np.sqrt(np.sum(np.square(fold_se), axis=0)) / K
    return BaselineEstimate(
        theta, se, confidence_interval(theta, se, cfg.level), "ppi-synth-crossfit",
        chosen_alpha=float(np.mean(alphas)), chosen_lambda=float(np.mean(lams)),
        converged=converged,
        diagnostics={"fold_thetas": fold_thetas, "fold_alphas": alphas, "fold_lambdas": lams,
                     "fold_se": np.array(fold_se)},
    )


# -- RePPI --------------------------------------------------------------------


def _reppi_features(data: Dataset) -> np.ndarray:
    cols = [np.ones(data.T)]
    for j in range(data.M):
        cols.extend(data.aux_x[j].T)
        cols.append(data.aux_y[j])
    Z = np.column_stack(cols)
    keep = np.ones(Z.shape[1], dtype=bool)
    keep[1:] = np.ptp(Z[:, 1:], axis=0) > 0
    return Z[:, keep]


def reppi_estimate(
    model: MomentModel, dataset, level: float = 0.95, lambda_power: Union[float, str] = "tune"
) -> BaselineEstimate:
    """RePPI with a linear score model.

    1. human-only estimate ``theta_hat``;
    2. least-squares regression of each coordinate of the real score
       ``grad l_theta_hat(x, y)`` on the auxiliary pairs (labeled rows);
    3. solve ``mean_lab grad l_theta(x, y) + lam (mean_all h - mean_lab h) = 0``
       with power-tuned ``lam``.
    """
    data = _as_dataset(dataset)
    d = model.d
    if data.M < 1:
        raise StructuralError("RePPI needs at least one auxiliary source")
    _check_labeled(model, data)
    if data.n < 3 * d + 3:
        raise UsageError(f"RePPI needs at least {3 * d + 3} labeled rows, got {data.n}")
    theta_hat = fit_glm(model, data.x, data.y, tol=1e-12).x
    a = _real_grad_rows(model, data, theta_hat)
    Z = _reppi_features(data)
    Z_lab = Z[data.labeled_index]
    coef, _, rank, _ = np.linalg.lstsq(Z_lab, a, rcond=None)
    deficient = rank < Z.shape[1]
    h = Z @ coef
    h_lab = h[data.labeled_index]
    correction = h.mean(axis=0) - h_lab.mean(axis=0)
    if deficient:
        warnings.warn("RePPI score regression is rank deficient; using lambda = 0", stacklevel=2)
        lam = 0.0
    elif lambda_power == "tune":
        H = hessian_rows(model, theta_hat, data.x) / data.n
        lam = power_tuning_lambda(a, h_lab, h, H)
    else:
        lam = float(lambda_power)
    fit = fit_glm(model, data.x, data.y, linear_term=lam * correction, init=theta_hat, tol=1e-12)
    theta = fit.x
    n, N = data.n, data.T
    m = N - n
    H = hessian_rows(model, theta, data.x) / n
    a_final = _real_grad_rows(model, data, theta)
    meat = _cov(a_final - lam * (m / N) * h_lab) / n
    if m:
        meat = meat + lam**2 * (m / N**2) * _cov(h)
    cov = _sandwich(H, meat)
    if not fit.converged:
        warnings.warn("RePPI fit did not converge", ConvergenceWarning, stacklevel=2)
    return _result(
        theta, cov, level, "reppi", chosen_lambda=lam, converged=fit.converged,
        diagnostics={"iterations": fit.n_iter, "rank_deficient": deficient,
                     "correction": correction, "score_coef": coef},
    )
