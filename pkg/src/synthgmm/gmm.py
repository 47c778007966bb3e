"""Two-step GMM on the augmented moment system.

Step one minimises the GMM objective with identity weighting; because the
target parameter appears only in the real-data block, its step-one value is
the human-only estimate. Step two re-minimises with the inverse of the
moment covariance evaluated at the step-one estimate, which lets the
auxiliary moments inform the target through the off-diagonal weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._errors import ConvergenceWarning, IdentificationError, StructuralError, UsageError
from ._linalg import check_symmetric, ridge_inverse, symmetrize
from ._optim import fit_glm
from .augmented import (
    AugmentedSystem,
    PackedParameters,
    _as_dataset,
    _as_params,
    mean_jacobian,
    moment_matrix,
)
from .inference import confidence_interval, efficient_covariance, sandwich_covariance

__all__ = [
    "SolverConfig",
    "WeightMatrix",
    "GmmEstimate",
    "gmm_objective",
    "solve_gmm_step",
    "estimate_weight_matrix",
    "invert_weight",
    "initial_parameters",
    "two_step_estimate",
]


@dataclass(frozen=True)
class SolverConfig:
    """Gauss-Newton settings for each GMM minimisation."""

    max_iterations: int = 200
    gradient_tolerance: float = 1e-9
    step_tolerance: float = 1e-12
    ridge_epsilon: float = 1e-8
    backtrack_factor: float = 0.5
    sufficient_decrease: float = 1e-4

    def __post_init__(self):
        if self.max_iterations < 1:
            raise UsageError("max_iterations must be positive")
        for name in ("gradient_tolerance", "step_tolerance", "ridge_epsilon", "sufficient_decrease"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise UsageError("backtrack_factor must lie in (0, 1)")


@dataclass(frozen=True)
class WeightMatrix:
    values: np.ndarray
    ridge_applied: float = 0.0

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass
class GmmEstimate:
    """Result of :func:`two_step_estimate`.

    ``covariance`` is the asymptotic variance of ``sqrt(T)`` times the
    estimation error, so ``std_errors = sqrt(diag(covariance) / T)``.
    """

    params: PackedParameters
    weight: WeightMatrix
    objective_value: float
    covariance: np.ndarray
    std_errors: np.ndarray
    converged: bool
    iterations: int
    n_obs: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def theta(self) -> np.ndarray:
        return self.params.theta

    @property
    def theta_se(self) -> np.ndarray:
        return self.std_errors[: self.theta.size]

    def conf_int(self, level: float = 0.95):
        return confidence_interval(self.theta, self.theta_se, level)


def _weight_values(W, k):
    values = W.values if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)
    if values.shape != (k, k):
        raise StructuralError(f"weight matrix must be {k}x{k}, got {values.shape}")
    return values


def gmm_objective(system: AugmentedSystem, dataset, params, W) -> float:
    """``gbar' W gbar`` with ``gbar`` the sample-mean augmented moments."""
    data = _as_dataset(dataset)
    system.check(data)
    Wv = _weight_values(W, system.total_moments)
    gbar = moment_matrix(system, data, params).mean(axis=0)
    return float(gbar @ Wv @ gbar)


def solve_gmm_step(system: AugmentedSystem, dataset, W, init, cfg: SolverConfig = None):
    """Minimise the GMM objective at a fixed weight matrix.

    Gauss-Newton directions from ``J'WJ delta = -J'W gbar`` with Armijo
    backtracking on the objective; steepest descent when ``J'WJ`` is
    singular.

    Returns
    -------
    params : PackedParameters
    diagnostics : dict
        ``converged``, ``iterations``, ``objective``, ``grad_norm``,
        ``history`` (objective after each accepted step) and
        ``steepest_steps``.
    """
    cfg = cfg or SolverConfig()
    data = _as_dataset(dataset)
    system.check(data)
    Wv = _weight_values(W, system.total_moments)
    x = _as_params(system, init).flat

    def evaluate(v):
        gbar = moment_matrix(system, data, v).mean(axis=0)
        return gbar, float(gbar @ Wv @ gbar)

    gbar, Q = evaluate(x)
    history = [Q]
    steepest = 0
    converged = False
    it = 0
    while True:
        J = mean_jacobian(system, data, x)
        WJ = Wv @ J
        grad = 2.0 * (WJ.T @ gbar)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= cfg.gradient_tolerance:
            converged = True
            break
        if it >= cfg.max_iterations:
            break
        it += 1
        A = symmetrize(J.T @ WJ)
        try:
            cf = linalg.cho_factor(A, lower=True)
            if np.linalg.cond(A) > 1e14:
                raise linalg.LinAlgError("ill-conditioned normal equations")
            step = -linalg.cho_solve(cf, WJ.T @ gbar)
        except linalg.LinAlgError:
            step = -grad
            steepest += 1
        slope = float(grad @ step)
        if slope >= 0:
            step, slope = -grad, -float(grad @ grad)
            steepest += 1
        t = 1.0
        accepted = False
        for _ in range(80):
            cand = x + t * step
            g_new, Q_new = evaluate(cand)
            if np.isfinite(Q_new) and Q_new <= Q + cfg.sufficient_decrease * t * slope:
                accepted = True
                break
            t *= cfg.backtrack_factor
        if not accepted:
            break
        moved = float(np.max(np.abs(cand - x)))
        x, gbar, Q = cand, g_new, Q_new
        history.append(Q)
        if moved <= cfg.step_tolerance * (1.0 + float(np.max(np.abs(x)))):
            J = mean_jacobian(system, data, x)
            gnorm = float(np.max(np.abs(2.0 * J.T @ Wv @ gbar)))
            converged = gnorm <= cfg.gradient_tolerance
            break
    diagnostics = {
        "converged": converged,
        "iterations": it,
        "objective": Q,
        "grad_norm": gnorm,
        "history": history,
        "steepest_steps": steepest,
    }
    return PackedParameters.from_flat(system, x), diagnostics


def estimate_weight_matrix(system: AugmentedSystem, dataset, params) -> np.ndarray:
    """Uncentred moment covariance ``(1/T) sum_t g_t g_t'``."""
    data = _as_dataset(dataset)
    system.check(data)
    g = moment_matrix(system, data, params)
    return symmetrize(g.T @ g / data.T)


def invert_weight(omega, ridge_epsilon: float = 1e-8) -> WeightMatrix:
    """Optimal weight ``Omega^-1``.

    A ridge ``ridge_epsilon * mean(diag(Omega))`` is added only when the
    Cholesky factorisation fails or the condition number exceeds 1e12.
    """
    omega = check_symmetric(omega, tol=1e-10, name="omega")
    values, ridge = ridge_inverse(omega, ridge_epsilon)
    return WeightMatrix(values, ridge)


def _check_identified(system, data):
    if data.n == 0:
        raise UsageError("no labeled records: target parameter unidentifiable")
    if data.n < system.d:
        raise IdentificationError(
            f"{data.n} labeled records cannot identify {system.d} parameters"
        )
    if np.linalg.matrix_rank(data.x) < system.d:
        raise IdentificationError("labeled design matrix is rank deficient")


def initial_parameters(system: AugmentedSystem, data, tol=1e-12) -> PackedParameters:
    """Human-only fit for theta and an all-rows fit per auxiliary source."""
    model = system.model
    theta = fit_glm(model, data.x, data.y, tol=tol).x
    etas = tuple(fit_glm(model, data.aux_x[i], data.aux_y[i], tol=tol).x for i in range(system.M))
    return PackedParameters(theta, etas)


def two_step_estimate(system: AugmentedSystem, dataset, cfg: SolverConfig = None) -> GmmEstimate:
    """Two-step efficient GMM estimate with efficient-form covariance.

    The reported covariance uses the moment covariance re-estimated at the
    final parameters; the sandwich form under the step-one weight is kept in
    ``diagnostics["sandwich_covariance"]``.
    """
    cfg = cfg or SolverConfig()
    data = _as_dataset(dataset)
    system.check(data)
    _check_identified(system, data)

    init = initial_parameters(system, data)
    identity = WeightMatrix(np.eye(system.total_moments), 0.0)
    p1, diag1 = solve_gmm_step(system, data, identity, init, cfg)

    omega1 = estimate_weight_matrix(system, data, p1)
    W = invert_weight(omega1, cfg.ridge_epsilon)
    p2, diag2 = solve_gmm_step(system, data, W, p1, cfg)

    F = estimate_weight_matrix(system, data, p2)
    G = mean_jacobian(system, data, p2)
    V = efficient_covariance(G, F, cfg.ridge_epsilon)
    V_sandwich = sandwich_covariance(G, W.values, F)
    se = np.sqrt(np.clip(np.diag(V), 0.0, None) / data.T)

    converged = bool(diag1["converged"] and diag2["converged"])
    if not converged:
        warnings.warn(
            f"GMM did not converge (step 1: {diag1['grad_norm']:.3g}, "
            f"step 2: {diag2['grad_norm']:.3g} gradient sup-norm)",
            ConvergenceWarning,
            stacklevel=2,
        )
    diagnostics = {
        "first_step_theta": p1.theta,
        "first_step_params": p1.flat,
        "first_step_iterations": diag1["iterations"],
        "second_step_iterations": diag2["iterations"],
        "first_step_converged": diag1["converged"],
        "second_step_converged": diag2["converged"],
        "objective_history": diag2["history"],
        "ridge_applied": W.ridge_applied,
        "omega_first_step": omega1,
        "moment_covariance": F,
        "jacobian": G,
        "efficient_covariance": V,
        "sandwich_covariance": V_sandwich,
    }
    return GmmEstimate(
        params=p2,
        weight=W,
        objective_value=diag2["objective"],
        covariance=V,
        std_errors=se,
        converged=converged,
        iterations=diag1["iterations"] + diag2["iterations"],
        n_obs=data.T,
        diagnostics=diagnostics,
    )
