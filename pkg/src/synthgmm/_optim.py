"""Damped Newton minimisation for the smooth M-estimation objectives."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import linalg

from .moments import MomentModel, hessian_rows, loss_rows


class OptimResult(NamedTuple):
    x: np.ndarray
    fun: float
    grad_norm: float
    converged: bool
    n_iter: int


def newton_minimize(fun, grad, hess, x0, tol=1e-10, max_iter=100, c1=1e-4, shrink=0.5):
    """Newton's method with Armijo backtracking.

    Indefinite Hessians are shifted by a growing multiple of the identity
    until the Cholesky factorisation succeeds.
    """
    x = np.array(x0, dtype=float)
    f = fun(x)
    g = grad(x)
    k = x.size
    for it in range(max_iter + 1):
        gnorm = float(np.max(np.abs(g))) if k else 0.0
        if gnorm <= tol:
            return OptimResult(x, f, gnorm, True, it)
        if it == max_iter:
            break
        H = hess(x)
        shift = 0.0
        scale = max(float(np.max(np.abs(np.diag(H)))), 1e-12)
        while True:
            try:
                cf = linalg.cho_factor(H + shift * np.eye(k), lower=True)
                step = -linalg.cho_solve(cf, g)
                break
            except linalg.LinAlgError:
                shift = max(2.0 * shift, 1e-8 * scale)
                if shift > 1e10 * scale:
                    step = -g
                    break
        slope = float(g @ step)
        if slope >= 0:
            step, slope = -g, -float(g @ g)
        if np.max(np.abs(step)) <= 1e-15 * (1.0 + np.max(np.abs(x))):
            # the Newton step is below rounding: the gradient floor is numerical
            return OptimResult(x, f, gnorm, gnorm <= np.sqrt(tol), it)
        t = 1.0
        accepted = False
        fuzz = 8.0 * np.finfo(float).eps * (1.0 + abs(f))  # objective rounding level
        for _ in range(60):
            x_new = x + t * step
            f_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * t * slope + fuzz:
                accepted = True
                break
            t *= shrink
        if not accepted:
            # no representable decrease left: report the current iterate
            return OptimResult(x, f, gnorm, gnorm <= np.sqrt(tol), it)
        x, f = x_new, f_new
        g = grad(x)
    gnorm = float(np.max(np.abs(g))) if k else 0.0
    return OptimResult(x, f, gnorm, gnorm <= tol, max_iter)


def fit_glm(model: MomentModel, X, y, linear_term=None, weights=None, init=None,
            tol=1e-10, max_iter=100) -> OptimResult:
    """Minimise ``sum_i w_i loss_i(theta) / sum_i w_i + linear_term' theta``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    wsum = float(w.sum())
    c = np.zeros(X.shape[1]) if linear_term is None else np.asarray(linear_term, dtype=float)

    def fun(theta):
        return float(w @ loss_rows(model, theta, X, y)) / wsum + float(c @ theta)

    def grad(theta):
        r = model.mean(X @ theta) - y
        return X.T @ (w * r) / wsum + c

    def hess(theta):
        return hessian_rows(model, theta, X, w) / wsum

    x0 = np.zeros(X.shape[1]) if init is None else init
    return newton_minimize(fun, grad, hess, x0, tol=tol, max_iter=max_iter)
