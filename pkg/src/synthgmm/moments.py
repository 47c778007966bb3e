"""GLM moment functions, losses and their derivatives.

The moment family is the GLM score

    psi(theta; x, y) = x * (y - mu(x' theta))

with ``mu = f'`` the derivative of the cumulant ``f``. Two links ship:
identity (``f(z) = z**2 / 2``) and logistic (``f(z) = log(1 + e**z)``).

Functions come in two flavours. The scalar-record functions
(:func:`evaluate_psi`, :func:`psi_jacobian`, :func:`glm_loss`,
:func:`glm_loss_gradient`) validate their inputs and work on one ``(x, y)``
pair. The ``*_rows`` functions are the vectorised kernels used by the
estimators; they skip validation and take stacked ``(n, d)`` designs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._errors import DomainError, StructuralError

__all__ = [
    "LINKS",
    "MomentModel",
    "evaluate_psi",
    "psi_jacobian",
    "glm_loss",
    "glm_loss_gradient",
    "psi_rows",
    "loss_rows",
    "mean_jacobian_rows",
    "hessian_rows",
]

LINKS = ("identity", "logistic")


@dataclass(frozen=True)
class MomentModel:
    """Stateless GLM moment model.

    Parameters
    ----------
    d : int
        Parameter dimension.
    link : {"identity", "logistic"}
        GLM link.
    """

    d: int
    link: str = "logistic"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise StructuralError(f"d must be a positive integer, got {self.d!r}")
        if self.link not in LINKS:
            raise StructuralError(f"unknown link {self.link!r}; expected one of {LINKS}")

    @property
    def p(self) -> int:
        # exactly identified per source
        return self.d

    def mean(self, z):
        """Mean function ``mu(z) = f'(z)``."""
        z = np.asarray(z, dtype=float)
        if self.link == "identity":
            return z
        return expit(z)

    def mean_derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.link == "identity":
            return np.ones_like(z)
        mu = expit(z)
        return mu * (1.0 - mu)

    def cumulant(self, z):
        """Cumulant ``f(z)``; softplus uses the overflow-free form."""
        z = np.asarray(z, dtype=float)
        if self.link == "identity":
            return 0.5 * z * z
        return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _check_point(model: MomentModel, theta, x, y):
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if theta.shape != (model.d,):
        raise StructuralError(f"theta must have shape ({model.d},), got {theta.shape}")
    if x.shape != (model.d,):
        raise StructuralError(f"x must have shape ({model.d},), got {x.shape}")
    if np.ndim(y) != 0:
        raise StructuralError("y must be a scalar")
    y = float(y)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(x)) and np.isfinite(y)):
        raise DomainError("theta, x and y must be finite")
    return theta, x, y


def evaluate_psi(model: MomentModel, theta, x, y) -> np.ndarray:
    """GLM score contribution ``x * (y - mu(x' theta))`` for one record."""
    theta, x, y = _check_point(model, theta, x, y)
    return x * (y - model.mean(x @ theta))


def psi_jacobian(model: MomentModel, theta, x, y) -> np.ndarray:
    """Derivative of :func:`evaluate_psi` in ``theta``: ``-mu'(x' theta) x x'``."""
    theta, x, y = _check_point(model, theta, x, y)
    return -model.mean_derivative(x @ theta) * np.outer(x, x)


def glm_loss(model: MomentModel, theta, x, y) -> float:
    """GLM loss ``-y x' theta + f(x' theta)``."""
    theta, x, y = _check_point(model, theta, x, y)
    z = x @ theta
    return float(model.cumulant(z) - y * z)


def glm_loss_gradient(model: MomentModel, theta, x, y) -> np.ndarray:
    theta, x, y = _check_point(model, theta, x, y)
    return x * (model.mean(x @ theta) - y)


# -- vectorised kernels -------------------------------------------------------


def psi_rows(model: MomentModel, theta, X, y) -> np.ndarray:
    """Row-wise scores, shape ``(n, d)``."""
    return X * (y - model.mean(X @ theta))[:, None]


def loss_rows(model: MomentModel, theta, X, y) -> np.ndarray:
    z = X @ theta
    return model.cumulant(z) - y * z


def hessian_rows(model: MomentModel, theta, X, weights=None) -> np.ndarray:
    """Sum over rows of ``w_i mu'(x_i' theta) x_i x_i'``."""
    w = model.mean_derivative(X @ theta)
    if weights is not None:
        w = w * weights
    return (X * w[:, None]).T @ X


def mean_jacobian_rows(model: MomentModel, theta, X, weights=None, divisor=None) -> np.ndarray:
    """Mean Jacobian of :func:`psi_rows`, i.e. ``-H / divisor``.

    ``divisor`` defaults to the number of rows.
    """
    divisor = X.shape[0] if divisor is None else divisor
    return -hessian_rows(model, theta, X, weights) / divisor
