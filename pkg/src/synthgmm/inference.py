"""Asymptotic covariances and confidence intervals for GMM estimates.

``sandwich_covariance`` is the general-weight asymptotic variance and
``efficient_covariance`` its simplification under the optimal weight.
``partitioned_theta_variance`` recomputes the target block of the efficient
variance from the partitioned inverse of the moment covariance; it is an
independent route used to cross-check ``efficient_covariance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._errors import DegenerateMomentsError, IdentificationError, StructuralError, UsageError
from ._linalg import ridge_inverse, symmetrize

__all__ = [
    "ConfidenceInterval",
    "normal_quantile",
    "confidence_interval",
    "sandwich_covariance",
    "efficient_covariance",
    "partitioned_theta_variance",
    "partition_blocks",
]

# Acklam's rational approximation to the standard normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _poly(coefs, x):
    out = 0.0
    for c in coefs:
        out = out * x + c
    return out


def normal_quantile(p: float) -> float:
    """Standard normal quantile.

    Rational approximation followed by one Halley correction step, which
    brings the error to roughly machine precision on ``(1e-300, 1 - 1e-16)``.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise UsageError(f"quantile level must lie in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = _poly(_C, q) / (_poly(_D, q) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = _poly(_A, r) * q / (_poly(_B, r) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -_poly(_C, q) / (_poly(_D, q) * q + 1.0)
    if p > 0.5:
        # residual through the upper tail, where 1 - p is exact
        e = (1.0 - p) - 0.5 * math.erfc(x / math.sqrt(2.0))
    else:
        e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, value):
        return (self.lower <= value) & (value <= self.upper)


def confidence_interval(estimate, se, level: float = 0.95) -> ConfidenceInterval:
    """Wald interval ``estimate +/- z se`` with ``z`` the two-sided quantile."""
    if not 0.0 < level < 1.0:
        raise UsageError(f"level must lie in (0, 1), got {level}")
    est = np.asarray(estimate, dtype=float)
    se = np.asarray(se, dtype=float)
    if np.any(se < 0) or np.any(np.isnan(se)):
        raise UsageError("standard errors must be nonnegative")
    z = normal_quantile(1.0 - (1.0 - level) / 2.0)
    return ConfidenceInterval(est - z * se, est + z * se, level)


def _inv(a, what):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise IdentificationError(f"{what} is not finite")
    if a.size and np.linalg.cond(a) > 1e14:
        raise IdentificationError(f"{what} is singular")
    try:
        return np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise IdentificationError(f"{what} is singular") from exc


def _conform(G, W, F):
    G = np.atleast_2d(np.asarray(G, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    F = np.atleast_2d(np.asarray(F, dtype=float))
    k = G.shape[0]
    if W.shape != (k, k) or F.shape != (k, k):
        raise StructuralError(f"G is {G.shape}; W and F must be {k}x{k}, got {W.shape}, {F.shape}")
    return G, W, F


def sandwich_covariance(G, W, F) -> np.ndarray:
    """``(G'WG)^-1 G'WFWG (G'WG)^-1``."""
    G, W, F = _conform(G, W, F)
    bread = _inv(G.T @ W @ G, "G'WG")
    meat = G.T @ W @ F @ W @ G
    return symmetrize(bread @ meat @ bread.T)


def efficient_covariance(G, F, ridge_epsilon: float = 1e-8) -> np.ndarray:
    """``(G' F^-1 G)^-1``; ``F`` is ridged as in the weight inversion if needed."""
    G, _, F = _conform(G, np.eye(np.atleast_2d(G).shape[0]), F)
    F_inv, _ = ridge_inverse(F, ridge_epsilon)
    return symmetrize(_inv(G.T @ F_inv @ G, "G'F^-1 G"))


def _spd_inverse(a, what, rel_tol=1e-12):
    """Inverse of a symmetric matrix that must be positive definite."""
    a = symmetrize(np.atleast_2d(np.asarray(a, dtype=float)))
    eig = np.linalg.eigvalsh(a)
    if eig[0] <= rel_tol * max(abs(eig[-1]), np.finfo(float).tiny):
        raise DegenerateMomentsError(f"{what} is singular (smallest eigenvalue {eig[0]:.3g})")
    return symmetrize(np.linalg.inv(a))


def partitioned_theta_variance(F_blocks, G_blocks) -> np.ndarray:
    """Target-parameter block of the efficient variance via partitioned inverses.

    Parameters
    ----------
    F_blocks : tuple ``(E[mm'], E[mh'], E[hh'])``
        Moment covariance blocks for the real-data moments ``m`` and the
        auxiliary moments ``h``.
    G_blocks : tuple ``(dE[m]/dtheta, dE[h]/deta)``

    Returns
    -------
    ndarray of shape (d, d)

    Notes
    -----
    With ``F^-1 = [[A, B], [B', D]]``, ``A`` is the inverse residual variance
    of ``m`` regressed on ``h``, ``B = -A E[mh'] E[hh']^-1`` and ``D`` the
    symmetric counterpart. The result is the upper-left block of the inverse
    of ``G' F^-1 G``,

        (Gm' A Gm - Gm' B Gh (Gh' D Gh)^-1 Gh' B' Gm)^-1.
    """
    Fmm, Fmh, Fhh = (np.atleast_2d(np.asarray(b, dtype=float)) for b in F_blocks)
    Gm, Gh = (np.atleast_2d(np.asarray(b, dtype=float)) for b in G_blocks)
    pm, ph = Fmm.shape[0], Fhh.shape[0]
    if Fmh.shape != (pm, ph) or Gm.shape[0] != pm or Gh.shape[0] != ph:
        raise StructuralError("moment and Jacobian blocks do not conform")
    Fhh_inv = _spd_inverse(Fhh, "E[hh']")
    Fmm_inv = _spd_inverse(Fmm, "E[mm']")
    A = _spd_inverse(Fmm - Fmh @ Fhh_inv @ Fmh.T, "Schur complement of E[hh']")
    D = _spd_inverse(Fhh - Fmh.T @ Fmm_inv @ Fmh, "Schur complement of E[mm']")
    B = -A @ Fmh @ Fhh_inv
    P = Gm.T @ A @ Gm
    Q = Gm.T @ B @ Gh
    R = Gh.T @ D @ Gh
    schur = P - Q @ _spd_inverse(R, "Gh' D Gh") @ Q.T
    return _spd_inverse(schur, "target information")


def partition_blocks(F, G, p: int, d: int):
    """Split a full ``(F, G)`` into the blocks taken by
    :func:`partitioned_theta_variance`; the first ``p`` moments and first
    ``d`` parameters are the target ones."""
    F = np.asarray(F)
    G = np.asarray(G)
    return (F[:p, :p], F[:p, p:], F[p:, p:]), (G[:p, :d], G[p:, d:])
