"""Symmetric-matrix helpers shared by the GMM solver and inference code."""

from __future__ import annotations

import numpy as np
from scipy import linalg

from ._errors import StructuralError

COND_LIMIT = 1e12


def symmetrize(a):
    return 0.5 * (a + a.T)


def check_symmetric(a, tol=1e-10, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructuralError(f"{name} must be square, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), 1.0) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > tol * scale:
        raise StructuralError(f"{name} is not symmetric")
    return a


def ridge_inverse(omega, ridge_epsilon=1e-8, cond_limit=COND_LIMIT):
    """Inverse of a symmetric PSD matrix, ridged only when needed.

    Returns ``(inverse, ridge)`` where ``ridge`` is the multiple of the
    identity that was added (0 when the plain Cholesky succeeded and the
    condition number is below ``cond_limit``).
    """
    omega = symmetrize(np.asarray(omega, dtype=float))
    k = omega.shape[0]
    eye = np.eye(k)
    try:
        factor = linalg.cho_factor(omega, lower=True)
        ok = np.linalg.cond(omega) <= cond_limit
    except linalg.LinAlgError:
        ok = False
    ridge = 0.0
    if not ok:
        ridge = ridge_epsilon * float(np.mean(np.diag(omega)))
        if not ridge > 0:
            ridge = ridge_epsilon
        factor = linalg.cho_factor(omega + ridge * eye, lower=True)
    return symmetrize(linalg.cho_solve(factor, eye)), ridge
