"""Augmented moment vector stacking real and auxiliary sources.

For ``M`` auxiliary sources the per-row moment vector has ``1 + 2M`` blocks
of length ``p``::

    block 0        s * psi(theta; x, y)               (real data)
    block i        s * psi(eta_i; x_aux_i, y_aux_i)   i = 1..M
    block M + i        psi(eta_i; x_aux_i, y_aux_i)   i = 1..M

The target ``theta`` appears only in block 0, so it stays identified by the
labeled rows alone; the auxiliary blocks inform it only through the weight
matrix of the second GMM step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._errors import StructuralError, UsageError
from .data import Dataset, ObservationRecord
from .moments import MomentModel, hessian_rows, psi_rows

__all__ = [
    "Block",
    "AugmentedSystem",
    "PackedParameters",
    "build_augmented_moments",
    "augmented_jacobian",
    "sample_mean_moments",
    "moment_matrix",
    "mean_jacobian",
]


class Block(NamedTuple):
    mask: str  # "s" or "1"
    source: str  # "real" or "aux_<i>"
    parameter: str  # "theta" or "eta_<i>"


@dataclass(frozen=True)
class AugmentedSystem:
    model: MomentModel
    M: int = 2

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 0:
            raise StructuralError(f"M must be a nonnegative integer, got {self.M!r}")

    @property
    def p(self) -> int:
        return self.model.p

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def total_moments(self) -> int:
        return self.p * (1 + 2 * self.M)

    @property
    def total_params(self) -> int:
        return self.d * (1 + self.M)

    @property
    def blocks(self) -> list:
        out = [Block("s", "real", "theta")]
        out += [Block("s", f"aux_{i}", f"eta_{i}") for i in range(1, self.M + 1)]
        out += [Block("1", f"aux_{i}", f"eta_{i}") for i in range(1, self.M + 1)]
        return out

    def moment_slice(self, block: int) -> slice:
        return slice(block * self.p, (block + 1) * self.p)

    def param_slice(self, k: int) -> slice:
        """Columns of parameter group ``k`` (0 is theta, ``i`` is eta_i)."""
        return slice(k * self.d, (k + 1) * self.d)

    def check(self, data: Dataset):
        if data.d != self.d:
            raise StructuralError(f"dataset has d={data.d}, system expects d={self.d}")
        if data.M != self.M:
            raise StructuralError(f"dataset has M={data.M} auxiliary sources, system expects M={self.M}")


@dataclass(frozen=True)
class PackedParameters:
    """``(theta, eta_1, ..., eta_M)`` with a flat view in that order."""

    theta: np.ndarray
    etas: tuple = ()

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        etas = tuple(np.array(e, dtype=float) for e in self.etas)
        if theta.ndim != 1 or any(e.shape != theta.shape for e in etas):
            raise StructuralError("theta and every eta must be vectors of the same length")
        if not (np.all(np.isfinite(theta)) and all(np.all(np.isfinite(e)) for e in etas)):
            raise StructuralError("parameters must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "etas", etas)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate((self.theta,) + self.etas)

    @classmethod
    def from_flat(cls, system: AugmentedSystem, flat) -> "PackedParameters":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (system.total_params,):
            raise StructuralError(
                f"flat parameters must have length {system.total_params}, got {flat.shape}"
            )
        d = system.d
        return cls(flat[:d], tuple(flat[d * (i + 1): d * (i + 2)] for i in range(system.M)))


def _check_record(system: AugmentedSystem, record: ObservationRecord, params: PackedParameters):
    if record.M != system.M:
        raise StructuralError(f"record {record.id} has M={record.M}, system expects M={system.M}")
    if len(params.etas) != system.M or params.theta.shape != (system.d,):
        raise StructuralError("parameters do not match the system layout")
    for ax, _ in record.aux:
        if len(ax) != system.d:
            raise StructuralError(f"record {record.id}: auxiliary covariates must have length {system.d}")
    if record.x is not None and len(record.x) != system.d:
        raise StructuralError(f"record {record.id}: x must have length {system.d}")


def build_augmented_moments(
    system: AugmentedSystem, record: ObservationRecord, params: PackedParameters
) -> np.ndarray:
    """Stacked moment vector ``g_t`` of one record, length ``p (1 + 2M)``."""
    _check_record(system, record, params)
    model, p, M = system.model, system.p, system.M
    g = np.zeros(system.total_moments)
    if record.s == 1:
        x = np.asarray(record.x)[None, :]
        g[:p] = psi_rows(model, params.theta, x, np.array([record.y]))[0]
    for i, (ax, ay) in enumerate(record.aux):
        psi = psi_rows(model, params.etas[i], np.asarray(ax)[None, :], np.array([ay]))[0]
        g[system.moment_slice(1 + M + i)] = psi
        if record.s == 1:
            g[system.moment_slice(1 + i)] = psi
    return g


def _jac_block(model, param, x):
    z = float(x @ param)
    return -model.mean_derivative(z) * np.outer(x, x)


def augmented_jacobian(
    system: AugmentedSystem, record: ObservationRecord, params: PackedParameters
) -> np.ndarray:
    """Jacobian of :func:`build_augmented_moments` in the flat parameters."""
    _check_record(system, record, params)
    model, M = system.model, system.M
    J = np.zeros((system.total_moments, system.total_params))
    if record.s == 1:
        J[system.moment_slice(0), system.param_slice(0)] = _jac_block(
            model, params.theta, np.asarray(record.x)
        )
    for i, (ax, _) in enumerate(record.aux):
        block = _jac_block(model, params.etas[i], np.asarray(ax))
        J[system.moment_slice(1 + M + i), system.param_slice(1 + i)] = block
        if record.s == 1:
            J[system.moment_slice(1 + i), system.param_slice(1 + i)] = block
    return J


def _as_dataset(dataset) -> Dataset:
    if isinstance(dataset, Dataset):
        return dataset
    records = list(dataset)
    if not records:
        raise UsageError("dataset must contain at least one record")
    return Dataset.from_records(records)


def _as_params(system, params) -> PackedParameters:
    if isinstance(params, PackedParameters):
        return params
    return PackedParameters.from_flat(system, params)


def moment_matrix(system: AugmentedSystem, data: Dataset, params) -> np.ndarray:
    """Per-row augmented moments, shape ``(T, p (1 + 2M))``."""
    params = _as_params(system, params)
    model, p, M = system.model, system.p, system.M
    g = np.zeros((data.T, system.total_moments))
    if data.n:
        g[data.labeled_index, :p] = psi_rows(model, params.theta, data.x, data.y)
    s = data.s.astype(float)[:, None]
    for i in range(M):
        psi = psi_rows(model, params.etas[i], data.aux_x[i], data.aux_y[i])
        g[:, system.moment_slice(1 + i)] = s * psi
        g[:, system.moment_slice(1 + M + i)] = psi
    return g


def mean_jacobian(system: AugmentedSystem, data: Dataset, params) -> np.ndarray:
    """Mean of :func:`augmented_jacobian` over all ``T`` rows."""
    params = _as_params(system, params)
    model, M, T = system.model, system.M, data.T
    J = np.zeros((system.total_moments, system.total_params))
    if data.n:
        J[system.moment_slice(0), system.param_slice(0)] = -hessian_rows(model, params.theta, data.x) / T
    s = data.s.astype(float)
    for i in range(M):
        cols = system.param_slice(1 + i)
        X = data.aux_x[i]
        J[system.moment_slice(1 + i), cols] = -hessian_rows(model, params.etas[i], X, weights=s) / T
        J[system.moment_slice(1 + M + i), cols] = -hessian_rows(model, params.etas[i], X) / T
    return J


def sample_mean_moments(system: AugmentedSystem, dataset, params) -> np.ndarray:
    """``(1/T) sum_t g_t``; the divisor is always the total row count ``T``."""
    data = _as_dataset(dataset)
    system.check(data)
    return moment_matrix(system, data, params).mean(axis=0)
