"""Observation records and the columnar dataset container.

A dataset is one joint draw per row: the labeled indicator ``s``, the real
pair ``(x, y)`` when ``s == 1``, and ``M`` auxiliary pairs for every row.
Slot 0 of the auxiliary sources is the proxy (model-predicted) pair and
slots ``1..M-1`` are synthetic (model-generated) pairs.

Real covariates of unlabeled rows are absent, not padded: :class:`Dataset`
stores them only for labeled rows, so no sentinel value can leak into the
moment computations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._errors import DomainError, StructuralError, UsageError

__all__ = ["ObservationRecord", "Dataset"]


@dataclass(frozen=True)
class ObservationRecord:
    """One row of the joint draw.

    ``aux`` is a tuple of ``(x_aux, y_aux)`` pairs, one per auxiliary source.
    """

    id: str
    s: int
    x: Optional[tuple] = None
    y: Optional[float] = None
    aux: tuple = ()

    def __post_init__(self):
        if self.s not in (0, 1):
            raise StructuralError(f"record {self.id}: s must be 0 or 1, got {self.s!r}")
        if self.s == 1 and (self.x is None or self.y is None):
            raise StructuralError(f"record {self.id}: labeled record needs x and y")
        if self.s == 0 and (self.x is not None or self.y is not None):
            raise StructuralError(f"record {self.id}: unlabeled record must not carry x or y")
        object.__setattr__(self, "aux", tuple((tuple(map(float, ax)), float(ay)) for ax, ay in self.aux))
        if self.x is not None:
            object.__setattr__(self, "x", tuple(map(float, self.x)))
            object.__setattr__(self, "y", float(self.y))

    @property
    def M(self) -> int:
        return len(self.aux)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar, immutable dataset.

    Parameters
    ----------
    s : array of shape (T,)
        Labeled indicator.
    x, y : arrays of shape (n, d) and (n,)
        Real pairs of the labeled rows, in row order.
    aux_x, aux_y : arrays of shape (M, T, d) and (M, T)
        Auxiliary pairs for every row.
    ids : sequence of str, optional
    """

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    aux_x: np.ndarray
    aux_y: np.ndarray
    ids: Optional[tuple] = None
    labeled_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = _frozen(self.s, dtype=np.int8)
        if s.ndim != 1 or s.size == 0:
            raise UsageError("dataset must contain at least one row")
        if not np.all((s == 0) | (s == 1)):
            raise StructuralError("s must be 0/1")
        x = _frozen(self.x)
        y = _frozen(self.y)
        n = int(s.sum())
        if x.ndim != 2 or x.shape[0] != n:
            raise StructuralError(f"x must have shape ({n}, d), got {x.shape}")
        if y.shape != (n,):
            raise StructuralError(f"y must have shape ({n},), got {y.shape}")
        T = s.size
        aux_x = np.asarray(self.aux_x, dtype=float)
        if aux_x.size == 0:
            aux_x = np.zeros((0, T, x.shape[1]))
        aux_x = _frozen(aux_x)
        aux_y = _frozen(np.asarray(self.aux_y, dtype=float).reshape(aux_x.shape[0], T))
        if aux_x.ndim != 3 or aux_x.shape[1] != T or aux_x.shape[2] != x.shape[1]:
            raise StructuralError(
                f"aux_x must have shape (M, {T}, {x.shape[1]}), got {aux_x.shape}"
            )
        for name, arr in (("x", x), ("y", y), ("aux_x", aux_x), ("aux_y", aux_y)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} contains non-finite values")
        if self.ids is not None:
            ids = tuple(str(i) for i in self.ids)
            if len(ids) != T:
                raise StructuralError("ids must have one entry per row")
            object.__setattr__(self, "ids", ids)
        for name, arr in (("s", s), ("x", x), ("y", y), ("aux_x", aux_x), ("aux_y", aux_y)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "labeled_index", _frozen(np.flatnonzero(s), dtype=np.intp))

    # -- shape ---------------------------------------------------------------

    @property
    def T(self) -> int:
        return int(self.s.size)

    @property
    def n(self) -> int:
        return int(self.labeled_index.size)

    @property
    def m(self) -> int:
        return self.T - self.n

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    @property
    def M(self) -> int:
        return int(self.aux_x.shape[0])

    def __len__(self):
        return self.T

    # -- views ---------------------------------------------------------------

    def select_sources(self, sources: Sequence[int]) -> "Dataset":
        """Keep only the auxiliary sources at the given slot indices."""
        sources = list(sources)
        for j in sources:
            if not 0 <= j < self.M:
                raise StructuralError(f"auxiliary slot {j} not present (M={self.M})")
        return Dataset(self.s, self.x, self.y, self.aux_x[sources], self.aux_y[sources], self.ids)

    def subset(self, rows) -> "Dataset":
        """Rows ``rows`` (an index array or boolean mask), in the given order."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        pos = np.full(self.T, -1, dtype=np.intp)
        pos[self.labeled_index] = np.arange(self.n)
        lab = pos[rows]
        lab = lab[lab >= 0]
        ids = None if self.ids is None else tuple(self.ids[i] for i in rows)
        return Dataset(
            self.s[rows], self.x[lab], self.y[lab], self.aux_x[:, rows], self.aux_y[:, rows], ids
        )

    # -- records -------------------------------------------------------------

    @classmethod
    def from_records(cls, records: Sequence[ObservationRecord]) -> "Dataset":
        records = list(records)
        if not records:
            raise UsageError("dataset must contain at least one row")
        M = records[0].M
        dims = set()
        for r in records:
            if r.M != M:
                raise StructuralError(
                    f"record {r.id} has {r.M} auxiliary sources, expected {M}"
                )
            if r.x is not None:
                dims.add(len(r.x))
            dims.update(len(ax) for ax, _ in r.aux)
        if len(dims) != 1:
            raise StructuralError(f"inconsistent covariate dimensions {sorted(dims)}")
        (d,) = dims
        lab = [r for r in records if r.s == 1]
        x = np.array([r.x for r in lab], dtype=float).reshape(len(lab), d)
        y = np.array([r.y for r in lab], dtype=float)
        aux_x = np.array([[r.aux[j][0] for r in records] for j in range(M)], dtype=float)
        aux_y = np.array([[r.aux[j][1] for r in records] for j in range(M)], dtype=float)
        return cls(
            s=[r.s for r in records],
            x=x,
            y=y,
            aux_x=aux_x.reshape(M, len(records), d),
            aux_y=aux_y.reshape(M, len(records)),
            ids=[r.id for r in records],
        )

    def record(self, t: int) -> ObservationRecord:
        pos = np.searchsorted(self.labeled_index, t)
        labeled = bool(self.s[t])
        rid = self.ids[t] if self.ids is not None else str(t)
        return ObservationRecord(
            id=rid,
            s=int(self.s[t]),
            x=tuple(self.x[pos]) if labeled else None,
            y=float(self.y[pos]) if labeled else None,
            aux=tuple((tuple(self.aux_x[j, t]), float(self.aux_y[j, t])) for j in range(self.M)),
        )

    def to_records(self) -> list:
        return [self.record(t) for t in range(self.T)]
