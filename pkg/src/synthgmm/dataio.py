"""Delimited-text dataset files.

Layout: a header row then one row per record. Columns are ``s`` (0/1), the
real block ``x_1..x_d, y``, the proxy block ``xhat_1..xhat_d, yhat`` and
per synthetic source ``j = 1, 2, ...`` the block ``xsyn{j}_1..xsyn{j}_d,
ysyn{j}``. An optional leading ``id`` column names the rows. Real cells are
empty on ``s = 0`` rows; empty cells are the only missing-value encoding.
"""

from __future__ import annotations

import csv
import math
import re

import numpy as np

from ._errors import ParseError, SchemaError
from .data import Dataset

__all__ = ["parse_dataset_csv", "write_dataset_csv", "expected_columns", "format_number"]

_X = re.compile(r"^x_(\d+)$")
_SYN = re.compile(r"^xsyn(\d+)_(\d+)$|^ysyn(\d+)$")


def format_number(v: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(v), ".17g")


def expected_columns(d: int, M: int, ids: bool = False) -> list:
    cols = ["id"] if ids else []
    cols += ["s"] + [f"x_{k}" for k in range(1, d + 1)] + ["y"]
    if M >= 1:
        cols += [f"xhat_{k}" for k in range(1, d + 1)] + ["yhat"]
    for j in range(1, M):
        cols += [f"xsyn{j}_{k}" for k in range(1, d + 1)] + [f"ysyn{j}"]
    return cols


def _infer_layout(header):
    d = sum(1 for c in header if _X.match(c))
    syn = set()
    for c in header:
        m = _SYN.match(c)
        if m:
            syn.add(int(m.group(1) or m.group(3)))
    has_proxy = any(c == "yhat" or c.startswith("xhat_") for c in header)
    M = (1 if has_proxy or syn else 0) + (max(syn) if syn else 0)
    return d, M


def _schema_check(header):
    d, M = _infer_layout(header)
    ids = bool(header) and header[0] == "id"
    expected = expected_columns(d, M, ids)
    if d < 1 or header != expected:
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        detail = []
        if missing:
            detail.append(f"missing {missing}")
        if extra:
            detail.append(f"unexpected {extra}")
        if not detail:
            detail.append("columns out of order")
        raise SchemaError(
            f"inconsistent column groups ({'; '.join(detail)}); "
            f"expected {expected}, found {list(header)}"
        )
    return d, M, ids


def _number(cell, line, col):
    text = cell.strip()
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"line {line}, column {col!r}: not a number: {cell!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"line {line}, column {col!r}: non-finite value {cell!r} (missing cells must be empty)")
    return value


def parse_dataset_csv(path) -> Dataset:
    """Read a dataset file; ``d`` and ``M`` come from the header.

    Raises
    ------
    SchemaError
        Header does not form complete, ordered column groups.
    ParseError
        A cell is malformed, a real cell is missing on an ``s = 1`` row, a
        real cell is filled on an ``s = 0`` row or an auxiliary cell is empty.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header") from None
        d, M, has_ids = _schema_check(header)
        off = 1 if has_ids else 0
        real_cols = header[off + 1: off + d + 2]
        aux_cols = header[off + d + 2:]
        ids, s_list, xs, ys, aux = [], [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"line {line}: expected {len(header)} fields, found {len(row)}")
            if has_ids:
                ids.append(row[0].strip())
            s_text = row[off].strip()
            if s_text not in ("0", "1"):
                raise ParseError(f"line {line}, column 's': expected 0 or 1, got {row[off]!r}")
            s = int(s_text)
            real = row[off + 1: off + d + 2]
            if s == 1:
                for col, cell in zip(real_cols, real):
                    if not cell.strip():
                        raise ParseError(f"line {line}, column {col!r}: empty real cell on a labeled (s=1) row")
                vals = [_number(c, line, col) for col, c in zip(real_cols, real)]
                xs.append(vals[:d])
                ys.append(vals[d])
            else:
                for col, cell in zip(real_cols, real):
                    if cell.strip():
                        raise ParseError(f"line {line}, column {col!r}: real value on an unlabeled (s=0) row")
            vals = []
            for col, cell in zip(aux_cols, row[off + d + 2:]):
                if not cell.strip():
                    raise ParseError(f"line {line}, column {col!r}: empty auxiliary cell")
                vals.append(_number(cell, line, col))
            aux.append(vals)
            s_list.append(s)
    if not s_list:
        raise ParseError(f"{path}: no data rows")
    T = len(s_list)
    A = np.array(aux, dtype=float).reshape(T, M, d + 1) if M else np.zeros((T, 0, d + 1))
    return Dataset(
        s=np.array(s_list, dtype=np.int8),
        x=np.array(xs, dtype=float).reshape(-1, d),
        y=np.array(ys, dtype=float),
        aux_x=np.ascontiguousarray(A[:, :, :d].transpose(1, 0, 2)),
        aux_y=np.ascontiguousarray(A[:, :, d].T),
        ids=ids if has_ids else None,
    )


def write_dataset_csv(data: Dataset, path, ids: bool = None):
    """Write ``data`` in the layout :func:`parse_dataset_csv` reads."""
    ids = data.ids is not None if ids is None else ids
    header = expected_columns(data.d, data.M, ids)
    lab = {int(t): k for k, t in enumerate(data.labeled_index)}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(data.T):
            row = [data.ids[t] if data.ids is not None else f"r{t}"] if ids else []
            row.append(str(int(data.s[t])))
            if t in lab:
                k = lab[t]
                row += [format_number(v) for v in data.x[k]] + [format_number(data.y[k])]
            else:
                row += [""] * (data.d + 1)
            for i in range(data.M):
                row += [format_number(v) for v in data.aux_x[i, t]] + [format_number(data.aux_y[i, t])]
            w.writerow(row)
