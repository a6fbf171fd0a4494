"""CSV ingestion and output for level data and predictions."""
from __future__ import annotations

import csv

import numpy as np


class DataError(ValueError):
    pass


def read_points_csv(path, with_y: bool = True):
    """Read ``x1,...,xd[,y]`` rows; returns ``(X, y)`` (``y`` is None without it).

    Errors name the file and the 1-based line of the offending row.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file (expected a header x1,...,xd{',y' if with_y else ''})") from None
        d = len(header) - (1 if with_y else 0)
        want = [f"x{i + 1}" for i in range(d)] + (["y"] if with_y else [])
        if d < 1 or header != want:
            raise DataError(f"{path}: line 1: header must be {','.join(want) if d >= 1 else 'x1,...,xd,y'}; got {','.join(header)}")
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            line = reader.line_num
            if len(row) != len(header):
                raise DataError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"{path}: line {line}: non-numeric value in {','.join(row)}") from None
            if not np.all(np.isfinite(vals)):
                raise DataError(f"{path}: line {line}: non-finite value")
            rows.append(vals)
    A = np.array(rows, dtype=float).reshape(len(rows), len(header))
    if with_y:
        return A[:, :d], A[:, d]
    return A, None


def write_points_csv(path, X, columns: dict, fmt: str = "%.17g"):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    names = [f"x{i + 1}" for i in range(X.shape[1])] + list(columns)
    cols = [X[:, i] for i in range(X.shape[1])] + [np.asarray(v, dtype=float).ravel() for v in columns.values()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(X.shape[0]):
            w.writerow([fmt % c[i] for c in cols])


def write_table_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
