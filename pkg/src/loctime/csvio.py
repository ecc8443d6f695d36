"""Plain CSV emission with round-trip-exact floats."""
import csv
import io
import os

import numpy as np

from .errors import UsageError

FLOAT_FMT = "%.17g"


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "inf"
    if isinstance(x, str):
        return x
    return FLOAT_FMT % float(x)


def write_columns(target, header, columns) -> None:
    """Write equal-length columns under ``header``.

    ``target`` is a filesystem path or a text stream.
    """
    columns = [list(c) if not isinstance(c, np.ndarray) else c for c in columns]
    n = len(columns[0]) if columns else 0
    if any(len(c) != n for c in columns):
        raise UsageError("columns must have equal length")
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*columns):
        buf.write(",".join(format_value(x) for x in row) + "\n")
    text = buf.getvalue()
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    else:
        target.write(text)


def read_columns(source, header):
    """Read a CSV written by :func:`write_columns`; returns float arrays."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    else:
        rows = list(csv.reader(source))
    if not rows or rows[0] != list(header):
        got = rows[0] if rows else []
        raise UsageError(f"CSV header mismatch: expected {list(header)}, got {got}")
    body = rows[1:]
    return [np.array([float(r[j]) for r in body], dtype=np.float64) for j in range(len(header))]
