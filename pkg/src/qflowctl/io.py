"""Matrix literals and CSV output shared by every module.

A matrix literal is a row-major nested list whose entries are two-element
``[re, im]`` lists of floats, e.g. ``[[[1, 0], [0, 0]], [[0, 0], [1, 0]]]``
for the 2x2 identity. Vectors are flat lists of ``[re, im]`` pairs.
"""

import csv
import io
import math
import numbers

import numpy as np


class LiteralError(ValueError):
    pass


def _entry(x, where):
    if (not isinstance(x, (list, tuple)) or len(x) != 2
            or not all(isinstance(v, numbers.Real) and not isinstance(v, bool) for v in x)):
        raise LiteralError(f"{where}: expected [re, im] pair, got {x!r}")
    re, im = float(x[0]), float(x[1])
    if not (math.isfinite(re) and math.isfinite(im)):
        raise LiteralError(f"{where}: non-finite entry")
    return complex(re, im)


def parse_matrix(lit, name="matrix"):
    if not isinstance(lit, (list, tuple)) or not lit:
        raise LiteralError(f"{name}: expected a non-empty list of rows")
    n = len(lit)
    rows = []
    for i, row in enumerate(lit):
        if not isinstance(row, (list, tuple)) or len(row) != n:
            raise LiteralError(f"{name}: row {i} must have {n} entries")
        rows.append([_entry(x, f"{name}[{i}][{j}]") for j, x in enumerate(row)])
    return np.array(rows, dtype=complex)


def parse_vector(lit, name="vector"):
    if not isinstance(lit, (list, tuple)) or not lit:
        raise LiteralError(f"{name}: expected a non-empty list")
    return np.array([_entry(x, f"{name}[{i}]") for i, x in enumerate(lit)], dtype=complex)


def parse_scalar(x, name="scalar"):
    if isinstance(x, numbers.Real) and not isinstance(x, bool):
        return complex(float(x), 0.0)
    return _entry(x, name)


def format_matrix(A):
    A = np.asarray(A, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]


def format_vector(v):
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]


def fmt(x):
    """Shortest round-tripping decimal for a float; deterministic across runs."""
    x = float(x)
    if x == 0.0:
        return "0.0"
    return repr(x)


def write_csv(path, header, rows):
    """Write a CSV with ``'\\n'`` line endings and a header row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
