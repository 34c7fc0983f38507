"""File formats.

Kernel file (CSV-like, one value per line)::

    n
    w_1
    ...
    w_n
    K_11
    K_12
    ...          # upper triangle, row by row (i <= j), n(n+1)/2 lines
    K_nn

Values are decimals or ``inf``. Reports are JSON; matrices are plain CSV.
All writers go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ParseError
from .space import KernelMatrix, MeasureSpace


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def dump_kernel(K: KernelMatrix, omega: MeasureSpace) -> str:
    n = K.n
    if omega.n != n:
        raise ValueError("kernel and measure sizes differ")
    lines = [str(n)]
    lines += [_fmt(w) for w in omega.weights]
    iu = np.triu_indices(n)
    lines += [_fmt(v) for v in K.entries[iu]]
    return "\n".join(lines) + "\n"


def write_kernel(path, K: KernelMatrix, omega: MeasureSpace) -> None:
    _atomic_write(path, dump_kernel(K, omega))


def parse_kernel(text: str) -> tuple[KernelMatrix, MeasureSpace]:
    rows = [(no, ln.strip()) for no, ln in enumerate(text.splitlines(), start=1)]
    rows = [(no, ln) for no, ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError(1, "empty kernel file")
    no, head = rows[0]
    try:
        n = int(head)
    except ValueError:
        raise ParseError(no, f"expected the point count, got {head!r}") from None
    if n < 1:
        raise ParseError(no, "point count must be positive")
    expected = 1 + n + n * (n + 1) // 2
    if len(rows) != expected:
        last = rows[-1][0]
        raise ParseError(last, f"expected {expected} value lines for n={n}, found {len(rows)}")

    def value(no, tok):
        try:
            v = float(tok)
        except ValueError:
            raise ParseError(no, f"not a number: {tok!r}") from None
        if math.isnan(v):
            raise ParseError(no, "NaN is not allowed")
        return v

    w = np.array([value(no, tok) for no, tok in rows[1 : n + 1]])
    for (no, _), v in zip(rows[1 : n + 1], w):
        if not (v > 0 and math.isfinite(v)):
            raise ParseError(no, "weights must be positive and finite")
    vals = np.array([value(no, tok) for no, tok in rows[n + 1 :]])
    for (no, _), v in zip(rows[n + 1 :], vals):
        if not v > 0:
            raise ParseError(no, "kernel entries must be positive")
    k = np.empty((n, n))
    iu = np.triu_indices(n)
    k[iu] = vals
    k[(iu[1], iu[0])] = vals
    return KernelMatrix(k), MeasureSpace(w)


def read_kernel(path) -> tuple[KernelMatrix, MeasureSpace]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(0, f"cannot read {path}: {exc}") from None
    return parse_kernel(text)


def dump_matrix(M: np.ndarray) -> str:
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in np.atleast_2d(M))


def write_matrix(path, M: np.ndarray) -> None:
    _atomic_write(path, dump_matrix(M))


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
        return x
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    _atomic_write(path, dump_json(obj))


def write_text(path, text: str) -> None:
    _atomic_write(path, text)
