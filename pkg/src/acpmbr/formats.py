"""Plain-text matrix and factor file formats.

Partial matrix::

    N M
    i j value        # one line per observed cell, 0-based, sorted by (i, j)

Dense matrix::

    N M
    v v ... v        # N lines of M floats, no nan

Factor pair::

    d N M
    ...              # d lines of N floats (U), then d lines of M floats (V)

Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .factorization import FactorPair
from .sampling import ObservationMask, PartialScoreMatrix


class FormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


def _lines(text: str) -> list[tuple[int, list[str]]]:
    out = []
    for k, raw in enumerate(text.splitlines(), start=1):
        if raw.strip():
            out.append((k, raw.split()))
    return out


def _ints(tokens: list[str], count: int, line: int) -> list[int]:
    if len(tokens) != count:
        raise FormatError(f"expected {count} integers, got {len(tokens)} fields", line)
    try:
        vals = [int(t) for t in tokens]
    except ValueError as exc:
        raise FormatError(f"bad integer header: {exc}", line) from None
    if any(v < 1 for v in vals):
        raise FormatError("dimensions must be positive", line)
    return vals


def _float(token: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"bad float {token!r}", line) from None
    if not math.isfinite(value):
        raise FormatError(f"non-finite value {token!r}", line)
    return value


def _fmt_row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


# ---------------------------------------------------------------------------


def dump_partial(P: PartialScoreMatrix) -> str:
    N, M = P.shape
    out = [f"{N} {M}"]
    for i, j in P.mask.indices():
        out.append(f"{i} {j} {float(P.values[i, j])!r}")
    return "\n".join(out) + "\n"


def parse_partial(text: str) -> PartialScoreMatrix:
    lines = _lines(text)
    if not lines:
        raise FormatError("empty partial-matrix file", 1)
    N, M = _ints(lines[0][1], 2, lines[0][0])
    values = np.full((N, M), np.nan)
    observed = np.zeros((N, M), dtype=bool)
    prev = (-1, -1)
    for line, tokens in lines[1:]:
        if len(tokens) != 3:
            raise FormatError(f"expected 'i j value', got {len(tokens)} fields", line)
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise FormatError("bad cell index", line) from None
        if not (0 <= i < N and 0 <= j < M):
            raise FormatError(f"cell ({i}, {j}) outside {N}x{M}", line)
        if (i, j) <= prev:
            raise FormatError("cells must be unique and sorted by (i, j)", line)
        prev = (i, j)
        values[i, j] = _float(tokens[2], line)
        observed[i, j] = True
    if not observed.any():
        raise FormatError("no observed cells")
    return PartialScoreMatrix(values, ObservationMask(N, M, observed))


def dump_dense(X: np.ndarray) -> str:
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("dense matrices may not contain nan/inf")
    N, M = X.shape
    return "\n".join([f"{N} {M}"] + [_fmt_row(row) for row in X]) + "\n"


def parse_dense(text: str) -> np.ndarray:
    lines = _lines(text)
    if not lines:
        raise FormatError("empty dense-matrix file", 1)
    N, M = _ints(lines[0][1], 2, lines[0][0])
    if len(lines) - 1 != N:
        raise FormatError(f"expected {N} rows, found {len(lines) - 1}")
    X = np.empty((N, M))
    for k, (line, tokens) in enumerate(lines[1:]):
        if len(tokens) != M:
            raise FormatError(f"expected {M} values, got {len(tokens)}", line)
        X[k] = [_float(t, line) for t in tokens]
    return X


def dump_factors(F: FactorPair) -> str:
    d = F.rank
    N, M = F.shape
    out = [f"{d} {N} {M}"]
    out += [_fmt_row(row) for row in F.U]
    out += [_fmt_row(row) for row in F.V]
    return "\n".join(out) + "\n"


def parse_factors(text: str) -> FactorPair:
    lines = _lines(text)
    if not lines:
        raise FormatError("empty factor file", 1)
    d, N, M = _ints(lines[0][1], 3, lines[0][0])
    if len(lines) - 1 != 2 * d:
        raise FormatError(f"expected {2 * d} factor rows, found {len(lines) - 1}")
    rows = []
    for k, (line, tokens) in enumerate(lines[1:]):
        width = N if k < d else M
        if len(tokens) != width:
            raise FormatError(f"expected {width} values, got {len(tokens)}", line)
        rows.append([_float(t, line) for t in tokens])
    return FactorPair(np.array(rows[:d]), np.array(rows[d:]))


def read_text(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
