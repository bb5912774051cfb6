"""Feature templates: grids of closed-form height likelihood functions.

A template is laid out along the feature axis.  Row 0 is the entry end and
the last row the exit end; columns run across the axis.  Heights fed to a
template are relative to the base height of the region under the entry
cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "GaussianKernel",
    "LogisticRise",
    "LogisticFall",
    "Constant",
    "LikelihoodFn",
    "FeatureTemplate",
    "TemplateFormatError",
    "eval_likelihood",
    "parse_template",
    "dump_template",
    "read_template",
    "LIKELIHOOD_FLOOR",
]

LIKELIHOOD_FLOOR = 1e-300


def _tok(v: float) -> str:
    return repr(float(v))


def _logistic(z):
    # split on sign so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class GaussianKernel:
    """Unit-peak Gaussian, equal to 1 at ``mu``."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    def evaluate(self, h):
        d = (np.asarray(h, dtype=np.float64) - self.mu) / self.sigma
        return np.maximum(np.exp(-0.5 * d * d), LIKELIHOOD_FLOOR)

    def token(self) -> str:
        return f"g:{_tok(self.mu)}:{_tok(self.sigma)}"


@dataclass(frozen=True)
class LogisticRise:
    x0: float
    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be > 0")

    def evaluate(self, h):
        return np.maximum(_logistic(self.k * (np.asarray(h, dtype=np.float64) - self.x0)), LIKELIHOOD_FLOOR)

    def token(self) -> str:
        return f"sr:{_tok(self.x0)}:{_tok(self.k)}"


@dataclass(frozen=True)
class LogisticFall:
    x0: float
    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be > 0")

    def evaluate(self, h):
        return np.maximum(_logistic(-self.k * (np.asarray(h, dtype=np.float64) - self.x0)), LIKELIHOOD_FLOOR)

    def token(self) -> str:
        return f"sf:{_tok(self.x0)}:{_tok(self.k)}"


@dataclass(frozen=True)
class Constant:
    """Height-independent likelihood; the only kind that tolerates Unknown cells."""

    p: float

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")

    def evaluate(self, h):
        return np.full(np.shape(h), max(self.p, LIKELIHOOD_FLOOR))

    def token(self) -> str:
        return f"c:{_tok(self.p)}"


LikelihoodFn = Union[GaussianKernel, LogisticRise, LogisticFall, Constant]


def eval_likelihood(fn: LikelihoodFn, h: float) -> float:
    if not math.isfinite(h):
        raise ValueError("height must be finite")
    return float(fn.evaluate(h))


@dataclass(frozen=True)
class FeatureTemplate:
    name: str
    cell_size: float
    rows: int
    cols: int
    grid: tuple
    entry_cells: tuple
    exit_cells: tuple

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "entry_cells", tuple(int(i) for i in self.entry_cells))
        object.__setattr__(self, "exit_cells", tuple(int(i) for i in self.exit_cells))
        if not self.name or any(ch.isspace() for ch in self.name):
            raise ValueError("template name must be a non-empty identifier")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be > 0")
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("rows and cols must be positive")
        if len(self.grid) != self.rows * self.cols:
            raise ValueError(f"grid has {len(self.grid)} cells, expected {self.rows * self.cols}")
        if not self.entry_cells or not self.exit_cells:
            raise ValueError("entry and exit cells must be nonempty")
        if set(self.entry_cells) & set(self.exit_cells):
            raise ValueError("entry and exit cells must be disjoint")
        for i in self.entry_cells + self.exit_cells:
            if not 0 <= i < self.n_cells:
                raise ValueError(f"cell index {i} out of range")

    @property
    def n_cells(self) -> int:
        """M, the number of template cells."""
        return self.rows * self.cols

    @property
    def length(self) -> float:
        return self.rows * self.cell_size

    @property
    def width(self) -> float:
        return self.cols * self.cell_size

    def offsets(self) -> np.ndarray:
        """``(M, 2)`` array of (along, lateral) cell-centre offsets from the template centre."""
        i, j = np.divmod(np.arange(self.n_cells), self.cols)
        along = (i - (self.rows - 1) / 2.0) * self.cell_size
        lateral = (j - (self.cols - 1) / 2.0) * self.cell_size
        return np.column_stack([along, lateral])

    def cell(self, row: int, col: int) -> LikelihoodFn:
        return self.grid[row * self.cols + col]


class TemplateFormatError(ValueError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


_TAGS = {"g": GaussianKernel, "sr": LogisticRise, "sf": LogisticFall}


def parse_cell(token: str, line: int = 1, column: int = 1) -> LikelihoodFn:
    """Parse one cell token such as ``g:0.16:0.02`` or ``c:1.0``."""
    parts = token.split(":")
    tag = parts[0]
    try:
        if tag == "c" and len(parts) == 2:
            return Constant(float(parts[1]))
        if tag in _TAGS and len(parts) == 3:
            return _TAGS[tag](float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise TemplateFormatError(f"invalid cell {token!r}: {exc}", line, column) from None
    if tag not in _TAGS and tag != "c":
        raise TemplateFormatError(f"unknown cell tag {tag!r}", line, column)
    raise TemplateFormatError(f"wrong number of parameters in {token!r}", line, column)


def _indices(line_text: str, keyword: str, line: int) -> list[int]:
    parts = line_text.split()
    if not parts or parts[0] != keyword:
        raise TemplateFormatError(f"expected '{keyword} <idx ...>'", line)
    try:
        return [int(p) for p in parts[1:]]
    except ValueError:
        raise TemplateFormatError(f"bad {keyword} index list", line) from None


def parse_template(text: str) -> FeatureTemplate:
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip() and not ln.lstrip().startswith("#")]
    if len(lines) < 5:
        raise TemplateFormatError("template is truncated", lines[-1][0] if lines else 1)

    n, ln = lines[0]
    parts = ln.split()
    if len(parts) != 2 or parts[0] != "name":
        raise TemplateFormatError("expected 'name <ident>'", n)
    name = parts[1]

    n, ln = lines[1]
    parts = ln.split()
    if len(parts) != 2 or parts[0] != "cell_size":
        raise TemplateFormatError("expected 'cell_size <float>'", n)
    try:
        cell_size = float(parts[1])
    except ValueError:
        raise TemplateFormatError(f"bad cell_size {parts[1]!r}", n, ln.index(parts[1]) + 1) from None
    if not cell_size > 0:
        raise TemplateFormatError("cell_size must be > 0", n)

    n, ln = lines[2]
    try:
        rows, cols = (int(p) for p in ln.split())
    except ValueError:
        raise TemplateFormatError("expected '<rows> <cols>'", n) from None
    if rows <= 0 or cols <= 0:
        raise TemplateFormatError("rows and cols must be positive", n)

    grid = []
    body = lines[3:-2]
    for n, ln in body:
        col = 0
        for tok in ln.split():
            col = ln.index(tok, col) + 1
            grid.append(parse_cell(tok, n, col))
            col += len(tok) - 1
    if len(grid) != rows * cols:
        at = body[-1][0] if body else lines[2][0]
        raise TemplateFormatError(f"expected {rows * cols} cells, found {len(grid)}", at)

    n_entry, entry_line = lines[-2]
    n_exit, exit_line = lines[-1]
    entry = _indices(entry_line, "entry", n_entry)
    exit_ = _indices(exit_line, "exit", n_exit)
    try:
        return FeatureTemplate(name, cell_size, rows, cols, tuple(grid), tuple(entry), tuple(exit_))
    except ValueError as exc:
        raise TemplateFormatError(str(exc), n_exit) from None


def dump_template(t: FeatureTemplate) -> str:
    out = [f"name {t.name}", f"cell_size {_tok(t.cell_size)}", f"{t.rows} {t.cols}"]
    for r in range(t.rows):
        out.append(" ".join(t.cell(r, c).token() for c in range(t.cols)))
    out.append("entry " + " ".join(str(i) for i in t.entry_cells))
    out.append("exit " + " ".join(str(i) for i in t.exit_cells))
    return "\n".join(out) + "\n"


def read_template(path) -> FeatureTemplate:
    with open(path, encoding="utf-8") as fh:
        return parse_template(fh.read())
