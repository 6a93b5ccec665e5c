#!/usr/bin/env python3
"""
Grids, piecewise-constant grid functions and weights
Substrate shared by every computation of the A_p weight laboratory
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

LOG = logging.getLogger("aplab.weightgrid")

DEFAULT_VALUE_FLOOR = 1e-12
DEFAULT_VALUE_CEILING = 1e12


class LabError(ValueError):
    """Validation error raised by the laboratory (CLI exit code 1)"""


class GridError(LabError):
    pass


class GridMismatchError(LabError):
    pass


class IntervalError(LabError):
    pass


class DomainError(LabError):
    pass


class ValueRangeError(LabError):
    """A weight value left [value_floor, value_ceiling]"""

    def __init__(self, message: str, cell: Optional[int] = None):
        super().__init__(message)
        self.cell = cell


class GridFormatError(LabError):
    pass


class MalformedRowError(GridFormatError):
    pass


class IndexGapError(GridFormatError):
    pass


class CountMismatchError(GridFormatError):
    pass


class NonFiniteValueError(GridFormatError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform partition of [-half_width, half_width) into n_cells cells"""
    half_width: float
    n_cells: int

    def __post_init__(self):
        if isinstance(self.n_cells, bool) or not isinstance(self.n_cells, (int, np.integer)):
            raise GridError(f"n_cells must be an integer, got {self.n_cells!r}")
        n = int(self.n_cells)
        if n < 2 or (n & (n - 1)) != 0:
            raise GridError(f"n_cells must be a power of two >= 2, got {n}")
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise GridError(f"half_width must be a positive finite number, got {self.half_width!r}")
        object.__setattr__(self, "n_cells", n)
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def cell_width(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    def left_edges(self) -> np.ndarray:
        return -self.half_width + np.arange(self.n_cells) * self.cell_width

    def midpoints(self) -> np.ndarray:
        """Cell midpoints; for even n_cells none of them is 0"""
        return -self.half_width + (np.arange(self.n_cells) + 0.5) * self.cell_width

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.half_width, self.n_cells * factor)


@dataclass(frozen=True)
class CellInterval:
    """Cell-aligned interval [start, end) of cell indices"""
    start: int
    end: int

    def validate(self, n_cells: int) -> "CellInterval":
        if not (0 <= self.start < self.end <= n_cells):
            raise IntervalError(f"invalid interval {self} for a grid of {n_cells} cells")
        return self

    @property
    def length(self) -> int:
        return self.end - self.start

    def __str__(self) -> str:
        return f"[{self.start},{self.end})"


@dataclass(frozen=True)
class LebesgueExponent:
    """Exponent p of L^p(w), restricted to 1 < p < inf"""
    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (math.isfinite(p) and p > 1):
            raise DomainError(f"Lebesgue exponent must satisfy 1 < p < inf, got {self.p!r}")
        object.__setattr__(self, "p", p)

    @property
    def conjugate(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def dual_power(self) -> float:
        """-1/(p-1), the exponent of the dual weight w^{-1/(p-1)}"""
        return -1.0 / (self.p - 1.0)

    def __float__(self) -> float:
        return self.p


ExponentLike = Union[float, int, LebesgueExponent]


def as_exponent(p: ExponentLike) -> LebesgueExponent:
    return p if isinstance(p, LebesgueExponent) else LebesgueExponent(p)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real piecewise-constant function on a grid; values are read-only"""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.grid.n_cells,):
            raise CountMismatchError(
                f"expected {self.grid.n_cells} values, got shape {values.shape}")
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise NonFiniteValueError(f"non-finite value {values[bad[0]]} at cell {bad[0]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.grid.n_cells

    def same_grid(self, other: "GridFunction") -> None:
        if self.grid != other.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")


@dataclass(frozen=True, eq=False)
class Weight(GridFunction):
    """Strictly positive grid function inside [value_floor, value_ceiling]"""
    value_floor: float = DEFAULT_VALUE_FLOOR
    value_ceiling: float = DEFAULT_VALUE_CEILING

    def __post_init__(self):
        super().__post_init__()
        out = np.flatnonzero((self.values < self.value_floor) | (self.values > self.value_ceiling))
        if out.size:
            cell = int(out[0])
            raise ValueRangeError(
                f"weight value {self.values[cell]!r} at cell {cell} outside "
                f"[{self.value_floor:g}, {self.value_ceiling:g}]", cell=cell)

    def with_values(self, values: np.ndarray) -> "Weight":
        """New weight on the same grid with the same range guards"""
        return Weight(self.grid, values, self.value_floor, self.value_ceiling)

    def power(self, r: float) -> "Weight":
        return self.with_values(np.power(self.values, r))


def as_weight(f: GridFunction,
              value_floor: float = DEFAULT_VALUE_FLOOR,
              value_ceiling: float = DEFAULT_VALUE_CEILING) -> Weight:
    """Promote a grid function to a weight, enforcing the range guards"""
    if isinstance(f, Weight):
        return f
    return Weight(f.grid, f.values, value_floor, value_ceiling)


def constant_weight(grid: Grid, value: float = 1.0, **guards) -> Weight:
    return Weight(grid, np.full(grid.n_cells, float(value)), **guards)


def make_power_weight(grid: Grid, alpha: float, **guards) -> Weight:
    """w(x) = |x|^alpha sampled at cell midpoints"""
    values = np.power(np.abs(grid.midpoints()), float(alpha))
    return Weight(grid, values, **guards)


def step_function(grid: Grid, height: float) -> GridFunction:
    """0 on the left half of the window, height on the right half"""
    values = np.zeros(grid.n_cells)
    values[grid.n_cells // 2:] = float(height)
    return GridFunction(grid, values)


def random_log_weight(grid: Grid, rng: np.random.Generator, spread: float = 1.0, **guards) -> Weight:
    """Weight whose log-values are i.i.d. uniform in [-spread, spread]"""
    return Weight(grid, np.exp(rng.uniform(-spread, spread, size=grid.n_cells)), **guards)


def refine_grid_function(f: GridFunction, factor: int = 2) -> GridFunction:
    """Split each cell into `factor` equal cells carrying the same value"""
    grid = f.grid.refined(factor)
    values = np.repeat(f.values, factor)
    if isinstance(f, Weight):
        return Weight(grid, values, f.value_floor, f.value_ceiling)
    return GridFunction(grid, values)


def perturb_weight(w0: Weight, phi: GridFunction, t: float) -> Weight:
    """w_t = w0 * exp(t * phi); t = 0 returns w0 itself"""
    w0.same_grid(phi)
    if t == 0:
        return w0
    return w0.with_values(w0.values * np.exp(float(t) * phi.values))


POINTWISE_OPS = ("log", "exp", "power", "abs", "scale", "add", "divide")


def pointwise_map(f: GridFunction, op: str, operand: Union[float, GridFunction, None] = None) -> GridFunction:
    """Cellwise log, exp, power(r), abs, scale(lambda), add(g) or divide(g)"""
    v = f.values
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if op == "log":
            if np.any(v <= 0):
                raise DomainError(f"log of nonpositive value at cell {int(np.flatnonzero(v <= 0)[0])}")
            out = np.log(v)
        elif op == "exp":
            out = np.exp(v)
        elif op == "power":
            if operand is None:
                raise DomainError("power needs an exponent")
            r = float(operand)
            if np.any(v <= 0) and not float(r).is_integer():
                raise DomainError("non-integer power of nonpositive value")
            out = np.power(v, r)
        elif op == "abs":
            out = np.abs(v)
        elif op == "scale":
            if operand is None:
                raise DomainError("scale needs a factor")
            out = float(operand) * v
        elif op in ("add", "divide"):
            if not isinstance(operand, GridFunction):
                raise DomainError(f"{op} needs a grid function operand")
            f.same_grid(operand)
            if op == "add":
                out = v + operand.values
            else:
                if np.any(operand.values <= 0):
                    raise DomainError("divide requires a strictly positive divisor")
                out = v / operand.values
        else:
            raise DomainError(f"unknown pointwise operation {op!r}; expected one of {POINTWISE_OPS}")

    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise ValueRangeError(f"{op} produced a non-finite value at cell {int(bad[0])}", cell=int(bad[0]))
    return GridFunction(f.grid, out)


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _parse_meta_line(line: str) -> Grid:
    meta = {}
    for token in line.lstrip("#").split():
        key, _, value = token.partition("=")
        meta[key] = value
    try:
        return Grid(float(meta["half_width"]), int(meta["n_cells"]))
    except (KeyError, ValueError) as e:
        raise GridFormatError(f"bad grid comment line {line.strip()!r}: {e}") from e


def write_grid_function(f: GridFunction, path: Union[str, Path], sidecar: bool = False) -> Path:
    """Write `cell_index,value` CSV with a grid comment line (and optional JSON sidecar)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame({"cell_index": np.arange(f.grid.n_cells), "value": f.values})
    with open(path, "w", newline="") as fh:
        fh.write(f"# half_width={f.grid.half_width!r} n_cells={f.grid.n_cells}\n")
        df.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    if sidecar:
        _sidecar_path(path).write_text(
            json.dumps({"half_width": f.grid.half_width, "n_cells": f.grid.n_cells}) + "\n")
    LOG.debug(f"Wrote {f.grid.n_cells} cells to {path}")
    return path


def read_grid_function(path: Union[str, Path], grid: Optional[Grid] = None) -> GridFunction:
    """Read a grid function written by write_grid_function

    Grid metadata comes from the leading comment line, else from the JSON
    sidecar next to the file, else from the `grid` argument.
    """
    path = Path(path)
    if not path.exists():
        raise GridFormatError(f"grid function file not found: {path}")

    with open(path) as fh:
        first = fh.readline()
    if first.startswith("#"):
        grid = _parse_meta_line(first)
    elif _sidecar_path(path).exists():
        try:
            meta = json.loads(_sidecar_path(path).read_text())
            grid = Grid(float(meta["half_width"]), int(meta["n_cells"]))
        except (KeyError, ValueError, TypeError) as e:
            raise GridFormatError(f"bad sidecar {_sidecar_path(path)}: {e}") from e
    elif grid is None:
        raise GridFormatError(f"no grid metadata for {path} (comment line or JSON sidecar)")

    try:
        df = pd.read_csv(path, comment="#", dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise MalformedRowError(f"cannot parse {path}: {e}") from e

    if list(df.columns) != ["cell_index", "value"]:
        raise MalformedRowError(f"expected header 'cell_index,value', got {','.join(map(str, df.columns))}")

    indices = pd.to_numeric(df["cell_index"], errors="coerce")
    if indices.isna().any() or (indices != indices.round()).any():
        row = int(np.flatnonzero(indices.isna() | (indices != indices.round()))[0])
        raise MalformedRowError(f"row {row + 1}: bad cell index {df['cell_index'].iloc[row]!r}")
    values = pd.to_numeric(df["value"], errors="coerce")
    if values.isna().any():
        row = int(np.flatnonzero(values.isna().to_numpy())[0])
        raw = df["value"].iloc[row]
        if raw.strip().lower() in {"nan", "inf", "+inf", "-inf", "infinity", "-infinity"}:
            raise NonFiniteValueError(f"row {row + 1}: non-finite value {raw!r}")
        raise MalformedRowError(f"row {row + 1}: bad value {raw!r}")
    # float() is correctly rounded, so 17 significant digits round-trip exactly
    values = np.array([float(v) for v in df["value"]], dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NonFiniteValueError(f"row {int(bad[0]) + 1}: non-finite value {df['value'].iloc[int(bad[0])]!r}")

    expected = np.arange(len(indices))
    if not np.array_equal(indices.to_numpy(dtype=np.int64), expected):
        row = int(np.flatnonzero(indices.to_numpy(dtype=np.int64) != expected)[0])
        raise IndexGapError(f"row {row + 1}: expected cell index {row}, got {int(indices.iloc[row])}")
    if len(values) != grid.n_cells:
        raise CountMismatchError(f"{path}: {len(values)} rows for a grid of {grid.n_cells} cells")

    LOG.debug(f"Read {grid.n_cells} cells from {path}")
    return GridFunction(grid, values)
