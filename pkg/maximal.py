#!/usr/bin/env python3
"""
Discrete uncentered Hardy-Littlewood maximal operator and weighted L^p norms
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from weightgrid import CellInterval, ExponentLike, GridFunction, Weight, as_exponent

LOG = logging.getLogger("aplab.maximal")

# Elements per slope block; bounds memory at about 16 MB per temporary
BLOCK_ELEMENTS = 1 << 21


@dataclass(frozen=True, eq=False)
class MaximalOutput:
    """Mf on the grid plus, per cell, the interval attaining the maximum"""
    function: GridFunction
    starts: np.ndarray
    ends: np.ndarray

    def witness(self, cell: int) -> CellInterval:
        return CellInterval(int(self.starts[cell]), int(self.ends[cell]))

    @property
    def witnesses(self) -> Tuple[CellInterval, ...]:
        return tuple(self.witness(i) for i in range(len(self.starts)))

    @property
    def values(self) -> np.ndarray:
        return self.function.values


def _prefix(abs_values: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(abs_values)))


def _block_rows(n_cells: int) -> int:
    return max(1, BLOCK_ELEMENTS // (n_cells + 1))


@lru_cache(maxsize=16)
def _block_lengths(n: int, a: int, b: int) -> np.ndarray:
    """Interval lengths e - s for rows s in [a, b) and ends e in [a+1, n]; inf where e <= s"""
    lengths = (np.arange(a + 1, n + 1)[None, :] - np.arange(a, b)[:, None]).astype(np.float64)
    lengths[lengths <= 0] = np.inf
    lengths.setflags(write=False)
    return lengths


def _suffix_max_block(prefix: np.ndarray, a: int, b: int) -> np.ndarray:
    """R[s, c] = max over e >= a+1+c of (P[e]-P[s])/(e-s), rows s in [a, b)

    Entries with e <= s evaluate to 0 or -0.0, which never beat a true
    average since the data is nonnegative.
    """
    n = len(prefix) - 1
    slopes = prefix[None, a + 1:] - prefix[a:b, None]
    slopes /= _block_lengths(n, a, b)
    return np.maximum.accumulate(slopes[:, ::-1], axis=1)[:, ::-1]


def maximal_values(abs_values: np.ndarray, upto: Optional[int] = None) -> np.ndarray:
    """Mf_i = max over cell-aligned [s, e) with s <= i < e of the average of |f|

    With `upto`, only cells 0..upto are computed and returned; cell i needs
    starts s <= i only, so later rows are skipped.
    """
    n = len(abs_values)
    last = n if upto is None else min(int(upto) + 1, n)
    prefix = _prefix(abs_values)
    out = np.zeros(n)
    step = _block_rows(n)
    for a in range(0, last, step):
        b = min(a + step, last)
        acc = np.maximum.accumulate(_suffix_max_block(prefix, a, b), axis=0)
        nb = b - a
        # cells inside the block see rows a..i, later cells see the whole block
        contrib = np.concatenate((acc[np.arange(nb), np.arange(nb)], acc[-1, nb:]))
        np.maximum(out[a:], contrib, out=out[a:])
    return out[:last] + 0.0


class CellUpdate:
    """Mf after changing the value of one cell, without a full rescan

    An interval either avoids `cell` and keeps its average, or contains it
    and gains (new - old)/length. The straddling part is one slope matrix
    over starts s <= cell and ends e > cell. When the value grows every
    average can only rise, so Mf' = max(Mf, straddling). When it shrinks,
    cells whose maximum came from a straddling interval need the best
    avoiding average, which is the maximal function of the part of the
    array on their side of `cell`.
    """

    # Relative margin for deciding that Mf_j is attained by a straddling interval
    TOUCH_TOLERANCE = 1e-12

    def __init__(self, abs_values: np.ndarray, mf: np.ndarray, cell: int):
        n = len(abs_values)
        self.n = n
        self.cell = int(cell)
        self.old = float(abs_values[cell])
        self.mf = mf
        self._left = np.array(abs_values[:cell])
        self._right = np.array(abs_values[cell + 1:])
        prefix = _prefix(abs_values)
        i = self.cell
        self._sums = prefix[None, i + 1:] - prefix[:i + 1, None]
        self._lengths = (np.arange(i + 1, n + 1)[None, :] - np.arange(0, i + 1)[:, None]).astype(np.float64)
        self._touched: Optional[np.ndarray] = None
        self._avoiding: Optional[np.ndarray] = None

    def _straddling(self, delta: float) -> np.ndarray:
        """Per cell, the best average over intervals that contain `cell`"""
        slopes = (self._sums + delta) / self._lengths
        # starts s <= j for cells left of `cell`, ends e > j for the rest
        left = np.maximum.accumulate(slopes.max(axis=1))
        right = np.maximum.accumulate(slopes.max(axis=0)[::-1])[::-1]
        return np.concatenate((left[:self.cell], right))

    def _avoiding_maxima(self) -> Tuple[np.ndarray, np.ndarray]:
        """Touched cells and, for each, the best average over intervals avoiding `cell`"""
        if self._touched is None:
            i = self.cell
            base = self._straddling(0.0)
            attained = base >= self.mf * (1.0 - self.TOUCH_TOLERANCE)
            # every interval through `cell` straddles it
            attained[i] = True
            touched = np.flatnonzero(attained)
            avoiding = np.full(touched.size, -np.inf)
            left = touched < i
            if left.any():
                # mirror the left part so the touched cells come first
                lo = int(touched[left].min())
                mirrored = maximal_values(self._left[::-1], upto=i - 1 - lo)
                avoiding[left] = mirrored[i - 1 - touched[left]]
            right = touched > i
            if right.any():
                hi = int(touched[right].max())
                forward = maximal_values(self._right, upto=hi - i - 1)
                avoiding[right] = forward[touched[right] - i - 1]
            self._touched, self._avoiding = touched, avoiding
        return self._touched, self._avoiding

    def trial(self, new_value: float) -> np.ndarray:
        """Mf of the array with `cell` set to new_value"""
        delta = float(new_value) - self.old
        straddling = self._straddling(delta)
        out = np.maximum(self.mf, straddling)
        if delta < 0:
            touched, avoiding = self._avoiding_maxima()
            out[touched] = np.maximum(avoiding, straddling[touched])
        return out


def _witnesses(abs_values: np.ndarray, mf: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Lexicographically smallest (start, end) attaining Mf_i for every cell"""
    n = len(abs_values)
    prefix = _prefix(abs_values)
    starts = np.full(n, -1, dtype=np.int64)
    step = _block_rows(n)
    for a in range(0, n, step):
        b = min(a + step, n)
        suffix = _suffix_max_block(prefix, a, b)
        rows = np.arange(a, b)
        cells = np.arange(a, n)
        hit = (suffix == mf[a:][None, :]) & (rows[:, None] <= cells[None, :])
        found = hit.any(axis=0) & (starts[a:] < 0)
        starts[a:][found] = a + np.argmax(hit[:, found], axis=0)

    ends = np.empty(n, dtype=np.int64)
    for s in np.unique(starts):
        row = (prefix[s + 1:] - prefix[s]) / np.arange(1, n - s + 1, dtype=np.float64)
        for i in np.flatnonzero(starts == s):
            # row[k] is the average over [s, s+1+k); ends must exceed i
            k = i - s + int(np.argmax(row[i - s:] == mf[i]))
            ends[i] = s + 1 + k
    return starts, ends


def apply_maximal(f: GridFunction) -> MaximalOutput:
    """Discrete uncentered maximal function of f with per-cell witnesses"""
    abs_values = np.abs(f.values)
    mf = maximal_values(abs_values)
    starts, ends = _witnesses(abs_values, mf)
    LOG.debug(f"Mf computed on {f.grid.n_cells} cells, max {mf.max()!r}")
    return MaximalOutput(function=GridFunction(f.grid, mf), starts=starts, ends=ends)


def lp_norm_of_values(abs_values: np.ndarray, weight_values: np.ndarray, p: float, cell_width: float) -> float:
    return float(np.sum(weight_values * np.power(abs_values, p)) * cell_width) ** (1.0 / p)


def weighted_lp_norm(f: GridFunction, w: Weight, p: ExponentLike) -> float:
    """(sum_i w_i |f_i|^p h)^{1/p}"""
    p = as_exponent(p)
    f.same_grid(w)
    return lp_norm_of_values(np.abs(f.values), w.values, p.p, f.grid.cell_width)
