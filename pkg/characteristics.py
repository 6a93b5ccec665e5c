#!/usr/bin/env python3
"""
Interval-supremum engines: A_p characteristic, BMO seminorm, d_* metric
and the two-factor Hölder bound on the A_p characteristic

Every supremum runs over the cell-aligned intervals [i, j) of the grid.
The family is scanned by interval length; each length is one vectorized
pass, and lengths are spread over worker threads. Witnesses are reduced
lexicographically, so results do not depend on the thread count.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import minimize_scalar

from config import parallel_map
from weightgrid import (
    CellInterval, DomainError, ExponentLike, GridFunction, LebesgueExponent, Weight,
    as_exponent, pointwise_map,
)

LOG = logging.getLogger("aplab.characteristics")

# Candidate = (value, start, end)
Candidate = Tuple[float, int, int]


@dataclass(frozen=True)
class ApResult:
    """[w]_{A_p} over cell-aligned intervals with the interval attaining it"""
    value: float
    witness: CellInterval
    p: LebesgueExponent


@dataclass(frozen=True)
class BmoResult:
    """||f||_* over cell-aligned intervals with the interval attaining it"""
    value: float
    witness: CellInterval


@dataclass(frozen=True)
class HolderParams:
    """Conjugate pair R, R' = R/(R-1) = 1 + epsilon"""
    R: float

    def __post_init__(self):
        R = float(self.R)
        if not (math.isfinite(R) and R > 1):
            raise DomainError(f"Hölder exponent R must be a finite number > 1, got {self.R!r}")
        object.__setattr__(self, "R", R)

    @property
    def Rprime(self) -> float:
        return self.R / (self.R - 1.0)

    @property
    def epsilon(self) -> float:
        return self.Rprime - 1.0


@dataclass(frozen=True)
class HolderBound:
    lhs: float
    rhs: float
    factor_ratio: float
    factor_base: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-9)


def _better(a: Candidate, b: Optional[Candidate]) -> bool:
    """Larger value wins; ties go to the smaller (start, end)"""
    if b is None:
        return True
    if a[0] != b[0]:
        return a[0] > b[0]
    return (a[1], a[2]) < (b[1], b[2])


def _reduce(candidates: Sequence[Optional[Candidate]]) -> Candidate:
    best: Optional[Candidate] = None
    for cand in candidates:
        if cand is not None and _better(cand, best):
            best = cand
    return best


def _length_chunks(n_cells: int) -> List[range]:
    """Split lengths 1..n_cells into contiguous chunks"""
    n_chunks = min(n_cells, 16)
    bounds = np.linspace(1, n_cells + 1, n_chunks + 1).astype(int)
    return [range(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _row_best(values: np.ndarray, length: int) -> Candidate:
    # argmax returns the first maximum, i.e. the smallest start for this length
    start = int(np.argmax(values))
    return float(values[start]), start, start + length


def interval_average(f: GridFunction, q: CellInterval) -> float:
    """<f>_q for a cell-aligned interval"""
    q.validate(f.grid.n_cells)
    return float(np.sum(f.values[q.start:q.end]) / q.length)


def _ap_products(prefix_w: np.ndarray, prefix_s: np.ndarray, length: int, p: float) -> np.ndarray:
    avg_w = (prefix_w[length:] - prefix_w[:-length]) / length
    avg_s = (prefix_s[length:] - prefix_s[:-length]) / length
    return avg_w * np.power(avg_s, p - 1.0)


def ap_characteristic(w: Weight, p: ExponentLike, threads: Optional[int] = None) -> ApResult:
    """[w]_{A_p} = max_q <w>_q <w^{-1/(p-1)}>_q^{p-1} over cell-aligned q"""
    p = as_exponent(p)
    if not isinstance(w, Weight):
        raise DomainError("ap_characteristic needs a Weight")
    sigma = np.power(w.values, p.dual_power)
    prefix_w = np.concatenate(([0.0], np.cumsum(w.values)))
    prefix_s = np.concatenate(([0.0], np.cumsum(sigma)))

    def scan(lengths: range) -> Optional[Candidate]:
        best = None
        for length in lengths:
            cand = _row_best(_ap_products(prefix_w, prefix_s, length, p.p), length)
            if _better(cand, best):
                best = cand
        return best

    value, start, end = _reduce(parallel_map(scan, _length_chunks(w.grid.n_cells), threads))
    LOG.debug(f"[w]_A_{p.p:g} = {value!r} on [{start},{end}) over {w.grid.n_cells} cells")
    return ApResult(value=value, witness=CellInterval(start, end), p=p)


def ap_interval_value(w: Weight, p: ExponentLike, q: CellInterval) -> float:
    """<w>_q <w^{-1/(p-1)}>_q^{p-1} on one interval"""
    p = as_exponent(p)
    q.validate(w.grid.n_cells)
    sigma = np.power(w.values[q.start:q.end], p.dual_power)
    return float(np.sum(w.values[q.start:q.end]) / q.length * (np.sum(sigma) / q.length) ** (p.p - 1.0))


def _mean_oscillation(values: np.ndarray, length: int) -> np.ndarray:
    # shifting by the first cell keeps constant windows at exactly 0
    windows = sliding_window_view(values, length)
    centred = windows - windows[:, :1]
    means = centred.mean(axis=1)
    return np.abs(centred - means[:, None]).mean(axis=1)


def bmo_seminorm(f: GridFunction, threads: Optional[int] = None) -> BmoResult:
    """||f||_* = max_q <|f - <f>_q|>_q over cell-aligned q

    Each interval's mean absolute deviation is summed directly from its
    cells, so the value is exact up to rounding and negating f gives a
    bitwise identical result.
    """
    values = f.values

    def scan(lengths: range) -> Optional[Candidate]:
        best = None
        for length in lengths:
            cand = _row_best(_mean_oscillation(values, length), length)
            if _better(cand, best):
                best = cand
        return best

    value, start, end = _reduce(parallel_map(scan, _length_chunks(f.grid.n_cells), threads))
    LOG.debug(f"||f||_* = {value!r} on [{start},{end})")
    return BmoResult(value=value, witness=CellInterval(start, end))


def _canonical_pair(u: Weight, v: Weight) -> Tuple[Weight, Weight]:
    """Order (u, v) by the first cell where they differ, larger value first"""
    differ = np.flatnonzero(u.values != v.values)
    if differ.size and u.values[differ[0]] < v.values[differ[0]]:
        return v, u
    return u, v


def dstar(u: Weight, v: Weight, threads: Optional[int] = None) -> float:
    """d_*(u, v) = ||log(u/v)||_*

    The ratio is taken in a fixed orientation of the pair, so d_*(u, v) and
    d_*(v, u) agree bitwise and v = 2u gives exactly 0.
    """
    u.same_grid(v)
    num, den = _canonical_pair(u, v)
    log_ratio = pointwise_map(pointwise_map(num, "divide", den), "log")
    return bmo_seminorm(log_ratio, threads=threads).value


def _holder_factors(w: Weight, w0: Weight, params: HolderParams) -> Tuple[Weight, Weight]:
    w.same_grid(w0)
    ratio = pointwise_map(w, "divide", w0)
    ratio_R = w0.with_values(pointwise_map(ratio, "power", params.R).values)
    base = w0.power(params.Rprime)
    return ratio_R, base


def holder_chain_bound(w: Weight, w0: Weight, p: ExponentLike, params: HolderParams,
                       threads: Optional[int] = None) -> HolderBound:
    """[w]_{A_p} <= [(w/w0)^R]_{A_p}^{1/R} [w0^{R'}]_{A_p}^{1/R'}"""
    p = as_exponent(p)
    ratio_R, base = _holder_factors(w, w0, params)
    lhs = ap_characteristic(w, p, threads).value
    factor_ratio = ap_characteristic(ratio_R, p, threads).value
    factor_base = ap_characteristic(base, p, threads).value
    rhs = factor_ratio ** (1.0 / params.R) * factor_base ** (1.0 / params.Rprime)
    return HolderBound(lhs=lhs, rhs=rhs, factor_ratio=factor_ratio, factor_base=factor_base)


def interval_holder_terms(w: Weight, w0: Weight, p: ExponentLike, params: HolderParams,
                          q: CellInterval) -> Tuple[float, float]:
    """Both sides of the two-step Hölder chain on a single interval q"""
    p = as_exponent(p)
    q.validate(w.grid.n_cells)
    ratio_R, base = _holder_factors(w, w0, params)
    sl = slice(q.start, q.end)

    def avg(values: np.ndarray) -> float:
        return float(np.sum(values[sl]) / q.length)

    lhs = ap_interval_value(w, p, q)
    rhs = (avg(ratio_R.values) ** (1.0 / params.R)
           * avg(base.values) ** (1.0 / params.Rprime)
           * avg(np.power(ratio_R.values, p.dual_power)) ** ((p.p - 1.0) / params.R)
           * avg(np.power(base.values, p.dual_power)) ** ((p.p - 1.0) / params.Rprime))
    return lhs, rhs


def power_weight_interval_ap(alpha: float, p: ExponentLike, a: float) -> float:
    """<w>_I <w^{-1/(p-1)}>_I^{p-1} for w = |x|^alpha on I = [-a, 1], 0 <= a <= 1"""
    p = as_exponent(p)
    beta = alpha / (p.p - 1.0)
    avg_w = (a ** (1.0 + alpha) + 1.0) / ((1.0 + alpha) * (1.0 + a))
    avg_s = (a ** (1.0 - beta) + 1.0) / ((1.0 - beta) * (1.0 + a))
    return avg_w * avg_s ** (p.p - 1.0)


def power_weight_continuum_ap(alpha: float, p: ExponentLike) -> float:
    """[|x|^alpha]_{A_p} over the intervals of the real line

    Dilations and the symmetry x -> -x reduce the supremum to intervals
    [-a, 1] with 0 <= a <= 1. a = 0 is the one-sided value
    1/(1+alpha) * (1/(1 - alpha/(p-1)))^{p-1}; for alpha != 0 the maximum
    sits at an interval straddling the origin.
    """
    p = as_exponent(p)
    if not (-1.0 < alpha < p.p - 1.0):
        raise DomainError(f"|x|^alpha is in A_p only for -1 < alpha < p-1, got alpha={alpha}")

    lattice = np.linspace(0.0, 1.0, 201)
    values = [power_weight_interval_ap(alpha, p, a) for a in lattice]
    k = int(np.argmax(values))
    bounds = (lattice[max(k - 1, 0)], lattice[min(k + 1, len(lattice) - 1)])
    refined = minimize_scalar(lambda a: -power_weight_interval_ap(alpha, p, a), bounds=bounds,
                              method="bounded", options={"xatol": 1e-12})
    return float(max(values[k], -refined.fun))
