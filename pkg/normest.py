#!/usr/bin/env python3
"""
Lower bounds on the weighted operator norm of the maximal operator

The estimator scores a pool of nonnegative test functions by the ratio
||Mf||_{L^p(w)} / ||f||_{L^p(w)}, keeps the best one and improves it by
derivative-free coordinate ascent with multiplicative steps. Every
reported bound is the ratio of an actual test function, so it is a
certified lower bound on the norm of the discrete operator.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from config import parallel_map
from maximal import CellUpdate, lp_norm_of_values, maximal_values
from weightgrid import (
    CellInterval, ExponentLike, GridFunction, GridMismatchError, LabError, Weight, as_exponent,
)

LOG = logging.getLogger("aplab.normest")

POOL_FAMILIES = ("constant", "indicator", "singularity", "random")
DEFAULT_STEPS = (2.0, 0.5, 1.1, 1.0 / 1.1)
DEFAULT_THETA_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

# A move must beat the current ratio by this relative margin to be taken
MOVE_TOLERANCE = 1e-12
SWEEP_TOLERANCE = 1e-6


class EstimatorError(LabError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    """Pool families, ascent budget and steps; a fixed seed makes runs reproducible"""
    families: Tuple[str, ...] = POOL_FAMILIES
    budget: int = 5000
    steps: Tuple[float, ...] = DEFAULT_STEPS
    seed: int = 0
    n_random: int = 16
    random_spread: float = 2.0
    indicator_levels: int = 6
    lattice_points: int = 9
    theta_fractions: Tuple[float, ...] = DEFAULT_THETA_FRACTIONS
    adapted_profiles: bool = True
    extra_candidates: Tuple[GridFunction, ...] = ()
    threads: Optional[int] = None

    def __post_init__(self):
        if self.budget < 0:
            raise EstimatorError(f"ascent budget must be >= 0, got {self.budget}")
        unknown = [f for f in self.families if f not in POOL_FAMILIES]
        if unknown:
            raise EstimatorError(f"unknown pool families {unknown}; expected {POOL_FAMILIES}")
        if any(s <= 0 for s in self.steps):
            raise EstimatorError("step multipliers must be positive")


@dataclass(frozen=True, eq=False)
class NormEstimate:
    lower_bound: float
    witness: GridFunction
    evaluations: int
    pool_tags: List[str]
    seed: int
    best_tag: str = ""

    def same_as(self, other: "NormEstimate") -> bool:
        """Field-for-field equality, witness values compared bitwise"""
        return (self.lower_bound == other.lower_bound
                and np.array_equal(self.witness.values, other.witness.values)
                and self.evaluations == other.evaluations
                and self.pool_tags == other.pool_tags
                and self.seed == other.seed
                and self.best_tag == other.best_tag)


class _Objective:
    """Rayleigh quotient of M on L^p(w) for raw nonnegative value arrays"""

    def __init__(self, w: Weight, p: float):
        self.w = w.values
        self.p = p
        self.h = w.grid.cell_width

    def __call__(self, values: np.ndarray) -> float:
        return self.ratio_of(values, maximal_values(values))

    def ratio_of(self, values: np.ndarray, mf: np.ndarray) -> float:
        """The quotient when Mf of `values` is already known"""
        den = lp_norm_of_values(values, self.w, self.p, self.h)
        if den == 0:
            raise EstimatorError("Rayleigh quotient of the zero function")
        return lp_norm_of_values(mf, self.w, self.p, self.h) / den


def rayleigh_quotient(f: GridFunction, w: Weight, p: ExponentLike) -> float:
    """||Mf||_{L^p(w)} / ||f||_{L^p(w)}"""
    p = as_exponent(p)
    f.same_grid(w)
    return _Objective(w, p.p)(np.abs(f.values))


def unweighted_norm_bound(p: ExponentLike) -> float:
    """Norm of the continuum uncentered maximal operator on L^p(R)

    Positive root of (p-1) x^p - p x^(p-1) - 1 = 0; bounds the discrete
    operator for w = 1 since the discrete Mf is pointwise smaller.
    """
    p = as_exponent(p).p

    def g(x: float) -> float:
        return (p - 1.0) * x ** p - p * x ** (p - 1.0) - 1.0

    hi = 2.0
    while g(hi) <= 0:
        hi *= 2.0
    return brentq(g, 1.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _indicator(n: int, start: int, end: int) -> np.ndarray:
    values = np.zeros(n)
    values[start:end] = 1.0
    return values


def build_pool(w: Weight, p: ExponentLike, cfg: EstimatorConfig,
               ap_witness: Optional[CellInterval] = None) -> List[Tuple[str, np.ndarray]]:
    """Tagged candidate test functions, in a fixed order"""
    p = as_exponent(p)
    grid = w.grid
    n = grid.n_cells
    pool: List[Tuple[str, np.ndarray]] = []

    for family in cfg.families:
        if family == "constant":
            pool.append(("constant", np.ones(n)))
        elif family == "indicator":
            if ap_witness is not None:
                pool.append(("indicator", _indicator(n, ap_witness.start, ap_witness.end)))
            for level in range(cfg.indicator_levels + 1):
                length = n >> level
                if length < 1:
                    break
                for start in range(0, n, length):
                    pool.append(("indicator", _indicator(n, start, start + length)))
        elif family == "singularity":
            x = grid.midpoints()
            h = grid.cell_width
            adapt = np.power(w.values, -1.0 / p.p)
            adapt /= adapt.max()
            centres = np.linspace(-grid.half_width, grid.half_width, cfg.lattice_points)
            for a in centres:
                distance = np.abs(x - a) + h
                for fraction in cfg.theta_fractions:
                    profile = np.power(distance, -fraction / p.p)
                    pool.append(("singularity", profile))
                    if cfg.adapted_profiles:
                        pool.append(("singularity", profile * adapt))
        elif family == "random":
            rng = np.random.default_rng(cfg.seed)
            for _ in range(cfg.n_random):
                pool.append(("random", np.exp(rng.uniform(-cfg.random_spread, cfg.random_spread, size=n))))

    for extra in cfg.extra_candidates:
        extra.same_grid(w)
        pool.append(("extra", np.abs(extra.values)))
    return pool


def _ascend(objective: _Objective, values: np.ndarray, ratio: float,
            cfg: EstimatorConfig) -> Tuple[np.ndarray, float, int]:
    """Coordinate ascent with multiplicative per-cell steps

    Each step is scored from an incremental update of Mf. The final point
    is rescored from scratch and kept only if it beats the starting ratio,
    so the returned ratio is always the exact quotient of the returned values.
    """
    start_values, start_ratio = values, ratio
    values = values.copy()
    used = 0
    moved = False
    while used < cfg.budget:
        mf = maximal_values(values)
        ratio = objective.ratio_of(values, mf)
        sweep_start = ratio
        # largest cells first; zero cells cannot move under multiplication
        order = [int(i) for i in np.argsort(-values, kind="stable") if values[i] > 0]
        for i in order:
            if used >= cfg.budget:
                break
            update = CellUpdate(values, mf, i)
            original = values[i]
            best_ratio, best_value, best_mf = ratio, None, None
            for step in cfg.steps:
                if used >= cfg.budget:
                    break
                values[i] = original * step
                trial_mf = update.trial(values[i])
                candidate = objective.ratio_of(values, trial_mf)
                used += 1
                if candidate > best_ratio and candidate > ratio * (1.0 + MOVE_TOLERANCE):
                    best_ratio, best_value, best_mf = candidate, values[i], trial_mf
            if best_value is None:
                values[i] = original
            else:
                values[i], mf, moved = best_value, best_mf, True
            ratio = best_ratio
        LOG.debug(f"Ascent sweep: {sweep_start!r} -> {ratio!r} after {used} evaluations")
        if (ratio - sweep_start) < SWEEP_TOLERANCE * sweep_start:
            break

    if not moved:
        return start_values, start_ratio, used
    final = objective(values)
    if final <= start_ratio:
        LOG.debug(f"Ascent end point rescored to {final!r}, keeping the start {start_ratio!r}")
        return start_values, start_ratio, used
    return values, final, used


def estimate_norm(w: Weight, p: ExponentLike, cfg: EstimatorConfig,
                  ap_witness: Optional[CellInterval] = None,
                  pool: Optional[List[Tuple[str, np.ndarray]]] = None) -> NormEstimate:
    """Certified lower bound on ||M||_{L^p(w) -> L^p(w)}

    `pool` replaces the candidates build_pool would make for w, so several
    weights can be scored against one fixed family of test functions.
    """
    p = as_exponent(p)
    if pool is None:
        pool = build_pool(w, p, cfg, ap_witness)
    else:
        for tag, candidate in pool:
            if len(candidate) != w.grid.n_cells:
                raise GridMismatchError(f"pool candidate {tag!r} has {len(candidate)} cells, "
                                        f"weight has {w.grid.n_cells}")
    if not pool and cfg.budget == 0:
        raise EstimatorError("empty pool and zero ascent budget: nothing to evaluate")

    objective = _Objective(w, p.p)
    if pool:
        scores = parallel_map(lambda item: objective(item[1]), pool, cfg.threads)
        best = 0
        for index, score in enumerate(scores):
            if score > scores[best]:
                best = index
        start_values, start_ratio, best_tag = pool[best][1], scores[best], pool[best][0]
    else:
        start_values = np.ones(w.grid.n_cells)
        start_ratio, best_tag = objective(start_values), "constant"

    evaluations = len(pool) if pool else 1
    LOG.info(f"Pool of {len(pool)} candidates: best {start_ratio!r} ({best_tag})")

    values, ratio, used = _ascend(objective, start_values, start_ratio, cfg)
    evaluations += used
    if used:
        LOG.info(f"Coordinate ascent: {start_ratio!r} -> {ratio!r} in {used} evaluations")

    tags = list(dict.fromkeys(tag for tag, _ in pool))
    return NormEstimate(lower_bound=float(ratio), witness=GridFunction(w.grid, values),
                        evaluations=evaluations, pool_tags=tags, seed=cfg.seed, best_tag=best_tag)
