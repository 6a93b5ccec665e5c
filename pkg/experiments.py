#!/usr/bin/env python3
"""
Numerical studies: continuity sweeps, Hölder-chain scans, Buckley scaling
and metric-axiom audits, each emitted as a CSV table
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import psutil

from characteristics import (
    HolderParams, ap_characteristic, bmo_seminorm, dstar, holder_chain_bound,
)
from config import parallel_map
from normest import EstimatorConfig, build_pool, estimate_norm
from weightgrid import (
    ExponentLike, Grid, GridFunction, LabError, ValueRangeError, Weight,
    as_exponent, make_power_weight, perturb_weight,
)

LOG = logging.getLogger("aplab.experiments")

DELTA_RTOL = 1e-10
HOLDER_SLACK = 1e-9
TRIANGLE_SLACK = 1e-12
INDISCERNIBLE_DISTANCE = 1e-12
INDISCERNIBLE_SPREAD = 1e-6
SWEEP_TERMINAL_GAP = 0.05
BUCKLEY_SLOPE_SLACK = 0.2
BUCKLEY_MIN_CHAR = 2.0


class ContractViolation(RuntimeError):
    """A study finished but its numerical contract does not hold (CLI exit code 2)"""


@dataclass(frozen=True)
class SweepRow:
    t: float
    delta: float
    ap_char: float
    norm_lb: float
    runtime_ms: int


@dataclass(frozen=True)
class HolderRecord:
    pair_id: int
    R: float
    lhs: float
    rhs: float
    factor_ratio: float
    factor_base: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + HOLDER_SLACK)


@dataclass(frozen=True)
class BuckleyRow:
    alpha: float
    ap_char: float
    norm_lb: float
    ratio: float


@dataclass(frozen=True)
class BuckleyStudy:
    rows: List[BuckleyRow]
    slope: float
    p: float

    @property
    def slope_bound(self) -> float:
        return 1.0 / (self.p - 1.0) + BUCKLEY_SLOPE_SLACK


@dataclass(frozen=True)
class AuditRow:
    trial: int
    check: str
    lhs: float
    rhs: float
    passed: bool


@dataclass(frozen=True)
class AuditReport:
    rows: List[AuditRow]

    @property
    def violations(self) -> int:
        return sum(1 for row in self.rows if not row.passed)


def _log_memory(study: str):
    """Log resident memory after a study"""
    try:
        mem_mb = psutil.Process().memory_info().rss / (1024 * 1024)
        LOG.debug(f"💾 Memory after {study}: {mem_mb:.1f} MB")
    except Exception as e:
        LOG.debug(f"Failed to get memory info: {e}")


def continuity_sweep(w0: Weight, phi: GridFunction, t_list: Sequence[float], p: ExponentLike,
                     cfg: EstimatorConfig, threads: Optional[int] = None,
                     record_runtime: bool = False) -> List[SweepRow]:
    """Rows (t, d_*(w_t, w0), [w_t]_{A_p}, norm lower bound) for w_t = w0 e^{t phi}

    t = 0 is appended to the list. Rows whose weight leaves the value range
    are skipped with a warning. The estimator pool and seed are shared by
    all rows: the pool is built once from w0, so every row scores the same
    test functions.
    """
    p = as_exponent(p)
    w0.same_grid(phi)
    t_values = [float(t) for t in t_list]
    if any(t <= 0 for t in t_values):
        raise LabError("t_list must contain positive values")
    if any(b >= a for a, b in zip(t_values, t_values[1:])):
        raise LabError("t_list must be strictly decreasing")
    if float(np.ptp(phi.values)) == 0.0:
        LOG.warning("phi is constant: every delta is 0 and all rows repeat the t=0 row")
    pool = build_pool(w0, p, cfg)

    def row(t: float) -> Optional[SweepRow]:
        started = time.perf_counter()
        try:
            w_t = perturb_weight(w0, phi, t)
        except ValueRangeError as e:
            LOG.warning(f"Skipping t={t!r}: {e}")
            return None
        delta = dstar(w_t, w0, threads=threads)
        ap_char = ap_characteristic(w_t, p, threads=threads).value
        norm_lb = estimate_norm(w_t, p, cfg, pool=pool).lower_bound
        runtime_ms = int(round((time.perf_counter() - started) * 1000)) if record_runtime else 0
        LOG.info(f"t={t!r}: delta={delta!r} [w]_A_p={ap_char!r} norm_lb={norm_lb!r}")
        return SweepRow(t=t, delta=delta, ap_char=ap_char, norm_lb=norm_lb, runtime_ms=runtime_ms)

    rows = [r for r in parallel_map(row, t_values + [0.0], threads) if r is not None]
    _report_inequality_constant(rows)
    _log_memory("continuity sweep")
    return rows


def _report_inequality_constant(rows: Sequence[SweepRow]):
    """Log (norm_lb(t)/norm_lb(0) - 1)/delta, the quantity bounded by the constant of the perturbation inequality"""
    base = next((r for r in rows if r.t == 0.0), None)
    if base is None or base.norm_lb == 0:
        return
    for r in rows:
        if r.delta > 0:
            LOG.info(f"t={r.t!r}: empirical perturbation constant {(r.norm_lb / base.norm_lb - 1.0) / r.delta!r}")


def sweep_contract_violations(rows: Sequence[SweepRow], phi_bmo: float, trend: bool = True) -> List[str]:
    """Delta linearity always; monotone gaps and the terminal gap when `trend` is set"""
    problems = []
    for r in rows:
        expected = abs(r.t) * phi_bmo
        if abs(r.delta - expected) > DELTA_RTOL * max(expected, 1e-300) and not (expected == 0 and r.delta <= 1e-12):
            problems.append(f"t={r.t!r}: delta {r.delta!r} differs from |t|*||phi||_* = {expected!r}")
    if not trend:
        return problems

    base = next((r for r in rows if r.t == 0.0), None)
    perturbed = [r for r in rows if r.t != 0.0]
    if base is None or not perturbed:
        return problems
    for column in ("ap_char", "norm_lb"):
        gaps = [abs(getattr(r, column) - getattr(base, column)) for r in perturbed]
        for (a, ra), (b, rb) in zip(zip(gaps, perturbed), zip(gaps[1:], perturbed[1:])):
            if b > a * (1.0 + 1e-12) + 1e-15:
                problems.append(f"{column} gap grows from t={ra.t!r} ({a!r}) to t={rb.t!r} ({b!r})")
    terminal = abs(perturbed[-1].ap_char - base.ap_char)
    if terminal > SWEEP_TERMINAL_GAP * base.ap_char:
        problems.append(f"terminal ap_char gap {terminal!r} exceeds {SWEEP_TERMINAL_GAP:.0%} of {base.ap_char!r}")
    return problems


def holder_chain_scan(pairs: Sequence[Tuple[Weight, Weight]], p: ExponentLike, R_list: Sequence[float],
                      include_reverse: bool = False, threads: Optional[int] = None) -> List[HolderRecord]:
    """holder_chain_bound for every pair and R; reverse adds the swapped pairs (w0, w)"""
    p = as_exponent(p)
    pairs = list(pairs)
    if include_reverse:
        pairs = pairs + [(w0, w) for w, w0 in pairs]
    jobs = [(pair_id, w, w0, float(R)) for pair_id, (w, w0) in enumerate(pairs) for R in R_list]

    def job(item) -> Optional[HolderRecord]:
        pair_id, w, w0, R = item
        try:
            bound = holder_chain_bound(w, w0, p, HolderParams(R), threads=1)
        except ValueRangeError as e:
            LOG.warning(f"Pair {pair_id}, R={R!r}: {e}")
            return None
        return HolderRecord(pair_id=pair_id, R=R, lhs=bound.lhs, rhs=bound.rhs,
                            factor_ratio=bound.factor_ratio, factor_base=bound.factor_base)

    records = [r for r in parallel_map(job, jobs, threads) if r is not None]
    violations = [r for r in records if not r.holds]
    for r in violations:
        LOG.warning(f"⚠️ Hölder chain violated for pair {r.pair_id}, R={r.R!r}: {r.lhs!r} > {r.rhs!r}")
    LOG.info(f"Hölder scan: {len(records)} records, {len(violations)} violations")
    _log_memory("holder scan")
    return records


def _fit_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) < 2:
        return math.nan
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def buckley_study(alpha_list: Sequence[float], p: ExponentLike, grid: Grid, cfg: EstimatorConfig,
                  threads: Optional[int] = None) -> BuckleyStudy:
    """Power weights |x|^alpha: characteristic, norm lower bound and log-log slope"""
    p = as_exponent(p)
    bad = [a for a in alpha_list if not (-1.0 < a < p.p - 1.0)]
    if bad:
        raise LabError(f"alpha values {bad} outside (-1, p-1) = (-1, {p.p - 1.0:g})")

    def row(alpha: float) -> BuckleyRow:
        w = make_power_weight(grid, alpha)
        ap = ap_characteristic(w, p, threads=threads)
        norm_lb = estimate_norm(w, p, cfg, ap_witness=ap.witness).lower_bound
        LOG.info(f"alpha={alpha!r}: [w]_A_p={ap.value!r} norm_lb={norm_lb!r}")
        return BuckleyRow(alpha=float(alpha), ap_char=ap.value, norm_lb=norm_lb,
                          ratio=norm_lb / ap.value ** (1.0 / (p.p - 1.0)))

    rows = parallel_map(row, list(alpha_list), threads)
    fitted = [r for r in rows if r.ap_char > BUCKLEY_MIN_CHAR]
    slope = _fit_slope([r.ap_char for r in fitted], [r.norm_lb for r in fitted])
    LOG.info(f"Buckley slope over {len(fitted)} rows: {slope!r} (exponent 1/(p-1) = {1.0 / (p.p - 1.0)!r})")
    _log_memory("buckley study")
    return BuckleyStudy(rows=rows, slope=slope, p=p.p)


def buckley_contract_violations(study: BuckleyStudy) -> List[str]:
    if math.isnan(study.slope):
        return []
    if study.slope > study.slope_bound:
        return [f"log-log slope {study.slope!r} exceeds {study.slope_bound!r}"]
    return []


def metric_axioms_audit(weights: Sequence[Weight], trials: int, seed: int = 0,
                        threads: Optional[int] = None) -> AuditReport:
    """Symmetry, triangle inequality and indiscernibility modulo scaling of d_*"""
    weights = list(weights)
    if len(weights) < 1:
        raise LabError("metric audit needs at least one weight")
    k = len(weights)
    ordered = [(i, j) for i in range(k) for j in range(k)]
    values = parallel_map(lambda ij: 0.0 if ij[0] == ij[1] else dstar(weights[ij[0]], weights[ij[1]], threads=1),
                          ordered, threads)
    d = np.array(values).reshape(k, k)

    rng = np.random.default_rng(seed)
    rows: List[AuditRow] = []
    for trial in range(trials):
        a, b, c = (int(x) for x in rng.integers(k, size=3))
        rows.append(AuditRow(trial, "symmetry", d[a, b], d[b, a], bool(d[a, b] == d[b, a])))
        rhs = d[a, b] + d[b, c]
        rows.append(AuditRow(trial, "triangle", d[a, c], rhs, bool(d[a, c] <= rhs + TRIANGLE_SLACK)))
        if d[a, b] <= INDISCERNIBLE_DISTANCE:
            ratio = weights[a].values / weights[b].values
            spread = float((ratio.max() - ratio.min()) / ratio.max())
            rows.append(AuditRow(trial, "indiscernible", spread, INDISCERNIBLE_SPREAD,
                                 bool(spread <= INDISCERNIBLE_SPREAD)))

    report = AuditReport(rows=rows)
    LOG.info(f"Metric audit: {trials} trials, {len(rows)} checks, {report.violations} violations")
    _log_memory("metric audit")
    return report


def write_rows(rows: Iterable, path: Union[str, Path], columns: Optional[Sequence[str]] = None,
               rename: Optional[dict] = None) -> Path:
    """Write dataclass rows as CSV with 17 significant digits"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = [asdict(r) for r in rows]
    df = pd.DataFrame.from_records(records, columns=columns)
    if rename:
        df = df.rename(columns=rename)
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    LOG.info(f"📄 Wrote {len(df)} rows to {path}")
    return path


def write_sweep(rows: Sequence[SweepRow], path: Union[str, Path]) -> Path:
    return write_rows(rows, path, [f.name for f in fields(SweepRow)])


def write_holder(records: Sequence[HolderRecord], path: Union[str, Path]) -> Path:
    return write_rows(records, path, [f.name for f in fields(HolderRecord)])


def write_buckley(study: BuckleyStudy, path: Union[str, Path]) -> Path:
    return write_rows(study.rows, path, [f.name for f in fields(BuckleyRow)])


def write_audit(report: AuditReport, path: Union[str, Path]) -> Path:
    return write_rows(report.rows, path, [f.name for f in fields(AuditRow)], rename={"passed": "pass"})
