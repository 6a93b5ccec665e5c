#!/usr/bin/env python3
"""
A_p Weight Laboratory - Command-line front end
One subcommand per computation and study; results on stdout, tables as CSV
"""
import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from characteristics import ap_characteristic, bmo_seminorm, dstar, power_weight_continuum_ap
from config import LOG_LEVELS, ConfigManager, create_example_config
from experiments import (
    ContractViolation, buckley_contract_violations, buckley_study, continuity_sweep,
    holder_chain_scan, metric_axioms_audit, sweep_contract_violations, write_audit,
    write_buckley, write_holder, write_sweep,
)
from maximal import apply_maximal
from normest import POOL_FAMILIES, EstimatorConfig, estimate_norm, unweighted_norm_bound
from weightgrid import (
    Grid, GridFunction, LabError, Weight, as_weight, constant_weight, make_power_weight,
    random_log_weight, read_grid_function, step_function, write_grid_function,
)

LOG = logging.getLogger("aplab.main")


class LabArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> List[float]:
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


@dataclass
class RunConfig:
    """Everything one invocation needs, after merging flags over the configuration file"""
    command: str
    half_width: float
    n_cells: int
    p: float
    out_dir: Path
    threads: int
    value_floor: float
    value_ceiling: float
    record_runtime: bool
    budget: int
    seed: int
    families: List[str]
    n_random: int
    indicator_levels: int
    lattice_points: int
    t_list: List[float]
    alpha_list: List[float]
    R_list: List[float]
    trials: int
    n_pairs: int
    n_weights: int
    step_height: float
    weight_path: Optional[Path] = None
    const: Optional[float] = None
    power_alpha: Optional[float] = None
    paths: dict = field(default_factory=dict)
    reverse: bool = False

    @property
    def grid(self) -> Grid:
        return Grid(self.half_width, self.n_cells)

    @property
    def guards(self) -> dict:
        return {"value_floor": self.value_floor, "value_ceiling": self.value_ceiling}

    @property
    def estimator(self) -> EstimatorConfig:
        return EstimatorConfig(families=tuple(self.families), budget=self.budget, seed=self.seed,
                               n_random=self.n_random, indicator_levels=self.indicator_levels,
                               lattice_points=self.lattice_points, threads=self.threads)

    @classmethod
    def from_args(cls, args: argparse.Namespace, cm: ConfigManager) -> "RunConfig":
        def pick(value, default):
            return default if value is None else value

        g, grid, est, study = cm.global_config, cm.grid, cm.estimator, cm.study
        families = ["constant"]
        if pick(getattr(args, "indicators", None), est.use_indicators):
            families.append("indicator")
        if pick(getattr(args, "singularity", None), est.use_singularity):
            families.append("singularity")
        if pick(getattr(args, "random", None), est.use_random):
            families.append("random")

        paths = {key: Path(value) for key in ("u", "v", "function", "phi", "weight0")
                 if (value := getattr(args, key, None)) is not None}
        return cls(
            command=args.command,
            half_width=float(pick(args.half_width, grid.half_width)),
            n_cells=int(pick(args.n_cells, grid.n_cells)),
            p=float(pick(args.p, study.p)),
            out_dir=Path(pick(args.out, g.output_dir)),
            threads=int(g.threads),
            value_floor=float(g.value_floor),
            value_ceiling=float(g.value_ceiling),
            record_runtime=bool(g.record_runtime),
            budget=int(pick(args.budget, est.budget)),
            seed=int(pick(args.seed, est.seed)),
            families=[f for f in POOL_FAMILIES if f in families],
            n_random=int(pick(args.n_random, est.n_random)),
            indicator_levels=int(est.indicator_levels),
            lattice_points=int(est.lattice_points),
            t_list=list(pick(args.t_list, study.t_list)),
            alpha_list=list(pick(args.alpha_list, study.alpha_list)),
            R_list=list(pick(args.R_list, study.R_list)),
            trials=int(pick(getattr(args, "trials", None), study.trials)),
            n_pairs=int(pick(getattr(args, "n_pairs", None), study.n_pairs)),
            n_weights=int(pick(getattr(args, "n_weights", None), study.n_weights)),
            step_height=float(pick(getattr(args, "step_height", None), study.step_height)),
            weight_path=Path(args.weight) if args.weight else None,
            const=args.const,
            power_alpha=args.power_alpha,
            paths=paths,
            reverse=bool(getattr(args, "reverse", False)),
        )

    def load_function(self, path: Path) -> GridFunction:
        return read_grid_function(path, grid=self.grid)

    def load_weight(self, path: Path) -> Weight:
        return as_weight(self.load_function(path), **self.guards)

    def weight(self) -> Weight:
        """The weight named by --weight, --const or --power-alpha (w = 1 by default)"""
        given = [x is not None for x in (self.weight_path, self.const, self.power_alpha)]
        if sum(given) > 1:
            raise LabError("give at most one of --weight, --const, --power-alpha")
        if self.weight_path is not None:
            return self.load_weight(self.weight_path)
        if self.power_alpha is not None:
            return make_power_weight(self.grid, self.power_alpha, **self.guards)
        return constant_weight(self.grid, 1.0 if self.const is None else self.const, **self.guards)

    def function(self) -> GridFunction:
        """--function when given, else the weight"""
        if "function" in self.paths:
            return self.load_function(self.paths["function"])
        return self.weight()


def _setup_logging(level: str):
    """Configure logging on stderr; stdout carries results only"""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
        force=True,
    )


def _raise_violations(problems: Sequence[str], study: str):
    if problems:
        for problem in problems:
            LOG.error(f"❌ {study}: {problem}")
        raise ContractViolation(f"{study}: {len(problems)} contract violation(s)")
    LOG.info(f"✅ {study}: contract holds")


def cmd_ap_char(rc: RunConfig) -> int:
    result = ap_characteristic(rc.weight(), rc.p, threads=rc.threads)
    print(repr(result.value))
    print(result.witness)
    return 0


def cmd_bmo(rc: RunConfig) -> int:
    result = bmo_seminorm(rc.function(), threads=rc.threads)
    print(repr(result.value))
    print(result.witness)
    return 0


def cmd_dstar(rc: RunConfig) -> int:
    if "u" not in rc.paths or "v" not in rc.paths:
        raise LabError("dstar needs --u and --v")
    u, v = rc.load_weight(rc.paths["u"]), rc.load_weight(rc.paths["v"])
    print(repr(dstar(u, v, threads=rc.threads)))
    return 0


def cmd_maxop(rc: RunConfig) -> int:
    out = apply_maximal(rc.function())
    path = write_grid_function(out.function, rc.out_dir / "maxop.csv")
    LOG.info(f"📄 Wrote Mf to {path}")
    return 0


def cmd_norm_est(rc: RunConfig) -> int:
    w = rc.weight()
    ap = ap_characteristic(w, rc.p, threads=rc.threads)
    estimate = estimate_norm(w, rc.p, rc.estimator, ap_witness=ap.witness)
    print(f"lower_bound {estimate.lower_bound!r}")
    print(f"evaluations {estimate.evaluations}")
    print(f"best_tag {estimate.best_tag}")
    print(f"pool_tags {','.join(estimate.pool_tags)}")
    print(f"seed {estimate.seed}")
    if np.all(w.values == w.values[0]):
        print(f"unweighted_bound {unweighted_norm_bound(rc.p)!r}")
    write_grid_function(estimate.witness, rc.out_dir / "witness.csv")
    return 0


def cmd_sweep(rc: RunConfig) -> int:
    w0 = rc.weight()
    default_family = "phi" not in rc.paths
    phi = step_function(rc.grid, rc.step_height) if default_family else rc.load_function(rc.paths["phi"])
    rows = continuity_sweep(w0, phi, rc.t_list, rc.p, rc.estimator, threads=rc.threads,
                            record_runtime=rc.record_runtime)
    write_sweep(rows, rc.out_dir / "sweep.csv")
    phi_bmo = bmo_seminorm(phi, threads=rc.threads).value
    _raise_violations(sweep_contract_violations(rows, phi_bmo, trend=default_family), "sweep")
    return 0


def cmd_holder_scan(rc: RunConfig) -> int:
    if rc.weight_path is not None and "weight0" in rc.paths:
        pairs = [(rc.load_weight(rc.weight_path), rc.load_weight(rc.paths["weight0"]))]
    else:
        rng = np.random.default_rng(rc.seed)
        pairs = [(random_log_weight(rc.grid, rng, **rc.guards), random_log_weight(rc.grid, rng, **rc.guards))
                 for _ in range(rc.n_pairs)]
    records = holder_chain_scan(pairs, rc.p, rc.R_list, include_reverse=rc.reverse, threads=rc.threads)
    write_holder(records, rc.out_dir / "holder.csv")
    _raise_violations([f"pair {r.pair_id}, R={r.R!r}: {r.lhs!r} > {r.rhs!r}" for r in records if not r.holds],
                      "holder-scan")
    return 0


def cmd_buckley(rc: RunConfig) -> int:
    study = buckley_study(rc.alpha_list, rc.p, rc.grid, rc.estimator, threads=rc.threads)
    write_buckley(study, rc.out_dir / "buckley.csv")
    print(f"slope {study.slope!r}")
    for row in study.rows:
        LOG.info(f"alpha={row.alpha!r}: continuum [w]_A_p = {power_weight_continuum_ap(row.alpha, rc.p)!r}")
    _raise_violations(buckley_contract_violations(study), "buckley")
    return 0


def cmd_metric_audit(rc: RunConfig) -> int:
    if rc.n_weights < 1:
        raise LabError("--n-weights must be >= 1")
    rng = np.random.default_rng(rc.seed)
    weights = [random_log_weight(rc.grid, rng, **rc.guards) for _ in range(rc.n_weights)]
    # a scaled copy and a square exercise indiscernibility and collinear triples
    weights += [weights[0].with_values(2.0 * weights[0].values), weights[0].power(2.0)]
    report = metric_axioms_audit(weights, rc.trials, seed=rc.seed, threads=rc.threads)
    write_audit(report, rc.out_dir / "metric_audit.csv")
    _raise_violations([f"trial {r.trial} {r.check}: {r.lhs!r} vs {r.rhs!r}" for r in report.rows if not r.passed],
                      "metric-audit")
    return 0


HANDLERS = {
    "ap-char": cmd_ap_char,
    "bmo": cmd_bmo,
    "dstar": cmd_dstar,
    "maxop": cmd_maxop,
    "norm-est": cmd_norm_est,
    "sweep": cmd_sweep,
    "holder-scan": cmd_holder_scan,
    "buckley": cmd_buckley,
    "metric-audit": cmd_metric_audit,
}


def create_config_command(args) -> int:
    """Create example configuration file"""
    config_path = Path(args.config_file or args.config)

    if config_path.exists() and not args.force:
        print(f"Configuration file {config_path} already exists. Use --force to overwrite.", file=sys.stderr)
        return 1

    config_path.write_text(create_example_config())
    print(f"Created example configuration file: {config_path}")
    return 0


def _shared_flags() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--half-width", type=float, help="Window is [-half_width, half_width)")
    shared.add_argument("--n-cells", type=int, help="Number of cells (power of two)")
    shared.add_argument("--p", type=float, help="Lebesgue exponent, p > 1")
    shared.add_argument("--weight", help="Weight as grid-function CSV")
    shared.add_argument("--const", type=float, help="Constant weight value")
    shared.add_argument("--power-alpha", type=float, help="Power weight |x|^alpha")
    shared.add_argument("--seed", type=int, help="Estimator and sampling seed")
    shared.add_argument("--budget", type=int, help="Coordinate-ascent evaluation budget")
    shared.add_argument("--n-random", type=int, help="Random pool candidates")
    shared.add_argument("--no-indicators", dest="indicators", action="store_false", default=None,
                        help="Drop interval indicators from the pool")
    shared.add_argument("--no-singularity", dest="singularity", action="store_false", default=None,
                        help="Drop singular profiles from the pool")
    shared.add_argument("--no-random", dest="random", action="store_false", default=None,
                        help="Drop random candidates from the pool")
    shared.add_argument("--t-list", type=_float_list, help="Sweep parameters, e.g. 0.2,0.1,0.05")
    shared.add_argument("--alpha-list", type=_float_list, help="Power-weight exponents")
    shared.add_argument("--R-list", type=_float_list, help="Hölder exponents R > 1")
    shared.add_argument("--out", help="Output directory")
    return shared


def build_parser() -> LabArgumentParser:
    parser = LabArgumentParser(
        prog="aplab",
        description="A_p Weight Laboratory",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s ap-char --const 1 --n-cells 8 --p 2
  %(prog)s dstar --u u.csv --v v.csv
  %(prog)s sweep --t-list 0.2,0.1,0.05,0.025 --out results
  %(prog)s create-config --config-file aplab.yaml
        """
    )

    # Global arguments
    parser.add_argument("--config", "-c", default="aplab.yaml",
                        help="Configuration file path (default: aplab.yaml)")
    parser.add_argument("--log-level", choices=list(LOG_LEVELS), help="Override log level")

    subparsers = parser.add_subparsers(dest="command", parser_class=LabArgumentParser, metavar="command")
    shared = _shared_flags()
    helps = {
        "ap-char": "A_p characteristic and witness interval",
        "bmo": "BMO seminorm and witness interval",
        "dstar": "d_* distance between two weights",
        "maxop": "Maximal function, written as maxop.csv",
        "norm-est": "Lower bound on the weighted norm of M, witness written as witness.csv",
        "sweep": "Continuity sweep w0*exp(t*phi), written as sweep.csv",
        "holder-scan": "Hölder-chain bound over pairs, written as holder.csv",
        "buckley": "Power-weight scaling study, written as buckley.csv",
        "metric-audit": "Metric axioms of d_*, written as metric_audit.csv",
    }
    sub = {name: subparsers.add_parser(name, parents=[shared], help=text) for name, text in helps.items()}

    sub["bmo"].add_argument("--function", help="Grid-function CSV (default: the weight)")
    sub["maxop"].add_argument("--function", help="Grid-function CSV (default: the weight)")
    sub["dstar"].add_argument("--u", required=True, help="First weight CSV")
    sub["dstar"].add_argument("--v", required=True, help="Second weight CSV")
    sub["sweep"].add_argument("--phi", help="Perturbation direction CSV (default: step)")
    sub["sweep"].add_argument("--step-height", type=float, help="Height of the default step direction")
    sub["holder-scan"].add_argument("--weight0", help="Base weight CSV (with --weight)")
    sub["holder-scan"].add_argument("--n-pairs", type=int, help="Random pairs when no weights are given")
    sub["holder-scan"].add_argument("--reverse", action="store_true", help="Also scan the swapped pairs")
    sub["metric-audit"].add_argument("--n-weights", type=int, help="Random weights in the audit")
    sub["metric-audit"].add_argument("--trials", type=int, help="Random triples")

    config_parser = subparsers.add_parser("create-config", help="Create example configuration file")
    config_parser.add_argument("--config-file", help="Configuration file to create (default: --config)")
    config_parser.add_argument("--force", action="store_true", help="Overwrite existing configuration file")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one subcommand and return the exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1

    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    if args.command == "create-config":
        return create_config_command(args)

    cm = ConfigManager(args.config)
    if args.log_level:
        cm.global_config.log_level = args.log_level
    _setup_logging(cm.global_config.log_level)

    try:
        rc = RunConfig.from_args(args, cm)
        cm.grid.half_width, cm.grid.n_cells, cm.study.p = rc.half_width, rc.n_cells, rc.p
        cm.estimator.budget, cm.study.R_list = rc.budget, rc.R_list
        errors = cm.validate_config()
        if errors:
            for error in errors:
                print(f"error: {error}", file=sys.stderr)
            return 1
        LOG.debug(f"Running {rc.command} on {rc.n_cells} cells, p={rc.p!r}, threads={rc.threads}")
        return HANDLERS[rc.command](rc)
    except ContractViolation as e:
        print(f"contract violation: {e}", file=sys.stderr)
        return 2
    except LabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main():
    """Main entry point"""
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
