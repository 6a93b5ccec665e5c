#!/usr/bin/env python3
"""
Configuration management for the A_p weight laboratory
Loads YAML settings, .env files and APLAB_* environment overrides
"""
import os
import yaml
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Any, Optional, TypeVar
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

try:
    from dotenv import load_dotenv
    DOTENV_OK = True
except ImportError:
    DOTENV_OK = False

LOG = logging.getLogger("aplab.config")

T = TypeVar("T")
R = TypeVar("R")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass
class GlobalConfig:
    """Global laboratory settings"""
    output_dir: str = "./output"
    log_level: str = "INFO"
    threads: int = 0  # 0 = one worker per CPU
    value_floor: float = 1e-12
    value_ceiling: float = 1e12
    record_runtime: bool = False  # runtime_ms is written as 0 unless enabled


@dataclass
class GridConfig:
    """Default discretization window"""
    half_width: float = 1.0
    n_cells: int = 1024


@dataclass
class EstimatorSettings:
    """Defaults for the operator-norm estimator"""
    budget: int = 5000
    seed: int = 0
    use_indicators: bool = True
    use_singularity: bool = True
    use_random: bool = True
    n_random: int = 16
    indicator_levels: int = 6
    lattice_points: int = 9


@dataclass
class StudyConfig:
    """Parameters of the numerical studies"""
    p: float = 2.0
    t_list: List[float] = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    alpha_list: List[float] = field(default_factory=lambda: [0.5, 0.7, 0.8, 0.9])
    R_list: List[float] = field(default_factory=lambda: [2.0, 4.0, 8.0])
    trials: int = 1000
    n_pairs: int = 100
    n_weights: int = 12
    step_height: float = 2.0


def _is_power_of_two(n: int) -> bool:
    return isinstance(n, int) and n >= 2 and (n & (n - 1)) == 0


def resolve_threads(requested: Optional[int] = None) -> int:
    """Number of worker threads: explicit value, else APLAB_THREADS, else auto"""
    if requested is None:
        raw = os.getenv("APLAB_THREADS", "0").strip() or "0"
        try:
            requested = int(raw)
        except ValueError:
            LOG.warning(f"Ignoring invalid APLAB_THREADS={raw!r}")
            requested = 0
    if requested < 0:
        raise ValueError(f"thread count must be >= 0, got {requested}")
    if requested == 0:
        return os.cpu_count() or 1
    return requested


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Map func over items with a thread pool; results keep input order"""
    items = list(items)
    workers = min(resolve_threads(threads), max(len(items), 1))
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


class ConfigManager:
    """Loads and validates laboratory configuration"""

    SECTIONS = ("global", "grid", "estimator", "study")

    def __init__(self, config_file: str = "aplab.yaml"):
        self.config_file = Path(config_file)
        self.global_config = GlobalConfig()
        self.grid = GridConfig()
        self.estimator = EstimatorSettings()
        self.study = StudyConfig()

        # Load environment variables if available
        if DOTENV_OK:
            load_dotenv()

        self._load_config()

    def _section(self, name: str):
        return {
            "global": self.global_config,
            "grid": self.grid,
            "estimator": self.estimator,
            "study": self.study,
        }[name]

    def _load_config(self):
        """Load configuration from file, then apply environment overrides"""
        if self.config_file.exists():
            self._load_from_yaml()
        else:
            LOG.debug(f"No configuration file at {self.config_file}, using defaults")
        self._load_from_env()

    def _load_from_yaml(self):
        """Load configuration sections from YAML file"""
        try:
            with open(self.config_file, 'r') as f:
                data = yaml.safe_load(f) or {}

            for section_name in self.SECTIONS:
                target = self._section(section_name)
                known = {f.name for f in fields(target)}
                for key, value in (data.get(section_name) or {}).items():
                    if key in known:
                        setattr(target, key, value)
                    else:
                        LOG.warning(f"Unknown key '{key}' in section '{section_name}' ignored")

            LOG.info(f"Loaded configuration from {self.config_file}")

        except Exception as e:
            LOG.error(f"Failed to load config from {self.config_file}: {e}")

    def _load_from_env(self):
        """Apply APLAB_* environment overrides"""
        threads = os.getenv("APLAB_THREADS")
        if threads is not None and threads.strip():
            try:
                self.global_config.threads = int(threads)
            except ValueError:
                LOG.warning(f"Ignoring invalid APLAB_THREADS={threads!r}")
        self.global_config.log_level = os.getenv("APLAB_LOG_LEVEL", self.global_config.log_level)
        self.global_config.output_dir = os.getenv("APLAB_OUTPUT_DIR", self.global_config.output_dir)
        self.global_config.record_runtime = self._env_bool("APLAB_RECORD_RUNTIME", self.global_config.record_runtime)

    def _env_bool(self, key: str, default: bool) -> bool:
        """Convert environment variable to boolean"""
        val = os.getenv(key)
        if val is None:
            return default
        return str(val).strip().lower() in {"1", "true", "yes", "y"}

    def save_config(self):
        """Save current configuration to YAML file"""
        data = {name: asdict(self._section(name)) for name in self.SECTIONS}
        self.config_file.parent.mkdir(parents=True, exist_ok=True)
        with open(self.config_file, 'w') as f:
            yaml.dump(data, f, default_flow_style=False, indent=2)
        LOG.info(f"Configuration saved to {self.config_file}")

    def validate_config(self) -> List[str]:
        """Validate configuration and return list of errors"""
        errors = []
        g = self.global_config

        if str(g.log_level).upper() not in LOG_LEVELS:
            errors.append(f"Invalid log_level: must be one of {', '.join(LOG_LEVELS)}")
        if not isinstance(g.threads, int) or g.threads < 0:
            errors.append("Invalid threads: must be an integer >= 0 (0 = auto)")
        if not (0 < g.value_floor < g.value_ceiling):
            errors.append("Invalid value guards: need 0 < value_floor < value_ceiling")

        if not _is_power_of_two(self.grid.n_cells):
            errors.append(f"Invalid n_cells {self.grid.n_cells}: must be a power of two >= 2")
        if not self.grid.half_width > 0:
            errors.append("Invalid half_width: must be > 0")

        if self.estimator.budget < 0:
            errors.append("Invalid estimator budget: must be >= 0")
        if self.estimator.n_random < 0:
            errors.append("Invalid n_random: must be >= 0")

        if not self.study.p > 1:
            errors.append(f"Invalid p {self.study.p}: must be > 1")
        if any(r <= 1 for r in self.study.R_list):
            errors.append("Invalid R_list: every R must be > 1")
        if self.study.trials < 0 or self.study.n_pairs < 0:
            errors.append("Invalid study counts: trials and n_pairs must be >= 0")

        return errors

    def as_dict(self) -> Dict[str, Any]:
        return {name: asdict(self._section(name)) for name in self.SECTIONS}


def create_example_config() -> str:
    """Create an example configuration file"""
    example_config = """# A_p weight laboratory configuration
# Every value can also be given on the command line; APLAB_* variables win over this file.

global:
  output_dir: "./output"
  log_level: "INFO"        # DEBUG, INFO, WARNING, ERROR
  threads: 0               # 0 = one worker per CPU (APLAB_THREADS overrides)
  value_floor: 1.0e-12     # weights must stay inside [value_floor, value_ceiling]
  value_ceiling: 1.0e+12
  record_runtime: false    # keep false for byte-identical CSVs

grid:
  half_width: 1.0          # window is [-half_width, half_width)
  n_cells: 1024            # power of two

estimator:
  budget: 5000             # coordinate-ascent evaluations
  seed: 0
  use_indicators: true
  use_singularity: true
  use_random: true
  n_random: 16
  indicator_levels: 6      # dyadic levels of interval indicators
  lattice_points: 9        # singularity centres across the window

study:
  p: 2.0
  t_list: [0.2, 0.1, 0.05, 0.025]
  alpha_list: [0.5, 0.7, 0.8, 0.9]
  R_list: [2, 4, 8]
  trials: 1000
  n_pairs: 100
  n_weights: 12
  step_height: 2.0
"""
    return example_config
