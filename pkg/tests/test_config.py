#!/usr/bin/env python3
"""
Unit tests for configuration loading, validation and the worker pool helper
"""
import os
import shutil
import tempfile
import threading
import time
import unittest
from pathlib import Path
from unittest.mock import patch

import yaml

from config import (
    ConfigManager, EstimatorSettings, GlobalConfig, GridConfig, StudyConfig, create_example_config,
    parallel_map, resolve_threads,
)


def clean_env(**overrides):
    """os.environ without APLAB_* variables, plus overrides"""
    env = {k: v for k, v in os.environ.items() if not k.startswith("APLAB_")}
    env.update(overrides)
    return patch.dict(os.environ, env, clear=True)


class TestConfigManager(unittest.TestCase):
    """Test YAML loading and environment overrides"""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.config_path = Path(self.temp_dir) / "aplab.yaml"

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_defaults_without_file(self):
        with clean_env():
            cm = ConfigManager(str(self.config_path))
        self.assertEqual(cm.global_config, GlobalConfig())
        self.assertEqual(cm.grid, GridConfig())
        self.assertEqual(cm.estimator, EstimatorSettings())
        self.assertEqual(cm.study, StudyConfig())
        self.assertEqual(cm.validate_config(), [])

    def test_loads_sections(self):
        self.config_path.write_text(yaml.safe_dump({
            "global": {"threads": 2, "log_level": "DEBUG"},
            "grid": {"n_cells": 256, "half_width": 2.0},
            "estimator": {"budget": 10, "use_random": False},
            "study": {"p": 3.0, "t_list": [0.4, 0.2]},
        }))
        with clean_env():
            cm = ConfigManager(str(self.config_path))
        self.assertEqual(cm.global_config.threads, 2)
        self.assertEqual(cm.global_config.log_level, "DEBUG")
        self.assertEqual(cm.grid, GridConfig(half_width=2.0, n_cells=256))
        self.assertEqual(cm.estimator.budget, 10)
        self.assertFalse(cm.estimator.use_random)
        self.assertEqual(cm.study.p, 3.0)
        self.assertEqual(cm.study.t_list, [0.4, 0.2])

    def test_unknown_keys_are_ignored_with_warning(self):
        self.config_path.write_text("grid:\n  n_cells: 64\n  colour: blue\n")
        with clean_env(), self.assertLogs("aplab.config", level="WARNING") as logs:
            cm = ConfigManager(str(self.config_path))
        self.assertEqual(cm.grid.n_cells, 64)
        self.assertFalse(hasattr(cm.grid, "colour"))
        self.assertTrue(any("colour" in line for line in logs.output))

    def test_malformed_yaml_keeps_defaults(self):
        self.config_path.write_text("grid: [unclosed\n")
        with clean_env(), self.assertLogs("aplab.config", level="ERROR"):
            cm = ConfigManager(str(self.config_path))
        self.assertEqual(cm.grid, GridConfig())

    def test_environment_overrides(self):
        self.config_path.write_text("global:\n  threads: 2\n")
        with clean_env(APLAB_THREADS="3", APLAB_LOG_LEVEL="WARNING",
                       APLAB_OUTPUT_DIR="/tmp/aplab-out", APLAB_RECORD_RUNTIME="yes"):
            cm = ConfigManager(str(self.config_path))
        self.assertEqual(cm.global_config.threads, 3)
        self.assertEqual(cm.global_config.log_level, "WARNING")
        self.assertEqual(cm.global_config.output_dir, "/tmp/aplab-out")
        self.assertTrue(cm.global_config.record_runtime)

    def test_invalid_thread_variable_is_ignored(self):
        with clean_env(APLAB_THREADS="many"), self.assertLogs("aplab.config", level="WARNING"):
            cm = ConfigManager(str(self.config_path))
        self.assertEqual(cm.global_config.threads, 0)

    def test_validation_errors(self):
        with clean_env():
            cm = ConfigManager(str(self.config_path))
        cm.grid.n_cells = 1000
        cm.grid.half_width = 0.0
        cm.study.p = 1.0
        cm.global_config.threads = -1
        cm.global_config.log_level = "LOUD"
        cm.global_config.value_floor = 1e13
        cm.estimator.budget = -5
        cm.study.R_list = [1.0, 2.0]
        errors = cm.validate_config()
        self.assertEqual(len(errors), 8)
        self.assertTrue(any("n_cells" in e for e in errors))
        self.assertTrue(any("R_list" in e for e in errors))

    def test_save_and_reload(self):
        with clean_env():
            cm = ConfigManager(str(self.config_path))
            cm.grid.n_cells = 128
            cm.study.alpha_list = [0.25, 0.5]
            cm.save_config()
            reloaded = ConfigManager(str(self.config_path))
        self.assertEqual(reloaded.as_dict(), cm.as_dict())

    def test_example_config_is_valid(self):
        self.config_path.write_text(create_example_config())
        data = yaml.safe_load(create_example_config())
        self.assertEqual(set(data), {"global", "grid", "estimator", "study"})
        with clean_env():
            cm = ConfigManager(str(self.config_path))
        self.assertEqual(cm.validate_config(), [])
        self.assertEqual(cm.as_dict()["study"]["R_list"], [2, 4, 8])


class TestThreads(unittest.TestCase):
    """Test worker resolution and ordered parallel maps"""

    def test_resolve_threads(self):
        with clean_env():
            self.assertEqual(resolve_threads(3), 3)
            self.assertEqual(resolve_threads(0), os.cpu_count() or 1)
            self.assertEqual(resolve_threads(), os.cpu_count() or 1)
        with clean_env(APLAB_THREADS="2"):
            self.assertEqual(resolve_threads(), 2)
        with self.assertRaises(ValueError):
            resolve_threads(-1)

    def test_parallel_map_keeps_input_order(self):
        def slow_square(x):
            time.sleep(0.001 * (10 - x))
            return x * x

        self.assertEqual(parallel_map(slow_square, range(10), threads=4), [x * x for x in range(10)])

    def test_single_worker_runs_inline(self):
        caller = threading.current_thread()
        seen = parallel_map(lambda x: threading.current_thread(), range(3), threads=1)
        self.assertTrue(all(t is caller for t in seen))

    def test_empty_input(self):
        self.assertEqual(parallel_map(lambda x: x, [], threads=4), [])


if __name__ == "__main__":
    unittest.main()
