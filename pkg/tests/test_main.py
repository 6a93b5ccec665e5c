#!/usr/bin/env python3
"""
Unit tests for the command-line front end
Tests subcommands, exit codes, output files and byte-level reproducibility
"""
import io
import os
import shutil
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd

from main import build_parser, run
from weightgrid import Grid, GridFunction, Weight, constant_weight, read_grid_function, write_grid_function


class CliTestCase(unittest.TestCase):
    """Runs the CLI against a temporary directory with a clean environment"""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.dir = Path(self.temp_dir)
        self.out = self.dir / "out"
        self.config = str(self.dir / "missing.yaml")

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def run_cli(self, *argv, **env):
        clean = {k: v for k, v in os.environ.items() if not k.startswith("APLAB_")}
        clean.update(env)
        with patch.dict(os.environ, clean, clear=True), \
                patch("sys.stdout", new_callable=io.StringIO) as out, \
                patch("sys.stderr", new_callable=io.StringIO) as err:
            code = run(["--config", self.config, *argv])
        return code, out.getvalue(), err.getvalue()


class TestComputations(CliTestCase):
    """Test single-computation subcommands"""

    def test_ap_char_constant(self):
        code, out, _ = self.run_cli("ap-char", "--const", "1", "--n-cells", "8", "--p", "2")
        self.assertEqual(code, 0)
        self.assertEqual(out.splitlines(), ["1.0", "[0,1)"])

    def test_ap_char_from_file(self):
        path = write_grid_function(Weight(Grid(1.0, 2), [1.0, 4.0]), self.dir / "twocell.csv")
        code, out, _ = self.run_cli("ap-char", "--weight", str(path), "--p", "2")
        self.assertEqual(code, 0)
        self.assertEqual(out.splitlines(), ["1.5625", "[0,2)"])

    def test_ap_char_power_weight(self):
        code, out, _ = self.run_cli("ap-char", "--power-alpha", "0.5", "--n-cells", "256")
        self.assertEqual(code, 0)
        self.assertGreater(float(out.splitlines()[0]), 1.0)

    def test_bmo(self):
        path = write_grid_function(GridFunction(Grid(1.0, 2), [0.0, 1.0]), self.dir / "step.csv")
        code, out, _ = self.run_cli("bmo", "--function", str(path))
        self.assertEqual(code, 0)
        self.assertEqual(out.splitlines(), ["0.5", "[0,2)"])

    def test_dstar_of_scaled_weights(self):
        u = write_grid_function(constant_weight(Grid(1.0, 4)), self.dir / "u.csv")
        v = write_grid_function(constant_weight(Grid(1.0, 4), 2.0), self.dir / "v.csv")
        code, out, _ = self.run_cli("dstar", "--u", str(u), "--v", str(v))
        self.assertEqual(code, 0)
        self.assertEqual(out.strip(), "0.0")

    def test_dstar_of_random_weight_and_its_double(self):
        u = np.exp(np.random.default_rng(17).uniform(-2.0, 2.0, size=16))
        grid = Grid(1.0, 16)
        u_path = write_grid_function(Weight(grid, u), self.dir / "u.csv")
        v_path = write_grid_function(Weight(grid, 2.0 * u), self.dir / "v.csv")
        code, out, _ = self.run_cli("dstar", "--u", str(u_path), "--v", str(v_path))
        self.assertEqual(code, 0)
        self.assertEqual(out.strip(), "0.0")
        code, out, _ = self.run_cli("dstar", "--u", str(v_path), "--v", str(u_path))
        self.assertEqual(code, 0)
        self.assertEqual(out.strip(), "0.0")

    def test_maxop_writes_grid_function(self):
        path = write_grid_function(GridFunction(Grid(1.0, 4), [0.0, 0.0, 1.0, 0.0]), self.dir / "f.csv")
        code, _, _ = self.run_cli("maxop", "--function", str(path), "--out", str(self.out))
        self.assertEqual(code, 0)
        mf = read_grid_function(self.out / "maxop.csv")
        np.testing.assert_allclose(mf.values, [1.0 / 3.0, 0.5, 1.0, 0.5], rtol=1e-15)

    def test_norm_est(self):
        code, out, _ = self.run_cli("norm-est", "--n-cells", "16", "--budget", "20", "--out", str(self.out))
        self.assertEqual(code, 0)
        lines = dict(line.split(" ", 1) for line in out.splitlines())
        self.assertGreaterEqual(float(lines["lower_bound"]), 1.0)
        self.assertAlmostEqual(float(lines["unweighted_bound"]), 1.0 + np.sqrt(2.0), places=12)
        self.assertEqual(lines["seed"], "0")
        self.assertTrue((self.out / "witness.csv").exists())


class TestStudies(CliTestCase):
    """Test study subcommands and their tables"""

    SWEEP = ("sweep", "--n-cells", "32", "--t-list", "0.2,0.1", "--budget", "0",
             "--no-singularity", "--no-random")

    def test_sweep(self):
        code, _, _ = self.run_cli(*self.SWEEP, "--out", str(self.out))
        self.assertEqual(code, 0)
        df = pd.read_csv(self.out / "sweep.csv")
        self.assertEqual(list(df.columns), ["t", "delta", "ap_char", "norm_lb", "runtime_ms"])
        np.testing.assert_allclose(df["t"], [0.2, 0.1, 0.0], rtol=1e-15)
        self.assertTrue((df["runtime_ms"] == 0).all())

    def test_sweep_is_byte_identical_for_any_thread_count(self):
        first, second = self.dir / "a", self.dir / "b"
        self.assertEqual(self.run_cli(*self.SWEEP, "--out", str(first), APLAB_THREADS="1")[0], 0)
        self.assertEqual(self.run_cli(*self.SWEEP, "--out", str(second), APLAB_THREADS="4")[0], 0)
        self.assertEqual((first / "sweep.csv").read_bytes(), (second / "sweep.csv").read_bytes())

    def assert_identical_across_threads(self, table, *argv):
        first, second = self.dir / "one", self.dir / "four"
        self.assertEqual(self.run_cli(*argv, "--out", str(first), APLAB_THREADS="1")[0], 0)
        self.assertEqual(self.run_cli(*argv, "--out", str(second), APLAB_THREADS="4")[0], 0)
        self.assertEqual((first / table).read_bytes(), (second / table).read_bytes())

    def test_holder_scan_is_byte_identical_for_any_thread_count(self):
        self.assert_identical_across_threads("holder.csv", "holder-scan", "--n-cells", "32", "--n-pairs", "3",
                                             "--R-list", "2,4", "--reverse")

    def test_buckley_is_byte_identical_for_any_thread_count(self):
        self.assert_identical_across_threads("buckley.csv", "buckley", "--n-cells", "32", "--alpha-list",
                                             "0.3,0.6", "--budget", "40")

    def test_metric_audit_is_byte_identical_for_any_thread_count(self):
        self.assert_identical_across_threads("metric_audit.csv", "metric-audit", "--n-cells", "16",
                                             "--n-weights", "4", "--trials", "30")

    def test_sweep_contract_violation_exits_two(self):
        with patch("main.sweep_contract_violations", return_value=["forced"]):
            code, _, err = self.run_cli(*self.SWEEP, "--out", str(self.out))
        self.assertEqual(code, 2)
        self.assertIn("contract violation", err)

    def test_holder_scan(self):
        code, _, _ = self.run_cli("holder-scan", "--n-cells", "16", "--n-pairs", "3", "--R-list", "2,4",
                                  "--out", str(self.out))
        self.assertEqual(code, 0)
        df = pd.read_csv(self.out / "holder.csv")
        self.assertEqual(list(df.columns), ["pair_id", "R", "lhs", "rhs", "factor_ratio", "factor_base"])
        self.assertEqual(len(df), 6)

        code, _, _ = self.run_cli("holder-scan", "--n-cells", "16", "--n-pairs", "3", "--R-list", "2,4",
                                  "--reverse", "--out", str(self.out))
        self.assertEqual(code, 0)
        self.assertEqual(len(pd.read_csv(self.out / "holder.csv")), 12)

    def test_holder_scan_with_given_pair(self):
        w = write_grid_function(Weight(Grid(1.0, 2), [1.0, 4.0]), self.dir / "w.csv")
        code, _, _ = self.run_cli("holder-scan", "--weight", str(w), "--weight0", str(w), "--R-list", "2",
                                  "--out", str(self.out))
        self.assertEqual(code, 0)
        df = pd.read_csv(self.out / "holder.csv")
        self.assertEqual(df["lhs"].iloc[0], 1.5625)
        self.assertAlmostEqual(df["rhs"].iloc[0], 2.125, delta=1e-12)

    def test_buckley(self):
        code, out, _ = self.run_cli("buckley", "--n-cells", "64", "--alpha-list", "0.0,0.5", "--budget", "0",
                                    "--no-singularity", "--no-random", "--out", str(self.out))
        self.assertEqual(code, 0)
        self.assertEqual(out.strip(), "slope nan")
        df = pd.read_csv(self.out / "buckley.csv")
        self.assertEqual(list(df.columns), ["alpha", "ap_char", "norm_lb", "ratio"])

    def test_metric_audit(self):
        code, _, _ = self.run_cli("metric-audit", "--n-cells", "16", "--n-weights", "3", "--trials", "20",
                                  "--out", str(self.out))
        self.assertEqual(code, 0)
        df = pd.read_csv(self.out / "metric_audit.csv")
        self.assertEqual(list(df.columns), ["trial", "check", "lhs", "rhs", "pass"])
        self.assertTrue(df["pass"].all())


class TestErrors(CliTestCase):
    """Test exit codes for invalid input"""

    def test_unknown_subcommand(self):
        code, _, err = self.run_cli("frobnicate")
        self.assertEqual(code, 1)
        self.assertIn("usage", err)

    def test_unknown_flag(self):
        code, _, err = self.run_cli("ap-char", "--colour", "red")
        self.assertEqual(code, 1)
        self.assertIn("usage", err)

    def test_bad_list(self):
        code, _, _ = self.run_cli("sweep", "--t-list", "a,b")
        self.assertEqual(code, 1)

    def test_missing_command(self):
        code, _, err = self.run_cli()
        self.assertEqual(code, 1)
        self.assertIn("usage", err)

    def test_invalid_grid(self):
        code, _, err = self.run_cli("ap-char", "--n-cells", "100")
        self.assertEqual(code, 1)
        self.assertIn("n_cells", err)

    def test_weight_out_of_range(self):
        code, _, err = self.run_cli("ap-char", "--const", "0", "--n-cells", "4")
        self.assertEqual(code, 1)
        self.assertIn("error", err)

    def test_conflicting_weight_sources(self):
        code, _, _ = self.run_cli("ap-char", "--const", "1", "--power-alpha", "0.5", "--n-cells", "4")
        self.assertEqual(code, 1)

    def test_missing_weight_file(self):
        code, _, _ = self.run_cli("ap-char", "--weight", str(self.dir / "nope.csv"))
        self.assertEqual(code, 1)

    def test_buckley_alpha_outside_range(self):
        code, _, _ = self.run_cli("buckley", "--n-cells", "16", "--alpha-list", "1.5", "--out", str(self.out))
        self.assertEqual(code, 1)


class TestCreateConfig(CliTestCase):
    """Test the create-config subcommand"""

    def test_create_and_refuse_overwrite(self):
        target = self.dir / "aplab.yaml"
        code, out, _ = self.run_cli("create-config", "--config-file", str(target))
        self.assertEqual(code, 0)
        self.assertIn("Created", out)
        self.assertIn("estimator:", target.read_text())

        code, _, err = self.run_cli("create-config", "--config-file", str(target))
        self.assertEqual(code, 1)
        self.assertIn("--force", err)

        self.assertEqual(self.run_cli("create-config", "--config-file", str(target), "--force")[0], 0)

    def test_config_file_is_used(self):
        target = self.dir / "aplab.yaml"
        target.write_text("grid:\n  n_cells: 4\n")
        self.config = str(target)
        code, out, _ = self.run_cli("ap-char", "--power-alpha", "1")
        self.assertEqual(code, 0)
        # |x| sampled at +-0.75, +-0.25 gives 4/3
        self.assertAlmostEqual(float(out.splitlines()[0]), 4.0 / 3.0, delta=1e-12)


class TestParser(unittest.TestCase):
    """Test parser layout"""

    def test_shared_flags_on_every_study(self):
        parser = build_parser()
        for command in ("ap-char", "norm-est", "sweep", "buckley", "holder-scan", "metric-audit"):
            args = parser.parse_args([command, "--seed", "5", "--t-list", "0.3,0.1"])
            self.assertEqual(args.seed, 5)
            self.assertEqual(args.t_list, [0.3, 0.1])


if __name__ == "__main__":
    unittest.main()
