"""Tests for configuration loading and command-line parsing."""

import io
import os
import shutil
import sys
import tempfile
import unittest
from unittest import mock

from rich.console import Console

from cat_decoherence.errors import ConfigError
from cat_decoherence.utils.config import (
    WORKERS_ENV,
    Config,
    RunConfig,
    build_run_config,
    default_config_text,
    load_config_file,
    merge_config,
    resolve_workers,
)
from cat_decoherence.utils.parsing import parse_particles, parse_times, time_range

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class TestParseTimes(unittest.TestCase):
    """Test cases for parse_times and time_range."""

    def test_list(self):
        """Test a comma-separated list."""
        self.assertEqual(parse_times("3.005, 6.005"), [3.005, 6.005])

    def test_range_is_inclusive(self):
        """Test that a range includes its end point."""
        self.assertEqual(parse_times("0:1:0.25"), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_report_range(self):
        """Test that the report range has no accumulated drift."""
        times = time_range(0.005, 12.005, 0.1)
        self.assertEqual(len(times), 121)
        self.assertEqual(times[0], 0.005)
        self.assertEqual(times[30], 3.005)
        self.assertEqual(times[-1], 12.005)

    def test_malformed(self):
        """Test that malformed time specifications raise ConfigError."""
        for text in ("", "1:2", "a,b", "nan", "1,inf"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigError):
                    parse_times(text)

    def test_bad_range(self):
        """Test that empty or non-advancing ranges raise ConfigError."""
        with self.assertRaises(ConfigError):
            time_range(1.0, 0.0, 0.1)
        with self.assertRaises(ConfigError):
            time_range(0.0, 1.0, 0.0)


class TestParseParticles(unittest.TestCase):
    """Test cases for parse_particles."""

    def test_values(self):
        """Test single particles and 'all'."""
        self.assertEqual(parse_particles("all"), (1, 2, 3))
        self.assertEqual(parse_particles(" 2 "), (2,))

    def test_invalid(self):
        """Test that anything else raises ConfigError."""
        with self.assertRaises(ConfigError):
            parse_particles("4")


class TestConfigLayers(unittest.TestCase):
    """Test cases for the defaults file, merging and validation."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_defaults_file_matches_model_defaults(self):
        """Test that the shipped defaults equal the built-in defaults."""
        config = build_run_config(tomllib.loads(default_config_text()))
        self.assertEqual(config, RunConfig())
        self.assertEqual(config.oracle.energy_tolerance, 1e-6)

    def test_merge_is_recursive(self):
        """Test that tables merge key by key and the base is left untouched."""
        base = {"a": {"x": 1, "y": 2}, "b": 1}
        merged = merge_config(base, {"a": {"y": 3}, "c": [1]})
        self.assertEqual(merged, {"a": {"x": 1, "y": 3}, "b": 1, "c": [1]})
        self.assertEqual(base["a"]["y"], 2)

    def test_unknown_key(self):
        """Test that unknown keys raise ConfigError."""
        with self.assertRaises(ConfigError):
            build_run_config({"model": {"omega34": 0.1}})

    def test_times_single_source(self):
        """Test that times.values and times.range are mutually exclusive."""
        with self.assertRaises(ConfigError):
            build_run_config({"times": {"values": [1.0], "range": [0.0, 1.0, 0.5]}})

    def test_load_config_file(self):
        """Test reading a TOML file and the missing-file error."""
        path = os.path.join(self.temp_dir, "run.toml")
        with open(path, "w", encoding="utf-8") as f:
            f.write("[decoherence]\nthreshold = 0.2\n")
        self.assertEqual(load_config_file(path), {"decoherence": {"threshold": 0.2}})
        with self.assertRaises(ConfigError):
            load_config_file(os.path.join(self.temp_dir, "missing.toml"))

    def test_invalid_toml(self):
        """Test that a malformed file raises ConfigError."""
        path = os.path.join(self.temp_dir, "bad.toml")
        with open(path, "w", encoding="utf-8") as f:
            f.write("[decoherence\n")
        with self.assertRaises(ConfigError):
            load_config_file(path)


@mock.patch("cat_decoherence.utils.config.load_dotenv")
class TestResolveWorkers(unittest.TestCase):
    """Test cases for resolve_workers."""

    def test_explicit(self, _load_dotenv):
        """Test that an explicit count wins."""
        with mock.patch.dict(os.environ, {WORKERS_ENV: "7"}):
            self.assertEqual(resolve_workers(3), 3)

    def test_environment(self, _load_dotenv):
        """Test the environment variable fallback."""
        with mock.patch.dict(os.environ, {WORKERS_ENV: "5"}):
            self.assertEqual(resolve_workers(None), 5)

    def test_invalid_environment(self, _load_dotenv):
        """Test that non-integer or non-positive values raise ConfigError."""
        for raw in ("many", "0"):
            with self.subTest(raw=raw):
                with mock.patch.dict(os.environ, {WORKERS_ENV: raw}):
                    with self.assertRaises(ConfigError):
                        resolve_workers(None)

    def test_default(self, _load_dotenv):
        """Test the CPU-bounded default."""
        with mock.patch.dict(os.environ):
            os.environ.pop(WORKERS_ENV, None)
            self.assertIn(resolve_workers(None), (1, 2, 3, 4))


class TestConfigArguments(unittest.TestCase):
    """Test cases for Config.parse_arguments."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()
        self.buffer = io.StringIO()
        self.config = Config(Console(file=self.buffer, width=120))

    def tearDown(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _parse(self, *args):
        return self.config.parse_arguments(
            [*args, "--out", self.temp_dir, "--workers", "2", "--quiet"]
        )

    def test_defaults(self):
        """Test a bare command."""
        command, run_config, options = self._parse("report")
        self.assertEqual(command, "report")
        self.assertEqual(run_config.model.omega12, 0.305)
        self.assertIsNone(run_config.times.resolve())
        self.assertEqual(options["particles"], (1, 2, 3))
        self.assertEqual(options["output_dir"], self.temp_dir)
        self.assertEqual(options["workers"], 2)
        self.assertTrue(options["quiet"])

    def test_flags_override(self):
        """Test that flags land in the run config."""
        _, run_config, options = self._parse(
            "reduce",
            "--t",
            "3.005,6.005",
            "--particle",
            "2",
            "--grid",
            "96",
            "--sigma",
            "0.8",
            "--threshold",
            "0.2",
            "--emit-svg",
        )
        self.assertEqual(run_config.times.resolve(), [3.005, 6.005])
        self.assertEqual(options["particles"], (2,))
        self.assertEqual(run_config.quadrature.points, 96)
        self.assertEqual(run_config.quadrature.report_points, 96)
        self.assertEqual([cat.sigma for cat in run_config.model.cats], [0.8, 0.8, 0.8])
        self.assertEqual([cat.d for cat in run_config.model.cats], [-5.0, 6.0, 7.5])
        self.assertEqual(run_config.decoherence.threshold, 0.2)
        self.assertTrue(run_config.output.emit_svg)
        self.assertFalse(run_config.output.run_oracle)

    def test_config_file_then_flags(self):
        """Test that --t replaces a time range from the config file."""
        path = os.path.join(self.temp_dir, "run.toml")
        with open(path, "w", encoding="utf-8") as f:
            f.write("[times]\nrange = [0.005, 1.005, 0.5]\n\n[decoherence]\nhold = 1.0\n")
        _, run_config, _ = self._parse("report", "--config", path)
        self.assertEqual(run_config.times.resolve(), [0.005, 0.505, 1.005])
        self.assertEqual(run_config.decoherence.hold, 1.0)
        _, run_config, _ = self._parse("report", "--config", path, "--t", "2.0")
        self.assertEqual(run_config.times.resolve(), [2.0])

    def test_invalid_value(self):
        """Test that out-of-range flag values raise ConfigError."""
        with self.assertRaises(ConfigError):
            self._parse("reduce", "--grid", "32")

    def test_usage_errors_exit_with_one(self):
        """Test that argparse usage errors exit with status 1."""
        with mock.patch("sys.stderr", new=io.StringIO()):
            for argv in (["reduce", "--no-such-flag"], ["--quiet"], ["explode"]):
                with self.subTest(argv=argv):
                    with self.assertRaises(SystemExit) as ctx:
                        self.config.parse_arguments(argv)
                    self.assertEqual(ctx.exception.code, 1)

    def test_print_defaults(self):
        """Test the --print-defaults shortcut."""
        command, _, options = self.config.parse_arguments(["--print-defaults"])
        self.assertEqual(command, "print-defaults")
        self.assertTrue(options["quiet"])

    def test_settings_table(self):
        """Test that the launch settings are shown unless quiet."""
        self.config.parse_arguments(["eigen", "--out", self.temp_dir, "--workers", "1"])
        self.assertIn("Launch Settings", self.buffer.getvalue())


if __name__ == "__main__":
    unittest.main()
