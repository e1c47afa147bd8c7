"""End-to-end tests that exercise the cat-decoherence command line in process."""

import io
import json
import os
import shutil
import tempfile
import unittest
from unittest import mock

from rich.console import Console

from cat_decoherence.main import main
from cat_decoherence.utils.file import format_value, read_csv
from cat_decoherence.verification import CheckResult, VerificationReport


class TestCommandLine(unittest.TestCase):
    """Runs each command on small settings and checks exit codes and artifacts."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp(prefix="cat_cli_")

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _run(self, name, *args):
        out = os.path.join(self.temp_dir, name)
        code = main([*args, "--out", out, "--workers", "1", "--quiet"])
        return code, out

    def _results(self, out):
        with open(os.path.join(out, "run_summary.json"), encoding="utf-8") as f:
            return json.load(f)["results"]

    def _write_config(self, text):
        path = os.path.join(self.temp_dir, "run.toml")
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_eigen(self):
        """Test the eigen command and the run manifest."""
        code, out = self._run("eigen", "eigen")
        self.assertEqual(code, 0)

        header, rows = read_csv(os.path.join(out, "eigen.csv"))
        self.assertEqual(header, ["quantity", "value"])
        values = {name: float(value) for name, value in rows}
        self.assertAlmostEqual(values["lambda1"], -0.0711341932, places=9)
        self.assertAlmostEqual(values["lambda2"], -0.2165238068, places=9)
        self.assertEqual(values["m3"], 3.0)
        self.assertIn("Pinv33", values)

        with open(os.path.join(out, "manifest.txt"), encoding="utf-8") as f:
            manifest = f.read()
        self.assertIn("command: eigen", manifest)
        self.assertIn("tolerance.cubic_residual: ", manifest)
        with open(os.path.join(out, "run_summary.json"), encoding="utf-8") as f:
            summary = json.load(f)
        self.assertEqual(summary["config"]["model"]["omega12"], 0.305)

    def test_degenerate_spectrum_exit_code(self):
        """Test that equal coupling frequencies exit with status 2."""
        path = self._write_config("[model]\nomega12 = 0.2\nomega13 = 0.2\nomega23 = 0.2\n")
        code, out = self._run("degenerate", "eigen", "--config", path)
        self.assertEqual(code, 2)
        self.assertFalse(os.path.exists(os.path.join(out, "manifest.txt")))

    def test_configuration_error_exit_code(self):
        """Test that schema errors exit with status 1."""
        path = self._write_config("[model]\nomega34 = 0.2\n")
        code, _ = self._run("bad", "eigen", "--config", path)
        self.assertEqual(code, 1)

    def test_invalid_input_exit_code(self):
        """Test that a zero time span for the classical ensemble exits with status 1."""
        console = io.StringIO()
        patched = Console(file=console, width=200)
        with mock.patch("cat_decoherence.main.Console", return_value=patched):
            code, out = self._run("zero_span", "classical", "--t", "0")
        self.assertEqual(code, 1)
        self.assertIn("ConfigError", console.getvalue())
        self.assertIn("tmax and dt must be positive", console.getvalue())
        self.assertFalse(os.path.exists(os.path.join(out, "manifest.txt")))

    def test_usage_error(self):
        """Test that an unknown flag exits with status 1."""
        with mock.patch("sys.stderr", new=io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                main(["eigen", "--no-such-flag"])
        self.assertEqual(ctx.exception.code, 1)

    def test_print_defaults(self):
        """Test that --print-defaults writes the shipped configuration."""
        with mock.patch("sys.stdout", new_callable=io.StringIO) as stdout:
            code = main(["--print-defaults"])
        self.assertEqual(code, 0)
        self.assertIn("omega12 = 0.305", stdout.getvalue())
        self.assertIn("[[model.cats]]", stdout.getvalue())

    def test_classical_is_repeatable(self):
        """Test that two identical runs write byte-identical tables."""
        paths = []
        for name in ("first", "second"):
            code, out = self._run(name, "classical", "--t", "0:6:1")
            self.assertEqual(code, 0)
            paths.append(out)
        for table in ("trajectories.csv", "crossings.csv"):
            with open(os.path.join(paths[0], table), "rb") as f:
                first = f.read()
            with open(os.path.join(paths[1], table), "rb") as f:
                second = f.read()
            self.assertEqual(first, second)

        header, rows = read_csv(os.path.join(paths[0], "trajectories.csv"))
        self.assertEqual(header, ["t", "corner_label", "x1", "x2", "x3"])
        self.assertEqual(len(rows), 1201 * 8)
        labels = ["000", "100", "010", "001", "110", "101", "011", "111"]
        self.assertEqual([row[1] for row in rows[:8]], labels)
        self.assertEqual({row[0] for row in rows[:8]}, {format_value(0.0)})
        for value in rows[0][2:]:
            self.assertAlmostEqual(float(value), 0.0, places=12)

    def test_reduce(self):
        """Test one reduced density written as a profile table."""
        code, out = self._run(
            "reduce", "reduce", "--particle", "1", "--t", "3.005", "--grid", "64", "--emit-svg"
        )
        self.assertEqual(code, 0)
        header, rows = read_csv(os.path.join(out, "profile_p1_t3p005.csv"))
        self.assertEqual(header, ["x", "packet0_eff", "packetd_eff", "interference_eff", "total"])
        self.assertEqual(len(rows), 401)
        self.assertTrue(os.path.exists(os.path.join(out, "profile_p1_t3p005.svg")))
        _, summary = read_csv(os.path.join(out, "reduce_summary.csv"))
        self.assertEqual(len(summary), 1)
        convergence = self._results(out)["convergence"]
        self.assertEqual([(c["particle"], c["t"]) for c in convergence], [(1, 3.005)])

    def test_report(self):
        """Test the visibility series and onset summary tables."""
        code, out = self._run("report", "report", "--t", "0.005:1.005:0.5", "--grid", "64")
        self.assertEqual(code, 0)
        header, rows = read_csv(os.path.join(out, "report.csv"))
        self.assertEqual(header, ["t", "V1", "V2", "V3", "V1_l1", "V2_l1", "V3_l1"])
        expected = [format_value(t) for t in (0.005, 0.505, 1.005)]
        self.assertEqual([row[0] for row in rows], expected)
        header, rows = read_csv(os.path.join(out, "report_summary.csv"))
        self.assertEqual(header, ["particle", "onset", "first_crossing", "crossing_precedes_onset"])
        self.assertEqual(len(rows), 3)
        convergence = self._results(out)["convergence"]
        self.assertEqual(len(convergence), 9)
        self.assertEqual({c["t"] for c in convergence}, {0.005, 0.505, 1.005})

    def test_panels(self):
        """Test the panel figure for one particle."""
        code, out = self._run("panels", "panels", "--particle", "2", "--grid", "64")
        self.assertEqual(code, 0)
        self.assertTrue(os.path.exists(os.path.join(out, "panels_p2.svg")))
        self.assertTrue(os.path.exists(os.path.join(out, "profile_p2_t3p505.csv")))
        self.assertEqual(len(self._results(out)["convergence"]), 3)

    def test_verify(self):
        """Test that the default check battery passes."""
        code, out = self._run("verify", "verify", "--grid", "64")
        self.assertEqual(code, 0)
        header, rows = read_csv(os.path.join(out, "verification.csv"))
        self.assertEqual(header, ["name", "value", "tolerance", "passed"])
        self.assertTrue(all(row[3] == "true" for row in rows))
        with open(os.path.join(out, "cascade.txt"), encoding="utf-8") as f:
            cascade = f.read()
        self.assertTrue(cascade.startswith(f"t = {3.005:.17g}\n"))
        self.assertIn("ReDelta = ", cascade)

    @mock.patch("cat_decoherence.workflow.Verifier.run")
    def test_verify_failure_exit_code(self, run):
        """Test that a failed check exits with status 3 after writing its artifacts."""
        run.return_value = VerificationReport(checks=[CheckResult("transform_inverse", 1.0, 1e-12)])
        code, out = self._run("failing", "verify")
        self.assertEqual(code, 3)
        self.assertTrue(os.path.exists(os.path.join(out, "verification.csv")))
        self.assertTrue(os.path.exists(os.path.join(out, "manifest.txt")))


if __name__ == "__main__":
    unittest.main()
