"""Tests for the result file utilities."""

import os
import shutil
import tempfile
import unittest

import numpy as np

from cat_decoherence.utils.file import format_value, read_csv, time_tag, write_csv


class TestFormatValue(unittest.TestCase):
    """Test cases for format_value function."""

    def test_float_keeps_seventeen_digits(self):
        """Test that floats survive a text round trip."""
        self.assertEqual(format_value(0.1), "0.10000000000000001")
        self.assertEqual(float(format_value(-0.0711341932)), -0.0711341932)

    def test_numpy_scalar(self):
        """Test that numpy scalars are written like floats."""
        self.assertEqual(format_value(np.float64(2.5)), "2.5")

    def test_none_bool_int(self):
        """Test the empty cell, booleans and integers."""
        self.assertEqual(format_value(None), "")
        self.assertEqual(format_value(True), "true")
        self.assertEqual(format_value(False), "false")
        self.assertEqual(format_value(7), "7")
        self.assertEqual(format_value("P11"), "P11")


class TestWriteCsv(unittest.TestCase):
    """Test cases for write_csv and read_csv."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test fixtures."""
        if os.path.exists(self.temp_dir):
            shutil.rmtree(self.temp_dir)

    def test_header_and_rows(self):
        """Test that the header comes first and cells are formatted."""
        path = os.path.join(self.temp_dir, "nested", "table.csv")
        write_csv(path, ("particle", "onset"), [(1, 4.5), (2, None)])

        header, rows = read_csv(path)
        self.assertEqual(header, ["particle", "onset"])
        self.assertEqual(rows, [["1", "4.5"], ["2", ""]])

    def test_line_endings(self):
        """Test that rows end with a bare newline."""
        path = os.path.join(self.temp_dir, "table.csv")
        write_csv(path, ("a",), [(1,)])
        with open(path, "rb") as f:
            self.assertEqual(f.read(), b"a\n1\n")


class TestTimeTag(unittest.TestCase):
    """Test cases for time_tag function."""

    def test_tags(self):
        """Test file-name friendly time tags."""
        self.assertEqual(time_tag(6.005), "6p005")
        self.assertEqual(time_tag(3.0), "3")
        self.assertEqual(time_tag(-0.5), "m0p5")


if __name__ == "__main__":
    unittest.main()
