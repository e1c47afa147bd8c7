"""Utility functions for writing result files."""

import csv
import logging
import os
from collections.abc import Iterable, Sequence

logger = logging.getLogger(__name__)


def format_value(value) -> str:
    """Render one CSV cell; floats keep 17 significant digits, None is empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or hasattr(value, "dtype"):
        return "%.17g" % float(value)
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """
    Writes a comma-separated file with a header row.

    Args:
        path: Destination file; parent directories are created
        header: Column names
        rows: Row values, formatted with format_value

    Returns:
        str: The path written
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([format_value(value) for value in row])
            count += 1
    logger.debug("wrote %s (%d rows)", path, count)
    return path


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    """Reads a CSV written by write_csv back as header and string rows."""
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]


def time_tag(t: float) -> str:
    """File-name friendly rendering of a time value, e.g. 6.005 -> '6p005'."""
    return f"{t:g}".replace(".", "p").replace("-", "m")
