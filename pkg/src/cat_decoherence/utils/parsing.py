"""Parsing of command-line time lists and particle selections."""

import math

import numpy as np

from cat_decoherence.errors import ConfigError


def parse_times(text: str) -> list[float]:
    """
    Parses a time list "a,b,c" or an inclusive range "start:stop:step".

    Raises:
        ConfigError: for malformed, non-finite or non-positive-step input.
    """
    text = text.strip()
    if not text:
        raise ConfigError("empty time specification")
    try:
        if ":" in text:
            parts = [float(part) for part in text.split(":")]
            if len(parts) != 3:
                raise ConfigError(f"time range must be start:stop:step, got '{text}'")
            return time_range(*parts)
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"cannot parse times '{text}': {e}") from e
    if not values or not all(math.isfinite(v) for v in values):
        raise ConfigError(f"times must be finite numbers, got '{text}'")
    return values


def time_range(start: float, stop: float, step: float) -> list[float]:
    """Inclusive range with values rounded to suppress accumulated float drift."""
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)):
        raise ConfigError("time range entries must be finite")
    if step <= 0 or stop < start:
        raise ConfigError(f"invalid time range {start}:{stop}:{step}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(float(v), 10) for v in start + step * np.arange(count)]


def parse_particles(text: str) -> tuple[int, ...]:
    """'1', '2', '3' or 'all'."""
    text = text.strip().lower()
    if text == "all":
        return (1, 2, 3)
    if text in ("1", "2", "3"):
        return (int(text),)
    raise ConfigError(f"particle must be 1, 2, 3 or all, got '{text}'")
