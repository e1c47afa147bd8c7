import argparse
import copy
import logging
import os
import sys
from datetime import datetime
from importlib import resources
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from rich.console import Console
from rich.table import Table

from cat_decoherence.errors import ConfigError
from cat_decoherence.model import ModelParams
from cat_decoherence.reduction import QuadratureSpec
from cat_decoherence.utils.parsing import parse_particles, parse_times, time_range

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

COMMANDS = ("eigen", "classical", "reduce", "report", "verify", "panels")
WORKERS_ENV = "CAT_DECOHERENCE_WORKERS"
DEFAULTS_RESOURCE = "reference_defaults.toml"

# Defaults of the command-line surface that are not part of the run config
DEFAULT_CONFIG = {
    "particle": "all",
    "output_root": "output",
    "verbosity": 0,
    "quiet": False,
}


class TimesConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    values: tuple[float, ...] | None = None
    range: tuple[float, float, float] | None = None

    @model_validator(mode="after")
    def _one_source(self) -> "TimesConfig":
        if self.values is not None and self.range is not None:
            raise ValueError("give either times.values or times.range, not both")
        return self

    def resolve(self) -> list[float] | None:
        if self.values is not None:
            return list(self.values)
        if self.range is not None:
            return time_range(*self.range)
        return None


class QuadratureConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    points: int = Field(default=512, ge=64)
    output_points: int = Field(default=401, ge=3)
    rule: Literal["trapezoid", "gauss-legendre"] = "trapezoid"
    extent: float | None = Field(default=None, gt=0.0)
    report_points: int = Field(default=128, ge=64)
    report_output_points: int = Field(default=201, ge=3)

    @model_validator(mode="after")
    def _panels_fit(self) -> "QuadratureConfig":
        if self.rule == "gauss-legendre" and (self.points % 8 or self.report_points % 8):
            raise ValueError("gauss-legendre needs point counts divisible by 8")
        return self

    def profile_spec(self) -> QuadratureSpec:
        return QuadratureSpec(
            points=self.points, output_points=self.output_points, rule=self.rule, extent=self.extent
        )

    def report_spec(self) -> QuadratureSpec:
        return QuadratureSpec(
            points=self.report_points,
            output_points=self.report_output_points,
            rule=self.rule,
            extent=self.extent,
        )


class DecoherenceConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    threshold: float = Field(default=0.1, gt=0.0, lt=1.0)
    hold: float = Field(default=0.5, ge=0.0)


class ClassicalConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dt: float = Field(default=0.005, gt=0.0)
    tmax: float = Field(default=12.0, gt=0.0)


class OracleConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    grid_points: int = Field(default=128, ge=8)
    grid_dt: float | None = Field(default=None, gt=0.0)
    convolve_panels: int = Field(default=8, ge=1)
    times: tuple[float, ...] = (1.0, 3.0)
    energy_tolerance: float = Field(default=1e-6, gt=0.0)


class OutputConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: str | None = None
    emit_svg: bool = False
    run_oracle: bool = False
    seed: int = 0
    workers: int | None = Field(default=None, ge=1)


class RunConfig(BaseModel):
    """Fully resolved configuration of one run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelParams = ModelParams()
    times: TimesConfig = TimesConfig()
    quadrature: QuadratureConfig = QuadratureConfig()
    decoherence: DecoherenceConfig = DecoherenceConfig()
    classical: ClassicalConfig = ClassicalConfig()
    oracle: OracleConfig = OracleConfig()
    output: OutputConfig = OutputConfig()


def default_config_text() -> str:
    """The shipped default configuration file, verbatim."""
    return resources.files("cat_decoherence").joinpath(DEFAULTS_RESOURCE).read_text("utf-8")


def load_config_file(path: str) -> dict:
    """Read a TOML config file into a plain dict."""
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file '{path}' not found") from e
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config file '{path}': {e}") from e


def merge_config(base: dict, override: dict) -> dict:
    """Recursive merge; tables merge key by key, everything else is replaced."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def build_run_config(data: dict) -> RunConfig:
    """Validate a raw config dict; schema errors become ConfigError."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def resolve_workers(explicit: int | None) -> int:
    """Worker count from the flag/config, then the environment, then min(4, CPUs)."""
    if explicit is not None:
        return explicit
    load_dotenv()
    raw = os.getenv(WORKERS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError as e:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got '{raw}'") from e
        if value < 1:
            raise ConfigError(f"{WORKERS_ENV} must be positive, got {value}")
        return value
    return min(4, os.cpu_count() or 1)


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class Config:
    """Configuration manager for the cat-decoherence command line."""

    def __init__(self, console: Console | None = None):
        self.console = console or Console()

    def parse_arguments(self, argv: list[str] | None = None) -> tuple[str, RunConfig, dict]:
        """Parse command line arguments and return the command, run config and CLI options."""
        parser = self._create_parser()
        args = parser.parse_args(argv)

        if args.print_defaults:
            return "print-defaults", RunConfig(), {"quiet": True, "verbosity": 0}
        if not args.command:
            parser.error("a command is required")

        run_config = self._build_config(args)
        options = {
            "particles": parse_particles(args.particle),
            "output_dir": self._output_dir(args.command, args.out, run_config),
            "workers": resolve_workers(run_config.output.workers),
            "verbosity": args.verbose,
            "quiet": args.quiet,
        }
        if not args.quiet:
            self.console.print(self._build_settings_table(args.command, run_config, options))
        return args.command, run_config, options

    def _create_parser(self) -> argparse.ArgumentParser:
        """Create and configure the argument parser."""
        common = _ArgumentParser(add_help=False)
        common.add_argument("--config", type=str, help="TOML configuration file")
        common.add_argument("--out", type=str, help="Output directory (default: auto-named)")
        common.add_argument(
            "--t", dest="times", type=str, help="Times as a list 'a,b,c' or range 'start:stop:step'"
        )
        common.add_argument(
            "--particle",
            type=str,
            default=DEFAULT_CONFIG["particle"],
            help="Particle to reduce onto: 1, 2, 3 or all",
        )
        common.add_argument("--grid", type=int, help="Quadrature points per integrated axis")
        common.add_argument("--extent", type=float, help="Fixed half-width L of the box [-L, L]")
        common.add_argument("--threshold", type=float, help="Visibility threshold for decoherence")
        common.add_argument("--hold", type=float, help="Hold window below the threshold")
        common.add_argument("--sigma", type=float, help="Packet width for all three cats")
        common.add_argument("--workers", type=int, help=f"Worker threads (overrides {WORKERS_ENV})")
        common.add_argument(
            "--emit-svg", action="store_true", default=None, help="Also write SVG figures"
        )
        common.add_argument(
            "--oracle", action="store_true", default=None, help="Add the grid-evolution oracle"
        )
        common.add_argument(
            "-v",
            "--verbose",
            action="count",
            default=DEFAULT_CONFIG["verbosity"],
            help="More log output (-vv for debug and tracebacks)",
        )
        common.add_argument(
            "--quiet",
            action="store_true",
            default=DEFAULT_CONFIG["quiet"],
            help="Suppress most output and show only a single progress bar",
        )

        parser = _ArgumentParser(
            prog="cat-decoherence",
            description="Decoherence of three coupled Schrodinger-cat oscillators",
        )
        parser.add_argument(
            "--print-defaults",
            action="store_true",
            help="Print the shipped default configuration and exit",
        )
        subparsers = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
        helps = {
            "eigen": "Normal-mode decomposition of the coupling matrix",
            "classical": "Corner trajectories and their crossings",
            "reduce": "Reduced densities per particle and time",
            "report": "Visibility series, onsets and decoherence ordering",
            "verify": "Structural, property and oracle checks",
            "panels": "Three reduced densities plus trajectories as one figure",
        }
        for name in COMMANDS:
            subparsers.add_parser(name, parents=[common], help=helps[name])
        return parser

    def _build_config(self, args) -> RunConfig:
        """Defaults file, then --config, then flags."""
        data = tomllib.loads(default_config_text())
        if args.config:
            data = merge_config(data, load_config_file(args.config))

        overrides: dict = {}
        if args.times:
            overrides.setdefault("times", {})["values"] = parse_times(args.times)
            data.get("times", {}).pop("range", None)
        if args.grid is not None:
            overrides.setdefault("quadrature", {}).update(
                {"points": args.grid, "report_points": args.grid}
            )
        if args.extent is not None:
            overrides.setdefault("quadrature", {})["extent"] = args.extent
        if args.threshold is not None:
            overrides.setdefault("decoherence", {})["threshold"] = args.threshold
        if args.hold is not None:
            overrides.setdefault("decoherence", {})["hold"] = args.hold
        if args.sigma is not None:
            cats = data.get("model", {}).get("cats", [])
            overrides.setdefault("model", {})["cats"] = [
                {**cat, "sigma": args.sigma} for cat in cats
            ]
        if args.workers is not None:
            overrides.setdefault("output", {})["workers"] = args.workers
        if args.emit_svg:
            overrides.setdefault("output", {})["emit_svg"] = True
        if args.oracle:
            overrides.setdefault("output", {})["run_oracle"] = True

        return build_run_config(merge_config(data, overrides))

    def _output_dir(self, command: str, out: str | None, run_config: RunConfig) -> str:
        if out:
            return out
        if run_config.output.directory:
            return run_config.output.directory
        stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        return os.path.join(DEFAULT_CONFIG["output_root"], f"{command}_{stamp}")

    def _build_settings_table(self, command: str, run_config: RunConfig, options: dict) -> Table:
        """Build the Rich table that displays launch settings."""
        table = Table(title="Launch Settings")
        table.add_column("Setting", style="cyan", no_wrap=True)
        table.add_column("Value", style="bold", overflow="fold")

        model = run_config.model
        quad = run_config.quadrature
        times = run_config.times.resolve()
        table.add_row("Command", command)
        table.add_row("Output Directory", options["output_dir"])
        table.add_row("Mass / hbar", f"{model.m:g} / {model.hbar:g}")
        table.add_row(
            "Couplings (12, 13, 23)", f"{model.omega12:g}, {model.omega13:g}, {model.omega23:g}"
        )
        table.add_row("Displacements", ", ".join(f"{cat.d:g}" for cat in model.cats))
        table.add_row("Widths", ", ".join(f"{cat.sigma:g}" for cat in model.cats))
        table.add_row("Times", "command default" if times is None else self._format_times(times))
        table.add_row("Particles", ", ".join(str(p) for p in options["particles"]))
        table.add_row(
            "Quadrature",
            f"{quad.rule}, {quad.points} pts (report {quad.report_points}), "
            f"extent {'adaptive' if quad.extent is None else quad.extent}",
        )
        table.add_row(
            "Threshold / Hold",
            f"{run_config.decoherence.threshold:g} / {run_config.decoherence.hold:g}",
        )
        table.add_row("Workers", str(options["workers"]))
        table.add_row("Emit SVG", self._format_bool(run_config.output.emit_svg))
        table.add_row(
            "Grid Oracle",
            self._format_bool(
                run_config.output.run_oracle,
                true_label="Enabled",
                false_label="Disabled",
                false_color="yellow",
            ),
        )
        return table

    def _format_times(self, times: list[float]) -> str:
        if len(times) <= 6:
            return ", ".join(f"{t:g}" for t in times)
        return f"{times[0]:g} ... {times[-1]:g} ({len(times)} values)"

    def _format_bool(
        self,
        value: bool,
        *,
        true_label: str = "Yes",
        false_label: str = "No",
        false_color: str = "red",
    ) -> str:
        """Return a colorized string for boolean values."""
        color = "green" if value else false_color
        label = true_label if value else false_label
        return f"[{color}]{label}[/{color}]"
