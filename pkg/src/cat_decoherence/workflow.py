import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor

from rich.console import Console
from rich.table import Table

from cat_decoherence import __version__
from cat_decoherence.artifacts import ArtifactManager
from cat_decoherence.classical import CORNER_LABELS, crossings, ensemble
from cat_decoherence.console import RunProgressManager
from cat_decoherence.errors import ConfigError
from cat_decoherence.evolution import ThreeCatSystem
from cat_decoherence.model import cubic_residual
from cat_decoherence.propagator import cascade_report
from cat_decoherence.reduction import (
    DEFAULT_REPORT_TIMES,
    PANEL_TIMES,
    ReducedDensityProfile,
    reduce,
    report,
    visibility,
    visibility_l1,
)
from cat_decoherence.utils.config import RunConfig
from cat_decoherence.utils.file import time_tag
from cat_decoherence.utils.rendering import (
    plot_panels,
    plot_profile,
    plot_trajectories,
    plot_visibility,
)
from cat_decoherence.utils.timing import StageTimer
from cat_decoherence.verification import CHECK_TIME, CheckResult, VerificationReport, Verifier

logger = logging.getLogger(__name__)

PROFILE_HEADER = ("x", "packet0_eff", "packetd_eff", "interference_eff", "total")
TRAJECTORY_HEADER = ("t", "corner_label", "x1", "x2", "x3")


class DecoherenceWorkflow:
    """Runs one command of the cat-decoherence tool and writes its artifacts."""

    def __init__(self, config: RunConfig, options: dict, console: Console):
        self.config = config
        self.console = console
        self.quiet = options.get("quiet", False)
        self.particles: tuple[int, ...] = tuple(options.get("particles", (1, 2, 3)))
        self.workers: int = options.get("workers", 1)
        self.timer = StageTimer()
        self.artifact_manager = ArtifactManager(options["output_dir"], console)
        self.progress = RunProgressManager(console)
        self.tolerances: dict[str, float] = {}
        self.results: dict = {}
        self.oracle_records: list[dict] = []
        self.verification: VerificationReport | None = None
        self._system: ThreeCatSystem | None = None

    @property
    def system(self) -> ThreeCatSystem:
        if self._system is None:
            self._system = ThreeCatSystem(self.config.model)
        return self._system

    def execute(self, command: str) -> None:
        """Run ``command``; the manifest is written once the command succeeds."""
        handlers: dict[str, Callable[[], None]] = {
            "eigen": self.run_eigen,
            "classical": self.run_classical,
            "reduce": self.run_reduce,
            "report": self.run_report,
            "verify": self.run_verify,
            "panels": self.run_panels,
        }
        if command not in handlers:
            raise ConfigError(f"unknown command '{command}'")
        try:
            handlers[command]()
        except ValueError as e:
            raise ConfigError(f"invalid input for '{command}': {e}") from e
        finally:
            self.progress.stop()

    def finalize(self, command: str, duration_human: str) -> str:
        return self.artifact_manager.save_manifest(
            command=command,
            version=__version__,
            config=self.config.model_dump(mode="json"),
            tolerances=self.tolerances,
            oracle_records=self.oracle_records,
            timing=self.timer.get_tracking_data(),
            duration_human=duration_human,
            results=self.results,
        )

    # -- helpers -----------------------------------------------------------

    def _announce(self, title: str) -> None:
        if self.quiet:
            self.progress.set_stage(title)
        else:
            self.console.rule(f"[bold green]{title}", style="green")

    def _map(self, fn: Callable, items: Iterable) -> list:
        """Ordered parallel map over the bounded worker pool, ticking the progress bar."""
        items = list(items)
        self.progress.add_steps(len(items))
        self.progress.start()

        def run(item):
            result = fn(item)
            self.progress.advance()
            return result

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(run, items))

    def _times(self, fallback: Iterable[float]) -> list[float]:
        times = self.config.times.resolve()
        return list(fallback) if times is None else times

    def _profiles(self, tasks: list[tuple[int, float]]) -> list[ReducedDensityProfile]:
        quad = self.config.quadrature.profile_spec()
        system = self.system
        with self.timer.stage("reduce", items=len(tasks)):
            return self._map(lambda task: reduce(system, task[0], task[1], quad), tasks)

    def _save_profile(self, profile: ReducedDensityProfile) -> None:
        name = f"profile_p{profile.particle}_t{time_tag(profile.t)}"
        self.artifact_manager.save_csv(
            f"{name}.csv",
            PROFILE_HEADER,
            zip(
                profile.grid,
                profile.packet0_eff,
                profile.packetd_eff,
                profile.interference_eff,
                profile.total,
            ),
        )
        if self.config.output.emit_svg:
            self.artifact_manager.save_svg(f"{name}.svg", lambda path: plot_profile(profile, path))

    def _record_profile_convergence(self, profiles: list[ReducedDensityProfile]) -> None:
        """|V_N - V_2N| for every profile, the achieved quadrature evidence of the run."""
        fine_quad = self.config.quadrature.profile_spec().doubled()
        system = self.system
        with self.timer.stage("convergence", items=len(profiles)):
            fine = self._map(
                lambda prof: reduce(system, prof.particle, prof.t, fine_quad), profiles
            )
        entries = [
            {
                "particle": coarse.particle,
                "t": coarse.t,
                "points": coarse.points,
                "delta": abs(visibility(refined) - visibility(coarse)),
            }
            for coarse, refined in zip(profiles, fine)
        ]
        self.tolerances["visibility_convergence"] = max(entry["delta"] for entry in entries)
        self.results["convergence"] = entries

    def _print(self, renderable) -> None:
        if not self.quiet:
            self.console.print(renderable)

    # -- commands ----------------------------------------------------------

    def run_eigen(self) -> None:
        self._announce("Normal-Mode Decomposition")
        with self.timer.stage("eigen"):
            basis = self.system.basis
        params = self.config.model

        rows: list[tuple[str, float]] = [
            ("lambda1", basis.lambda1),
            ("lambda2", basis.lambda2),
            ("Omega1", basis.Omega1),
            ("Omega2", basis.Omega2),
            ("delta_omega_sq", basis.delta_omega_sq),
            ("xi1", basis.xi1),
            ("xi2", basis.xi2),
            ("eta1", basis.eta1),
            ("eta2", basis.eta2),
            ("zeta1", basis.zeta1),
            ("zeta2", basis.zeta2),
            ("DeltaConst", basis.DeltaConst),
            ("m1", basis.m1),
            ("m2", basis.m2),
            ("m3", basis.m3),
            ("omega1sq", basis.omega1sq),
            ("omega2sq", basis.omega2sq),
        ]
        for i in range(3):
            for j in range(3):
                rows.append((f"P{i + 1}{j + 1}", basis.P[i, j]))
        for i in range(3):
            for j in range(3):
                rows.append((f"Pinv{i + 1}{j + 1}", basis.Pinv[i, j]))
        self.artifact_manager.save_csv("eigen.csv", ("quantity", "value"), rows)

        residual = max(cubic_residual(params, basis.lambda1), cubic_residual(params, basis.lambda2))
        self.tolerances["cubic_residual"] = residual
        self.results["eigenvalues"] = [basis.lambda1, basis.lambda2, 0.0]

        table = Table(title="Normal Modes")
        table.add_column("Quantity", style="cyan")
        table.add_column("Value", justify="right", style="bold")
        for name, value in rows[:17]:
            table.add_row(name, f"{value:.10g}")
        self._print(table)

    def run_classical(self) -> None:
        self._announce("Classical Corner Trajectories")
        times = self.config.times.resolve()
        tmax = max(times) if times else self.config.classical.tmax
        with self.timer.stage("classical"):
            ens = ensemble(
                self.system.basis, self.config.model.cats, tmax, self.config.classical.dt
            )
            found = {particle: crossings(ens, particle) for particle in self.particles}

        rows = (
            (t, label, *ens.positions[label][i])
            for i, t in enumerate(ens.times)
            for label in CORNER_LABELS
        )
        self.artifact_manager.save_csv("trajectories.csv", TRAJECTORY_HEADER, rows)
        self.artifact_manager.save_csv(
            "crossings.csv",
            ("particle", "index", "t"),
            [(p, i, t) for p in self.particles for i, t in enumerate(found[p])],
        )
        self.results["first_crossings"] = {
            str(p): (found[p][0] if found[p] else None) for p in self.particles
        }

        table = Table(title="Trajectory Crossings")
        table.add_column("Particle", style="cyan")
        table.add_column("First Crossing", justify="right")
        table.add_column("Crossings", justify="right")
        for p in self.particles:
            first = f"{found[p][0]:.6f}" if found[p] else "[yellow]none[/yellow]"
            table.add_row(str(p), first, str(len(found[p])))
        self._print(table)

        if self.config.output.emit_svg:
            for p in self.particles:
                self.artifact_manager.save_svg(
                    f"trajectories_p{p}.svg", lambda path, p=p: plot_trajectories(ens, p, path)
                )

    def run_reduce(self) -> None:
        self._announce("Reduced Densities")
        tasks = []
        for particle in self.particles:
            for t in self._times(PANEL_TIMES[particle]):
                tasks.append((particle, float(t)))
        profiles = self._profiles(tasks)

        summary = []
        for profile in profiles:
            self._save_profile(profile)
            summary.append(
                (
                    profile.particle,
                    profile.t,
                    visibility(profile),
                    visibility_l1(profile),
                    profile.norm_constant,
                    profile.saturated_count,
                    profile.tail_ratio,
                )
            )
        self.artifact_manager.save_csv(
            "reduce_summary.csv",
            (
                "particle",
                "t",
                "visibility",
                "visibility_l1",
                "norm_constant",
                "saturated_count",
                "tail_ratio",
            ),
            summary,
        )
        self._record_profile_convergence(profiles)
        self.results["visibility"] = [
            {"particle": row[0], "t": row[1], "visibility": row[2]} for row in summary
        ]

        threshold = self.config.decoherence.threshold
        table = Table(title="Reduced Density Visibility")
        table.add_column("Particle", style="cyan")
        table.add_column("t", justify="right")
        table.add_column("V", justify="right")
        table.add_column("V (integrated)", justify="right")
        table.add_column("Below Threshold", justify="center")
        for particle, t, vis, vis_l1, *_ in summary:
            table.add_row(
                str(particle), f"{t:g}", f"{vis:.4f}", f"{vis_l1:.4f}", _yes_no(vis < threshold)
            )
        self._print(table)

    def run_report(self) -> None:
        self._announce("Decoherence Report")
        times = self._times(DEFAULT_REPORT_TIMES)
        cfg = self.config
        with self.timer.stage("report", items=len(times) * len(self.particles)):
            rep = report(
                self.system,
                times,
                cfg.quadrature.report_spec(),
                threshold=cfg.decoherence.threshold,
                hold=cfg.decoherence.hold,
                particles=self.particles,
                classical_dt=cfg.classical.dt,
                mapper=self._map,
            )

        header = ["t"] + [f"V{p}" for p in self.particles] + [f"V{p}_l1" for p in self.particles]
        columns = (
            [rep.times]
            + [rep.visibility[p] for p in self.particles]
            + [rep.visibility_l1[p] for p in self.particles]
        )
        self.artifact_manager.save_csv("report.csv", header, zip(*columns))
        self.artifact_manager.save_csv(
            "report_summary.csv",
            ("particle", "onset", "first_crossing", "crossing_precedes_onset"),
            [
                (p, rep.onsets[p], rep.first_crossings[p], rep.crossing_precedes_onset(p))
                for p in self.particles
            ],
        )
        if cfg.output.emit_svg:
            self.artifact_manager.save_svg(
                "visibility.svg", lambda path: plot_visibility(rep, path)
            )

        self.tolerances["visibility_convergence"] = rep.max_convergence_delta
        self.results.update(
            {
                "onsets": {str(p): rep.onsets[p] for p in self.particles},
                "first_crossings": {str(p): rep.first_crossings[p] for p in self.particles},
                "ordering": rep.ordering,
                "classical_time": rep.classical_time,
                "convergence": [
                    {"particle": c.particle, "t": c.t, "delta": c.delta} for c in rep.convergence
                ],
            }
        )

        table = Table(title="Decoherence Onset")
        table.add_column("Particle", style="cyan")
        table.add_column("Onset", justify="right")
        table.add_column("First Crossing", justify="right")
        table.add_column("Crossing First", justify="center")
        for p in self.particles:
            onset = rep.onsets[p]
            crossing = rep.first_crossings[p]
            precedes = rep.crossing_precedes_onset(p)
            table.add_row(
                str(p),
                "[yellow]none[/yellow]" if onset is None else f"{onset:g}",
                "[yellow]none[/yellow]" if crossing is None else f"{crossing:.4f}",
                "-" if precedes is None else _yes_no(precedes),
            )
        self._print(table)
        if not self.quiet:
            order = " -> ".join(str(p) for p in rep.ordering) or "none"
            self.console.print(f"[cyan]Decision order:[/cyan] {order}")
            classical = rep.classical_time
            self.console.print(
                "[cyan]Whole system classical at:[/cyan] "
                + ("not reached" if classical is None else f"t = {classical:g}")
            )

    def run_verify(self) -> None:
        self._announce("Verification")
        cfg = self.config
        table = Table(title="Verification Checks")
        table.add_column("Check", style="cyan")
        table.add_column("Value", justify="right")
        table.add_column("Tolerance", justify="right")
        table.add_column("Passed", justify="center")

        def on_check(check: CheckResult) -> None:
            table.add_row(
                check.name, f"{check.value:.3e}", f"{check.tolerance:.1e}", _yes_no(check.passed)
            )
            self.progress.advance()

        verifier = Verifier(
            self.system,
            seed=cfg.output.seed,
            quad=cfg.quadrature.report_spec(),
            energy_tolerance=cfg.oracle.energy_tolerance,
            convolve_panels=cfg.oracle.convolve_panels,
            on_check=on_check,
        )
        self.progress.start()
        with self.timer.stage("verify"):
            result = verifier.run(
                oracle=cfg.output.run_oracle,
                grid_points=cfg.oracle.grid_points,
                grid_dt=cfg.oracle.grid_dt,
                grid_times=cfg.oracle.times,
            )
        self.progress.stop()

        self.artifact_manager.save_csv(
            "verification.csv",
            ("name", "value", "tolerance", "passed"),
            [(c.name, c.value, c.tolerance, c.passed) for c in result.checks],
        )
        self.tolerances.update({c.name: c.value for c in result.checks})
        self.oracle_records.extend(record.as_dict() for record in result.records)
        self.artifact_manager.save_text(
            "cascade.txt", cascade_report(self.system.coeffs(CHECK_TIME)), kind="cascade"
        )
        self.results["failed_checks"] = [c.name for c in result.failed]
        self.verification = result
        self._print(table)

    def run_panels(self) -> None:
        self._announce("Figure Panels")
        tasks = []
        for particle in self.particles:
            times = self._times(PANEL_TIMES[particle])
            if len(times) != 3:
                raise ConfigError(f"panels needs exactly three times, got {len(times)}")
            tasks.extend((particle, float(t)) for t in times)
        profiles = self._profiles(tasks)
        tmax = max(t for _, t in tasks)
        ens = ensemble(self.system.basis, self.config.model.cats, tmax, self.config.classical.dt)

        for index, particle in enumerate(self.particles):
            group = profiles[3 * index : 3 * index + 3]
            for profile in group:
                self._save_profile(profile)
            self.artifact_manager.save_svg(
                f"panels_p{particle}.svg",
                lambda path, group=group, particle=particle: plot_panels(
                    group, ens, particle, path
                ),
            )
        self._record_profile_convergence(profiles)
        self.results["visibility"] = [
            {"particle": p.particle, "t": p.t, "visibility": visibility(p)} for p in profiles
        ]
        self._print(
            f"[cyan]Panels written for particle(s) {', '.join(map(str, self.particles))}[/cyan]"
        )

    def raise_for_failures(self) -> None:
        if self.verification is not None:
            self.verification.raise_for_failures()


def _yes_no(value: bool) -> str:
    return "[green]yes[/green]" if value else "[red]no[/red]"

