"""Battery of structural, property and oracle checks behind ``cat-decoherence verify``."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from cat_decoherence.classical import (
    ClassicalState,
    corner_states,
    total_energy,
    trajectory,
    velocity,
)
from cat_decoherence.errors import VerificationFailure
from cat_decoherence.evolution import ThreeCatSystem, initial_marginal
from cat_decoherence.model import coupling_matrix
from cat_decoherence.oracle import (
    GridSpec,
    OracleRecord,
    convolve_convergence,
    delta_expanded_extended,
    free_gaussian_width,
    grid_evolve,
    proportionality_spread,
    real_coeffs_extended,
    rk4_classical,
)
from cat_decoherence.propagator import (
    delta_direct,
    delta_expanded,
    lambda_mu_direct,
    lambda_mu_expanded,
    phi_contracted,
    phi_expanded,
    phi_long,
    quadratic_d,
    quadratic_d_expanded,
    relative_gap,
)
from cat_decoherence.reduction import QuadratureSpec, marginal_direct, reduce, visibility

logger = logging.getLogger(__name__)

CHECK_TIME = 3.005
SHORT_TIME = 0.01
PROPORTIONALITY_TIMES = (0.5, 3.005)
ORACLE_TIMES = (1.0, 3.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value)) and self.value <= self.tolerance


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)
    records: list[OracleRecord] = field(default_factory=list)

    @property
    def failed(self) -> list[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def raise_for_failures(self) -> None:
        if self.failed:
            names = ", ".join(check.name for check in self.failed)
            raise VerificationFailure(
                f"{len(self.failed)} of {len(self.checks)} checks failed: {names}",
                failed=[check.name for check in self.failed],
            )


def _sample_points(system: ThreeCatSystem, t: float, count: int, rng) -> np.ndarray:
    """Random points near the packet centers at ``t``."""
    centers = np.array(
        [trajectory(system.basis, s0, t) for s0 in corner_states(system.params.cats).values()]
    )
    picks = centers[rng.integers(0, len(centers), size=count)]
    return picks + rng.normal(scale=1.0, size=(count, 3)) * system.params.sigmas


class Verifier:
    """Runs the check battery for one parameter set and collects the results."""

    def __init__(
        self,
        system: ThreeCatSystem,
        *,
        seed: int = 0,
        quad: QuadratureSpec | None = None,
        energy_tolerance: float = 1e-6,
        convolve_panels: int = 8,
        on_check: Callable[[CheckResult], None] | None = None,
    ):
        self.system = system
        self.rng = np.random.default_rng(seed)
        self.quad = quad or QuadratureSpec(points=128, output_points=201)
        self.energy_tolerance = energy_tolerance
        self.convolve_panels = convolve_panels
        self.on_check = on_check
        self.report = VerificationReport()

    def _add(self, name: str, value: float, tolerance: float) -> None:
        check = CheckResult(name=name, value=float(value), tolerance=tolerance)
        self.report.checks.append(check)
        verdict = "ok" if check.passed else "FAIL"
        logger.info("%s: %.3e (tol %.1e) %s", name, value, tolerance, verdict)
        if self.on_check:
            self.on_check(check)

    def structural(self) -> None:
        basis = self.system.basis
        self._add("transform_inverse", np.max(np.abs(basis.P @ basis.Pinv - np.eye(3))), 1e-12)
        W = coupling_matrix(self.system.params)
        similar = basis.P @ W @ basis.Pinv
        target = np.diag([basis.lambda1, basis.lambda2, 0.0])
        scale = max(abs(basis.lambda1), abs(basis.lambda2))
        self._add("similarity_diagonal", np.max(np.abs(similar - target)) / scale, 1e-12)

    def classical(self) -> None:
        basis = self.system.basis
        start = corner_states(self.system.params.cats)["111"]
        e0 = total_energy(basis, start)
        times = np.linspace(0.0, 50.0, 2001)
        xs = trajectory(basis, start, times)
        vs = velocity(basis, start, times)
        drift = max(
            abs(total_energy(basis, ClassicalState(x=x, v=v, t=float(t))) - e0)
            for t, x, v in zip(times, xs, vs)
        )
        self._add("energy_conservation", drift / abs(e0), 1e-9)

        expected = trajectory(basis, start, 5.0)
        rk4 = rk4_classical(self.system.params, start, 5.0)
        self._add("rk4_trajectory", np.max(np.abs(rk4 - expected)), 1e-6)

    def propagator(self) -> None:
        cc = self.system.coeffs(CHECK_TIME)
        real = cc.real
        points = _sample_points(self.system, CHECK_TIME, 20, self.rng)
        self._add(
            "quadratic_form_identity",
            relative_gap(quadratic_d(real, points), quadratic_d_expanded(real, points)),
            1e-9,
        )
        delta_x = delta_expanded(real, cc.sigmas, cc.hbar)
        self._add("delta_dual_path", relative_gap(delta_direct(cc.Abrev, cc.Bbrev), delta_x), 1e-9)
        lam, mu = lambda_mu_direct(cc.Abrev, cc.Bbrev)
        lam_x, mu_x = lambda_mu_expanded(real, cc.sigmas, cc.hbar)
        self._add("lambda_dual_path", relative_gap(lam, lam_x), 1e-9)
        self._add("mu_dual_path", relative_gap(mu, mu_x), 1e-9)

        gaps = []
        for X in points[:5]:
            for k in range(8):
                reference = phi_contracted(cc, X, k)
                gaps.append(relative_gap(reference, phi_long(cc, X, k)))
                gaps.append(relative_gap(reference, phi_expanded(cc, X, k)))
        self._add("phi_three_routes", max(gaps), 1e-9)

        A, B, alpha = real_coeffs_extended(self.system.params, CHECK_TIME)
        coeff_gap = max(
            relative_gap(real.A, A.astype(float)),
            relative_gap(real.B, B.astype(float)),
            relative_gap(real.alpha, alpha.astype(float)),
        )
        self._add("real_coeffs_extended_precision", coeff_gap, 1e-9)
        re, im = delta_expanded_extended(self.system.params, CHECK_TIME)
        self._add(
            "delta_extended_precision", relative_gap(cc.Delta, complex(float(re), float(im))), 1e-9
        )

    def density(self) -> None:
        points = _sample_points(self.system, CHECK_TIME, 20, self.rng)
        totals, _ = self.system.rho_shape(points, CHECK_TIME)
        split = np.array([self.system.rho_total(X, CHECK_TIME).total for X in points])
        self._add("density_partition", relative_gap(split, totals), 1e-12)

    def reduction(self) -> None:
        system = self.system
        coarse = QuadratureSpec(points=64, output_points=41)
        profile = reduce(system, 1, CHECK_TIME, coarse)
        self._add("profile_normalization", abs(trapezoid(profile.total, profile.grid) - 1.0), 1e-6)
        direct = marginal_direct(system, 1, CHECK_TIME, profile.grid, coarse, profile.shift)
        self._add(
            "profile_partition", relative_gap(profile.total, direct * profile.norm_constant), 1e-9
        )

        coarse_v = visibility(reduce(system, 1, CHECK_TIME, self.quad))
        fine_v = visibility(reduce(system, 1, CHECK_TIME, self.quad.doubled()))
        self._add("visibility_convergence", abs(fine_v - coarse_v), 1e-3)

        early = reduce(system, 1, SHORT_TIME, self.quad)
        analytic = initial_marginal(system.params.cats, 1, early.grid)
        self._add(
            "short_time_limit", np.max(np.abs(early.total - analytic)) / np.max(analytic), 1e-2
        )

    def convolution(self) -> None:
        for t in PROPORTIONALITY_TIMES:
            points = _sample_points(self.system, t, 20, self.rng)
            spread = proportionality_spread(self.system, points, t, panels=self.convolve_panels)
            self._add(f"convolution_proportionality_t{t:g}", spread, 1e-5)

        coarse, fine, change = convolve_convergence(
            self.system, np.zeros(3), CHECK_TIME, panels=self.convolve_panels
        )
        self._add("convolution_convergence", change, 1e-6)
        self.report.records.append(
            OracleRecord(
                name="convolve_direct",
                parameters={"t": CHECK_TIME, "X": [0.0, 0.0, 0.0]},
                resolution=f">= {self.convolve_panels} panels x 8 Gauss-Legendre nodes per axis",
                result=[fine.real, fine.imag],
                evidence=f"panel doubling changes the amplitude by {change:.3e}",
            )
        )

        measured, expected = free_gaussian_width(1.0, 1.0, 1.0, 3.0)
        self._add("free_gaussian_width", abs(measured - expected) / expected, 1e-4)

    def grid(self, points: int = 128, dt: float | None = None, times=ORACLE_TIMES) -> None:
        params = self.system.params
        for t in times:
            lattice = GridSpec.for_model(params, t, points=points, dt=dt)
            run = grid_evolve(params, lattice, t)
            self._add(f"grid_norm_t{t:g}", run.norm_drift, 1e-10)
            self._add(f"grid_energy_drift_t{t:g}", run.energy_drift, self.energy_tolerance)
            worst = 0.0
            for particle in (1, 2, 3):
                axis = run.axes[particle - 1]
                profile = reduce(self.system, particle, t, self.quad, grid=axis)
                marginal = run.marginals[particle]
                worst = max(worst, np.max(np.abs(profile.total - marginal)) / np.max(marginal))
            self._add(f"grid_marginals_t{t:g}", worst, 1e-2)
            self.report.records.append(
                OracleRecord(
                    name="grid_evolve",
                    parameters={
                        "t": t,
                        "dt": lattice.dt,
                        "lower": lattice.lower,
                        "upper": lattice.upper,
                    },
                    resolution=f"{points}^3 points, {run.steps} steps",
                    result={"linf_relative": worst, "energy_drift": run.energy_drift},
                    evidence=f"norm drift {run.norm_drift:.3e}",
                )
            )

    def run(
        self,
        *,
        oracle: bool = False,
        grid_points: int = 128,
        grid_dt: float | None = None,
        grid_times=ORACLE_TIMES,
    ) -> VerificationReport:
        self.structural()
        self.classical()
        self.propagator()
        self.density()
        self.reduction()
        self.convolution()
        if oracle:
            self.grid(points=grid_points, dt=grid_dt, times=grid_times)
        return self.report
