"""Independent checks of the closed form.

Three routes that share nothing with the coefficient cascade except the
model parameters: brute-force convolution of the initial state with the
normal-mode propagator, split-operator evolution on a spectral grid, and a
fourth-order Runge-Kutta integration of the classical equations of motion.
The printed coefficient formulas are also re-evaluated in extended precision.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import fft
from scipy.special import roots_legendre

from cat_decoherence.classical import ClassicalState, corner_states, trajectory
from cat_decoherence.errors import CausticError, ConfigError, TailLeak
from cat_decoherence.evolution import ThreeCatSystem
from cat_decoherence.model import ModelParams, coupling_matrix, normal_basis, offset_table
from cat_decoherence.propagator import EPS_CAUSTIC
from cat_decoherence.reduction import SPREAD_WIDTHS, TAIL_RATIO, spread_estimate

logger = logging.getLogger(__name__)

CONVOLVE_HALF_WIDTH = 10.0
CONVOLVE_PANELS = 8
CONVOLVE_ORDER = 8
MAX_PHASE_PER_STEP = math.pi / 4
STEP_SAFETY = 0.25
MAX_PANEL_PHASE = 6.0
DEFAULT_RK4_STEP = 1e-3


@dataclass
class OracleRecord:
    """One oracle evaluation as it appears in the run manifest."""

    name: str
    parameters: dict[str, Any]
    resolution: str
    result: Any
    evidence: str = ""
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "parameters": self.parameters,
            "resolution": self.resolution,
            "result": self.result,
            "evidence": self.evidence,
            "timestamp": self.timestamp,
        }


# ---------------------------------------------------------------------------
# Direct convolution
# ---------------------------------------------------------------------------


def _panel_nodes(lower: float, upper: float, panels: int, order: int):
    base, base_w = roots_legendre(order)
    edges = np.linspace(lower, upper, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * base).ravel(), (half[:, None] * base_w).ravel()


def _mode_action_factors(system: ThreeCatSystem, t: float) -> tuple[np.ndarray, np.ndarray]:
    """g = m w cot(w t), h = m w / sin(w t) per normal mode, from the basis alone."""
    basis = system.basis
    if t <= EPS_CAUSTIC:
        raise CausticError(f"elapsed time {t:g} is at t=0", mode=3, nearest_time=0.0)
    g = np.empty(3)
    h = np.empty(3)
    for idx, (mass, omega) in enumerate(((basis.m1, basis.Omega1), (basis.m2, basis.Omega2))):
        s = math.sin(omega * t)
        if abs(s) < EPS_CAUSTIC:
            nearest = round(omega * t / math.pi) * math.pi / omega
            raise CausticError(f"caustic near t={nearest:.6g}", mode=idx + 1, nearest_time=nearest)
        g[idx] = mass * omega * math.cos(omega * t) / s
        h[idx] = mass * omega / s
    g[2] = h[2] = basis.m3 / t
    return g, h


def _mode_integral(
    g: float,
    h: float,
    x: float,
    center: float,
    sigma: float,
    hbar: float,
    panels: int,
    order: int,
    refine: int,
) -> complex:
    """One factor of the separable convolution along a normalized mode direction."""
    span = CONVOLVE_HALF_WIDTH * sigma
    lower, upper = center - span, center + span
    k_max = max(abs(g * lower - h * x), abs(g * upper - h * x)) / hbar
    count = refine * max(panels, math.ceil(2.0 * span * k_max / MAX_PANEL_PHASE))
    y, w = _panel_nodes(lower, upper, count, order)
    exponent = -((y - center) ** 2) / (4.0 * sigma**2) + 1j * (0.5 * g * y * y - h * x * y) / hbar
    return complex(np.sum(w * np.exp(exponent)))


def _convolve_separable(
    system: ThreeCatSystem, X: np.ndarray, t: float, panels: int, order: int, refine: int
) -> complex:
    """Equal widths: the envelope is isotropic, so the integral factors along the mode axes."""
    hbar = system.params.hbar
    rows = system.basis.P
    g, h = _mode_action_factors(system, t)
    sigma = float(system.params.sigmas[0])
    norms = np.sum(rows * rows, axis=1)
    axes = rows / np.sqrt(norms)[:, None]
    g_axis = g * norms
    h_axis = h * norms
    xi = axes @ X
    zx = rows @ X
    outer = np.exp(1j * 0.5 * np.sum(g * zx * zx) / hbar)

    total = 0.0 + 0.0j
    for offsets in offset_table(system.params.cats):
        centers = axes @ offsets
        term = 1.0 + 0.0j
        for k in range(3):
            term *= _mode_integral(
                g_axis[k], h_axis[k], xi[k], centers[k], sigma, hbar, panels, order, refine
            )
        total += term
    return complex(outer * total)


def _convolve_tensor(
    system: ThreeCatSystem, X: np.ndarray, t: float, panels: int, order: int
) -> complex:
    hbar = system.params.hbar
    rows = system.basis.P
    g, h = _mode_action_factors(system, t)
    sigmas = system.params.sigmas
    zx = rows @ X
    outer_phase = 0.5 * np.sum(g * zx * zx)

    total = 0.0 + 0.0j
    for offsets in offset_table(system.params.cats):
        axes = []
        for i in range(3):
            span = CONVOLVE_HALF_WIDTH * sigmas[i]
            axes.append(_panel_nodes(offsets[i] - span, offsets[i] + span, panels, order))
        (y1, w1), (y2, w2), (y3, w3) = axes
        Y = np.stack(np.meshgrid(y1, y2, y3, indexing="ij"), axis=-1)
        zy = Y @ rows.T
        action = outer_phase + np.sum(0.5 * g * zy * zy - h * zx * zy, axis=-1)
        envelope = np.exp(-np.sum((Y - offsets) ** 2 / (4.0 * sigmas**2), axis=-1))
        integrand = envelope * np.exp(1j * action / hbar)

        peak = float(envelope.max())
        edge = max(
            float(envelope[[0, -1], :, :].max()),
            float(envelope[:, [0, -1], :].max()),
            float(envelope[:, :, [0, -1]].max()),
        )
        if peak > 0 and edge / peak > TAIL_RATIO:
            ratio = edge / peak
            raise TailLeak(f"convolution box truncates {ratio:.2e} of the peak", ratio=ratio)

        weights = w1[:, None, None] * w2[None, :, None] * w3[None, None, :]
        total += complex(np.sum(integrand * weights))
    return total


def convolve_direct(
    system: ThreeCatSystem,
    X,
    t: float,
    panels: int = CONVOLVE_PANELS,
    order: int = CONVOLVE_ORDER,
    refine: int = 1,
) -> complex:
    """Integral of exp(i S(X, Y) / hbar) psi(Y, 0) over Y, prefactor omitted.

    The action is assembled mode by mode from g and h; each of the eight
    initial packets is integrated over its own box of +-10 sigma per axis.
    With equal packet widths the integral is a product of three 1-D integrals
    along the orthonormal mode directions, each with enough panels to keep
    the kernel phase below 6 rad per panel. Otherwise a tensor rule with
    ``panels`` panels per axis is used. ``refine`` multiplies the panel count.

    Raises:
        CausticError: at caustic times.
        TailLeak: when a packet box truncates more than 1e-8 of the integrand peak.
    """
    X = np.asarray(X, dtype=float).reshape(3)
    sigmas = system.params.sigmas
    if np.all(sigmas == sigmas[0]):
        return _convolve_separable(system, X, t, panels, order, refine)
    return _convolve_tensor(system, X, t, panels * refine, order)


def convolve_convergence(system: ThreeCatSystem, X, t: float, panels: int = CONVOLVE_PANELS):
    """Coarse value, value with twice the panels, and their relative change."""
    coarse = convolve_direct(system, X, t, panels=panels)
    fine = convolve_direct(system, X, t, panels=panels, refine=2)
    return coarse, fine, abs(fine - coarse) / abs(fine)


def proportionality_spread(
    system: ThreeCatSystem, points: np.ndarray, t: float, panels: int = CONVOLVE_PANELS
) -> float:
    """Largest deviation of convolution / sum_k exp(Theta_k) from its mean, relative to the mean."""
    exps = system.exponents(points, t)
    closed = np.sum(np.exp(exps), axis=-1)
    direct = np.array([convolve_direct(system, x, t, panels=panels) for x in points])
    ratio = direct / closed
    ratio = ratio / ratio[0]
    return float(np.max(np.abs(ratio - np.mean(ratio))) / abs(np.mean(ratio)))


# ---------------------------------------------------------------------------
# Split-operator grid evolution
# ---------------------------------------------------------------------------


class GridSpec(BaseModel):
    """Periodic cubic-lattice box for split-operator stepping."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    points: int = Field(default=128, ge=8)
    dt: float = Field(gt=0.0)

    @field_validator("points")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError(f"grid points must be a power of two, got {value}")
        return value

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / self.points

    def axis(self, i: int) -> np.ndarray:
        return self.lower[i] + self.spacing[i] * np.arange(self.points)

    def kinetic_phase(self, params: ModelParams) -> float:
        """Largest kinetic phase advanced in one step, at the grid edge."""
        k_max = math.pi / float(self.spacing.min())
        return params.hbar * k_max**2 * self.dt / (2.0 * params.m)

    def check(self, params: ModelParams) -> None:
        """Raise ConfigError unless the lattice resolves the packets and the step is stable."""
        dx = float(self.spacing.max())
        sigma = float(params.sigmas.min())
        if dx > 0.5 * sigma:
            raise ConfigError(
                f"grid spacing {dx:.4g} does not resolve sigma={sigma:g} (need <= sigma/2)"
            )
        phase = self.kinetic_phase(params)
        if phase >= MAX_PHASE_PER_STEP:
            raise ConfigError(f"kinetic phase per step {phase:.3g} exceeds pi/4; reduce dt")

    @classmethod
    def for_model(
        cls, params: ModelParams, t: float, points: int = 128, dt: float | None = None
    ) -> GridSpec:
        """Box holding every corner trajectory up to ``t`` plus eight spread widths."""
        basis = normal_basis(params)
        times = np.linspace(0.0, t, 65)
        centers = np.concatenate(
            [trajectory(basis, s0, times) for s0 in corner_states(params.cats).values()]
        )
        pad = SPREAD_WIDTHS * spread_estimate(params, t)
        lower = centers.min(axis=0) - pad
        upper = centers.max(axis=0) + pad
        if dt is None:
            dx = float(((upper - lower) / points).min())
            limit = MAX_PHASE_PER_STEP * 2.0 * params.m * dx**2 / (params.hbar * math.pi**2)
            dt = STEP_SAFETY * limit
        return cls(lower=tuple(lower), upper=tuple(upper), points=points, dt=dt)


@dataclass(eq=False)
class GridEvolution:
    grid: GridSpec
    t: float
    steps: int
    axes: list[np.ndarray]
    marginals: dict[int, np.ndarray]
    norm_drift: float
    energy_initial: float
    energy_final: float

    @property
    def energy_drift(self) -> float:
        return abs(self.energy_final - self.energy_initial) / abs(self.energy_initial)


def _grid_initial_state(params: ModelParams, axes: list[np.ndarray]) -> np.ndarray:
    factors = []
    for cat, x in zip(params.cats, axes):
        s2 = cat.sigma**2
        factors.append(np.exp(-(x**2) / (4 * s2)) + np.exp(-((x - cat.d) ** 2) / (4 * s2)))
    return factors[0][:, None, None] * factors[1][None, :, None] * factors[2][None, None, :]


def _grid_potential(params: ModelParams, axes: list[np.ndarray]) -> np.ndarray:
    x1 = axes[0][:, None, None]
    x2 = axes[1][None, :, None]
    x3 = axes[2][None, None, :]
    a, b, c = params.squared
    return 0.5 * params.m * (a * (x1 - x2) ** 2 + b * (x1 - x3) ** 2 + c * (x2 - x3) ** 2)


def _grid_kinetic(params: ModelParams, grid: GridSpec) -> np.ndarray:
    ks = [2.0 * math.pi * fft.fftfreq(grid.points, d=float(dx)) for dx in grid.spacing]
    k2 = ks[0][:, None, None] ** 2 + ks[1][None, :, None] ** 2 + ks[2][None, None, :] ** 2
    return params.hbar**2 * k2 / (2.0 * params.m)


def _energy(psi: np.ndarray, potential: np.ndarray, kinetic: np.ndarray, cell: float) -> float:
    density = np.abs(psi) ** 2
    spectrum = np.abs(fft.fftn(psi, workers=-1)) ** 2
    return float(np.sum(spectrum * kinetic) / np.sum(spectrum) + np.sum(density * potential) * cell)


def grid_evolve(params: ModelParams, grid: GridSpec, t: float) -> GridEvolution:
    """Strang-split evolution of the cat state on ``grid`` up to time ``t``."""
    grid.check(params)
    axes = [grid.axis(i) for i in range(3)]
    cell = float(np.prod(grid.spacing))

    psi = _grid_initial_state(params, axes).astype(complex)
    psi /= math.sqrt(float(np.sum(np.abs(psi) ** 2)) * cell)

    potential = _grid_potential(params, axes)
    kinetic = _grid_kinetic(params, grid)
    steps = max(1, math.ceil(t / grid.dt))
    dt = t / steps
    half_kick = np.exp(-0.5j * potential * dt / params.hbar)
    drift = np.exp(-1j * kinetic * dt / params.hbar)

    energy_initial = _energy(psi, potential, kinetic, cell)
    logger.info("grid evolution: %d^3 points, %d steps of %.4g", grid.points, steps, dt)
    for _ in range(steps):
        psi *= half_kick
        psi = fft.ifftn(drift * fft.fftn(psi, workers=-1), workers=-1)
        psi *= half_kick
    energy_final = _energy(psi, potential, kinetic, cell)

    density = np.abs(psi) ** 2
    norm = float(np.sum(density)) * cell
    dx = grid.spacing
    marginals = {
        1: density.sum(axis=(1, 2)) * dx[1] * dx[2],
        2: density.sum(axis=(0, 2)) * dx[0] * dx[2],
        3: density.sum(axis=(0, 1)) * dx[0] * dx[1],
    }
    return GridEvolution(
        grid=grid,
        t=float(t),
        steps=steps,
        axes=axes,
        marginals=marginals,
        norm_drift=abs(math.sqrt(norm) - 1.0),
        energy_initial=energy_initial,
        energy_final=energy_final,
    )


def free_gaussian_width(
    sigma: float,
    m: float,
    hbar: float,
    t: float,
    points: int = 2048,
    extent: float | None = None,
    steps: int = 16,
) -> tuple[float, float]:
    """Measured and closed-form width of a free 1-D Gaussian after time ``t``."""
    expected = sigma * math.sqrt(1.0 + (hbar * t / (2.0 * m * sigma**2)) ** 2)
    half = extent if extent is not None else 12.0 * expected
    x = np.linspace(-half, half, points, endpoint=False)
    dx = x[1] - x[0]
    k = 2.0 * math.pi * fft.fftfreq(points, d=dx)
    psi = np.exp(-(x**2) / (4 * sigma**2)).astype(complex)
    drift = np.exp(-1j * hbar * k**2 * (t / steps) / (2.0 * m))
    for _ in range(steps):
        psi = fft.ifft(drift * fft.fft(psi))
    density = np.abs(psi) ** 2
    density /= density.sum()
    mean = float(np.sum(x * density))
    measured = math.sqrt(float(np.sum((x - mean) ** 2 * density)))
    return measured, expected


# ---------------------------------------------------------------------------
# Classical RK4
# ---------------------------------------------------------------------------


def _rk4_map(W: np.ndarray, h: float) -> np.ndarray:
    """One RK4 step of the linear system (x, v)' = (v, W x) as a 6x6 matrix."""
    J = np.zeros((6, 6))
    J[:3, 3:] = np.eye(3)
    J[3:, :3] = W
    hJ = h * J
    hJ2 = hJ @ hJ
    hJ3 = hJ2 @ hJ
    return np.eye(6) + hJ + hJ2 / 2.0 + hJ3 / 6.0 + hJ3 @ hJ / 24.0


def rk4_classical(
    params: ModelParams, s0: ClassicalState, t: float, h: float = DEFAULT_RK4_STEP
) -> np.ndarray:
    """Positions at ``t`` from fixed-step RK4; the last step is shortened to land on ``t``."""
    if h <= 0:
        raise ValueError("step must be positive")
    W = coupling_matrix(params)
    direction = 1.0 if t >= 0 else -1.0
    full, rest = divmod(abs(t), h)
    state = np.concatenate([s0.x, s0.v])
    state = np.linalg.matrix_power(_rk4_map(W, direction * h), int(full)) @ state
    if rest > 0:
        state = _rk4_map(W, direction * rest) @ state
    return state[:3]


# ---------------------------------------------------------------------------
# Extended-precision coefficient re-evaluation
# ---------------------------------------------------------------------------


def _rows_extended(params: ModelParams):
    ld = np.longdouble
    a, b, c = (ld(w) ** 2 for w in (params.omega12, params.omega13, params.omega23))
    dw = np.sqrt(((a - b) ** 2 + (b - c) ** 2 + (c - a) ** 2) / 2)
    s = a + b + c
    xi1, xi2 = a * c - b * (b - dw), a * c - b * (b + dw)
    eta1, eta2 = a * b - c * (c - dw), a * b - c * (c + dw)
    det = eta2 * xi1 - eta1 * xi2
    rows = np.array(
        [
            [2 * eta2 + xi2, -eta2 - 2 * xi2, -eta2 + xi2],
            [-2 * eta1 - xi1, eta1 + 2 * xi1, eta1 - xi1],
            [ld(0), ld(0), ld(0)],
        ],
        dtype=ld,
    ) / (3 * det)
    rows[2] = ld(1) / 3
    m = ld(params.m)
    masses = np.array(
        [
            2 * m * (xi1 * xi1 + xi1 * eta1 + eta1 * eta1),
            2 * m * (xi2 * xi2 + xi2 * eta2 + eta2 * eta2),
            3 * m,
        ],
        dtype=ld,
    )
    omegas = np.array([np.sqrt(s - dw), np.sqrt(s + dw)], dtype=ld)
    return rows, masses, omegas


def real_coeffs_extended(
    params: ModelParams, t: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A, B, alpha) in extended precision from the a/b/c rows."""
    ld = np.longdouble
    rows, masses, omegas = _rows_extended(params)
    tt = ld(t)
    g = np.empty(3, dtype=ld)
    h = np.empty(3, dtype=ld)
    for idx in range(2):
        phase = omegas[idx] * tt
        g[idx] = masses[idx] * omegas[idx] * np.cos(phase) / np.sin(phase)
        h[idx] = masses[idx] * omegas[idx] / np.sin(phase)
    g[2] = h[2] = masses[2] / tt

    A = np.array([sum(g[k] * rows[k, i] ** 2 for k in range(3)) / 2 for i in range(3)], dtype=ld)
    B = np.zeros((3, 3), dtype=ld)
    alpha = np.empty((3, 3), dtype=ld)
    for i in range(3):
        for j in range(3):
            alpha[i, j] = sum(h[k] * rows[k, i] * rows[k, j] for k in range(3))
            if i != j:
                B[i, j] = sum(g[k] * rows[k, i] * rows[k, j] for k in range(3))
    return A, B, alpha


def delta_expanded_extended(params: ModelParams, t: float) -> tuple[np.longdouble, np.longdouble]:
    """Real and imaginary parts of Delta(t) from the printed expansions, in extended precision."""
    A, B, _ = real_coeffs_extended(params, t)
    hbar = np.longdouble(params.hbar)
    s1, s2, s3 = (np.longdouble(cat.sigma) ** 2 for cat in params.cats)
    A1, A2, A3 = A
    B12, B13, B23 = B[0, 1], B[0, 2], B[1, 2]
    re = (
        1 / (64 * s1 * s2 * s3)
        - (A2 * A3 / s1 + A3 * A1 / s2 + A1 * A2 / s3) / (4 * hbar**2)
        + (B23**2 / s1 + B13**2 / s2 + B12**2 / s3) / (16 * hbar**2)
    )
    im = (
        A1 * A2 * A3 / hbar**3
        - (A3 / (s1 * s2) + A1 / (s2 * s3) + A2 / (s3 * s1)) / (16 * hbar)
        - (A1 * B23**2 + A2 * B13**2 + A3 * B12**2) / (4 * hbar**3)
        + B12 * B13 * B23 / (4 * hbar**3)
    )
    return re, im
