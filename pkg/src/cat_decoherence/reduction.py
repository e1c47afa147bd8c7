"""Reduced one-particle densities, visibility and decoherence onset.

The watched particle's eight packets split into the group that started at
x_j = 0 and the group that started at x_j = d_j. Same-group interference is
folded into the two effective packets; only cross-group interference counts
as interference between macroscopic states of the watched particle.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import trapezoid
from scipy.special import roots_legendre

from cat_decoherence.classical import corner_states, ensemble, first_crossing, trajectory
from cat_decoherence.errors import SaturationError, TailLeak
from cat_decoherence.evolution import EXP_CLIP, ThreeCatSystem
from cat_decoherence.model import PACKET_PATTERNS, ModelParams

logger = logging.getLogger(__name__)

THETA_DEC = 0.1
HOLD = 0.5
TAIL_RATIO = 1e-8
SPREAD_WIDTHS = 8.0
GL_PANEL_NODES = 8
CHUNK_POINTS = 1 << 20

REFERENCE_GROUPS: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = {
    1: ((0, 2, 3, 6), (1, 4, 5, 7)),
}
PANEL_TIMES: dict[int, tuple[float, float, float]] = {
    1: (3.005, 3.505, 6.005),
    2: (2.005, 3.505, 5.005),
    3: (4.005, 5.505, 10.005),
}
DEFAULT_REPORT_TIMES: tuple[float, ...] = tuple(round(0.005 + 0.1 * i, 10) for i in range(121))


class QuadratureSpec(BaseModel):
    """Tensor quadrature over the two integrated axes plus the output grid size."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    points: int = Field(default=512, ge=64)
    output_points: int = Field(default=401, ge=3)
    rule: Literal["trapezoid", "gauss-legendre"] = "trapezoid"
    extent: float | None = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _panels_fit(self) -> QuadratureSpec:
        if self.rule == "gauss-legendre" and self.points % GL_PANEL_NODES:
            raise ValueError(f"gauss-legendre needs points divisible by {GL_PANEL_NODES}")
        return self

    def nodes(self, lower: float, upper: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights on [lower, upper]."""
        if self.rule == "trapezoid":
            x = np.linspace(lower, upper, self.points)
            w = np.full(self.points, x[1] - x[0])
            w[0] *= 0.5
            w[-1] *= 0.5
            return x, w
        base, base_w = roots_legendre(GL_PANEL_NODES)
        edges = np.linspace(lower, upper, self.points // GL_PANEL_NODES + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * base[None, :]).ravel()
        w = (half[:, None] * base_w[None, :]).ravel()
        return x, w

    def doubled(self) -> QuadratureSpec:
        return self.model_copy(update={"points": 2 * self.points})


def packet_groups(particle: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Packets that started at x_j = 0 and at x_j = d_j, read off the offset patterns."""
    if particle not in (1, 2, 3):
        raise ValueError(f"particle must be 1, 2 or 3, got {particle}")
    axis = particle - 1
    group0 = tuple(k for k, bits in enumerate(PACKET_PATTERNS) if bits[axis] == 0)
    groupd = tuple(k for k, bits in enumerate(PACKET_PATTERNS) if bits[axis] == 1)
    return group0, groupd


def spread_estimate(params: ModelParams, t: float) -> float:
    """Free-particle width bound max_i sigma_i sqrt(1 + (hbar t / 2 m sigma_i^2)^2)."""
    return max(
        cat.sigma * math.sqrt(1.0 + (params.hbar * t / (2.0 * params.m * cat.sigma**2)) ** 2)
        for cat in params.cats
    )


def adaptive_extent(system: ThreeCatSystem, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Box around the classical corner centers at ``t`` padded by eight spread widths."""
    centers = np.array(
        [trajectory(system.basis, s0, t) for s0 in corner_states(system.params.cats).values()]
    )
    pad = SPREAD_WIDTHS * spread_estimate(system.params, t)
    return centers.min(axis=0) - pad, centers.max(axis=0) + pad


def integration_box(
    system: ThreeCatSystem, t: float, quad: QuadratureSpec
) -> tuple[np.ndarray, np.ndarray]:
    if quad.extent is not None:
        return np.full(3, -quad.extent), np.full(3, quad.extent)
    return adaptive_extent(system, t)


@dataclass(frozen=True, eq=False)
class ReducedDensityProfile:
    particle: int
    t: float
    grid: np.ndarray
    packet0_eff: np.ndarray
    packetd_eff: np.ndarray
    interference_eff: np.ndarray
    norm_constant: float
    shift: float = 0.0
    saturated_count: int = 0
    tail_ratio: float = 0.0
    points: int = 0
    rule: str = "trapezoid"

    @property
    def total(self) -> np.ndarray:
        return self.packet0_eff + self.packetd_eff + self.interference_eff

    @property
    def packets(self) -> np.ndarray:
        return self.packet0_eff + self.packetd_eff


def _other_axes(particle: int) -> tuple[int, int, int]:
    j = particle - 1
    p, q = (axis for axis in range(3) if axis != j)
    return j, p, q


def reduce(
    system: ThreeCatSystem,
    particle: int,
    t: float,
    quad: QuadratureSpec | None = None,
    grid: np.ndarray | None = None,
) -> ReducedDensityProfile:
    """Integrate out the two partner particles and split the result into effective parts.

    Raises:
        CausticError: when ``t`` is a caustic time.
        TailLeak: when the box or output grid cuts off more than 1e-8 of the peak.
        SaturationError: when clipping leaves nothing to normalize.
    """
    quad = quad or QuadratureSpec()
    form = system.coeffs(t).exponent_form
    if np.max(np.linalg.eigvalsh(form.Q.real)) >= 0.0:
        raise SaturationError(f"density does not decay at t={t:g}")
    shift = system.density_shift(t)

    lower, upper = integration_box(system, t, quad)
    j, p, q = _other_axes(particle)
    check_output_ends = grid is None
    if grid is None:
        grid = np.linspace(lower[j], upper[j], quad.output_points)
    grid = np.asarray(grid, dtype=float)

    yp, wp = quad.nodes(lower[p], upper[p])
    yq, wq = quad.nodes(lower[q], upper[q])
    weights = wp[:, None] * wq[None, :]
    Yp = yp[:, None]
    Yq = yq[None, :]

    Q, L = form.Q, form.L
    c = form.c - shift
    partner_quad = Q[p, p] * Yp**2 + Q[q, q] * Yq**2 + 2.0 * Q[p, q] * Yp * Yq
    partner_lin = L[:, p, None, None] * Yp + L[:, q, None, None] * Yq
    mixed = 2.0 * (Q[j, p] * Yp + Q[j, q] * Yq)
    group0, _ = packet_groups(particle)

    n = grid.size
    packet0 = np.empty(n)
    packetd = np.empty(n)
    interference = np.empty(n)
    saturated = 0
    peak = 0.0
    edge = 0.0
    rows = max(1, CHUNK_POINTS // weights.size)

    for start in range(0, n, rows):
        xs = grid[start : start + rows, None, None]
        base = partner_quad + Q[j, j] * xs**2 + xs * mixed
        s0 = np.zeros(base.shape, dtype=complex)
        sd = np.zeros(base.shape, dtype=complex)
        for k in range(8):
            exponent = base + partner_lin[k] + (L[k, j] * xs + c[k])
            re = exponent.real
            if np.any(re > EXP_CLIP):
                raise SaturationError(
                    f"exponent above {EXP_CLIP:g} at t={t:g}", count=int(np.sum(re > EXP_CLIP))
                )
            low = re < -EXP_CLIP
            saturated += int(np.count_nonzero(low))
            amp = np.exp(exponent)
            amp[low] = 0.0
            if k in group0:
                s0 += amp
            else:
                sd += amp

        p0 = s0.real**2 + s0.imag**2
        pd = sd.real**2 + sd.imag**2
        cross = 2.0 * (s0.real * sd.real + s0.imag * sd.imag)
        packet0[start : start + rows] = np.sum(p0 * weights, axis=(1, 2))
        packetd[start : start + rows] = np.sum(pd * weights, axis=(1, 2))
        interference[start : start + rows] = np.sum(cross * weights, axis=(1, 2))

        integrand = p0 + pd + cross
        peak = max(peak, float(integrand.max()))
        edge = max(
            edge,
            float(integrand[:, 0, :].max()),
            float(integrand[:, -1, :].max()),
            float(integrand[:, :, 0].max()),
            float(integrand[:, :, -1].max()),
        )

    total = packet0 + packetd + interference
    integral = float(trapezoid(total, grid))
    if not np.isfinite(integral) or integral <= 0.0:
        raise SaturationError(
            f"reduced density of particle {particle} at t={t:g} has no finite mass",
            count=saturated,
        )

    ratio = edge / peak if peak > 0 else 0.0
    if check_output_ends:
        top = float(total.max())
        ratio = max(ratio, float(max(abs(total[0]), abs(total[-1]))) / top)
    if ratio > TAIL_RATIO:
        raise TailLeak(
            f"boundary density reaches {ratio:.2e} of the peak for particle {particle} "
            f"at t={t:g}; widen the extent",
            ratio=ratio,
        )

    norm = 1.0 / integral
    if saturated:
        logger.info("particle %d t=%g: %d clipped evaluations excluded", particle, t, saturated)
    return ReducedDensityProfile(
        particle=particle,
        t=float(t),
        grid=grid,
        packet0_eff=packet0 * norm,
        packetd_eff=packetd * norm,
        interference_eff=interference * norm,
        norm_constant=norm,
        shift=shift,
        saturated_count=saturated,
        tail_ratio=ratio,
        points=quad.points,
        rule=quad.rule,
    )


def marginal_direct(
    system: ThreeCatSystem,
    particle: int,
    t: float,
    grid: np.ndarray,
    quad: QuadratureSpec,
    shift: float = 0.0,
) -> np.ndarray:
    """Unnormalized marginal of the total density by plain tensor quadrature."""
    lower, upper = integration_box(system, t, quad)
    j, p, q = _other_axes(particle)
    yp, wp = quad.nodes(lower[p], upper[p])
    yq, wq = quad.nodes(lower[q], upper[q])
    weights = wp[:, None] * wq[None, :]
    out = np.empty(len(grid))
    for idx, x in enumerate(grid):
        X = np.empty((yp.size, yq.size, 3))
        X[..., j] = x
        X[..., p] = yp[:, None]
        X[..., q] = yq[None, :]
        density, _ = system.rho_shape(X, t, shift)
        out[idx] = np.sum(density * weights)
    return out


def visibility(profile: ReducedDensityProfile) -> float:
    """max |interference_eff| / max(packet0_eff + packetd_eff)."""
    denominator = float(np.max(profile.packets))
    if denominator <= 0.0:
        return 0.0
    return float(np.max(np.abs(profile.interference_eff))) / denominator


def visibility_l1(profile: ReducedDensityProfile) -> float:
    """Integrated |interference_eff| over integrated effective packets."""
    denominator = float(trapezoid(profile.packets, profile.grid))
    if denominator <= 0.0:
        return 0.0
    return float(trapezoid(np.abs(profile.interference_eff), profile.grid)) / denominator


def decoherence_onset(
    series: Iterable[tuple[float, float]],
    threshold: float = THETA_DEC,
    hold: float = HOLD,
    *,
    require_arming: bool = True,
) -> float | None:
    """First time V drops below ``threshold`` and stays below for ``hold``.

    With ``require_arming`` a drop only counts after V has reached the
    threshold at least once.
    """
    pairs = sorted(series)
    if not pairs:
        return None
    ts = np.array([t for t, _ in pairs])
    vs = np.array([v for _, v in pairs])
    armed = not require_arming
    for i, (t, v) in enumerate(zip(ts, vs)):
        if v >= threshold:
            armed = True
            continue
        if not armed:
            continue
        end = t + hold
        if ts[-1] < end - 1e-12:
            return None
        window = (ts >= t) & (ts <= end + 1e-12)
        if np.all(vs[window] < threshold):
            return float(t)
    return None


@dataclass(frozen=True)
class ConvergenceDelta:
    particle: int
    t: float
    coarse: float
    fine: float

    @property
    def delta(self) -> float:
        return abs(self.fine - self.coarse)


@dataclass(eq=False)
class DecoherenceReport:
    times: np.ndarray
    visibility: dict[int, np.ndarray]
    visibility_l1: dict[int, np.ndarray]
    onsets: dict[int, float | None]
    first_crossings: dict[int, float | None]
    threshold: float = THETA_DEC
    hold: float = HOLD
    convergence: list[ConvergenceDelta] = field(default_factory=list)

    @property
    def ordering(self) -> list[int]:
        """Particles sorted by onset time; particles without an onset are left out."""
        timed = [(t, p) for p, t in self.onsets.items() if t is not None]
        return [p for _, p in sorted(timed)]

    @property
    def classical_time(self) -> float | None:
        """Latest onset, once every particle has one."""
        if not self.onsets or any(t is None for t in self.onsets.values()):
            return None
        return max(self.onsets.values())

    def crossing_precedes_onset(self, particle: int) -> bool | None:
        crossing = self.first_crossings.get(particle)
        onset = self.onsets.get(particle)
        if crossing is None or onset is None:
            return None
        return crossing <= onset

    @property
    def max_convergence_delta(self) -> float:
        return max((c.delta for c in self.convergence), default=0.0)


def report(
    system: ThreeCatSystem,
    times: Sequence[float],
    quad: QuadratureSpec,
    *,
    threshold: float = THETA_DEC,
    hold: float = HOLD,
    particles: Sequence[int] = (1, 2, 3),
    classical_dt: float = 0.005,
    check_convergence: bool = True,
    mapper: Callable = map,
) -> DecoherenceReport:
    """Visibility series, onset and first crossing for each particle.

    ``mapper`` runs the independent (particle, t) reductions; pass an
    executor's ``map`` to spread them over workers. Results keep input order.
    """
    times = np.asarray(sorted(times), dtype=float)
    tasks = [(particle, float(t)) for particle in particles for t in times]
    profiles = list(mapper(lambda task: reduce(system, task[0], task[1], quad), tasks))

    vis: dict[int, np.ndarray] = {}
    vis_l1: dict[int, np.ndarray] = {}
    for idx, particle in enumerate(particles):
        chunk = profiles[idx * len(times) : (idx + 1) * len(times)]
        vis[particle] = np.array([visibility(prof) for prof in chunk])
        vis_l1[particle] = np.array([visibility_l1(prof) for prof in chunk])

    onsets = {
        particle: decoherence_onset(zip(times, vis[particle]), threshold, hold)
        for particle in particles
    }

    ens = ensemble(system.basis, system.params.cats, float(times[-1]), classical_dt)
    crossings = {particle: first_crossing(ens, particle) for particle in particles}

    convergence: list[ConvergenceDelta] = []
    if check_convergence:
        fine_quad = quad.doubled()
        fine = list(mapper(lambda task: reduce(system, task[0], task[1], fine_quad), tasks))
        for idx, ((particle, t), prof) in enumerate(zip(tasks, fine)):
            convergence.append(
                ConvergenceDelta(
                    particle=particle,
                    t=t,
                    coarse=float(vis[particle][idx % len(times)]),
                    fine=visibility(prof),
                )
            )

    return DecoherenceReport(
        times=times,
        visibility=vis,
        visibility_l1=vis_l1,
        onsets=onsets,
        first_crossings=crossings,
        threshold=threshold,
        hold=hold,
        convergence=convergence,
    )
