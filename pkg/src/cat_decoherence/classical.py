"""Closed-form classical trajectories, the eight-corner ensemble and crossing detection."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from cat_decoherence.model import PACKET_PATTERNS, CatSpec, NormalModeBasis

logger = logging.getLogger(__name__)

CROSSING_XTOL = 1e-6
CONTACT_TOL = 1e-9
DEFAULT_DT = 0.005


@dataclass(frozen=True, eq=False)
class ClassicalState:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(3)
        v = np.asarray(self.v, dtype=float).reshape(3)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and np.isfinite(self.t)):
            raise ValueError("classical state entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)


def integration_constants(basis: NormalModeBasis, s0: ClassicalState) -> tuple[float, ...]:
    """Return (A1, A2, B1, B2, C1, C2) for the normal-mode solution started at t=0."""
    z0 = basis.P @ s0.x
    zdot0 = basis.P @ s0.v
    return (
        zdot0[0] / basis.Omega1,
        zdot0[1] / basis.Omega2,
        z0[0],
        z0[1],
        zdot0[2],
        z0[2],
    )


def _normal_coordinates(basis: NormalModeBasis, s0: ClassicalState, t) -> tuple:
    a1, a2, b1, b2, c1, c2 = integration_constants(basis, s0)
    t = np.asarray(t, dtype=float)
    w1t = basis.Omega1 * t
    w2t = basis.Omega2 * t
    z = np.stack(
        [
            a1 * np.sin(w1t) + b1 * np.cos(w1t),
            a2 * np.sin(w2t) + b2 * np.cos(w2t),
            c1 * t + c2,
        ],
        axis=-1,
    )
    zdot = np.stack(
        [
            basis.Omega1 * (a1 * np.cos(w1t) - b1 * np.sin(w1t)),
            basis.Omega2 * (a2 * np.cos(w2t) - b2 * np.sin(w2t)),
            np.full_like(t, c1),
        ],
        axis=-1,
    )
    return z, zdot


def trajectory(basis: NormalModeBasis, s0: ClassicalState, t) -> np.ndarray:
    """Positions at time(s) ``t``; scalar t gives shape (3,), an array gives (n, 3).

    Negative times are accepted and run the solution backwards.
    """
    z, _ = _normal_coordinates(basis, s0, t)
    return z @ basis.Pinv.T


def velocity(basis: NormalModeBasis, s0: ClassicalState, t) -> np.ndarray:
    _, zdot = _normal_coordinates(basis, s0, t)
    return zdot @ basis.Pinv.T


def total_energy(basis: NormalModeBasis, s: ClassicalState) -> float:
    """Kinetic plus spring energy of the three particles."""
    p = basis.params
    a, b, c = p.squared
    x1, x2, x3 = s.x
    kinetic = 0.5 * p.m * float(np.dot(s.v, s.v))
    potential = 0.5 * p.m * (a * (x1 - x2) ** 2 + b * (x1 - x3) ** 2 + c * (x2 - x3) ** 2)
    return kinetic + potential


def corner_label(k: int) -> str:
    return "".join(str(bit) for bit in PACKET_PATTERNS[k])


CORNER_LABELS: tuple[str, ...] = tuple(corner_label(k) for k in range(8))


def corner_states(cats: tuple[CatSpec, ...]) -> dict[str, ClassicalState]:
    """Eight resting initial states, one per packet combination, keyed by label."""
    d = np.array([cat.d for cat in cats], dtype=float)
    return {
        CORNER_LABELS[k]: ClassicalState(x=np.array(bits, dtype=float) * d, v=np.zeros(3))
        for k, bits in enumerate(PACKET_PATTERNS)
    }


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    basis: NormalModeBasis
    corners: dict[str, ClassicalState]
    times: np.ndarray
    positions: dict[str, np.ndarray] = field(default_factory=dict)
    velocities: dict[str, np.ndarray] = field(default_factory=dict)

    def samples(self, label: str) -> list[ClassicalState]:
        """Sampled states of one corner as ClassicalState objects."""
        return [
            ClassicalState(x=x, v=v, t=float(t))
            for t, x, v in zip(self.times, self.positions[label], self.velocities[label])
        ]

    def centers(self, t: float) -> np.ndarray:
        """(8, 3) corner positions at an arbitrary time, ordered by packet index."""
        return np.array([trajectory(self.basis, self.corners[lbl], t) for lbl in CORNER_LABELS])


def ensemble(
    basis: NormalModeBasis,
    cats: tuple[CatSpec, ...],
    tmax: float,
    dt: float = DEFAULT_DT,
) -> TrajectoryEnsemble:
    """Sample all eight corner trajectories on a uniform grid over [0, tmax]."""
    if dt <= 0 or tmax <= 0:
        raise ValueError("tmax and dt must be positive")
    steps = int(round(tmax / dt))
    times = np.arange(steps + 1) * dt
    corners = corner_states(cats)
    positions = {lbl: trajectory(basis, s0, times) for lbl, s0 in corners.items()}
    velocities = {lbl: velocity(basis, s0, times) for lbl, s0 in corners.items()}
    return TrajectoryEnsemble(basis, corners, times, positions, velocities)


def _pair_crossings(e: TrajectoryEnsemble, first: str, second: str, axis: int) -> list[float]:
    diff = e.positions[first][:, axis] - e.positions[second][:, axis]
    if np.all(np.abs(diff) <= CONTACT_TOL):
        return []

    start = 0
    if abs(diff[0]) <= CONTACT_TOL:
        start = int(np.argmax(np.abs(diff) > CONTACT_TOL))

    s_a, s_b = e.corners[first], e.corners[second]

    def gap(t: float) -> float:
        return float(trajectory(e.basis, s_a, t)[axis] - trajectory(e.basis, s_b, t)[axis])

    found: list[float] = []
    d = diff[start:]
    t = e.times[start:]
    for i in np.nonzero(d[:-1] * d[1:] < 0)[0]:
        found.append(bisect(gap, t[i], t[i + 1], xtol=CROSSING_XTOL))

    # tangential contacts: |diff| dips below tolerance without a sign change
    for i in np.nonzero(np.abs(d) <= CONTACT_TOL)[0]:
        found.append(float(t[i]))
    return found


def crossings(e: TrajectoryEnsemble, particle: int) -> list[float]:
    """Sorted times at which any two corner trajectories of ``particle`` meet."""
    axis = particle - 1
    times: list[float] = []
    for first, second in itertools.combinations(CORNER_LABELS, 2):
        times.extend(_pair_crossings(e, first, second, axis))
    times.sort()

    merged: list[float] = []
    for value in times:
        if not merged or value - merged[-1] > CROSSING_XTOL:
            merged.append(value)
    logger.debug("particle %d: %d crossings", particle, len(merged))
    return merged


def first_crossing(e: TrajectoryEnsemble, particle: int) -> float | None:
    found = crossings(e, particle)
    return found[0] if found else None
