"""Model parameters and the normal-mode decomposition of the three coupled oscillators."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from cat_decoherence.errors import DegenerateSpectrum, SingularTransform

logger = logging.getLogger(__name__)

EPS_DEG = 1e-9

# Bit i of pattern k is 1 when particle i+1 starts in its displaced packet.
PACKET_PATTERNS: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, 0, 1),
    (0, 1, 1),
    (1, 1, 1),
)


class CatSpec(BaseModel):
    """Two-packet cat state of one particle: packets at 0 and at ``d``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    d: float = Field(allow_inf_nan=False)
    sigma: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)


REFERENCE_CATS = (
    CatSpec(d=-5.0, sigma=1.0),
    CatSpec(d=6.0, sigma=1.0),
    CatSpec(d=7.5, sigma=1.0),
)


class ModelParams(BaseModel):
    """Common mass, pair coupling frequencies, Planck constant and the three cat states."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    m: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    hbar: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    omega12: float = Field(default=0.305, ge=0.0, allow_inf_nan=False)
    omega13: float = Field(default=0.1, ge=0.0, allow_inf_nan=False)
    omega23: float = Field(default=0.202, ge=0.0, allow_inf_nan=False)
    cats: tuple[CatSpec, CatSpec, CatSpec] = REFERENCE_CATS

    @model_validator(mode="after")
    def _at_least_two_springs(self) -> ModelParams:
        active = sum(1 for w in (self.omega12, self.omega13, self.omega23) if w > 0.0)
        if active < 2:
            raise ValueError("at least two coupling frequencies must be positive")
        return self

    @property
    def squared(self) -> tuple[float, float, float]:
        """(omega12^2, omega13^2, omega23^2)."""
        return self.omega12**2, self.omega13**2, self.omega23**2

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([cat.sigma for cat in self.cats], dtype=float)

    @property
    def displacements(self) -> np.ndarray:
        return np.array([cat.d for cat in self.cats], dtype=float)

    def swap_partners(self) -> ModelParams:
        """Exchange the roles of particles 2 and 3."""
        c1, c2, c3 = self.cats
        return self.model_copy(
            update={
                "omega12": self.omega13,
                "omega13": self.omega12,
                "cats": (c1, c3, c2),
            }
        )


def coupling_matrix(p: ModelParams) -> np.ndarray:
    """Matrix W of the equations of motion x'' = W x."""
    a, b, c = p.squared
    return np.array(
        [
            [-(a + b), a, b],
            [a, -(a + c), c],
            [b, c, -(b + c)],
        ]
    )


def cubic_coefficients(p: ModelParams) -> tuple[float, float, float, float]:
    """Coefficients of lambda^3 + 2S lambda^2 + 3Q lambda, highest power first."""
    a, b, c = p.squared
    return 1.0, 2.0 * (a + b + c), 3.0 * (a * b + b * c + a * c), 0.0


def cubic_residual(p: ModelParams, lam: float) -> float:
    """Residual of the characteristic cubic at ``lam``, relative to its largest term."""
    c3, c2, c1, _ = cubic_coefficients(p)
    terms = (c3 * lam**3, c2 * lam**2, c1 * lam)
    scale = max(abs(term) for term in terms) or 1.0
    return abs(sum(terms)) / scale


def delta_omega_sq(p: ModelParams) -> float:
    """Spectral gap Delta omega^2.

    Evaluates the three algebraically equivalent closed forms and returns the
    sum-of-squares one, which is non-negative by construction. A disagreement
    between the forms is logged.
    """
    a, b, c = p.squared
    s = a + b + c
    expanded = a * a - a * b + b * b - b * c + c * c - c * a
    squares = 0.5 * ((a - b) ** 2 + (b - c) ** 2 + (c - a) ** 2)
    completed = s * s - 3.0 * (a * b + b * c + c * a)

    scale = s * s if s > 0 else 1.0
    spread = max(abs(expanded - squares), abs(completed - squares)) / scale
    if spread > 1e-12:
        logger.warning("Delta omega^2 closed forms disagree by %.3e (relative)", spread)
    return math.sqrt(squares)


def eigenvalues(p: ModelParams) -> tuple[float, float, float]:
    """Eigenvalues (lambda1, lambda2, 0) of the coupling matrix."""
    dw = delta_omega_sq(p)
    if dw <= EPS_DEG:
        raise DegenerateSpectrum(
            f"Delta omega^2 = {dw:.3e} <= {EPS_DEG:g}; the two oscillating modes coincide"
        )
    s = sum(p.squared)
    return -s + dw, -s - dw, 0.0


@dataclass(frozen=True, eq=False)
class NormalModeBasis:
    """Everything derived once from ModelParams: spectrum, transforms, mode masses."""

    params: ModelParams
    lambda1: float
    lambda2: float
    Omega1: float
    Omega2: float
    delta_omega_sq: float
    xi1: float
    xi2: float
    eta1: float
    eta2: float
    zeta1: float
    zeta2: float
    DeltaConst: float
    P: np.ndarray
    Pinv: np.ndarray
    m1: float
    m2: float
    m3: float
    w1sq: float
    w2sq: float
    w3sq: float
    omega1sq: float
    omega2sq: float

    @property
    def a(self) -> np.ndarray:
        return self.P[0]

    @property
    def b(self) -> np.ndarray:
        return self.P[1]

    @property
    def c(self) -> np.ndarray:
        return self.P[2]

    @property
    def mode_masses(self) -> np.ndarray:
        return np.array([self.m1, self.m2, self.m3])

    @property
    def mode_frequencies(self) -> np.ndarray:
        """Angular frequencies of the two oscillating modes."""
        return np.array([self.Omega1, self.Omega2])


def _mode_frequency_sq(m: float, mk: float, xi: float, eta: float, w: tuple) -> float:
    w1sq, w2sq, w3sq = w
    return (m / mk) * (
        w1sq * (2 * xi * xi - xi * eta - eta * eta)
        + w2sq * (-xi * xi - xi * eta + 2 * eta * eta)
        + w3sq * (2 * xi * xi + 5 * xi * eta + 2 * eta * eta)
    )


def normal_basis(p: ModelParams) -> NormalModeBasis:
    """Build the normal-mode decomposition for ``p``.

    Raises:
        DegenerateSpectrum: when the oscillating modes coincide.
        SingularTransform: when the eigenvector determinant vanishes.
    """
    lam1, lam2, _ = eigenvalues(p)
    a, b, c = p.squared
    dw = delta_omega_sq(p)

    xi1 = a * c - b * (b - dw)
    xi2 = a * c - b * (b + dw)
    eta1 = a * b - c * (c - dw)
    eta2 = a * b - c * (c + dw)
    zeta1 = -xi1 - eta1
    zeta2 = -xi2 - eta2

    det = eta2 * xi1 - eta1 * xi2
    s = a + b + c
    # det scales as frequency^8
    if abs(det) <= EPS_DEG * s**4:
        raise SingularTransform(
            f"eigenvector determinant {det:.3e} is below {EPS_DEG:g} * S^4 = {EPS_DEG * s**4:.3e}"
        )

    pinv = np.array(
        [
            [xi1, xi2, 1.0],
            [eta1, eta2, 1.0],
            [zeta1, zeta2, 1.0],
        ]
    )
    p_mat = np.array(
        [
            [2 * eta2 + xi2, -eta2 - 2 * xi2, -eta2 + xi2],
            [-2 * eta1 - xi1, eta1 + 2 * xi1, eta1 - xi1],
            [0.0, 0.0, 0.0],
        ]
    ) / (3.0 * det)
    p_mat[2] = 1.0 / 3.0

    m1 = 2 * p.m * (xi1 * xi1 + xi1 * eta1 + eta1 * eta1)
    m2 = 2 * p.m * (xi2 * xi2 + xi2 * eta2 + eta2 * eta2)
    m3 = 3 * p.m
    w = (a + b, a + c, b + c)
    omega1sq = _mode_frequency_sq(p.m, m1, xi1, eta1, w)
    omega2sq = _mode_frequency_sq(p.m, m2, xi2, eta2, w)

    for label, lhs, rhs in (("omega1^2", omega1sq, -lam1), ("omega2^2", omega2sq, -lam2)):
        gap = abs(lhs - rhs) / abs(rhs)
        if gap > 1e-10:
            logger.warning("%s from the mode Lagrangian differs from -lambda by %.3e", label, gap)

    logger.debug("normal basis: lambda=(%.6g, %.6g) Delta=%.6g", lam1, lam2, det)
    return NormalModeBasis(
        params=p,
        lambda1=lam1,
        lambda2=lam2,
        Omega1=math.sqrt(-lam1),
        Omega2=math.sqrt(-lam2),
        delta_omega_sq=dw,
        xi1=xi1,
        xi2=xi2,
        eta1=eta1,
        eta2=eta2,
        zeta1=zeta1,
        zeta2=zeta2,
        DeltaConst=det,
        P=p_mat,
        Pinv=pinv,
        m1=m1,
        m2=m2,
        m3=m3,
        w1sq=w[0],
        w2sq=w[1],
        w3sq=w[2],
        omega1sq=omega1sq,
        omega2sq=omega2sq,
    )


def offset_table(cats) -> np.ndarray:
    """(8, 3) array of packet offsets d_i^(k)."""
    d = np.array([cat.d for cat in cats], dtype=float)
    return np.array(PACKET_PATTERNS, dtype=float) * d
