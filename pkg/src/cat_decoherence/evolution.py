"""Eight-packet wavefunction and total density with its definitive/interference split."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from cat_decoherence.model import (
    PACKET_PATTERNS,
    CatSpec,
    ModelParams,
    normal_basis,
    offset_table,
)
from cat_decoherence.propagator import ComplexCoeffs, PropagatorCascade, theta

logger = logging.getLogger(__name__)

EXP_CLIP = 700.0
PACKET_PAIRS: tuple[tuple[int, int], ...] = tuple(itertools.combinations(range(8), 2))


def packet_offsets(k: int, cats: tuple[CatSpec, ...]) -> tuple[float, float, float]:
    """Offsets (d1^(k), d2^(k), d3^(k)) of packet ``k``."""
    if not 0 <= k < len(PACKET_PATTERNS):
        raise ValueError(f"packet index must be in 0..7, got {k}")
    row = offset_table(cats)[k]
    return float(row[0]), float(row[1]), float(row[2])


@dataclass(frozen=True, eq=False)
class DensityEval:
    """Total density at one point in shape form (the pi^3/|Delta| factor deferred)."""

    X: np.ndarray
    t: float
    definitive: np.ndarray
    interference: np.ndarray
    total: float
    saturated: bool

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return PACKET_PAIRS


class ThreeCatSystem:
    """Normal-mode basis plus a coefficient cascade for one parameter set."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.basis = normal_basis(params)
        self.cascade = PropagatorCascade(self.basis, params.cats)

    def coeffs(self, t: float) -> ComplexCoeffs:
        return self.cascade.coeffs(t)

    def exponents(self, X, t: float) -> np.ndarray:
        """Theta^(k)(X) for all packets, shape (..., 8)."""
        return self.coeffs(t).exponent_form.evaluate(X)

    def density_shift(self, t: float) -> float:
        """Largest Re Theta over all packets and positions at time ``t``."""
        return float(np.max(self.coeffs(t).exponent_form.peak_real()))

    def psi_k(self, X, t: float, k: int) -> complex:
        """Unnormalized amplitude sqrt(pi^3/|Delta|) exp(Re Theta) e^{i(Im Theta + phi/2)}."""
        cc = self.coeffs(t)
        exponent = theta(cc, X, k)
        modulus = math.sqrt(math.pi**3 / abs(cc.Delta)) * math.exp(exponent.reTheta)
        return modulus * complex(
            math.cos(exponent.imTheta + exponent.phi_half),
            math.sin(exponent.imTheta + exponent.phi_half),
        )

    def psi(self, X, t: float) -> np.ndarray:
        """Sum over packets on arbitrary points, shape (...)."""
        cc = self.coeffs(t)
        scale = math.sqrt(math.pi**3 / abs(cc.Delta))
        exps = self.exponents(X, t)
        return scale * np.exp(1j * 0.5 * cc.phi) * np.sum(np.exp(exps), axis=-1)

    def rho_total(self, X, t: float) -> DensityEval:
        """Definitive and interference terms of the total density at one point."""
        X = np.asarray(X, dtype=float).reshape(3)
        exps = self.exponents(X, t)
        re = exps.real
        saturated = bool(np.any(np.abs(re) > EXP_CLIP))
        re = np.clip(re, -EXP_CLIP, EXP_CLIP)
        im = exps.imag

        definitive = np.exp(2.0 * re)
        interference = np.array(
            [2.0 * math.exp(re[k] + re[l]) * math.cos(im[k] - im[l]) for k, l in PACKET_PAIRS]
        )
        total = float(abs(np.sum(np.exp(re + 1j * im))) ** 2)
        return DensityEval(
            X=X,
            t=float(t),
            definitive=definitive,
            interference=interference,
            total=total,
            saturated=saturated,
        )

    def rho_shape(self, X, t: float, shift: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized |sum_k exp(Theta_k - shift)|^2 and a mask of clipped evaluations."""
        exps = self.exponents(X, t) - shift
        low = exps.real < -EXP_CLIP
        high = exps.real > EXP_CLIP
        amps = np.exp(np.where(high | low, -np.inf, exps.real)) * np.exp(1j * exps.imag)
        total = np.abs(np.sum(amps, axis=-1)) ** 2
        return total, np.any(low | high, axis=-1)

    def group_amplitudes(
        self, X, t: float, particle: int, shift: float = 0.0
    ) -> tuple[np.ndarray, np.ndarray, int]:
        """Same-group sums of exp(Theta_k - shift) for the watched ``particle``.

        Returns the sum over packets that started at x_j = 0, the sum over
        packets that started at x_j = d_j, and the number of clipped evaluations.
        """
        if particle not in (1, 2, 3):
            raise ValueError(f"particle must be 1, 2 or 3, got {particle}")
        exps = self.exponents(X, t) - shift
        clipped = np.abs(exps.real) > EXP_CLIP
        amps = np.exp(np.where(clipped, -np.inf, exps.real)) * np.exp(1j * exps.imag)
        displaced = np.array([bits[particle - 1] for bits in PACKET_PATTERNS], dtype=bool)
        return (
            np.sum(amps[..., ~displaced], axis=-1),
            np.sum(amps[..., displaced], axis=-1),
            int(np.count_nonzero(clipped)),
        )


def initial_density(cats: tuple[CatSpec, ...], X) -> np.ndarray:
    """Unnormalized |psi(X, 0)|^2 of the product cat state."""
    X = np.asarray(X, dtype=float)
    value = np.ones(X.shape[:-1])
    for i, cat in enumerate(cats):
        x = X[..., i]
        s2 = cat.sigma**2
        amp = np.exp(-(x**2) / (4 * s2)) + np.exp(-((x - cat.d) ** 2) / (4 * s2))
        value = value * amp * amp
    return value


def initial_marginal(cats: tuple[CatSpec, ...], particle: int, x) -> np.ndarray:
    """Normalized one-particle marginal of the initial cat state."""
    cat = cats[particle - 1]
    x = np.asarray(x, dtype=float)
    s2 = cat.sigma**2
    amp = np.exp(-(x**2) / (4 * s2)) + np.exp(-((x - cat.d) ** 2) / (4 * s2))
    # integral of |amp|^2 over the real line
    norm = 2.0 * math.sqrt(2.0 * math.pi * s2) * (1.0 + math.exp(-(cat.d**2) / (8 * s2)))
    return amp * amp / norm
