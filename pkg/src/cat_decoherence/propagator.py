"""Closed-form propagator coefficient cascade at a fixed elapsed time.

The cascade runs real coefficients (A, B, alpha, D) -> complex coefficients
(Abrev, Bbrev, Cbrev, Dbrev) -> Delta(t), lambda, mu, La/Mu factors -> the
per-packet exponent Theta. Every printed expansion that has a direct complex
counterpart is evaluated both ways; disagreements are logged.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from cat_decoherence.errors import CausticError, NumericalUnderflow
from cat_decoherence.model import CatSpec, NormalModeBasis, offset_table

logger = logging.getLogger(__name__)

EPS_CAUSTIC = 1e-6
UNDERFLOW_LIMIT = 1e-300
DUAL_PATH_RTOL = 1e-10

# (i, j) index pairs of the mu terms, in the order (1,2), (2,3), (3,1)
PAIRS: tuple[tuple[int, int], ...] = ((0, 1), (1, 2), (2, 0))
# (j, k) partners of each index, cyclic
CYCLIC: tuple[tuple[int, int], ...] = ((1, 2), (2, 0), (0, 1))


def relative_gap(first, second) -> float:
    """max |first - second| relative to the larger magnitude of the two."""
    first = np.asarray(first)
    second = np.asarray(second)
    scale = max(float(np.max(np.abs(first))), float(np.max(np.abs(second))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(first - second))) / scale


def mode_factors(basis: NormalModeBasis, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode factors g = m w cot(w dt) and h = m w / sin(w dt).

    The free mode contributes m3/dt to both.

    Raises:
        CausticError: when dt is zero or sin(w dt) vanishes for an oscillating mode.
    """
    if dt <= EPS_CAUSTIC:
        raise CausticError(
            f"elapsed time {dt:g} is at the free-mode caustic t=0", mode=3, nearest_time=0.0
        )
    g = np.empty(3)
    h = np.empty(3)
    for idx, (mass, omega) in enumerate(((basis.m1, basis.Omega1), (basis.m2, basis.Omega2))):
        phase = omega * dt
        s = math.sin(phase)
        if abs(s) < EPS_CAUSTIC:
            nearest = round(phase / math.pi) * math.pi / omega
            raise CausticError(
                f"|sin(omega_{idx + 1} t)| = {abs(s):.2e} < {EPS_CAUSTIC:g} at t={dt:g} "
                f"(caustic at t={nearest:.6g})",
                mode=idx + 1,
                nearest_time=nearest,
            )
        g[idx] = mass * omega * math.cos(phase) / s
        h[idx] = mass * omega / s
    g[2] = h[2] = basis.m3 / dt
    return g, h


@dataclass(frozen=True, eq=False)
class RealCoeffs:
    """Real propagator coefficients at elapsed time ``t``.

    ``B`` carries B_ij off the diagonal (zero diagonal); ``alpha[i, d]`` is
    alpha_d^(i). C_i(X) and D(X) are evaluated on demand.
    """

    t: float
    A: np.ndarray
    B: np.ndarray
    alpha: np.ndarray
    g: np.ndarray
    h: np.ndarray
    rows: np.ndarray

    @property
    def quadratic_matrix(self) -> np.ndarray:
        """Symmetric matrix of D(X): A on the diagonal, B/2 off it."""
        return np.diag(self.A) + 0.5 * self.B


def real_coeffs(basis: NormalModeBasis, dt: float) -> RealCoeffs:
    g, h = mode_factors(basis, dt)
    rows = basis.P
    A = 0.5 * np.einsum("m,mi->i", g, rows * rows)
    B = np.einsum("m,mi,mj->ij", g, rows, rows)
    B = 0.5 * (B + B.T)
    np.fill_diagonal(B, 0.0)
    alpha = np.einsum("m,mi,md->id", h, rows, rows)
    alpha = 0.5 * (alpha + alpha.T)
    return RealCoeffs(t=float(dt), A=A, B=B, alpha=alpha, g=g, h=h, rows=rows)


def c_linear(real: RealCoeffs, X) -> np.ndarray:
    """C_i(X) = -sum_d alpha_d^(i) x_d; X may carry leading batch axes."""
    return -np.asarray(X, dtype=float) @ real.alpha.T


def c_linear_explicit(real: RealCoeffs, X) -> np.ndarray:
    """C_i(X) from the mode-by-mode three-term form."""
    X = np.asarray(X, dtype=float)
    projections = X @ real.rows.T
    return -(projections * real.h) @ real.rows


def quadratic_d(real: RealCoeffs, X) -> np.ndarray:
    """D(X) = sum_m g_m/2 (p_m . X)^2."""
    projections = np.asarray(X, dtype=float) @ real.rows.T
    return 0.5 * np.sum(real.g * projections * projections, axis=-1)


def quadratic_d_expanded(real: RealCoeffs, X) -> np.ndarray:
    """D(X) = sum A_i x_i^2 + sum_{i<j} B_ij x_i x_j."""
    X = np.asarray(X, dtype=float)
    x1, x2, x3 = X[..., 0], X[..., 1], X[..., 2]
    A, B = real.A, real.B
    return (
        A[0] * x1 * x1
        + A[1] * x2 * x2
        + A[2] * x3 * x3
        + B[0, 1] * x1 * x2
        + B[1, 2] * x2 * x3
        + B[0, 2] * x1 * x3
    )


def delta_direct(Abrev: np.ndarray, Bbrev: np.ndarray) -> complex:
    A1, A2, A3 = Abrev
    B12, B13, B23 = Bbrev[0, 1], Bbrev[0, 2], Bbrev[1, 2]
    return complex(
        A1 * A2 * A3
        - 0.25 * (A2 * B13 * B13 + A3 * B12 * B12 + A1 * B23 * B23)
        - 0.25 * B12 * B13 * B23
    )


def delta_expanded(real: RealCoeffs, sigmas: np.ndarray, hbar: float) -> complex:
    """Delta(t) from its printed real and imaginary expansions."""
    A1, A2, A3 = real.A
    B12, B13, B23 = real.B[0, 1], real.B[0, 2], real.B[1, 2]
    s1, s2, s3 = sigmas**2
    re = (
        1.0 / (64.0 * s1 * s2 * s3)
        - (A2 * A3 / s1 + A3 * A1 / s2 + A1 * A2 / s3) / (4.0 * hbar**2)
        + (B23**2 / s1 + B13**2 / s2 + B12**2 / s3) / (16.0 * hbar**2)
    )
    im = (
        A1 * A2 * A3 / hbar**3
        - (A3 / (s1 * s2) + A1 / (s2 * s3) + A2 / (s3 * s1)) / (16.0 * hbar)
        - (A1 * B23**2 + A2 * B13**2 + A3 * B12**2) / (4.0 * hbar**3)
        + B12 * B13 * B23 / (4.0 * hbar**3)
    )
    return complex(re, im)


def lambda_mu_direct(Abrev: np.ndarray, Bbrev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A1, A2, A3 = Abrev
    B12, B13, B23 = Bbrev[0, 1], Bbrev[0, 2], Bbrev[1, 2]
    lam = np.array(
        [
            4 * A2 * A3 - B23 * B23,
            4 * A1 * A3 - B13 * B13,
            4 * A1 * A2 - B12 * B12,
        ]
    )
    mu12 = 2 * B13 * B23 + 4 * A3 * B12
    mu13 = 2 * B12 * B23 + 4 * A2 * B13
    mu23 = 2 * B12 * B13 + 4 * A1 * B23
    mu = np.array(
        [
            [0.0, mu12, mu13],
            [mu12, 0.0, mu23],
            [mu13, mu23, 0.0],
        ],
        dtype=complex,
    )
    return lam, mu


def lambda_mu_expanded(
    real: RealCoeffs, sigmas: np.ndarray, hbar: float
) -> tuple[np.ndarray, np.ndarray]:
    """lambda_i and mu_ij from their printed real and imaginary expansions."""
    g = real.g
    rows = real.rows
    s2 = sigmas**2
    # mode pairs in the printed order: (a, b), (b, c), (c, a)
    mode_pairs = ((0, 1), (1, 2), (2, 0))

    def minor(m: int, n: int, j: int, k: int) -> float:
        return rows[m, j] * rows[n, k] - rows[m, k] * rows[n, j]

    lam = np.empty(3, dtype=complex)
    for i, (j, k) in enumerate(CYCLIC):
        re = -sum(g[m] * g[n] * minor(m, n, j, k) ** 2 for m, n in mode_pairs) / hbar**2
        re += 1.0 / (4.0 * s2[j] * s2[k])
        im = -sum(
            g[m] * (rows[m, j] ** 2 / s2[k] + rows[m, k] ** 2 / s2[j]) for m in range(3)
        ) / (2.0 * hbar)
        lam[i] = complex(re, im)

    mu = np.zeros((3, 3), dtype=complex)
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        re = (
            -2.0
            * sum(g[m] * g[n] * minor(m, n, j, k) * minor(m, n, k, i) for m, n in mode_pairs)
            / hbar**2
        )
        im = sum(g[m] * rows[m, i] * rows[m, j] for m in range(3)) / (s2[k] * hbar)
        mu[i, j] = mu[j, i] = complex(re, im)
    return lam, mu


@dataclass(frozen=True, eq=False)
class LaMuFactors:
    """La/Mu factors; ``La``/``Mu`` hold dd on the diagonal and df off it."""

    La: np.ndarray
    Mu: np.ndarray
    La_d: np.ndarray
    Mu_d: np.ndarray
    La_0: np.ndarray
    Mu_0: np.ndarray


def la_mu_factors(
    lam: np.ndarray,
    mu: np.ndarray,
    alpha: np.ndarray,
    sigmas: np.ndarray,
    offsets: np.ndarray,
) -> LaMuFactors:
    s2 = sigmas**2
    La = np.empty((3, 3), dtype=complex)
    Mu = np.empty((3, 3), dtype=complex)
    for d in range(3):
        for f in range(3):
            if d == f:
                La[d, d] = np.sum(lam * alpha[:, d] ** 2)
                Mu[d, d] = sum(mu[i, j] * alpha[i, d] * alpha[j, d] for i, j in PAIRS)
            else:
                La[d, f] = 2.0 * np.sum(lam * alpha[:, d] * alpha[:, f])
                Mu[d, f] = sum(
                    mu[i, j] * (alpha[i, d] * alpha[j, f] + alpha[j, d] * alpha[i, f])
                    for i, j in PAIRS
                )

    scaled = offsets / s2  # d_i^(k) / sigma_i^2, shape (8, 3)
    La_d = scaled @ (lam[:, None] * alpha)
    Mu_d = np.zeros((offsets.shape[0], 3), dtype=complex)
    for i, j in PAIRS:
        Mu_d += 0.5 * mu[i, j] * (
            scaled[:, i, None] * alpha[j][None, :] + scaled[:, j, None] * alpha[i][None, :]
        )
    La_0 = 0.25 * (scaled * scaled) @ lam
    Mu_0 = 0.25 * sum(mu[i, j] * scaled[:, i] * scaled[:, j] for i, j in PAIRS)
    return LaMuFactors(La=La, Mu=Mu, La_d=La_d, Mu_d=Mu_d, La_0=La_0, Mu_0=Mu_0)


@dataclass(frozen=True, eq=False)
class ExponentForm:
    """Theta^(k)(X) = X^T Q X + L_k . X + c_k for all eight packets."""

    Q: np.ndarray
    L: np.ndarray
    c: np.ndarray

    def evaluate(self, X) -> np.ndarray:
        """Exponents of shape (..., 8) for points X of shape (..., 3)."""
        X = np.asarray(X, dtype=float)
        quad = np.einsum("...a,ab,...b->...", X, self.Q, X)
        return quad[..., None] + X @ self.L.T + self.c

    def peak_real(self) -> np.ndarray:
        """Maximum over X of Re Theta^(k), per packet."""
        R = self.Q.real
        ell = self.L.real
        shift = np.linalg.solve(R, ell.T).T
        return self.c.real - 0.25 * np.einsum("ka,ka->k", ell, shift)


@dataclass(frozen=True, eq=False)
class ComplexCoeffs:
    t: float
    hbar: float
    sigmas: np.ndarray
    offsets: np.ndarray
    Abrev: np.ndarray
    Bbrev: np.ndarray
    Delta: complex
    lam: np.ndarray
    mu: np.ndarray
    factors: LaMuFactors
    phi: float
    real: RealCoeffs

    @property
    def re_delta(self) -> float:
        return self.Delta.real

    @property
    def im_delta(self) -> float:
        return self.Delta.imag

    @property
    def K(self) -> np.ndarray:
        """Symmetric matrix with Phi = Cbrev^T K Cbrev."""
        return np.diag(self.lam) + 0.5 * self.mu

    @property
    def delta_scaled(self) -> np.ndarray:
        """d_i^(k) / (2 sigma_i^2), shape (8, 3)."""
        return self.offsets / (2.0 * self.sigmas**2)

    def Cbrev(self, X, k: int) -> np.ndarray:
        return self.delta_scaled[k] + 1j * c_linear(self.real, X) / self.hbar

    def Dbrev(self, X, k: int) -> complex:
        re = -np.sum(self.offsets[k] ** 2 / (4.0 * self.sigmas**2))
        return re + 1j * quadratic_d(self.real, X) / self.hbar

    @cached_property
    def exponent_form(self) -> ExponentForm:
        K = self.K
        alpha = self.real.alpha
        denom = 16.0 * self.Delta
        Q = -(alpha @ K @ alpha) / (denom * self.hbar**2)
        Q = Q + 1j * self.real.quadratic_matrix / self.hbar
        delta = self.delta_scaled
        L = -2j * (delta @ K @ alpha) / (denom * self.hbar)
        c = np.einsum("ki,ij,kj->k", delta, K, delta) / denom - np.sum(
            self.offsets**2 / (4.0 * self.sigmas**2), axis=1
        )
        return ExponentForm(Q=Q, L=L, c=c)


def complex_coeffs(real: RealCoeffs, cats: tuple[CatSpec, ...], hbar: float) -> ComplexCoeffs:
    """Complex coefficient cascade for the given cat geometry.

    Raises:
        NumericalUnderflow: when |Delta(t)| drops below 1e-300.
    """
    sigmas = np.array([cat.sigma for cat in cats], dtype=float)
    offsets = offset_table(cats)
    Abrev = 1.0 / (4.0 * sigmas**2) - 1j * real.A / hbar
    Bbrev = 1j * real.B / hbar

    delta = delta_direct(Abrev, Bbrev)
    if abs(delta) < UNDERFLOW_LIMIT:
        raise NumericalUnderflow(f"|Delta(t)| = {abs(delta):.3e} at t={real.t:g}")
    gap = relative_gap(delta, delta_expanded(real, sigmas, hbar))
    if gap > DUAL_PATH_RTOL:
        logger.warning("Delta(t=%g): printed expansion differs by %.3e", real.t, gap)

    lam, mu = lambda_mu_direct(Abrev, Bbrev)
    lam_x, mu_x = lambda_mu_expanded(real, sigmas, hbar)
    for name, direct, expanded in (("lambda", lam, lam_x), ("mu", mu, mu_x)):
        gap = relative_gap(direct, expanded)
        if gap > DUAL_PATH_RTOL:
            logger.warning("%s(t=%g): printed expansion differs by %.3e", name, real.t, gap)

    factors = la_mu_factors(lam, mu, real.alpha, sigmas, offsets)
    return ComplexCoeffs(
        t=real.t,
        hbar=hbar,
        sigmas=sigmas,
        offsets=offsets,
        Abrev=Abrev,
        Bbrev=Bbrev,
        Delta=delta,
        lam=lam,
        mu=mu,
        factors=factors,
        phi=math.atan2(delta.imag, delta.real),
        real=real,
    )


def phi_contracted(cc: ComplexCoeffs, X, k: int) -> complex:
    """Phi^(k) = sum lambda_i C_i^2 + sum mu_ij C_i C_j."""
    C = cc.Cbrev(X, k)
    value = np.sum(cc.lam * C * C)
    for i, j in PAIRS:
        value += cc.mu[i, j] * C[i] * C[j]
    return complex(value)


def phi_long(cc: ComplexCoeffs, X, k: int) -> complex:
    """Phi^(k) written out in Abrev, Bbrev and Cbrev."""
    A1, A2, A3 = cc.Abrev
    B12, B13, B23 = cc.Bbrev[0, 1], cc.Bbrev[0, 2], cc.Bbrev[1, 2]
    C1, C2, C3 = cc.Cbrev(X, k)
    return complex(
        4 * (A2 * A3 * C1 * C1 + A1 * A3 * C2 * C2 + A1 * A2 * C3 * C3)
        - B23 * B23 * C1 * C1
        - B13 * B13 * C2 * C2
        - B12 * B12 * C3 * C3
        + 2 * (B13 * B23 * C1 * C2 + B12 * B13 * C2 * C3 + B12 * B23 * C1 * C3)
        + 4 * (A1 * B23 * C2 * C3 + A2 * B13 * C1 * C3 + A3 * B12 * C1 * C2)
    )


def phi_expanded(cc: ComplexCoeffs, X, k: int) -> complex:
    """Phi^(k) from the La/Mu real and imaginary expansions."""
    x = np.asarray(X, dtype=float)
    f = cc.factors
    hbar = cc.hbar
    quad = f.La + f.Mu
    linear = f.La_d[k] + f.Mu_d[k]
    const = f.La_0[k] + f.Mu_0[k]

    def side(part) -> float:
        total = 0.0
        for d in range(3):
            total -= part(quad[d, d]) * x[d] * x[d] / hbar**2
        for d, e in PAIRS:
            total -= part(quad[d, e]) * x[d] * x[e] / hbar**2
        return total

    re = side(np.real) + float(np.dot(linear.imag, x)) / hbar + const.real
    im = side(np.imag) - float(np.dot(linear.real, x)) / hbar + const.imag
    return complex(re, im)


@dataclass(frozen=True)
class PacketExponent:
    k: int
    reTheta: float
    imTheta: float
    phi_half: float


def theta(cc: ComplexCoeffs, X, k: int) -> PacketExponent:
    """Exponent Theta^(k)(X) = conj(Delta) Phi / (16 |Delta|^2) + Dbrev^(k)."""
    if not 0 <= k < 8:
        raise ValueError(f"packet index must be in 0..7, got {k}")
    phi_c = phi_contracted(cc, X, k)
    phi_e = phi_expanded(cc, X, k)
    gap = relative_gap(phi_c, phi_e)
    if gap > 1e-9:
        logger.warning("Phi^(%d)(t=%g): La/Mu expansion differs by %.3e", k, cc.t, gap)

    delta = cc.Delta
    norm = 16.0 * abs(delta) ** 2
    dbrev = cc.Dbrev(X, k)
    re = (delta.real * phi_c.real + delta.imag * phi_c.imag) / norm + dbrev.real
    im = (delta.real * phi_c.imag - delta.imag * phi_c.real) / norm + float(np.imag(dbrev))
    return PacketExponent(k=k, reTheta=float(re), imTheta=float(im), phi_half=0.5 * cc.phi)


def cascade_report(cc: ComplexCoeffs) -> str:
    """Keyed text dump of the whole cascade, one ``name = value`` per line."""
    lines = [f"t = {cc.t:.17g}", f"hbar = {cc.hbar:.17g}"]
    real = cc.real
    for i in range(3):
        lines.append(f"A{i + 1} = {real.A[i]:.17g}")
    for i, j in PAIRS:
        lo, hi = sorted((i, j))
        lines.append(f"B{lo + 1}{hi + 1} = {real.B[lo, hi]:.17g}")
    for i in range(3):
        for d in range(3):
            lines.append(f"alpha_{d + 1}^({i + 1}) = {real.alpha[i, d]:.17g}")
    for i in range(3):
        lines.append(f"Abrev{i + 1} = {cc.Abrev[i]:.17g}")
    for i, j in PAIRS:
        lo, hi = sorted((i, j))
        lines.append(f"Bbrev{lo + 1}{hi + 1} = {cc.Bbrev[lo, hi]:.17g}")
    lines.append(f"ReDelta = {cc.Delta.real:.17g}")
    lines.append(f"ImDelta = {cc.Delta.imag:.17g}")
    lines.append(f"phi = {cc.phi:.17g}")
    for i in range(3):
        lines.append(f"lambda{i + 1} = {cc.lam[i]:.17g}")
    for i, j in PAIRS:
        lo, hi = sorted((i, j))
        lines.append(f"mu{lo + 1}{hi + 1} = {cc.mu[lo, hi]:.17g}")
    f = cc.factors
    for d in range(3):
        lines.append(f"La{d + 1}{d + 1} = {f.La[d, d]:.17g}")
        lines.append(f"Mu{d + 1}{d + 1} = {f.Mu[d, d]:.17g}")
    for d, e in PAIRS:
        lines.append(f"La{d + 1}{e + 1} = {f.La[d, e]:.17g}")
        lines.append(f"Mu{d + 1}{e + 1} = {f.Mu[d, e]:.17g}")
    for k in range(f.La_d.shape[0]):
        for d in range(3):
            lines.append(f"La{d + 1}^({k}) = {f.La_d[k, d]:.17g}")
            lines.append(f"Mu{d + 1}^({k}) = {f.Mu_d[k, d]:.17g}")
        lines.append(f"La0^({k}) = {f.La_0[k]:.17g}")
        lines.append(f"Mu0^({k}) = {f.Mu_0[k]:.17g}")
    return "\n".join(lines) + "\n"


class PropagatorCascade:
    """Thread-safe cache of complex coefficient sets keyed by elapsed time."""

    def __init__(self, basis: NormalModeBasis, cats: tuple[CatSpec, ...]):
        self.basis = basis
        self.cats = tuple(cats)
        self._cache: dict[float, ComplexCoeffs] = {}
        self._lock = threading.Lock()

    def coeffs(self, t: float) -> ComplexCoeffs:
        key = float(t)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        computed = complex_coeffs(real_coeffs(self.basis, key), self.cats, self.basis.params.hbar)
        with self._lock:
            return self._cache.setdefault(key, computed)

    def __len__(self) -> int:
        return len(self._cache)
