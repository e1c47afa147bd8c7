"""Exception hierarchy shared by the engine and the command line."""

from __future__ import annotations


class CatDecoherenceError(Exception):
    """Base class for every error raised by the engine."""

    exit_code = 1


class ConfigError(CatDecoherenceError):
    """Invalid configuration, usage or input file."""

    exit_code = 1


class ModelDomainError(CatDecoherenceError):
    """The requested evaluation lies outside the model's valid domain."""

    exit_code = 2


class DegenerateSpectrum(ModelDomainError):
    """The two non-zero eigenvalues of the coupling matrix coincide."""


class SingularTransform(ModelDomainError):
    """The normal-coordinate transformation cannot be inverted."""


class CausticError(ModelDomainError):
    """The elapsed time sits on (or too close to) a propagator caustic."""

    def __init__(self, message: str, *, mode: int, nearest_time: float):
        super().__init__(message)
        self.mode = mode
        self.nearest_time = nearest_time


class NumericalUnderflow(ModelDomainError):
    """A determinant or normalization collapsed below representable range."""


class TailLeak(ModelDomainError):
    """The quadrature box cuts off a non-negligible part of the density."""

    def __init__(self, message: str, *, ratio: float):
        super().__init__(message)
        self.ratio = ratio


class SaturationError(ModelDomainError):
    """Exponent clipping removed every point or the density does not decay."""

    def __init__(self, message: str, *, count: int = 0):
        super().__init__(message)
        self.count = count


class VerificationFailure(CatDecoherenceError):
    """One or more verification checks exceeded their tolerance."""

    exit_code = 3

    def __init__(self, message: str, *, failed: list | None = None):
        super().__init__(message)
        self.failed = failed or []
