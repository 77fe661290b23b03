"""Argument functions S_n(sigma, t) of the zeta function, their convolution
identities with prime sums, and the resonator used to hunt for large values."""

from zal.errors import (
    DomainError,
    NotInSupport,
    OnZero,
    PoleAtOne,
    PrecisionUnreachable,
    QuadratureFailure,
    TooLarge,
    TooSmall,
    ZalError,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "NotInSupport",
    "OnZero",
    "PoleAtOne",
    "PrecisionUnreachable",
    "QuadratureFailure",
    "TooLarge",
    "TooSmall",
    "ZalError",
]
