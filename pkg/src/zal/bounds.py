"""Envelope shapes and the explicit constants C^{+-}_{n,sigma}(t) of the strip bound.

Nothing here asserts an inequality about S_n; these are the comparison
functions that computed values get divided by when reporting implied constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath

from zal.errors import DomainError

__all__ = [
    "EnvelopeValue",
    "H",
    "C_odd",
    "C_even",
    "C_minus1",
    "C_zero",
    "C_pm",
    "envelope_littlewood",
    "envelope_strip",
    "envelope",
]


@dataclass(frozen=True)
class EnvelopeValue:
    kind: str  # "littlewood" | "strip" | "theorem21"
    n: int
    sigma: float
    t: float
    value: float


def H(m: int, x: float) -> float:
    """H_m(x) = sum_{k>=0} x^k / (k+1)^m = Li_m(x) / x, for |x| <= 1."""
    if m < 2:
        raise DomainError("H needs m >= 2")
    x = float(x)
    if abs(x) > 1:
        raise DomainError(f"|x| must be <= 1, got {x}")
    if x == 0:
        return 1.0
    with mpmath.workdps(30):
        return float(mpmath.polylog(m, x) / x)


def _strip_check(sigma: float, t: float):
    if not 0.5 <= sigma < 1:
        raise DomainError(f"sigma must lie in [1/2, 1), got {sigma}")
    if t < 16:
        raise DomainError(f"t must be >= 16, got {t}")


def _edge_term(sigma: float) -> float:
    return (2 * sigma - 1) / (sigma * (1 - sigma))


def C_odd(n: int, sigma: float, t: float, sign: int) -> float:
    if n < 1 or n % 2 == 0:
        raise DomainError("C_odd needs odd n >= 1")
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    _strip_check(sigma, t)
    x = sign * (-1) ** ((n + 1) // 2) * math.log(t) ** (1 - 2 * sigma)
    return (H(n + 1, x) + _edge_term(sigma)) / (2 ** (n + 1) * math.pi)


def C_minus1(sigma: float, t: float) -> float:
    _strip_check(sigma, t)
    return (1 / (1 + math.log(t) ** (1 - 2 * sigma)) + _edge_term(sigma)) / math.pi


def C_even(n: int, sigma: float, t: float, sign: int = 1) -> float:
    """Even-n constant; the same for both signs."""
    if n < 2 or n % 2:
        raise DomainError("C_even needs even n >= 2")
    up = C_odd(n + 1, sigma, t, 1) + C_odd(n + 1, sigma, t, -1)
    a, b = C_odd(n - 1, sigma, t, 1), C_odd(n - 1, sigma, t, -1)
    return math.sqrt(2 * up * a * b / (a + b))


def C_zero(sigma: float, t: float) -> float:
    c1 = C_odd(1, sigma, t, 1) + C_odd(1, sigma, t, -1)
    return math.sqrt(2 * c1 * C_minus1(sigma, t))


def C_pm(n: int, sigma: float, t: float, sign: int = 1) -> float:
    """Dispatch over n: 0, even, odd."""
    if n == 0:
        return C_zero(sigma, t)
    if n % 2 == 0:
        return C_even(n, sigma, t, sign)
    return C_odd(n, sigma, t, sign)


def _check_t(t):
    # only log log t > 0 is needed for the shapes themselves
    if not t > math.e:
        raise DomainError(f"t must exceed e, got {t}")


def envelope_littlewood(n: int, t: float) -> float:
    """log t / (log log t)^{n+1}."""
    _check_t(t)
    lt = math.log(t)
    return lt / math.log(lt) ** (n + 1)


def envelope_strip(n: int, sigma: float, t: float) -> float:
    """(log t)^{2-2 sigma} / (log log t)^{n+1}."""
    _check_t(t)
    lt = math.log(t)
    return lt ** (2 - 2 * sigma) / math.log(lt) ** (n + 1)


def envelope(kind: str, n: int, sigma: float, t: float) -> EnvelopeValue:
    if kind == "littlewood":
        v = envelope_littlewood(n, t)
    elif kind in ("strip", "theorem21"):
        v = envelope_strip(n, sigma, t)
    else:
        raise DomainError(f"unknown envelope kind {kind!r}")
    return EnvelopeValue(kind, n, float(sigma), float(t), v)
