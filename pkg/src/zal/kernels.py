"""Gaussian test kernels K_n, their Fourier transforms and the strip maximum V_sigma.

Fourier convention: f_hat(xi) = int f(x) exp(-2 pi i xi x) dx.
With Phi(x) = exp(-x^2/2):

* odd n:  K(z) = s_n L Phi(2 pi L z),          K_hat = s_n Phi(xi/L) / sqrt(2 pi)
* even n: K(z) = s_n L^2 z Phi(2 pi L z),      K_hat = -s_n i xi Phi(xi/L) / ((2 pi)^{3/2} L)

where s_n = (-1)^{(n-1)/2} for odd n and (-1)^{n/2+1} for even n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from zal.errors import DomainError
from zal.zeta_core import ComplexValue

__all__ = ["KernelSpec", "phi", "K", "K_hat", "K_hat_value", "K_l1", "V_sigma", "kernel_for_height"]

_SQRT2PI = math.sqrt(2 * math.pi)


def phi(x):
    return np.exp(-np.square(x) / 2)


@dataclass(frozen=True)
class KernelSpec:
    n: int
    L: float
    parity_class: int = field(init=False)
    sign: int = field(init=False)

    def __post_init__(self):
        if self.n < 0:
            raise DomainError("kernel index n must be >= 0")
        if not self.L > 0:
            raise DomainError("kernel scale L must be positive")
        object.__setattr__(self, "parity_class", self.n % 4)
        if self.n % 2:
            s = (-1) ** ((self.n - 1) // 2)
        else:
            s = (-1) ** (self.n // 2 + 1)
        object.__setattr__(self, "sign", s)

    @property
    def odd(self) -> bool:
        return self.n % 2 == 1


def kernel_for_height(n: int, T: float) -> KernelSpec:
    """Kernel with the scale L = log log T."""
    return KernelSpec(n, math.log(math.log(T)))


def K(spec: KernelSpec, z):
    """K_n(z); accepts real or complex arrays (the strip maximum needs complex z)."""
    L = spec.L
    z = np.asarray(z)
    g = spec.sign * L * np.exp(-np.square(2 * math.pi * L * z) / 2)
    if spec.odd:
        return g
    return g * L * z


def K_hat(spec: KernelSpec, xi):
    """Analytic transform; real for odd n, purely imaginary for even n."""
    L = spec.L
    xi = np.asarray(xi, dtype=float)
    g = phi(xi / L)
    if spec.odd:
        return spec.sign * g / _SQRT2PI
    return -spec.sign * 1j * xi * g / ((2 * math.pi) ** 1.5 * L)


def K_hat_value(spec: KernelSpec, xi: float) -> ComplexValue:
    v = complex(K_hat(spec, xi))
    return ComplexValue(v.real, v.imag, 0.0)


def K_l1(spec: KernelSpec) -> float:
    """||K||_1, independent of L: 1/sqrt(2 pi) for odd n, 1/(2 pi^2) for even n."""
    if spec.odd:
        return 1 / _SQRT2PI
    return 1 / (2 * math.pi**2)


def V_sigma(spec: KernelSpec, sigma: float, x: float, samples: int = 1000) -> float:
    """max_{sigma-2 <= y <= 0} |K(x + iy)|: dense sampling then golden-section polish."""
    if not 0.5 <= sigma <= 2:
        raise DomainError("sigma must lie in [1/2, 2]")
    lo = sigma - 2.0
    if lo == 0:
        return float(abs(K(spec, complex(x))))
    ys = np.linspace(lo, 0.0, samples)
    vals = np.abs(K(spec, x + 1j * ys))
    j = int(np.argmax(vals))
    best_y, best = ys[j], float(vals[j])
    a, b = ys[max(j - 1, 0)], ys[min(j + 1, samples - 1)]
    if b > a:
        res = minimize_scalar(lambda y: -abs(complex(K(spec, x + 1j * y))), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-10})
        if -res.fun > best:
            best_y, best = res.x, float(-res.fun)
    return best
