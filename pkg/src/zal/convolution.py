"""Kernel convolutions of S_n and log zeta against their prime-power expansions.

The prime side is
    P_n(sigma, t) = sum_m Lambda(m) m^{-sigma-it} (log m)^{-n-1} K_hat(log m / 2 pi),
with ``rhs = Im(i^n P_n) / pi`` and ``G_n = P_n / pi``.

Two ways to evaluate P_n:

``direct``
    Sum over prime powers up to a Gaussian cutoff, plus an erfc tail bound.
    The terms peak near log m = (1 - sigma)(2 pi L)^2, so at sigma = 1/2 and
    L = log log t this needs m beyond e^60 and only works for small L.
``contour``
    Insert K_hat(xi) = int K(x) e^{-2 pi i xi x} dx, swap sum and integral on
    Re s = c0 >= 1 and shift the kernel down by c = c0 - sigma:
        P_n = int K(u - ic) D_n(c0 + i(t + u)) du,
        D_0 = log zeta,  D_n(s) = 1/(n-1)! int_0^oo x^{n-1} log zeta(s + x) dx.
    The shifted kernel grows like exp((2 pi L c)^2 / 2), which is what limits
    the accuracy; the error estimate includes that amplification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx

from zal.argument import S_n_array, _weighted_log_zeta_integral
from zal.errors import DomainError, TooLarge
from zal.kernels import K, K_l1, KernelSpec, V_sigma
from zal.quadrature import adaptive_gk, gauss_legendre, gk_panels
from zal.zeta_core import ComplexValue, _walk_grid, log_zeta_walk, prime_powers, zero_ordinates

__all__ = [
    "ConvolutionReport",
    "PrimeSum",
    "prime_sum",
    "lhs_convolution",
    "lhs_convolution_eval",
    "rhs_prime_sum",
    "G_n",
    "selberg_logzeta_convolution",
    "inner_integral_check",
    "convolution_report",
    "direct_cutoff",
    "measure_rho",
    "PILOT_GRID",
    "RHO_PILOT",
]

DIRECT_MAX_M = 20_000_000
TERM_TOL = 1e-16
CONTOUR_C0 = 1.0

# Calibration of the O-term scale: max residual / (V_{1/2}(t) + ||K||_1) over
# n in {0,1,2}, sigma in {0.5, 0.75}, t in {50, 200, 1000}, L = log log t,
# auto method. Measured once and frozen.
PILOT_GRID = {"n": (0, 1, 2), "sigma": (0.5, 0.75), "t": (50.0, 200.0, 1000.0)}
RHO_PILOT = 9.45e-8


@dataclass(frozen=True)
class ConvolutionReport:
    n: int
    sigma: float
    t: float
    lhs: float
    rhs: float
    residual: float
    v_term: float
    k_l1: float
    lhs_err: float = 0.0
    rhs_err: float = 0.0
    method: str = ""

    def __post_init__(self):
        vals = (self.lhs, self.rhs, self.residual, self.v_term, self.k_l1)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("non-finite field in convolution report")
        if self.residual != abs(self.lhs - self.rhs):
            raise ValueError("residual must equal |lhs - rhs|")

    def band(self, rho: float) -> float:
        return 5.0 * (self.v_term + self.k_l1) * rho


@dataclass(frozen=True)
class PrimeSum:
    value: complex
    err: float
    method: str
    terms: int = 0


def _hat_factor(spec: KernelSpec) -> complex:
    # K_hat(xi) = factor * g(xi) with g real: Phi(xi/L) (odd) or xi Phi(xi/L) (even)
    if spec.odd:
        return spec.sign / math.sqrt(2 * math.pi)
    return -spec.sign * 1j / ((2 * math.pi) ** 1.5 * spec.L)


# --------------------------------------------------------------------------
# Prime side
# --------------------------------------------------------------------------


def direct_cutoff(sigma: float, spec: KernelSpec, tol: float = TERM_TOL) -> float:
    """x = log m past which exp((1-sigma) x) Phi(x / 2 pi L) stays below ``tol``."""
    a2 = (2 * math.pi * spec.L) ** 2
    b = 1.0 - sigma
    return a2 * (b + math.sqrt(b * b - 2 * math.log(tol) / a2))


def _direct_tail(n: int, sigma: float, spec: KernelSpec, x0: float) -> float:
    # sum over m > e^x0 bounded by int_x0^oo e^{(1-sigma)x} Phi(x/a) (x/2pi)^{even} x^{-n} dx
    a = 2 * math.pi * spec.L
    b = 1.0 - sigma
    z = (x0 - a * a * b) / (a * math.sqrt(2))
    if z > 0:
        log_i = a * a * b * b / 2 - z * z + math.log(erfcx(z) * a * math.sqrt(math.pi / 2))
        tail = math.exp(log_i)
    else:
        tail = math.exp(b * x0) * (x0 + a)  # crude; only hit when the cutoff was capped early
    tail /= max(x0, math.log(2)) ** n
    if not spec.odd:
        tail *= (x0 + a) / (2 * math.pi)
    return abs(_hat_factor(spec)) * tail


def _prime_sum_direct(n, sigma, t, spec, max_m=DIRECT_MAX_M):
    x0 = direct_cutoff(sigma, spec)
    limit = int(min(math.exp(min(x0, 60.0)), max_m))
    x0 = math.log(limit + 1)
    m, lam = prime_powers(limit)
    logm = np.log(m.astype(float))
    xi = logm / (2 * math.pi)
    g = np.exp(-np.square(xi / spec.L) / 2)
    if not spec.odd:
        g = g * xi
    amp = lam * g * np.exp(-sigma * logm) / logm ** (n + 1)
    ph = t * logm
    re = math.fsum(amp * np.cos(ph))
    im = math.fsum(-amp * np.sin(ph))
    val = _hat_factor(spec) * complex(re, im)
    err = _direct_tail(n, sigma, spec, x0) + 1e-15 * math.fsum(amp) * (1 + abs(t))
    return PrimeSum(val, err, "direct", int(m.size))


def _D(n: int, c0: float, taus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if n == 0:
        logz, relerr, _ = log_zeta_walk(taus, _walk_grid(c0))
        return logz[:, -1], relerr[:, -1]
    return _weighted_log_zeta_integral(n, c0, taus)


def _prime_sum_contour(n, sigma, t, spec, c0=None):
    if c0 is None:
        c0 = max(CONTOUR_C0, sigma + 0.1)
    if not sigma < c0 <= 2:
        raise DomainError("contour route needs sigma < c0 <= 2")
    c = c0 - sigma
    a = 2 * math.pi * spec.L
    U = math.sqrt(c * c + 80.0 / (a * a))
    if t - U < 0.5:
        raise DomainError(f"contour route needs t > {U + 0.5:.3g} at this kernel scale")
    h = 1.5 / (a + a * a * c + 1.0)
    P = int(math.ceil(2 * U / h))
    x, wk, wg = gk_panels(np.linspace(-U, U, P + 1))
    x, wk, wg = x.ravel(), wk.ravel(), wg.ravel()
    kern = K(spec, x - 1j * c)
    d, derr = _D(n, c0, t + x)
    f = kern * d
    ik, ig = f @ wk, f @ wg
    scale = np.abs(kern) @ np.abs(wk)
    err = (abs(ik - ig) + np.abs(kern * derr) @ np.abs(wk)
           + 8 * np.finfo(float).eps * (np.abs(f) @ np.abs(wk)) + 1e-14 * scale)
    return PrimeSum(complex(ik), float(err), "contour", 0)


def prime_sum(n: int, sigma: float, t: float, spec: KernelSpec, method: str = "auto",
              max_m: int = DIRECT_MAX_M) -> PrimeSum:
    """P_n(sigma, t) = sum Lambda(m) m^{-sigma-it} (log m)^{-n-1} K_hat(log m / 2 pi)."""
    if n < 0:
        raise DomainError("n must be >= 0")
    t = float(t)
    if t < 0:
        # terms conjugate, the constant factor of K_hat does not
        r = prime_sum(n, sigma, -t, spec, method, max_m)
        h = _hat_factor(spec)
        return PrimeSum(h * (r.value / h).conjugate(), r.err, r.method, r.terms)
    if method == "auto":
        direct_ok = direct_cutoff(sigma, spec) <= math.log(max_m)
        method = "direct" if direct_ok or t == 0 or sigma > 1.5 else "contour"
    if method == "direct":
        if direct_cutoff(sigma, spec) > math.log(max_m) and sigma <= 1:
            raise TooLarge(
                f"direct prime sum needs m up to e^{direct_cutoff(sigma, spec):.1f}; "
                f"use the contour route")
        return _prime_sum_direct(n, sigma, t, spec, max_m)
    if method == "contour":
        return _prime_sum_contour(n, sigma, t, spec)
    raise DomainError(f"unknown method {method!r}")


def rhs_prime_sum(n: int, sigma: float, t: float, spec: KernelSpec, method: str = "auto") -> float:
    ps = prime_sum(n, sigma, t, spec, method)
    return float((1j**n * ps.value).imag / math.pi)


def G_n(n: int, sigma: float, t: float, spec: KernelSpec, method: str = "auto") -> ComplexValue:
    """P_n / pi as a complex value (Re G_n is the prime side when n = 1 mod 4)."""
    ps = prime_sum(n, sigma, t, spec, method)
    return ComplexValue.of(ps.value / math.pi, ps.err / math.pi)


# --------------------------------------------------------------------------
# Convolution side
# --------------------------------------------------------------------------


def _kernel_tail(spec: KernelSpec, s: float) -> float:
    """int_s^oo |K|."""
    a = 2 * math.pi * spec.L
    if spec.odd:
        return math.erfc(a * s / math.sqrt(2)) / (2 * math.sqrt(2 * math.pi))
    return math.exp(-(a * s) ** 2 / 2) / (4 * math.pi**2)


def _initial_half_width(spec: KernelSpec, t: float, tol: float) -> float:
    s = 0.5 / spec.L
    while 4 * math.log(abs(t) + s + 2) * _kernel_tail(spec, s) >= tol:
        s *= 1.25
    return s


def _breaks(n, sigma, t, lo, hi, width):
    pts = [lo, hi]
    if lo < -t < hi:
        pts.append(-t)
    if sigma < 0.75:
        top = abs(t) + max(abs(lo), abs(hi))
        if top > 14:
            zs = zero_ordinates(top)
            for z in (zs, -zs):
                z = z - t
                pts += list(z[(z > lo) & (z < hi)])
    pts = np.unique(pts)
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(1, int(math.ceil((b - a) / width)))
        out.append(np.linspace(a, b, k + 1)[:-1])
    return np.concatenate(out + [pts[-1:]])


def _convolve(fun, n, sigma, t, spec, tol):
    """int fun(t + s) K(s) ds with doubling truncation; fun returns (vals, errs)."""
    worst = [0.0]

    def integrand(s):
        v, e = fun(t + s)
        worst[0] = max(worst[0], float(np.max(e)))
        return v * K(spec, s)

    width = 0.5 / (2 * math.pi * spec.L)
    s0 = _initial_half_width(spec, t, tol)
    total, err, _ = adaptive_gk(integrand, _breaks(n, sigma, t, -s0, s0, width), abs_tol=tol / 4)
    while True:
        lo, _, _ = adaptive_gk(integrand, _breaks(n, sigma, t, -2 * s0, -s0, width), abs_tol=tol / 8)
        hi, _, _ = adaptive_gk(integrand, _breaks(n, sigma, t, s0, 2 * s0, width), abs_tol=tol / 8)
        total += lo + hi
        s0 *= 2
        if abs(lo + hi) < tol:
            break
    return total, err + worst[0] * K_l1(spec) + tol


def lhs_convolution_eval(n: int, sigma: float, t: float, spec: KernelSpec,
                         tol: float = 1e-8, refine: int = 1) -> tuple[float, float]:
    """(value, error estimate) of int S_n(sigma, t + s) K(s) ds."""
    if t == 0:
        raise DomainError("t != 0 required")

    def fun(taus):
        return S_n_array(n, sigma, taus, refine)

    return _convolve(fun, n, sigma, float(t), spec, tol)


def lhs_convolution(n: int, sigma: float, t: float, spec: KernelSpec, tol: float = 1e-8,
                    refine: int = 1) -> float:
    return float(lhs_convolution_eval(n, sigma, t, spec, tol, refine)[0])


def selberg_logzeta_convolution(sigma: float, t: float, spec: KernelSpec, method: str = "auto",
                                tol: float = 1e-8) -> tuple[ComplexValue, ComplexValue]:
    """Both sides of int log zeta(sigma + i(t+u)) K(u) du = sum Lambda(m) K_hat(..)/(m^{s} log m)."""
    if not 0.5 <= sigma <= 2:
        raise DomainError("sigma must lie in [1/2, 2]")
    if t == 0:
        raise DomainError("t != 0 required")
    grid = _walk_grid(sigma)

    def fun(taus):
        ta = np.abs(taus)
        logz, relerr, _ = log_zeta_walk(ta, grid)
        z = logz[:, -1]
        z = np.where(taus < 0, np.conj(z), z)
        return z, relerr[:, -1]

    lhs, lerr = _convolve(fun, 0, sigma, float(t), spec, tol)
    ps = prime_sum(0, sigma, t, spec, method)
    return ComplexValue.of(lhs, lerr), ComplexValue.of(ps.value, ps.err)


def inner_integral_check(m: int, n: int, sigma: float = 0.5) -> tuple[float, float, float, float]:
    """Compare int_sigma^2 (u-sigma)^{n-1} m^{-u} du with (n-1)!/(m^sigma (log m)^n).

    Returns ``(quadrature, closed_form, deviation, allowed)`` with
    ``allowed = 10 m^{-3/2} (log m)^{-n}``.
    """
    if m < 2 or n < 1:
        raise DomainError("need m >= 2 and n >= 1")
    x, w = gauss_legendre(40)
    u = sigma + (2 - sigma) * (x + 1) / 2
    quad = float(((u - sigma) ** (n - 1) * float(m) ** (-u)) @ w * (2 - sigma) / 2)
    lm = math.log(m)
    closed = math.factorial(n - 1) / (m**sigma * lm**n)
    return quad, closed, abs(quad - closed), 10 * m**-1.5 * lm**-n


def convolution_report(n: int, sigma: float, t: float, spec: KernelSpec | None = None,
                       method: str = "auto", refine: int = 1) -> ConvolutionReport:
    """lhs, rhs and the error scale V_{1/2}(t) + ||K||_1 at one grid point (L = log log t)."""
    if t == 0:
        raise DomainError("t != 0 required")
    if spec is None:
        spec = KernelSpec(n, math.log(math.log(abs(t))))
    lhs, lerr = lhs_convolution_eval(n, sigma, t, spec, refine=refine)
    ps = prime_sum(n, sigma, t, spec, method)
    rhs = float((1j**n * ps.value).imag / math.pi)
    return ConvolutionReport(
        n=n, sigma=float(sigma), t=float(t), lhs=float(lhs), rhs=rhs, residual=abs(lhs - rhs),
        v_term=V_sigma(spec, 0.5, t), k_l1=K_l1(spec), lhs_err=float(lerr),
        rhs_err=ps.err / math.pi, method=ps.method)


def measure_rho(grid: dict = PILOT_GRID) -> float:
    """Recompute the calibration scalar on a grid (slow: about two minutes on the pilot grid)."""
    worst = 0.0
    for n in grid["n"]:
        for sigma in grid["sigma"]:
            for t in grid["t"]:
                r = convolution_report(n, sigma, t)
                worst = max(worst, r.residual / (r.v_term + r.k_l1))
    return worst
