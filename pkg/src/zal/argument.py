"""The tower S_n(sigma, t): direct, recursive and integral-representation routes.

* ``S`` / ``S_array``: (1/pi) arg zeta(sigma + it) along 2 -> 2+it -> sigma+it,
  with the two-sided average at zeros.
* ``S_n_integral``: (1/pi) Im{ i^n/(n-1)! int_sigma^oo (u-sigma)^{n-1} log zeta(u+it) du }
  on a mesh graded towards u = sigma (log-type singularities at zeros).
* ``S_n_recursive``: delta constants plus the repeated integral of S from 0,
  collapsed to a single integral with kernel (t-tau)^{n-1}/(n-1)!.

Everything is evaluated for t > 0 and reflected: S_n(sigma, -t) = (-1)^{n+1} S_n(sigma, t).
At t = 0 the one-sided limit t -> 0+ is returned for n >= 1; for even n the odd
extension therefore has a seam of size 2*delta_n there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaincc, gamma as gamma_fn

from zal.errors import DomainError, QuadratureFailure
from zal.quadrature import adaptive_gk, gk_panels
from zal.zeta_core import log_zeta_walk, zero_ordinates, zeta_array, _walk_grid

__all__ = [
    "ON_ZERO_EPS",
    "SnEvaluation",
    "DeltaConstant",
    "S",
    "S_array",
    "S_n",
    "S_n_array",
    "delta",
    "S_n_integral",
    "S_n_integral_array",
    "S_n_recursive",
    "moment_L1",
]

ON_ZERO_EPS = 1e-6
_TAIL_END = 64.0
_GRADE_Q = 0.25


@dataclass(frozen=True)
class SnEvaluation:
    n: int
    sigma: float
    t: float
    value: float
    method: str  # "branch" | "recursive" | "integral-rep"
    err_est: float

    def __post_init__(self):
        if self.method not in ("branch", "recursive", "integral-rep"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.err_est >= 0:
            raise ValueError("err_est must be >= 0")

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class DeltaConstant:
    n: int
    sigma: float
    value: float
    err_est: float


def _check_sigma(sigma: float, upper: float = 1.0) -> float:
    # delta and the recursive route need sigma <= 1; S and the integral
    # representation make sense up to the start of the path at 2
    sigma = float(sigma)
    if not 0.5 <= sigma <= upper:
        raise DomainError(f"sigma must lie in [1/2, {upper:g}], got {sigma}")
    return sigma


# --------------------------------------------------------------------------
# S = S_0
# --------------------------------------------------------------------------


def _S_positive(sigma: float, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    logz, relerr, near = log_zeta_walk(ts, _walk_grid(sigma))
    return logz[:, -1].imag / math.pi, relerr[:, -1] / math.pi, near


def S_array(sigma: float, ts) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised S(sigma, t); returns ``(values, error_estimates)``."""
    sigma = _check_sigma(sigma, 2.0)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    vals = np.zeros(ts.shape)
    errs = np.zeros(ts.shape)
    nz = ts != 0
    if not np.any(nz):
        return vals, errs
    ta = np.abs(ts[nz])
    v, e, near = _S_positive(sigma, ta)
    if np.any(near):
        tz = ta[near]
        both = np.concatenate([tz - ON_ZERO_EPS, tz + ON_ZERO_EPS])
        vz, ez, _ = _S_positive(sigma, both)
        k = tz.size
        v[near] = 0.5 * (vz[:k] + vz[k:])
        e[near] = 0.5 * (ez[:k] + ez[k:])
    vals[nz] = np.sign(ts[nz]) * v
    errs[nz] = e
    return vals, errs


def S(sigma: float, t: float) -> float:
    """(1/pi) arg zeta(sigma + it), midpoint convention on zeros, odd in t."""
    return float(S_array(sigma, [t])[0][0])


# --------------------------------------------------------------------------
# Integral representation
# --------------------------------------------------------------------------


def _dedupe(pts, lo, hi):
    pts = np.unique(np.clip(np.asarray(pts, dtype=float), lo, hi))
    keep = np.concatenate([[True], np.diff(pts) > 1e-14 * max(1.0, hi)])
    return pts[keep]


def _subdivide(breaks, refine):
    if refine == 1:
        return breaks
    out = [np.linspace(a, b, refine + 1)[:-1] for a, b in zip(breaks[:-1], breaks[1:])]
    return np.concatenate(out + [breaks[-1:]])


def _strip_breaks(sigma: float, near_pole: bool, refine: int) -> np.ndarray:
    """Breakpoints on [sigma, 2]: graded at sigma, uniform above, graded at 1 if needed."""
    q = _GRADE_Q
    pts = [sigma, 2.0]
    pts += [sigma + 0.25 * q**k for k in range(13)]
    pts += list(np.arange(sigma + 0.25, 2.0, 0.125))
    if near_pole:
        pts += [1.0] + [1.0 + s * 0.25 * q**k for k in range(17) for s in (-1, 1)]
    return _subdivide(_dedupe(pts, sigma, 2.0), refine)


_TAIL_BREAKS = np.array([2.0, 2.5, 3.0, 4.0, 5.5, 7.5, 10.0, 14.0, 20.0, 28.0, 40.0, _TAIL_END])


def _tail_bound(n: int, sigma: float) -> float:
    # int_U^oo (u - sigma)^{n-1} 2^{1-u} du using |log zeta(u+it)| <= 2 * 2^{-u}
    ln2 = math.log(2.0)
    x = (_TAIL_END - sigma) * ln2
    return 2.0 ** (1 - sigma) * gammaincc(n, x) * gamma_fn(n) / ln2**n


@lru_cache(maxsize=64)
def _rep_rule(n: int, sigma: float, near_pole: bool, refine: int):
    """Nodes/weights for int_sigma^U (u-sigma)^{n-1}/(n-1)! g(u) du."""
    fact = math.factorial(n - 1)
    x, wk, wg = gk_panels(_strip_breaks(sigma, near_pole, refine))
    x, wk, wg = x.ravel(), wk.ravel(), wg.ravel()
    order = np.argsort(-x)
    x, wk, wg = x[order], wk[order], wg[order]
    pw = (x - sigma) ** (n - 1) / fact
    tx, twk, twg = gk_panels(_subdivide(_TAIL_BREAKS, refine))
    tx, twk, twg = tx.ravel(), twk.ravel(), twg.ravel()
    tpw = (tx - sigma) ** (n - 1) / fact
    return x, wk * pw, wg * pw, tx, twk * tpw, twg * tpw, _tail_bound(n, sigma) / fact


def _weighted_log_zeta_integral(n, sigma, ts, refine=1):
    """I(t) = int_sigma^oo (u-sigma)^{n-1}/(n-1)! log zeta(u+it) du for t > 0.

    Returns ``(I_kronrod, |I_kronrod - I_gauss| + tail + eval error)``.
    """
    ts = np.asarray(ts, dtype=float)
    out = np.zeros(ts.shape, dtype=complex)
    err = np.zeros(ts.shape)
    for near_pole in (False, True):
        sel = (ts < 1.0) if near_pole else (ts >= 1.0)
        if not np.any(sel):
            continue
        x, wk, wg, tx, twk, twg, tb = _rep_rule(n, sigma, near_pole, refine)
        tsel = ts[sel]
        logz, relerr, _ = log_zeta_walk(tsel, x)
        tz, terr = zeta_array(tx[None, :] + 1j * tsel[:, None])
        tlog = np.log(tz)
        ik = logz @ wk + tlog @ twk
        ig = logz @ wg + tlog @ twg
        out[sel] = ik
        err[sel] = (np.abs(ik - ig) + tb
                    + np.where(np.isfinite(relerr), relerr, 0.0) @ np.abs(wk)
                    + (terr / np.abs(tz)) @ np.abs(twk))
    return out, err


def S_n_integral_array(n: int, sigma: float, ts, refine: int = 1):
    """Vectorised integral-representation S_n for n >= 1 and t != 0."""
    if n < 1:
        raise DomainError("integral representation needs n >= 1")
    sigma = _check_sigma(sigma, 2.0)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts == 0):
        raise DomainError("integral representation needs t != 0")
    ta = np.abs(ts)
    I, e = _weighted_log_zeta_integral(n, sigma, ta, refine)
    val = (1j**n * I).imag / math.pi
    parity = np.where(ts < 0, (-1.0) ** (n + 1), 1.0)
    return parity * val, e / math.pi


def S_n_integral(n: int, sigma: float, t: float, refine: int = 1) -> SnEvaluation:
    v, e = S_n_integral_array(n, sigma, [t], refine)
    return SnEvaluation(n, float(sigma), float(t), float(v[0]), "integral-rep", float(e[0]))


# --------------------------------------------------------------------------
# delta constants
# --------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _delta_odd(n: int, sigma: float, refine: int) -> tuple[float, float]:
    k = (n + 1) // 2
    fact = math.factorial(2 * k - 2)
    q = _GRADE_Q
    pts = [sigma, 2.0, 1.0] + list(np.arange(sigma, 2.0, 0.125))
    pts += [1.0 + s * 0.25 * q**j for j in range(18) for s in (-1, 1)]
    breaks = _subdivide(_dedupe(pts, sigma, 2.0), refine)
    x, wk, wg = gk_panels(breaks)
    tb = np.append(breaks[-1], _subdivide(_TAIL_BREAKS, refine)[1:])
    tx, twk, twg = gk_panels(tb)
    xs = np.concatenate([x.ravel(), tx.ravel()])
    wks = np.concatenate([wk.ravel(), twk.ravel()])
    wgs = np.concatenate([wg.ravel(), twg.ravel()])
    z, zerr = zeta_array(xs.astype(complex))
    g = (xs - sigma) ** (2 * k - 2) * np.log(np.abs(z.real))
    ik, ig = g @ wks, g @ wgs
    err = abs(ik - ig) + _tail_bound(2 * k - 1, sigma) + (zerr / np.abs(z)) @ np.abs(wks)
    c = (-1) ** (k - 1) / (math.pi * fact)
    return c * ik, abs(c) * err


def delta(n: int, sigma: float, refine: int = 1) -> DeltaConstant:
    """Integration constant delta_{n, sigma}."""
    if n < 1:
        raise DomainError("delta is defined for n >= 1")
    sigma = _check_sigma(sigma)
    if n % 2 == 0:
        k = n // 2
        val = (-1) ** (k - 1) * (1.0 - sigma) ** (2 * k) / math.factorial(2 * k)
        return DeltaConstant(n, sigma, val, 0.0)
    val, err = _delta_odd(n, sigma, refine)
    if err > 1e-8:
        raise QuadratureFailure(f"delta_{n} error estimate {err:.3g} exceeds 1e-8")
    return DeltaConstant(n, sigma, val, err)


# --------------------------------------------------------------------------
# Recursive route and dispatch
# --------------------------------------------------------------------------


def _jump_breaks(sigma: float, a: float, b: float, max_width: float) -> np.ndarray:
    pts = [a, b]
    if sigma < 0.75 and b > 14:
        zs = zero_ordinates(b)
        pts += list(zs[(zs > a) & (zs < b)])
    pts = np.unique(pts)
    out = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        m = max(1, int(math.ceil((hi - lo) / max_width)))
        out.append(np.linspace(lo, hi, m + 1)[:-1])
    return np.concatenate(out + [pts[-1:]])


def S_n_recursive(n: int, sigma: float, t: float, tol: float = 1e-10) -> SnEvaluation:
    """S_n via the delta constants and the repeated integral of S from 0.

    Uses int_0^t S_{n-1} = sum_j delta_j t^{n-1-j}/(n-1-j)! + int_0^t
    (t - tau)^{n-1}/(n-1)! S(tau) dtau, with panels split at zero ordinates.
    """
    if n < 1:
        raise DomainError("recursive route needs n >= 1")
    sigma = _check_sigma(sigma)
    t = float(t)
    if t < 0:
        r = S_n_recursive(n, sigma, -t, tol)
        return SnEvaluation(n, sigma, t, (-1) ** (n + 1) * r.value, "recursive", r.err_est)
    poly, perr = 0.0, 0.0
    for j in range(1, n + 1):
        d = delta(j, sigma)
        c = t ** (n - j) / math.factorial(n - j)
        poly += d.value * c
        perr += d.err_est * c
    if t == 0:
        return SnEvaluation(n, sigma, t, poly, "recursive", perr)
    fact = math.factorial(n - 1)
    worst = [0.0]

    def integrand(tau):
        v, e = S_array(sigma, tau)
        worst[0] = max(worst[0], float(e.max()))
        return (t - tau) ** (n - 1) / fact * v

    # tol is relative to the size of the weight (t - tau)^{n-1}/(n-1)!
    scale = max(1.0, t ** (n - 1) / fact)
    I, e, _ = adaptive_gk(integrand, _jump_breaks(sigma, 0.0, t, 1.0), abs_tol=tol * scale)
    err = e + perr + worst[0] * t**n / math.factorial(n)
    return SnEvaluation(n, sigma, t, poly + I, "recursive", err)


def S_n_array(n: int, sigma: float, ts, refine: int = 1):
    """S_n at many points: branch walk for n = 0, integral representation otherwise.

    At t = 0 returns 0 for n = 0 and delta_n (the t -> 0+ limit) for n >= 1.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if n == 0:
        return S_array(sigma, ts)
    vals = np.empty(ts.shape)
    errs = np.zeros(ts.shape)
    z = ts == 0
    if np.any(z):
        d = delta(n, sigma)
        vals[z], errs[z] = d.value, d.err_est
    if np.any(~z):
        vals[~z], errs[~z] = S_n_integral_array(n, sigma, ts[~z], refine)
    return vals, errs


def S_n(n: int, sigma: float, t: float) -> float:
    return float(S_n_array(n, sigma, [t])[0][0])


def moment_L1(n: int, sigma: float, T: float, rel_tol: float = 1e-6) -> float:
    """int_0^T |S_n(sigma, t)| dt, panels split at zero ordinates."""
    if T < 2:
        raise DomainError("moment_L1 needs T >= 2")
    sigma = _check_sigma(sigma)

    def integrand(tau):
        return np.abs(S_n_array(n, sigma, tau)[0])

    val, _, _ = adaptive_gk(integrand, _jump_breaks(sigma, 0.0, float(T), 2.0),
                            abs_tol=1e-9 * T, rel_tol=rel_tol)
    return val
