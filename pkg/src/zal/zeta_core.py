"""Zeta evaluation in the strip, branch-tracked log zeta, primes and Lambda.

The workhorse is :func:`zeta_array`, an Euler-Maclaurin evaluator vectorised
over arbitrary arrays of complex arguments.  Phases ``t log n`` are reduced
in extended precision before the trig calls so that the partial sums keep
~1e-15 relative accuracy up to heights of a few thousand.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy.optimize import brentq
from scipy.special import loggamma

from zal.errors import OnZero, PoleAtOne, PrecisionUnreachable

__all__ = [
    "ComplexValue",
    "EvalPrecision",
    "PrimeTable",
    "ZERO_TOL",
    "zeta",
    "zeta_array",
    "log_zeta_on_path",
    "log_zeta_walk",
    "von_mangoldt",
    "von_mangoldt_table",
    "prime_powers",
    "primes_up_to",
    "primes_in",
    "hardy_theta",
    "hardy_z",
    "find_zero_ordinates",
    "zero_ordinates",
]

# |zeta| below this at the end of the path counts as "on a zero"
ZERO_TOL = 1e-8
# max accepted arg increment per step of the walk
WALK_STEP_ARG = math.pi / 4

_TWO_PI_LD = np.longdouble(8) * np.arctan(np.longdouble(1))
_EPS = np.finfo(float).eps
# B_{2k}/(2k)! for k = 1..60
_BERN = np.array(
    [float(mpmath.bernoulli(2 * k) / mpmath.factorial(2 * k)) for k in range(1, 61)]
)
_MAX_CELLS = 1_500_000


@dataclass(frozen=True)
class ComplexValue:
    re: float
    im: float
    abs_err: float = 0.0

    def __post_init__(self):
        if not (self.abs_err >= 0.0 and math.isfinite(self.abs_err)):
            raise ValueError(f"abs_err must be finite and >= 0, got {self.abs_err}")

    @classmethod
    def of(cls, z: complex, abs_err: float = 0.0) -> "ComplexValue":
        z = complex(z)
        return cls(z.real, z.imag, float(abs_err))

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)

    def __abs__(self) -> float:
        return abs(self.value)


@dataclass(frozen=True)
class EvalPrecision:
    target_abs_err: float = 1e-12
    max_terms: int = 1_000_000

    def __post_init__(self):
        if not self.target_abs_err > 0:
            raise ValueError("target_abs_err must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


DEFAULT_PREC = EvalPrecision()


# --------------------------------------------------------------------------
# Euler-Maclaurin
# --------------------------------------------------------------------------


def _cutoff(t_abs: np.ndarray) -> np.ndarray:
    n = np.maximum(16, np.ceil(0.4 * t_abs) + 8)
    # bucket to multiples of 16 so that batches share a cutoff
    return (16 * np.ceil(n / 16)).astype(np.int64)


def _reduced_phase(t: np.ndarray, logn_ld: np.ndarray) -> np.ndarray:
    ph = np.multiply.outer(t.astype(np.longdouble), logn_ld)
    ph -= _TWO_PI_LD * np.rint(ph / _TWO_PI_LD)
    return ph.astype(float)


def _em_block(s: np.ndarray, N: int) -> tuple[np.ndarray, np.ndarray]:
    sig, t = s.real, s.imag
    n = np.arange(1, N, dtype=float)
    logn = np.log(n)
    logn_ld = np.log(np.arange(1, N, dtype=np.longdouble))
    mag = np.exp(-np.multiply.outer(sig, logn))
    ph = _reduced_phase(t, logn_ld)
    head = (mag * np.cos(ph)).sum(axis=1) - 1j * (mag * np.sin(ph)).sum(axis=1)
    magsum = mag.sum(axis=1)

    logN_ld = np.log(np.longdouble(N))
    phN = _reduced_phase(t, np.array([logN_ld]))[:, 0]
    Nms = np.exp(-sig * math.log(N)) * np.exp(-1j * phN)  # N^{-s}
    total = head + N * Nms / (s - 1.0) + 0.5 * Nms

    P = s * Nms / N  # (s)_1 N^{-s-1}
    last = np.zeros(s.shape)
    k = 0
    for k in range(1, len(_BERN)):
        term = _BERN[k - 1] * P
        total = total + term
        last = np.abs(term)
        if np.all(last <= 1e-18 * np.maximum(1.0, np.abs(total))):
            break
        P = P * (s + 2 * k - 1) * (s + 2 * k) / (N * N)
    nxt = np.abs(_BERN[k] * P * (s + 2 * k - 1) * (s + 2 * k) / (N * N))
    tail = nxt * np.abs(s + 2 * k + 1) / (sig + 2 * k + 1)
    err = tail + 8 * _EPS * (magsum + np.abs(total))
    return total, err


def zeta_array(s) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised zeta(s) for Re(s) > 0, returning ``(values, abs_err)``.

    Points with s == 1 come back as ``inf`` with infinite error; callers that
    need an exception use :func:`zeta`.
    """
    s = np.asarray(s, dtype=complex)
    shape = s.shape
    flat = s.ravel()
    out = np.empty(flat.shape, dtype=complex)
    err = np.empty(flat.shape)
    if flat.size == 0:
        return out.reshape(shape), err.reshape(shape)
    pole = np.abs(flat - 1.0) < 1e-300
    work = np.where(pole, 2.0, flat)
    Ns = _cutoff(np.abs(work.imag))
    for N in np.unique(Ns):
        idx = np.nonzero(Ns == N)[0]
        rows = max(1, _MAX_CELLS // int(N))
        for j in range(0, idx.size, rows):
            sl = idx[j : j + rows]
            v, e = _em_block(work[sl], int(N))
            out[sl] = v
            err[sl] = e
    out[pole] = complex(np.inf, 0.0)
    err[pole] = np.inf
    return out.reshape(shape), err.reshape(shape)


def zeta(s, prec: EvalPrecision = DEFAULT_PREC) -> ComplexValue:
    """zeta(s) for Re(s) > 0 with an absolute error bound."""
    if isinstance(s, ComplexValue):
        s = s.value
    s = complex(s)
    if s == 1:
        raise PoleAtOne("zeta has a simple pole at s = 1")
    if s.real <= 0:
        raise ValueError("zeta is only implemented for Re(s) > 0")
    if int(_cutoff(np.array([abs(s.imag)]))[0]) > prec.max_terms:
        raise PrecisionUnreachable(f"cutoff for |t|={abs(s.imag):g} exceeds max_terms")
    v, e = zeta_array(np.array([s]))
    if not e[0] <= prec.target_abs_err:
        raise PrecisionUnreachable(
            f"zeta({s}) error bound {e[0]:.3g} above target {prec.target_abs_err:.3g}"
        )
    return ComplexValue.of(v[0], e[0])


# --------------------------------------------------------------------------
# log zeta along 2 -> 2+it -> u+it
# --------------------------------------------------------------------------


def log_zeta_walk(ts, us, max_depth: int = 64):
    """Branch-tracked log zeta(u + i t) on a grid.

    ``us`` is a strictly decreasing array of abscissas with ``us[0] <= 2``;
    the walk starts at ``2 + it`` (where Re zeta > 0, so the principal
    argument is the continuous one) and moves left, bisecting any step whose
    argument increment exceeds pi/4.

    Returns ``(logz, abs_err, near_zero)`` with shapes ``(B, U)``, ``(B, U)``
    and ``(B,)``; ``near_zero[b]`` flags rows whose last node has
    ``|zeta| < ZERO_TOL`` or whose refinement hit ``max_depth``.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    us = np.atleast_1d(np.asarray(us, dtype=float))
    if us[0] > 2.0 or np.any(np.diff(us) >= 0):
        raise ValueError("us must be strictly decreasing and start at or below 2")
    lead = us[0] < 2.0
    grid = np.concatenate([[2.0], us]) if lead else us
    B, G = ts.size, grid.size
    Z, E = zeta_array(grid[None, :] + 1j * ts[:, None])
    near_zero = np.abs(Z[:, -1]) < ZERO_TOL

    steps = np.angle(Z[:, 1:] / Z[:, :-1]) if G > 1 else np.zeros((B, 0))
    bad = np.abs(steps) > WALK_STEP_ARG
    if np.any(bad):
        r, c = np.nonzero(bad)
        steps[bad] = 0.0
        a, b = grid[c], grid[c + 1]
        za, zb = Z[r, c], Z[r, c + 1]
        depth = 0
        while r.size:
            depth += 1
            if depth > max_depth:
                near_zero[np.unique(r)] = True
                break
            m = 0.5 * (a + b)
            zm, _ = zeta_array(m + 1j * ts[r])
            nr, nc, na, nb, nza, nzb = [], [], [], [], [], []
            for lo, hi, zlo, zhi in ((a, m, za, zm), (m, b, zm, zb)):
                d = np.angle(zhi / zlo)
                ok = np.abs(d) <= WALK_STEP_ARG
                np.add.at(steps, (r[ok], c[ok]), d[ok])
                keep = ~ok
                nr.append(r[keep]); nc.append(c[keep])
                na.append(lo[keep]); nb.append(hi[keep])
                nza.append(zlo[keep]); nzb.append(zhi[keep])
            r, c = np.concatenate(nr), np.concatenate(nc)
            a, b = np.concatenate(na), np.concatenate(nb)
            za, zb = np.concatenate(nza), np.concatenate(nzb)

    arg = np.angle(Z[:, :1]) + np.concatenate([np.zeros((B, 1)), np.cumsum(steps, axis=1)], axis=1)
    with np.errstate(divide="ignore"):
        logz = np.log(np.abs(Z)) + 1j * arg
        relerr = E / np.abs(Z)
    if lead:
        logz, relerr = logz[:, 1:], relerr[:, 1:]
    return logz, relerr, near_zero


def log_zeta_on_path(sigma: float, t: float, prec: EvalPrecision = DEFAULT_PREC) -> ComplexValue:
    """log zeta(sigma + it) with arg obtained by continuous variation from 2."""
    if not 0.5 <= sigma <= 2.0:
        raise ValueError("sigma must lie in [1/2, 2]")
    if t == 0:
        if sigma == 1.0:
            raise PoleAtOne("path ends on the pole")
        z = zeta(sigma, prec).value
        if sigma > 1:
            return ComplexValue(math.log(z.real), 0.0, 1e-16)
        raise ValueError("t = 0 with sigma < 1 lies on the branch cut; use t -> 0+")
    us = _walk_grid(sigma)
    logz, relerr, near = log_zeta_walk(np.array([t]), us)
    if near[0]:
        raise OnZero(f"zeta({sigma}+{t}i) is within {ZERO_TOL:g} of zero", t=t)
    err = float(relerr[0, -1])
    if err > max(prec.target_abs_err, 1e-6):
        raise PrecisionUnreachable(f"log zeta error {err:.3g} too large")
    return ComplexValue.of(logz[0, -1], err)


def _walk_grid(sigma: float) -> np.ndarray:
    """Coarse initial grid for the horizontal leg, denser near sigma."""
    span = 2.0 - sigma
    if span <= 0:
        return np.array([2.0])
    x = np.linspace(0.0, 1.0, 17)[1:]
    return 2.0 - span * np.sqrt(x)


# --------------------------------------------------------------------------
# Primes and Lambda
# --------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _sieve(limit: int) -> np.ndarray:
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    is_p = np.ones(limit + 1, dtype=bool)
    is_p[:2] = False
    is_p[4::2] = False
    for p in range(3, int(math.isqrt(limit)) + 1, 2):
        if is_p[p]:
            is_p[p * p :: 2 * p] = False
    return np.nonzero(is_p)[0].astype(np.int64)


def primes_up_to(limit: int) -> np.ndarray:
    return _sieve(int(limit)).copy()


@dataclass(frozen=True)
class PrimeTable:
    """All primes <= limit, increasing.  Immutable and shareable."""

    limit: int
    primes: tuple = field(repr=False)

    @classmethod
    def up_to(cls, limit: int) -> "PrimeTable":
        return cls(int(limit), tuple(int(p) for p in _sieve(int(limit))))

    def __post_init__(self):
        ps = self.primes
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError("primes must be strictly increasing")

    def __contains__(self, p) -> bool:
        i = bisect.bisect_left(self.primes, p)
        return i < len(self.primes) and self.primes[i] == p

    def between(self, a: float, b: float) -> list[int]:
        """Primes p in the table with a < p <= b."""
        lo = bisect.bisect_right(self.primes, a)
        hi = bisect.bisect_right(self.primes, b)
        return list(self.primes[lo:hi])


def primes_in(a: float, b: float) -> list[int]:
    """Primes p with a < p <= b."""
    if not (2 <= a < b):
        raise ValueError("need 2 <= a < b")
    ps = _sieve(int(math.floor(b)))
    return [int(p) for p in ps[ps > a]]


def von_mangoldt(m: int) -> float:
    """Lambda(m): log p when m is a power of the prime p, else 0."""
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return 0.0
    p = None
    if m % 2 == 0:
        p = 2
    else:
        f = 3
        while f * f <= m:
            if m % f == 0:
                p = f
                break
            f += 2
        if p is None:
            return math.log(m)
    while m % p == 0:
        m //= p
    return math.log(p) if m == 1 else 0.0


@lru_cache(maxsize=4)
def von_mangoldt_table(limit: int) -> np.ndarray:
    """Array ``lam`` with ``lam[m] = Lambda(m)`` for 0 <= m <= limit."""
    lam = np.zeros(limit + 1)
    for p in _sieve(limit):
        lp = math.log(p)
        pk = int(p)
        while pk <= limit:
            lam[pk] = lp
            pk *= int(p)
    lam.flags.writeable = False
    return lam


@lru_cache(maxsize=4)
def prime_powers(limit: int) -> tuple[np.ndarray, np.ndarray]:
    """All prime powers m <= limit in increasing order, with Lambda(m)."""
    ps = _sieve(int(limit))
    ms, lams = [ps], [np.log(ps.astype(float))]
    q = ps[ps * ps <= limit]
    pk = q * q
    while q.size:
        ms.append(pk)
        lams.append(np.log(q.astype(float)))
        keep = pk <= limit // q
        q, pk = q[keep], pk[keep] * q[keep]
    m = np.concatenate(ms)
    lam = np.concatenate(lams)
    order = np.argsort(m, kind="stable")
    m, lam = m[order], lam[order]
    m.flags.writeable = False
    lam.flags.writeable = False
    return m, lam


# --------------------------------------------------------------------------
# Zeros on the critical line
# --------------------------------------------------------------------------


def hardy_theta(t):
    t = np.asarray(t, dtype=float)
    return np.imag(loggamma(0.25 + 0.5j * t)) - 0.5 * t * math.log(math.pi)


def hardy_z(t):
    """Real-valued rotation exp(i theta(t)) zeta(1/2 + it)."""
    t = np.asarray(t, dtype=float)
    z, _ = zeta_array(0.5 + 1j * t)
    return np.real(np.exp(1j * hardy_theta(t)) * z)


def _count_zeros(T: float) -> int:
    """N(T) = theta(T)/pi + 1 + S(T), rounded; T must not be an ordinate."""
    S = log_zeta_on_path(0.5, T).im / math.pi
    return int(round(float(hardy_theta(T)) / math.pi + 1.0 + S))


def _scan_zeros(t_lo: float, t_hi: float, step: float, xtol: float) -> list[float]:
    n = max(2, int(math.ceil((t_hi - t_lo) / step)) + 1)
    grid = np.linspace(t_lo, t_hi, n)
    z = hardy_z(grid)
    out = []
    for i in np.nonzero(np.sign(z[:-1]) * np.sign(z[1:]) < 0)[0]:
        a, b = grid[i], grid[i + 1]
        out.append(brentq(lambda x: float(hardy_z(x)), a, b, xtol=xtol, rtol=4 * _EPS))
    return out


_ZLOCK = threading.Lock()
_ZCACHE: dict = {"t_max": 0.0, "zeros": np.zeros(0)}


def find_zero_ordinates(t_max: float, prec: EvalPrecision = DEFAULT_PREC) -> list[float]:
    """Ordinates of zeros of zeta(1/2 + it) in (0, t_max].

    Sign changes of Hardy's Z on a grid, refined by Brent's method; the count
    is checked against theta(T)/pi + 1 + S(T) and the grid is refined until
    they agree.
    """
    if t_max <= 14:
        return []
    xtol = max(prec.target_abs_err, 4 * _EPS * t_max)
    T = float(t_max)
    step = 0.05
    for _ in range(5):
        zs = _scan_zeros(1.0, T + 0.06, step, xtol)
        probe = T
        if any(abs(z - T) < 1e-4 for z in zs):
            probe = T + 2e-4
        expected = _count_zeros(probe)
        got = sum(1 for z in zs if z <= probe)
        if got == expected:
            return [z for z in zs if z <= T]
        step /= 4
    raise PrecisionUnreachable(
        f"zero scan up to {t_max} found {got} ordinates, counting function says {expected}"
    )


def zero_ordinates(t_max: float) -> np.ndarray:
    """Cached ordinates in (0, t_max]; extends the cache in chunks of 256."""
    with _ZLOCK:
        if _ZCACHE["t_max"] < t_max:
            new_max = max(256.0, 256.0 * math.ceil(t_max / 256.0))
            _ZCACHE["zeros"] = np.array(find_zero_ordinates(new_max))
            _ZCACHE["t_max"] = new_max
        zs = _ZCACHE["zeros"]
    return zs[zs <= t_max]
