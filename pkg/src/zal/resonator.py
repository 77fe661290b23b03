"""Resonator construction: prime window, weights f, the set M, binned M' with weights r.

Members of supp(f) are squarefree products of window primes and are stored as
bitmasks over ``window.primes`` (products overflow int64 already for ~10 primes
near 500); exact integers are only built when binning needs them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import mpmath
import numpy as np

from zal.argument import S_n_array
from zal.errors import NotInSupport, TooLarge, TooSmall
from zal.zeta_core import primes_in

__all__ = [
    "EXACT_CAP",
    "ResonatorParams",
    "PrimeWindow",
    "WeightFunction",
    "ResonatorSet",
    "CardinalityReport",
    "ScanRecord",
    "build_params",
    "build_window",
    "build_weights",
    "f_value",
    "alpha_k",
    "beta_k",
    "enumerate_M",
    "check_cardinality",
    "prime_sum_bracket",
    "gcd_sum_ratio",
    "gcd_shape",
    "build_Mprime",
    "bin_multiplicity",
    "R_eval",
    "R2_eval",
    "weighted_norm",
    "resonance_integral",
    "search_extreme",
    "decile_contrast",
    "filtration_mass",
]

EXACT_CAP = 24


@dataclass(frozen=True)
class ResonatorParams:
    T: float
    beta: float
    kappa: float
    sigma: float
    N: int
    logN: float = field(init=False)
    log2N: float = field(init=False)
    log3N: float = field(init=False)

    def __post_init__(self):
        if not 0 <= self.beta < 1:
            raise ValueError("beta must lie in [0, 1)")
        if abs(self.kappa - (1 - self.beta) / 2) > 1e-15:
            raise ValueError("kappa must equal (1 - beta)/2")
        logN = math.log(self.N) if self.N >= 1 else -math.inf
        log2N = math.log(logN) if logN > 0 else -math.inf
        log3N = math.log(log2N) if log2N > 0 else -math.inf
        object.__setattr__(self, "logN", logN)
        object.__setattr__(self, "log2N", log2N)
        object.__setattr__(self, "log3N", log3N)
        if log3N <= 0:
            raise TooSmall(f"log log log N must be positive (N = {self.N})")
        if not 0.5 <= self.sigma <= 0.5 + 1 / log2N + 1e-15:
            raise ValueError("sigma must lie in [1/2, 1/2 + 1/log log N]")

    @property
    def base(self) -> float:
        """log N * log log N, the unit of the prime window."""
        return self.logN * self.log2N


def build_params(T: float, beta: float = 0.0, sigma_mode: str = "half") -> ResonatorParams:
    """kappa = (1-beta)/2, N = floor(T^kappa), sigma = 1/2 or 1/2 + 1/log log N."""
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    if not T > 1:
        raise TooSmall("T must exceed 1")
    kappa = (1 - beta) / 2
    N = int(math.floor(T**kappa))
    if N < 16:
        raise TooSmall(f"N = floor(T^kappa) = {N} is too small for log log log N > 0")
    log2N = math.log(math.log(N))
    if math.log(log2N) <= 0:
        raise TooSmall(f"log log log N <= 0 at N = {N}")
    if sigma_mode == "half":
        sigma = 0.5
    elif sigma_mode == "edge":
        sigma = 0.5 + 1 / log2N
    else:
        raise ValueError(f"unknown sigma mode {sigma_mode!r}")
    params = ResonatorParams(float(T), float(beta), kappa, sigma, N)
    build_window(params)  # rejects an empty or degenerate window
    return params


@dataclass(frozen=True)
class PrimeWindow:
    lo: float
    hi: float
    primes: tuple
    K_max: int
    windows: tuple  # ((lo_k, hi_k, primes_k), ...) for k = 1..K_max, clipped to (lo, hi]

    def index(self, p: int) -> int:
        return self.primes.index(p)

    def window_masks(self) -> list[int]:
        out = []
        for _, _, ps in self.windows:
            m = 0
            for p in ps:
                m |= 1 << self.index(p)
            out.append(m)
        return out

    def prefix(self, count: int) -> "PrimeWindow":
        """Window cut back to its first ``count`` primes (nested sub-instances)."""
        if not 1 <= count <= len(self.primes):
            raise ValueError(f"count must lie in 1..{len(self.primes)}")
        ps = self.primes[:count]
        hi = float(ps[-1])
        windows = tuple((a, min(b, hi), tuple(p for p in q if p <= hi)) for a, b, q in self.windows)
        return PrimeWindow(self.lo, hi, ps, self.K_max, windows)


def build_window(params: ResonatorParams) -> PrimeWindow:
    base = params.base
    lo = math.e * base
    hi = math.exp(params.log2N ** 0.125) * base
    if hi <= lo:
        raise TooSmall("prime window is empty: (log log N)^{1/8} <= 1")
    primes = tuple(int(p) for p in primes_in(lo, hi))
    K_max = int(math.floor(params.log2N ** 0.125))
    windows = []
    for k in range(1, K_max + 1):
        a, b = math.exp(k) * base, min(math.exp(k + 1) * base, hi)
        windows.append((a, b, tuple(p for p in primes if a < p <= b)))
    for p in primes:
        if math.log(p) - params.log2N - params.log3N <= 0:
            raise TooSmall(f"weight denominator not positive at p = {p}")
    return PrimeWindow(lo, hi, primes, K_max, tuple(windows))


@dataclass(frozen=True)
class WeightFunction:
    values: dict  # prime -> f(p)

    def __call__(self, p: int) -> float:
        return self.values[p]


def build_weights(params: ResonatorParams, window: PrimeWindow) -> WeightFunction:
    s = params.sigma
    scale = params.logN ** (1 - s) * params.log2N**s / params.log3N ** (1 - s)
    vals = {}
    for p in window.primes:
        den = math.log(p) - params.log2N - params.log3N
        if den <= 0:
            raise TooSmall(f"weight denominator not positive at p = {p}")
        vals[p] = scale / (p**s * den)
    return WeightFunction(vals)


def f_value(n: int, w: WeightFunction) -> float:
    """f(n) = prod_{p | n} f(p) on squarefree n built from window primes."""
    n = int(n)
    if n < 1:
        raise NotInSupport(f"{n} is not a positive integer")
    out = 1.0
    for p in sorted(w.values):
        if n % p == 0:
            n //= p
            if n % p == 0:
                raise NotInSupport("f vanishes off squarefree integers")
            out *= w.values[p]
    if n != 1:
        raise NotInSupport("integer has a prime factor outside the window")
    return out


def _shape(params: ResonatorParams) -> float:
    s = params.sigma
    return (params.logN / params.log3N) ** (2 - 2 * s)


def alpha_k(k: int, params: ResonatorParams) -> float:
    return 3 * _shape(params) / k**2


def beta_k(k: int, params: ResonatorParams, d: float = 0.1) -> float:
    if not 0 < d < 1:
        raise ValueError("d must lie in (0, 1)")
    return d * _shape(params) / (12 * k**2)


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    c = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        c += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return c


@dataclass
class ResonatorSet:
    """M (as bitmasks over the window primes) and, once binned, M' with weights r."""

    params: ResonatorParams
    window: PrimeWindow
    weights: WeightFunction
    masks: np.ndarray | None  # int64 bitmasks of M, sorted by the integer they encode
    log_m: np.ndarray | None
    f: np.ndarray | None
    alphas: tuple
    exact: bool = True
    estimates: dict = field(default_factory=dict)
    M_prime: list | None = None  # integers m_j
    r: np.ndarray | None = None
    J: list | None = None
    log_mprime: np.ndarray | None = None

    @property
    def size(self) -> int:
        if self.masks is None:
            raise TooLarge("M was only sampled")
        return int(self.masks.size)

    def integers(self) -> list[int]:
        ps = self.window.primes
        out = []
        for mk in self.masks.tolist():
            v, i = 1, 0
            while mk:
                if mk & 1:
                    v *= ps[i]
                mk >>= 1
                i += 1
            out.append(v)
        return out

    def divisor_closed(self) -> bool:
        if self.masks is None:
            raise TooLarge("M was only sampled")
        members = np.sort(self.masks)
        for i in range(len(self.window.primes)):
            bit = np.int64(1 << i)
            has = self.masks[(self.masks & bit) != 0]
            if has.size and not np.all(np.isin(has ^ bit, members)):
                return False
        return True


def _excluded(masks: np.ndarray, wmasks: list[int], alphas) -> np.ndarray:
    out = np.zeros(masks.shape, dtype=bool)
    for wm, a in zip(wmasks, alphas):
        out |= _popcount(masks & np.int64(wm)) >= a
    return out


def _mask_logs(masks: np.ndarray, window: PrimeWindow, w: WeightFunction):
    logm = np.zeros(masks.shape)
    logf = np.zeros(masks.shape)
    for i, p in enumerate(window.primes):
        on = ((masks >> i) & 1).astype(bool)
        logm[on] += math.log(p)
        logf[on] += math.log(w(p))
    return logm, logf


def enumerate_M(params: ResonatorParams, w: WeightFunction | None = None,
                window: PrimeWindow | None = None, mode: str = "auto", samples: int = 200_000,
                seed: int = 0, alphas=None) -> ResonatorSet:
    """M = supp(f) minus the members with at least alpha_k prime factors in P_k.

    ``mode`` is "exact" (|P| <= 24), "sampled", or "auto". ``alphas`` overrides
    the thresholds (one per subwindow).
    """
    window = window or build_window(params)
    w = w or build_weights(params, window)
    if alphas is None:
        alphas = tuple(alpha_k(k, params) for k in range(1, window.K_max + 1))
    alphas = tuple(alphas)
    P = len(window.primes)
    if mode == "auto":
        mode = "exact" if P <= EXACT_CAP else "sampled"
    if mode == "exact":
        if P > EXACT_CAP:
            raise TooLarge(f"|P| = {P} exceeds the exact enumeration cap {EXACT_CAP}")
        masks = np.arange(1 << P, dtype=np.int64)
        masks = masks[~_excluded(masks, window.window_masks(), alphas)]
        logm, logf = _mask_logs(masks, window, w)
        order = np.argsort(logm, kind="stable")
        return ResonatorSet(params, window, w, masks[order], logm[order], np.exp(logf[order]),
                            alphas, exact=True)
    if mode == "sampled":
        est = _sample_estimates(params, window, w, alphas, samples, seed)
        return ResonatorSet(params, window, w, None, None, None, alphas, exact=False, estimates=est)
    raise ValueError(f"unknown mode {mode!r}")


def _sample_masks(probs: np.ndarray, count: int, rng) -> np.ndarray:
    bits = rng.random((count, probs.size)) < probs
    return bits


def _sample_estimates(params, window, w, alphas, samples, seed):
    """Monte Carlo for |M|, the f^2-mass of M and the gcd-sum ratio (with standard errors).

    |M| uses uniform subsets; the other two draw n with probability f(n)^2 / sum f^2,
    i.e. each prime independently with probability f(p)^2 / (1 + f(p)^2).
    """
    rng = np.random.default_rng(seed)
    ps = window.primes
    fp = np.array([w(p) for p in ps])
    P = len(ps)
    win_idx = [np.array([ps.index(p) for p in pk], dtype=int) for _, _, pk in window.windows]

    def excluded(bits):
        out = np.zeros(bits.shape[0], dtype=bool)
        for idx, a in zip(win_idx, alphas):
            if idx.size:
                out |= bits[:, idx].sum(axis=1) >= a
        return out

    uni = _sample_masks(np.full(P, 0.5), samples, rng)
    inM = ~excluded(uni)
    frac = inM.mean()
    size = frac * 2.0**P
    size_se = math.sqrt(frac * (1 - frac) / samples) * 2.0**P

    q = fp**2 / (1 + fp**2)
    wb = _sample_masks(q, samples, rng)
    inMw = ~excluded(wb)
    inner = wb.astype(float) @ (1.0 / (fp * np.array(ps, dtype=float) ** params.sigma))
    g = np.where(inMw, inner, 0.0)
    return {
        "samples": samples,
        "seed": seed,
        "size_M": float(size),
        "size_M_se": float(size_se),
        "mass_M": float(inMw.mean()),
        "mass_M_se": float(inMw.std(ddof=1) / math.sqrt(samples)),
        "ratio": float(g.mean()),
        "ratio_se": float(g.std(ddof=1) / math.sqrt(samples)),
        "sum_f2_support": float(np.prod(1 + fp**2)),
    }


@dataclass(frozen=True)
class CardinalityReport:
    size_M: int
    N: int
    ratio: float
    ok: bool


def check_cardinality(rset: ResonatorSet, params: ResonatorParams | None = None) -> CardinalityReport:
    params = params or rset.params
    size = rset.size
    return CardinalityReport(size, params.N, size / params.N, size <= params.N)


def prime_sum_bracket(params: ResonatorParams, k: int, d: float = 0.1,
                      window: PrimeWindow | None = None) -> dict:
    """sum_{p in P_k} p^{-2 sigma} against d/(log log N)^{2 sigma} and 2/(log log N)^{2 sigma}."""
    window = window or build_window(params)
    if not 1 <= k <= window.K_max:
        raise ValueError(f"k must lie in 1..{window.K_max}")
    ps = window.windows[k - 1][2]
    if not ps:
        raise ValueError(f"P_{k} is empty")
    s2 = 2 * params.sigma
    total = math.fsum(p**-s2 for p in ps)
    scale = params.log2N**-s2
    lower, upper = d * scale, 2 * scale
    return {"k": k, "sum": total, "lower": lower, "upper": upper,
            "above_lower": total > lower, "below_upper": total < upper}


def gcd_shape(params: ResonatorParams) -> float:
    s = params.sigma
    return params.logN ** (1 - s) * params.log3N**s / params.log2N**s


def gcd_sum_ratio(rset: ResonatorSet, w: WeightFunction | None = None,
                  params: ResonatorParams | None = None) -> float:
    """(1/sum_l f(l)^2) sum_{n in M} f(n)^2 sum_{p | n} 1/(f(p) p^sigma).

    The normaliser runs over all of supp(f) and equals prod_p (1 + f(p)^2).
    In sampled mode the Monte Carlo estimate is returned.
    """
    w = w or rset.weights
    params = params or rset.params
    if not rset.exact:
        return rset.estimates["ratio"]
    ps = rset.window.primes
    fp = np.array([w(p) for p in ps])
    total = float(np.prod(1 + fp**2))
    c = 1.0 / (fp * np.array(ps, dtype=float) ** params.sigma)
    inner = np.zeros(rset.masks.shape)
    for i in range(len(ps)):
        inner += ((rset.masks >> i) & 1) * c[i]
    return math.fsum((rset.f**2 * inner).tolist()) / total


def _bin_index(m: int, T: float) -> int:
    """floor(log m / log(1 + 1/T)), exact."""
    if m == 1:
        return 0
    digits = int(math.log10(max(T, 10.0))) + 2 * len(str(m)) + 30
    with mpmath.workdps(digits):
        q = 1 + 1 / mpmath.mpf(T)
        j = int(mpmath.floor(mpmath.log(m) / mpmath.log(q)))
        # guard the floor against rounding at a bin edge
        while q**j > m:
            j -= 1
        while q ** (j + 1) <= m:
            j += 1
    return j


def _at_power(m: int, T: float, j: int) -> bool:
    digits = int(math.log10(max(T, 10.0))) + 2 * len(str(m)) + 30
    with mpmath.workdps(digits):
        return mpmath.almosteq(mpmath.mpf(m), (1 + 1 / mpmath.mpf(T)) ** j, rel_eps=mpmath.mpf(10) ** (-digits + 10))


def build_Mprime(rset: ResonatorSet, params: ResonatorParams | None = None,
                 w: WeightFunction | None = None) -> ResonatorSet:
    """Bin M by powers of (1 + 1/T); m_j = bin minimum, r(m_j)^2 = f^2-mass of bins j-1..j+2."""
    params = params or rset.params
    if not rset.exact:
        raise TooLarge("M' needs an exactly enumerated M")
    ints = rset.integers()
    T = params.T
    f2 = rset.f**2
    big = max(ints)
    if T > 3.01 * big:
        # consecutive integers differ by a factor > (1 + 1/T)^3: singleton bins
        J = [_bin_index(m, T) for m in ints] if len(ints) <= 4096 else None
        rset.M_prime = list(ints)
        rset.r = rset.f.copy()
        rset.J = J
        rset.log_mprime = rset.log_m.copy()
        return rset
    js = np.array([_bin_index(m, T) for m in ints], dtype=object)
    bins: dict = {}
    for idx, j in enumerate(js):
        bins.setdefault(j, []).append(idx)
    J = sorted(bins)
    mp, r = [], []
    for j in J:
        mp.append(min(ints[i] for i in bins[j]))
        mass = 0.0
        for jj in (j - 1, j, j + 1):
            mass += sum(f2[i] for i in bins.get(jj, []))
        mass += sum(f2[i] for i in bins.get(j + 2, []) if _at_power(ints[i], T, j + 2))
        r.append(math.sqrt(mass))
    rset.M_prime = mp
    rset.r = np.array(r)
    rset.J = J
    rset.log_mprime = np.array([math.log(m) for m in mp])
    return rset


def bin_multiplicity(rset: ResonatorSet) -> int:
    """Largest number of widened bins (j-1..j+2) any member of M falls in."""
    if rset.J is None:
        return 1
    ints = rset.integers()
    T = rset.params.T
    Jset = set(rset.J)
    worst = 0
    for m in ints:
        j = _bin_index(m, T)
        count = sum(1 for jj in (j + 1, j, j - 1) if jj in Jset)
        if (j - 2) in Jset and _at_power(m, T, j):
            count += 1
        worst = max(worst, count)
    return worst


def R_eval(rset: ResonatorSet, t):
    """R(t) = sum_{m in M'} r(m) m^{-it}; vectorised over t."""
    if rset.r is None:
        raise ValueError("build M' first")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t.shape, dtype=complex)
    for i in range(0, t.size, 2048):
        ph = np.outer(t[i:i + 2048], rset.log_mprime)
        out[i:i + 2048] = np.exp(-1j * ph) @ rset.r
    return out


def R2_eval(rset: ResonatorSet, t) -> np.ndarray:
    return np.abs(R_eval(rset, t)) ** 2


def weighted_norm(rset: ResonatorSet) -> float:
    """int |R(t)|^2 Phi(t/T) dt = T sqrt(2 pi) sum r_m r_n exp(-T^2 log^2(m/n) / 2)."""
    T = rset.params.T
    lm, r = rset.log_mprime, rset.r
    total = 0.0
    for i in range(lm.size):
        d = T * (lm[i] - lm)
        total += r[i] * float(r @ np.exp(-d * d / 2))
    return T * math.sqrt(2 * math.pi) * total


def resonance_integral(n: int, rset: ResonatorSet, spec, grid, sigma: float | None = None,
                       method: str = "auto") -> dict:
    """Trapezoid value of int conv_n(t) |R(t)|^2 Phi(t/T) dt over ``grid``.

    conv_n(t) is the kernel convolution of S_n, evaluated through its prime-power
    side. Reported next to the same-grid norm of |R|^2 Phi and the scale T sum f^2.
    """
    from zal.convolution import rhs_prime_sum

    sigma = rset.params.sigma if sigma is None else sigma
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be increasing with at least two points")
    T = rset.params.T
    conv = np.array([rhs_prime_sum(n, sigma, t, spec, method) for t in grid])
    weight = R2_eval(rset, grid) * np.exp(-np.square(grid / T) / 2)
    sum_f2 = math.fsum((rset.f**2).tolist())
    return {
        "value": float(np.trapezoid(conv * weight, grid)),
        "norm_grid": float(np.trapezoid(weight, grid)),
        "norm_exact": weighted_norm(rset),
        "scale": T * sum_f2,
        "conv": conv,
    }


@dataclass(frozen=True)
class ScanRecord:
    t: float
    sigma: float
    n: int
    R2: float
    Sn: float

    def __post_init__(self):
        if not self.R2 >= 0:
            raise ValueError("R2 must be >= 0")


def _Sn_parallel(n, sigma, ts, threads):
    ts = np.asarray(ts, dtype=float)
    if threads <= 1 or ts.size < 2 * threads:
        return S_n_array(n, sigma, ts)[0]
    chunks = np.array_split(ts, threads)
    with ThreadPoolExecutor(threads) as ex:
        parts = list(ex.map(lambda c: S_n_array(n, sigma, c)[0], chunks))
    return np.concatenate(parts)


def scan_grid(t_lo: float, t_hi: float, step: float) -> np.ndarray:
    if not step > 0 or t_hi < t_lo:
        raise ValueError("need step > 0 and t_hi >= t_lo")
    k = int(math.floor((t_hi - t_lo) / step + 1e-9))
    return t_lo + step * np.arange(k + 1)


def search_extreme(n: int, params: ResonatorParams, rset: ResonatorSet, t_lo: float, t_hi: float,
                   grid_step: float, q: int = 10, sigma: float | None = None,
                   threads: int = 1, t_cap: float = 1e4) -> list[ScanRecord]:
    """Top-q grid points by |R(t)|^2 (ties: smaller t first), annotated with S_n(sigma, t)."""
    if t_hi > t_cap:
        raise TooLarge(f"t_hi = {t_hi} exceeds the scan cap {t_cap}")
    sigma = params.sigma if sigma is None else sigma
    ts = scan_grid(t_lo, t_hi, grid_step)
    r2 = R2_eval(rset, ts)
    order = np.lexsort((ts, -r2))[:q]
    top = ts[order]
    sn = _Sn_parallel(n, sigma, top, threads)
    return [ScanRecord(float(t), float(sigma), n, float(v), float(s))
            for t, v, s in zip(top, r2[order], sn)]


def decile_contrast(n: int, rset: ResonatorSet, t_lo: float, t_hi: float, step: float,
                    seed: int = 0, sigma: float | None = None, threads: int = 1) -> dict:
    """Mean |S_n| over the top and bottom deciles of |R|^2 on a seeded jittered grid.

    Cell k covers [t_lo + k step, t_lo + (k+1) step); one uniform point is drawn per cell.
    """
    sigma = rset.params.sigma if sigma is None else sigma
    rng = np.random.default_rng(seed)
    k = int(math.floor((t_hi - t_lo) / step))
    ts = t_lo + step * (np.arange(k) + rng.random(k))
    r2 = R2_eval(rset, ts)
    order = np.lexsort((ts, -r2))
    d = max(1, k // 10)
    top, bottom = np.sort(ts[order[:d]]), np.sort(ts[order[-d:]])
    s_top = _Sn_parallel(n, sigma, top, threads)
    s_bot = _Sn_parallel(n, sigma, bottom, threads)
    return {"cells": k, "decile": d, "top_mean": float(np.abs(s_top).mean()),
            "bottom_mean": float(np.abs(s_bot).mean()),
            "top_signed_mean": float(s_top.mean()), "bottom_signed_mean": float(s_bot.mean()),
            "top_R2_mean": float(r2[order[:d]].mean()),
            "bottom_R2_mean": float(r2[order[-d:]].mean())}


def filtration_mass(rset: ResonatorSet, d: float = 0.1) -> dict:
    """f^2-mass fractions of supp(f) \\ M and of the members with at most beta_k factors in some P_k."""
    params, window, w = rset.params, rset.window, rset.weights
    P = len(window.primes)
    if P > EXACT_CAP:
        raise TooLarge("filtration masses need exact enumeration")
    masks = np.arange(1 << P, dtype=np.int64)
    _, logf = _mask_logs(masks, window, w)
    f2 = np.exp(2 * logf)
    total = float(f2.sum())
    wm = window.window_masks()
    out_M = _excluded(masks, wm, rset.alphas)
    in_L = np.zeros(masks.shape, dtype=bool)
    for k, mk in enumerate(wm, start=1):
        in_L |= _popcount(masks & np.int64(mk)) <= beta_k(k, params, d)
    return {"outside_M": float(f2[out_M].sum() / total),
            "in_some_L_k": float(f2[~out_M & in_L].sum() / total)}
