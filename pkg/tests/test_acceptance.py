"""Acceptance gate: criteria 1-11, one PASS/FAIL line each (shown in the terminal summary)."""

import math
import time

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad

from conftest import record
from zal.argument import S_array, S_n_array, delta, moment_L1
from zal.bounds import H
from zal.convolution import RHO_PILOT, convolution_report, inner_integral_check
from zal.kernels import K, K_hat, KernelSpec
from zal.resonator import (
    R2_eval,
    R_eval,
    build_Mprime,
    build_params,
    build_weights,
    build_window,
    check_cardinality,
    decile_contrast,
    enumerate_M,
    gcd_shape,
    gcd_sum_ratio,
    prime_sum_bracket,
)
from zal.zeta_core import find_zero_ordinates


def test_criterion_01_fourier_pairs():
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(5):
        for L in (2.0, 3.0):
            spec = KernelSpec(n, L)
            lim = 40 / L
            for xi in (0.0, 1.0, -1.0, L, -L, 3 * L, -3 * L):
                re = quad(lambda x: float(K(spec, x)) * math.cos(2 * math.pi * xi * x), -lim, lim,
                          limit=400, epsabs=1e-13, epsrel=1e-13)[0]
                im = quad(lambda x: -float(K(spec, x)) * math.sin(2 * math.pi * xi * x), -lim, lim,
                          limit=400, epsabs=1e-13, epsrel=1e-13)[0]
                worst = max(worst, abs(complex(re, im) - complex(K_hat(spec, xi))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 10
    record(1, ok, f"max |numeric FT - K_hat| = {worst:.2e} over 70 points (tol 1e-8)", dt)
    assert ok


def test_criterion_02_convolution_identity():
    t0 = time.perf_counter()
    s2 = 0.5 + 1 / math.log(math.log(1000))
    ratios, failures = [], []
    for n in (0, 1, 2):
        for sigma in (0.5, s2):
            for t in (30.0, 100.0, 500.0):
                r = convolution_report(n, sigma, t)
                ratios.append(r.residual / r.band(RHO_PILOT))
                if r.residual > r.band(RHO_PILOT):
                    failures.append((n, sigma, t, r.residual))
    # decay rows: one per n at sigma = 1/2 with the kernel scale held at L = log log 1000
    L = math.log(math.log(1000))
    decay = []
    for n in (0, 1, 2):
        a = convolution_report(n, 0.5, 30.0, KernelSpec(n, L)).residual
        b = convolution_report(n, 0.5, 500.0, KernelSpec(n, L)).residual
        decay.append((a, b))
    shrinking = sum(b < a for a, b in decay)
    dt = time.perf_counter() - t0
    band_ok = not failures
    ok = band_ok and shrinking >= 2 and dt < 600
    rows = ", ".join(f"n={n}: {a:.1e}->{b:.1e}" for n, (a, b) in enumerate(decay))
    record(2, ok, f"band {'ok' if band_ok else failures} (max residual/band {max(ratios):.3f}, "
                  f"rho={RHO_PILOT:g}); residual(500)<residual(30) in {shrinking}/3 rows [{rows}]", dt)
    assert band_ok, failures
    assert shrinking >= 2, decay
    assert dt < 600


def test_criterion_03_inner_integral():
    t0 = time.perf_counter()
    worst = 0.0
    for m in (2, 3, 5, 16, 97):
        for n in (1, 2, 3):
            _, _, dev, allowed = inner_integral_check(m, n)
            worst = max(worst, dev / allowed)
    dt = time.perf_counter() - t0
    ok = worst <= 1 and dt < 5
    record(3, ok, f"15 pairs, max deviation/allowed = {worst:.3f}", dt)
    assert ok


def test_criterion_04_derivative_tower():
    t0 = time.perf_counter()
    zeros = np.array(find_zero_ordinates(60))
    h = 1e-3
    worst = 0.0
    for t in (20.0, 50.0):
        assert np.min(np.abs(zeros - t)) >= 0.1
        for n in (1, 2):
            for sigma in (0.5, 0.6):
                v, _ = S_n_array(n, sigma, [t - h, t + h])
                lower = S_n_array(n - 1, sigma, [t])[0][0]
                worst = max(worst, abs((v[1] - v[0]) / (2 * h) - lower))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-3 and dt < 120
    record(4, ok, f"max |central difference - S_(n-1)| = {worst:.2e} (tol 1e-3)", dt)
    assert ok


def test_criterion_05_jumps():
    t0 = time.perf_counter()
    zeros = find_zero_ordinates(50)[:10]
    eps = 1e-6
    jumps = []
    for g in zeros:
        v, _ = S_array(0.5, [g - eps, g + eps])
        jumps.append(v[1] - v[0])
    jump_dev = max(abs(j - 1) for j in jumps)
    ts = np.arange(zeros[0] - 1, zeros[-1] + 1, 1e-3)
    s06, _ = S_array(0.6, ts)
    max_step = float(np.max(np.abs(np.diff(s06))))
    dt = time.perf_counter() - t0
    ok = len(zeros) == 10 and jump_dev <= 1e-4 and max_step < 1e-2 and dt < 120
    record(5, ok, f"max |jump - 1| at sigma=1/2 = {jump_dev:.2e}; "
                  f"max step at sigma=0.6 = {max_step:.2e} over {ts.size} points", dt)
    assert ok


def test_criterion_06_delta_constants():
    t0 = time.perf_counter()
    e2 = abs(delta(2, 0.5).value - 1 / 8)
    e4 = abs(delta(4, 0.5).value + 1 / 384)
    d1 = delta(1, 0.5).value
    d1_fine = delta(1, 0.5, refine=2).value
    stab = abs(d1 - d1_fine)
    dt = time.perf_counter() - t0
    ok = e2 <= 1e-15 and e4 <= 1e-15 and stab <= 1e-8 and dt < 30
    record(6, ok, f"|d2-1/8|={e2:.1e}, |d4+1/384|={e4:.1e}, d1={d1:.15f} refine shift {stab:.1e}", dt)
    assert ok


def test_criterion_07_resonator_inequalities():
    t0 = time.perf_counter()
    params = build_params(1e16, 0.0)
    rset = enumerate_M(params, mode="exact")
    build_Mprime(rset)
    primes_ok = list(rset.window.primes) == [149, 151, 157, 163, 167]
    card = check_cardinality(rset)
    i_ok = len(rset.M_prime) <= rset.size <= params.N and card.ok
    sum_f2 = math.fsum((rset.f**2).tolist())
    sum_r2 = math.fsum((rset.r**2).tolist())
    ii_ok = sum_r2 <= 4 * sum_f2
    ts = np.linspace(-1000.0, 1000.0, 1000)
    r0 = float(R_eval(rset, 0.0)[0].real)
    iii_ok = bool(np.all(R2_eval(rset, ts) <= r0 * r0))
    closed = rset.divisor_closed()
    dt = time.perf_counter() - t0
    ok = primes_ok and i_ok and ii_ok and iii_ok and closed and dt < 60
    record(7, ok, f"|M'|={len(rset.M_prime)} <= |M|={rset.size} <= N={params.N}; "
                  f"sum r^2={sum_r2:.6f} vs 4 sum f^2={4 * sum_f2:.6f}; |R|^2<=R(0)^2: {iii_ok}; "
                  f"divisor-closed: {closed}", dt)
    assert ok


def test_criterion_08_gcd_ratio_trend():
    t0 = time.perf_counter()
    params = build_params(1e40, 0.0)
    window = build_window(params)
    shape = gcd_shape(params)
    implied = []
    for count in (5, 9, 13):
        sub = window.prefix(count)
        rset = enumerate_M(params, build_weights(params, sub), sub, mode="exact")
        implied.append(gcd_sum_ratio(rset) / shape)
    positive = all(c > 0 for c in implied)
    monotone = all(b >= a for a, b in zip(implied, implied[1:]))
    sampled = enumerate_M(params, mode="sampled", seed=0)
    brackets = [prime_sum_bracket(params, k, 0.1) for k in range(1, window.K_max + 1)
                if window.windows[k - 1][2]]
    advisory = "; ".join(f"k={b['k']} sum={b['sum']:.4f} in ({b['lower']:.4f}, {b['upper']:.4f})"
                         f" lower {'ok' if b['above_lower'] else 'missed'}" for b in brackets)
    dt = time.perf_counter() - t0
    ok = positive and monotone and dt < 300
    record(8, ok, f"implied c over nested windows (5, 9, 13 primes) = "
                  f"{', '.join(f'{c:.5f}' for c in implied)}; sampled ratio "
                  f"{sampled.estimates['ratio']:.5f} +- {sampled.estimates['ratio_se']:.5f}; "
                  f"advisory bracket: {advisory}", dt)
    assert ok


def test_criterion_09_H_bracket():
    t0 = time.perf_counter()
    bad = []
    with mpmath.workdps(30):
        zetas = {m: float(mpmath.zeta(m)) for m in range(2, 9)}
    for m in range(2, 9):
        for x in np.linspace(-1, 1, 21):
            h = H(m, float(x))
            if not 1 - 2.0**-m <= h <= zetas[m]:
                bad.append((m, x, h))
    dt = time.perf_counter() - t0
    ok = not bad and dt < 1
    record(9, ok, f"7x21 grid, violations: {len(bad)}", dt)
    assert ok


def test_criterion_10_resonance_discrimination():
    t0 = time.perf_counter()
    params = build_params(1e16, 0.0)
    rset = build_Mprime(enumerate_M(params, mode="exact"))
    out = decile_contrast(1, rset, 20.0, 2000.0, 0.5, seed=0)
    dt = time.perf_counter() - t0
    ok = out["top_mean"] > out["bottom_mean"] and dt < 600
    record(10, ok, f"mean |S_1| top decile {out['top_mean']:.5f} vs bottom {out['bottom_mean']:.5f} "
                   f"({out['cells']} cells, seed 0); signed means {out['top_signed_mean']:.5f} vs "
                   f"{out['bottom_signed_mean']:.5f} (diagnostic)", dt)
    assert ok


@pytest.mark.slow
def test_criterion_11_moment():
    t0 = time.perf_counter()
    v = moment_L1(0, 0.5, 1000.0)
    ratio = v / (1000 * math.log(1000))
    dt = time.perf_counter() - t0
    ok = ratio < 1 and dt < 300
    record(11, ok, f"moment_L1(0, 1/2, 1000) = {v:.6f}, ratio {ratio:.5f}", dt)
    assert ok
