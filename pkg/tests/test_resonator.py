import dataclasses
import itertools
import math

import numpy as np
import pytest

from zal.errors import NotInSupport, TooLarge, TooSmall
from zal.kernels import KernelSpec
from zal.resonator import (
    ResonatorParams,
    ScanRecord,
    alpha_k,
    beta_k,
    bin_multiplicity,
    build_Mprime,
    build_params,
    build_weights,
    build_window,
    check_cardinality,
    decile_contrast,
    enumerate_M,
    f_value,
    filtration_mass,
    gcd_shape,
    gcd_sum_ratio,
    prime_sum_bracket,
    R2_eval,
    R_eval,
    resonance_integral,
    scan_grid,
    search_extreme,
    weighted_norm,
)

TOY_P = [149, 151, 157, 163, 167]


@pytest.fixture(scope="module")
def toy():
    params = build_params(1e16, 0.0)
    rset = enumerate_M(params, mode="exact")
    build_Mprime(rset)
    return params, rset


def f_oracle(p, N, sigma):
    l1 = math.log(N)
    l2 = math.log(l1)
    l3 = math.log(l2)
    return l1 ** (1 - sigma) * l2**sigma / l3 ** (1 - sigma) / (p**sigma * (math.log(p) - l2 - l3))


def coarse_params(params, T):
    # same N and window, a much smaller bin ratio 1 + 1/T so that bins merge
    return ResonatorParams(T, params.beta, params.kappa, params.sigma, params.N)


def test_params_examples():
    p = build_params(1e16, 0.0)
    assert p.kappa == 0.5 and p.N == 10**8 and p.sigma == 0.5
    assert build_params(1e40, 0.5).kappa == 0.25
    edge = build_params(1e16, 0.0, "edge")
    assert edge.sigma == pytest.approx(0.5 + 1 / math.log(math.log(1e8)))


@pytest.mark.parametrize("T,beta", [(100, 0.0), (1e16, 0.99)])
def test_params_too_small(T, beta):
    with pytest.raises(TooSmall):
        build_params(T, beta)


def test_params_validation():
    with pytest.raises(ValueError):
        build_params(1e16, 1.0)
    with pytest.raises(ValueError):
        ResonatorParams(1e16, 0.0, 0.4, 0.5, 10**8)
    with pytest.raises(ValueError):
        build_params(1e16, 0.0, "middle")


def test_window(toy):
    params, rset = toy
    w = rset.window
    assert list(w.primes) == TOY_P
    assert w.lo == pytest.approx(145.8852226101866, rel=1e-12)
    assert w.hi == pytest.approx(168.31441591789684, rel=1e-12)
    assert w.K_max == 1
    covered = sorted(p for _, _, ps in w.windows for p in ps)
    assert covered == TOY_P


def test_weights_match_formula(toy):
    params, rset = toy
    for p in TOY_P:
        assert rset.weights(p) == pytest.approx(f_oracle(p, 10**8, 0.5), rel=1e-14)
        assert 0 < rset.weights(p) <= 1
    assert rset.weights(149) == pytest.approx(0.5683642082495209, rel=1e-14)


def test_f_value(toy):
    w = toy[1].weights
    assert f_value(1, w) == 1.0
    assert f_value(149 * 163, w) == pytest.approx(w(149) * w(163), rel=1e-15)
    with pytest.raises(NotInSupport):
        f_value(149 * 149, w)
    with pytest.raises(NotInSupport):
        f_value(2 * 149, w)


def test_alpha_beta(toy):
    params = toy[0]
    l1 = math.log(1e8)
    l3 = math.log(math.log(l1))
    ref = 3 * l1 / l3
    assert alpha_k(1, params) == pytest.approx(ref, rel=1e-14)
    assert alpha_k(1, params) == pytest.approx(51.67834636897473, rel=1e-13)
    assert alpha_k(3, params) == pytest.approx(alpha_k(1, params) / 9, rel=1e-15)
    assert beta_k(2, params, 0.1) == pytest.approx(0.1 / 36 * alpha_k(2, params), rel=1e-15)
    with pytest.raises(ValueError):
        beta_k(1, params, 1.5)


def test_M_is_full_support_and_divisor_closed(toy):
    params, rset = toy
    assert rset.size == 32
    expected = sorted(math.prod(c) for r in range(6) for c in itertools.combinations(TOY_P, r))
    assert sorted(rset.integers()) == expected
    assert rset.divisor_closed()


def test_forced_threshold_keeps_only_one():
    params = build_params(1e16, 0.0)
    rset = enumerate_M(params, mode="exact", alphas=(1,))
    assert rset.integers() == [1]
    assert gcd_sum_ratio(rset) == 0.0
    rset2 = enumerate_M(params, mode="exact", alphas=(2,))
    assert sorted(rset2.integers()) == [1] + TOY_P
    assert rset2.divisor_closed()


def test_cardinality(toy):
    params, rset = toy
    rep = check_cardinality(rset)
    assert rep.ok and rep.size_M == 32 and rep.N == 10**8
    assert rep.ratio == pytest.approx(32 / 1e8)


def test_gcd_ratio_brute_force(toy):
    params, rset = toy
    w = rset.weights
    num, den = 0.0, 0.0
    for r in range(6):
        for c in itertools.combinations(TOY_P, r):
            f2 = math.prod(w(p) for p in c) ** 2
            den += f2
            num += f2 * sum(1 / (w(p) * p**0.5) for p in c)
    ratio = gcd_sum_ratio(rset)
    assert ratio == pytest.approx(num / den, rel=1e-13)
    assert ratio == pytest.approx(0.16431925428368488, rel=1e-12)
    assert ratio / gcd_shape(params) == pytest.approx(0.06319489970280448, rel=1e-12)


def test_bracket_report(toy):
    b = prime_sum_bracket(toy[0], 1)
    assert b["sum"] == pytest.approx(sum(1 / p for p in TOY_P), rel=1e-14)
    assert b["below_upper"] and not b["above_lower"]
    edge = build_params(1e16, 0.0, "edge")
    assert prime_sum_bracket(edge, 1)["sum"] < b["sum"]
    with pytest.raises(ValueError):
        prime_sum_bracket(toy[0], 2)


def test_singleton_bins_at_large_T(toy):
    params, rset = toy
    assert sorted(rset.M_prime) == sorted(rset.integers())
    assert np.allclose(rset.r, rset.f)


@pytest.mark.parametrize("T", [3.0, 40.0, 1e3, 1e5])
def test_binning_inequalities_with_merged_bins(T):
    base = build_params(1e16, 0.0)
    params = coarse_params(base, T)
    rset = enumerate_M(params, mode="exact")
    build_Mprime(rset)
    f2 = float(np.sum(rset.f**2))
    assert len(rset.M_prime) <= rset.size <= params.N
    assert float(np.sum(rset.r**2)) <= 4 * f2
    assert bin_multiplicity(rset) <= 3
    q = 1 + 1 / T
    ints = rset.integers()
    for j, m in zip(rset.J, rset.M_prime):
        members = [n for n in ints if q**j <= n < q ** (j + 1)]
        assert m == min(members)
    r0 = float(R_eval(rset, 0.0)[0].real)
    ts = np.linspace(-500, 500, 1000)
    assert np.all(R2_eval(rset, ts) <= r0**2 * (1 + 1e-12))
    assert r0**2 <= len(rset.M_prime) * float(np.sum(rset.r**2)) * (1 + 1e-12)


def test_R_properties(toy):
    rset = toy[1]
    r0 = R_eval(rset, 0.0)[0]
    assert r0.imag == 0 and r0.real == pytest.approx(float(np.sum(rset.r)))
    ts = np.linspace(0.5, 3000, 1000)
    assert np.all(R2_eval(rset, ts) <= r0.real**2)
    assert np.allclose(R_eval(rset, -ts), np.conj(R_eval(rset, ts)))


def test_weighted_norm(toy):
    params, rset = toy
    scale = params.T * float(np.sum(rset.f**2))
    assert weighted_norm(rset) / scale == pytest.approx(math.sqrt(2 * math.pi), rel=1e-9)


def test_weighted_norm_against_quadrature():
    params = coarse_params(build_params(1e16, 0.0), 40.0)
    rset = enumerate_M(params, mode="exact")
    build_Mprime(rset)
    ts = np.linspace(-12 * 40, 12 * 40, 400_001)
    num = np.trapezoid(R2_eval(rset, ts) * np.exp(-(ts / 40) ** 2 / 2), ts)
    assert weighted_norm(rset) == pytest.approx(num, rel=1e-8)


def test_resonance_integral_shape():
    params = coarse_params(build_params(1e16, 0.0), 40.0)
    rset = enumerate_M(params, mode="exact")
    build_Mprime(rset)
    spec = KernelSpec(1, 0.2)
    grid = np.linspace(-40 * math.log(40), 40 * math.log(40), 801)
    out = resonance_integral(1, rset, spec, grid)
    assert math.isfinite(out["value"]) and out["value"] > 0
    assert out["norm_exact"] / out["scale"] <= 10
    assert out["norm_grid"] == pytest.approx(out["norm_exact"], rel=1e-2)


def test_sampled_mode_estimates():
    params = build_params(1e40, 0.0)
    exact = enumerate_M(params, mode="exact")
    sampled = enumerate_M(params, mode="sampled", samples=100_000, seed=3)
    assert not sampled.exact
    est = sampled.estimates
    ratio = gcd_sum_ratio(exact)
    assert abs(gcd_sum_ratio(sampled) - ratio) <= 5 * est["ratio_se"]
    with pytest.raises(TooLarge):
        _ = sampled.size
    with pytest.raises(TooLarge):
        build_Mprime(sampled)


def test_exact_cap():
    params = build_params(1e100, 0.0)
    assert len(build_window(params).primes) > 24
    with pytest.raises(TooLarge):
        enumerate_M(params, mode="exact")
    assert not enumerate_M(params, samples=2000).exact


def test_filtration_mass(toy):
    m = filtration_mass(toy[1])
    assert m["outside_M"] == 0.0
    assert 0.0 <= m["in_some_L_k"] <= 1.0


def test_scan_grid_and_records():
    assert scan_grid(0, 1, 0.25).tolist() == [0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ValueError):
        scan_grid(0, 1, 0)
    with pytest.raises(ValueError):
        ScanRecord(1.0, 0.5, 0, -1.0, 0.0)


def test_search_extreme(toy):
    params, rset = toy
    top = search_extreme(1, params, rset, 20, 200, 0.5, q=5)
    assert len(top) == 5
    r2 = [rec.R2 for rec in top]
    assert r2 == sorted(r2, reverse=True)
    grid = scan_grid(20, 200, 0.5)
    assert top[0].R2 == pytest.approx(float(R2_eval(rset, grid).max()))
    fine = search_extreme(1, params, rset, 20, 200, 0.25, q=1)
    assert abs(fine[0].t - top[0].t) <= 0.5
    again = search_extreme(1, params, rset, 20, 200, 0.5, q=5, threads=2)
    assert again == top
    with pytest.raises(TooLarge):
        search_extreme(1, params, rset, 20, 2e4, 1.0)


def test_search_ties_prefer_smaller_t():
    params = build_params(1e16, 0.0)
    rset = enumerate_M(params, mode="exact", alphas=(1,))
    build_Mprime(rset)  # M' = {1}: |R|^2 is constant
    top = search_extreme(0, params, rset, 20, 30, 1.0, q=3)
    assert [rec.t for rec in top] == [20.0, 21.0, 22.0]


def test_decile_contrast_is_seeded(toy):
    rset = toy[1]
    a = decile_contrast(1, rset, 20, 120, 1.0, seed=5)
    b = decile_contrast(1, rset, 20, 120, 1.0, seed=5)
    assert a == b
    assert a["cells"] == 100 and a["decile"] == 10
    assert a["top_R2_mean"] >= a["bottom_R2_mean"]
