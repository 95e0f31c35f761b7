import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swgibbs import diagram_engine as dg
from swgibbs.stochastic_lab import path_streams, run_engine

REL = 1e-12


# --- oracle equivalence at small N ------------------------------------------------


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_tadpole_and_sunset_match_enumeration(N):
    assert dg.tadpole(N) == pytest.approx(dg.brute_tadpole(N), rel=REL)
    assert dg.sunset(N) == pytest.approx(dg.brute_sunset(N), rel=REL)
    assert dg.wick_l2_variance(N) == pytest.approx(dg.brute_wick_l2_variance(N), rel=REL)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_profiles_match_enumeration(N):
    pair = dg.brute_pair_profile(N)
    assert dg.mixed_pair_variance_profile(N, 1.0) == pytest.approx(pair, rel=REL)
    assert dg.wick_square_variance_profile(N, 1.0) == pytest.approx(2 * pair, rel=REL)


@pytest.mark.parametrize("N,M", [(1, 1), (1, 3), (2, 2), (2, 4), (3, 4)])
def test_cross_log_matches_enumeration(N, M):
    s, w = dg.cross_log_sum(N, M)
    bs, bw = dg.brute_cross_log_sum(N, M)
    assert s == pytest.approx(bs, rel=REL)
    assert w == pytest.approx(bw, rel=REL)


@pytest.mark.parametrize("M", [2, 3, 4])
def test_f_moments_match_enumeration(M):
    a, b = dg.f_moments(M), dg.brute_f_moments(M)
    assert a.l2 == pytest.approx(b.l2, rel=REL)
    assert a.h_neg_alpha == pytest.approx(b.h_neg_alpha, rel=REL)
    assert a.l3 == pytest.approx(b.l3, rel=REL)


@pytest.mark.parametrize("M,N,lam", [(2, 2, 0.0), (2, 4, 1.0), (4, 4, 0.7), (3, 4, 2.0)])
def test_alpha_numerator_matches_quadrature(M, N, lam):
    assert dg.alpha_numerator(M, N, lam) == pytest.approx(dg.brute_alpha_numerator(M, N, lam), rel=REL)


@pytest.mark.parametrize("N", [2, 4, 6])
def test_pair_convolution_pointwise(N):
    rng = np.random.default_rng(N)
    modes = rng.integers(-2 * N, 2 * N + 1, size=(5, 3))
    vals = dg.pair_convolution_at(N, modes)
    for m, v in zip(modes, vals):
        assert v == pytest.approx(dg.brute_pair_convolution_at(N, m), rel=REL)


def test_fft_and_direct_convolution_agree():
    N = 4
    direct = dg._pair_convolution_direct(N)
    fft = dg._pair_convolution_fft(N)
    assert np.max(np.abs(direct - fft)) <= 1e-13 * np.max(direct)


def test_symmetry_reduction_changes_nothing():
    for N in (3, 5, 8):
        vals = dg.propagator(N)
        assert dg.symmetric_sum(vals, N) == pytest.approx(dg.full_sum(vals), rel=REL)


# --- pinned values -------------------------------------------------------------------


def test_tadpole_one_is_ten():
    assert dg.tadpole(1) == 10.0


def test_delta_scaling():
    for N in (2, 5):
        assert dg.delta_counterterm(N, 0.0) == 0.0
        assert dg.delta_counterterm(N, 2.0) / dg.delta_counterterm(N, 1.0) == 4.0
        assert dg.delta_counterterm(N, 1.0) == pytest.approx(dg.sunset(N) / 4, rel=1e-15)
        assert dg.cubic_variance(N, 0.0) == 0.0
        assert dg.cubic_variance(N, -3.0) == pytest.approx(9 * dg.cubic_variance(N, 1.0), rel=1e-15)


def test_cross_log_self_pairing_equals_delta_components():
    for N in (2, 4):
        s, w = dg.cross_log_sum(N, N)
        ds, dw = dg.delta_components(N, 1.0)
        assert s == pytest.approx(2 * ds, rel=1e-13)
        assert w == pytest.approx(2 * dw, rel=1e-13)


def test_cross_log_insensitive_to_outer_cutoff():
    assert dg.cross_log_sum(3, 3) == dg.cross_log_sum(3, 7)
    with pytest.raises(ValueError):
        dg.cross_log_sum(4, 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.floats(0.0, 1.0))
def test_profiles_scale_as_t_squared(N, t):
    base = dg.mixed_pair_variance_profile(N, 1.0)
    assert dg.mixed_pair_variance_profile(N, t) == pytest.approx(t * t * base, rel=1e-14, abs=0)
    assert dg.wick_square_variance_profile(N, t) == pytest.approx(2 * t * t * base, rel=1e-14, abs=0)


def test_profile_rejects_bad_time():
    with pytest.raises(ValueError):
        dg.mixed_pair_variance_profile(3, 1.5)


def test_rejects_bad_cutoffs():
    for fn in (dg.tadpole, dg.sunset):
        with pytest.raises(ValueError):
            fn(0)
    with pytest.raises(ValueError):
        dg.f_moments(1)
    with pytest.raises(ValueError):
        dg.alpha_coefficient(5, 4, 1.0)


def test_values_positive_and_monotone():
    prev = None
    for N in range(1, 13):
        vals = (
            dg.tadpole(N),
            dg.sunset(N),
            dg.delta_counterterm(N, 1.0),
            dg.cubic_variance(N, 1.0),
            dg.mixed_pair_variance_profile(N),
            dg.wick_square_variance_profile(N),
        )
        assert all(v > 0 for v in vals)
        if prev is not None:
            assert all(b > a for a, b in zip(prev, vals))
        prev = vals


def test_recomputation_bit_identical():
    dg._sunset_terms.cache_clear()
    a = dg.sunset(9)
    dg._sunset_terms.cache_clear()
    assert dg.sunset(9) == a


def test_diagram_value_validation():
    v = dg.DiagramValue("tadpole", 1, dg.tadpole(1))
    assert v.value == 10.0
    with pytest.raises(ValueError):
        dg.DiagramValue("bogus", 1, 1.0)
    with pytest.raises(ValueError):
        dg.DiagramValue("sunset", 1, math.inf)


# --- Z_M ingredients -----------------------------------------------------------------


@pytest.mark.parametrize("x", [0.0, 0.1, 0.49, 0.5, 0.51, 1.0, 3.0, 20.0])
def test_g_scaled_matches_direct_quadrature(x):
    direct = 2.0 * dg._triangle_quadrature(lambda s, sp: np.exp(-x * (2.0 - s - sp)) * sp * sp)
    assert float(dg.g_scaled(np.array([x]))[0]) == pytest.approx(direct, rel=1e-10)


def test_alpha_independent_of_lambda_sign():
    assert dg.alpha_coefficient(4, 6, 1.5) == dg.alpha_coefficient(4, 6, -1.5)


def test_alpha_at_zero_coupling_is_pure_zm_part():
    M, N = 4, 6
    tab = dg.zm_mode_table(M, N)
    _, ex, _ = dg.zm_second_moments(M, N, 0.0)
    ea = 1.0 / tab.bracket_sq
    expect = float(np.sum(tab.weights * tab.ball * (ea - ex)))
    assert dg.alpha_numerator(M, N, 0.0) == pytest.approx(expect, rel=1e-13)


def test_discrete_moments_converge_to_continuous():
    M, N = 4, 4
    cont = dg.alpha_numerator(M, N, 1.0)
    errs = [abs(dg.alpha_numerator(M, N, 1.0, L, "exact_kernel") - cont) for L in (16, 32, 64)]
    assert errs[0] > errs[1] > errs[2]


def test_alpha_numerator_monte_carlo():
    """Euler recursion simulated path by path against the exact discrete sum."""
    M, N, lam, L, paths = 4, 4, 1.0, 16, 20000
    tab = dg.zm_mode_table(M, N)
    ball = np.nonzero(tab.ball)[0]
    sigma = dg.tadpole(N)
    samples = []
    for start in range(0, paths, 4000):
        out = run_engine(path_streams(11, start, 4000, tag=9), N, L, M)
        x = out.u - lam * out.zw
        x[:, ball] = out.x0 - lam * out.x1
        samples.append(sigma - np.einsum("pk,k->p", np.abs(x) ** 2, tab.weights))
    s = np.concatenate(samples)
    exact = dg.alpha_numerator(M, N, lam, L, "euler")
    se = s.std(ddof=1) / math.sqrt(s.size)
    assert abs(s.mean() - exact) < 4 * se
