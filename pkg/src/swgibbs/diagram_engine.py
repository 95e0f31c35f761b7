"""Exact lattice sums for the renormalization constants and second-moment diagrams.

Every quantity here is a finite sum over the cube |n_j| <= N of products of
propagators <n>^{-2}.  The workhorse is the pair convolution

    c_N(n) = sum_{n1 + n2 = n, |n1_j|, |n2_j| <= N} <n1>^{-2} <n2>^{-2},

supported on |n_j| <= 2N.  It is computed by nested shifted additions for
N <= 4 and by a zero-padded FFT above that.  Final reductions use the
octahedral symmetry of the cube and ``math.fsum`` so values do not depend on
summation order.  ``brute_*`` functions evaluate the same quantities by
unreduced enumeration and serve as the oracle layer.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .lattice_field import GridSpec, LatticeField, cube_norm_sq, cubic_integral, fft_size, half_space

DIRECT_CONVOLUTION_MAX = 4
DIAGRAM_KINDS = (
    "tadpole",
    "sunset",
    "wick_square_var",
    "mixed_pair_var",
    "delta_counterterm",
    "cubic_var",
    "cross_log",
    "f_moment_2",
    "f_moment_neg",
    "f_moment_3",
    "alpha_coeff",
)


@dataclass(frozen=True)
class DiagramValue:
    kind: str
    N: int
    value: float
    M: int | None = None
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in DIAGRAM_KINDS:
            raise ValueError(f"unknown diagram kind {self.kind!r}")
        if not math.isfinite(self.value):
            raise ValueError("diagram value must be finite")


def _check_cutoff(N: int, name: str = "N", least: int = 1):
    if int(N) != N or N < least:
        raise ValueError(f"{name} must be an integer >= {least}, got {N}")


# ---------------------------------------------------------------------------
# propagators and the pair convolution
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def propagator(N: int) -> np.ndarray:
    """<n>^{-2} on the centered cube of half-width N."""
    out = 1.0 / (1.0 + cube_norm_sq(N))
    out.setflags(write=False)
    return out


def _pair_convolution_direct(N: int) -> np.ndarray:
    p = propagator(N)
    w = 2 * N + 1
    out = np.zeros((2 * w - 1,) * 3)
    for i, j, k in itertools.product(range(w), repeat=3):
        out[i : i + w, j : j + w, k : k + w] += p[i, j, k] * p
    return out


def _pair_convolution_fft(N: int) -> np.ndarray:
    p = propagator(N)
    w = 2 * N + 1
    size = fft_size(2 * w - 1)
    spec = sfft.rfftn(p, s=(size,) * 3)
    full = sfft.irfftn(spec * spec, s=(size,) * 3)
    return full[: 2 * w - 1, : 2 * w - 1, : 2 * w - 1]


@lru_cache(maxsize=None)
def pair_convolution(N: int) -> np.ndarray:
    """c_N on the centered cube of half-width 2N (index n + 2N)."""
    _check_cutoff(N)
    out = _pair_convolution_direct(N) if N <= DIRECT_CONVOLUTION_MAX else _pair_convolution_fft(N)
    out.setflags(write=False)
    return out


def pair_convolution_at(N: int, modes: np.ndarray) -> np.ndarray:
    c = pair_convolution(N)
    m = np.asarray(modes) + 2 * N
    return c[m[..., 0], m[..., 1], m[..., 2]]


# ---------------------------------------------------------------------------
# symmetric reductions
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _octant_orbits(R: int):
    """Representatives 0 <= a <= b <= c <= R with the size of their orbit
    under coordinate permutations and sign flips."""
    reps = []
    mult = []
    for a in range(R + 1):
        for b in range(a, R + 1):
            for c in range(b, R + 1):
                trip = (a, b, c)
                nonzero = sum(1 for x in trip if x)
                perms = len(set(itertools.permutations(trip)))
                reps.append(trip)
                mult.append(perms * 2**nonzero)
    return np.array(reps, dtype=np.int64), np.array(mult, dtype=np.float64)


def symmetric_sum(values: np.ndarray, R: int, inner: int | None = None) -> float:
    """fsum of a cube-symmetric array on the centered cube of half-width R.

    ``inner`` restricts to |n_j| <= inner.  The array is read only at orbit
    representatives, so the result does not depend on summation order.
    """
    lim = R if inner is None else inner
    reps, mult = _octant_orbits(lim)
    vals = values[reps[:, 0] + R, reps[:, 1] + R, reps[:, 2] + R]
    return math.fsum((mult * vals).tolist())


def full_sum(values: np.ndarray) -> float:
    return math.fsum(np.ravel(values).tolist())


# ---------------------------------------------------------------------------
# diagrams
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def tadpole(N: int) -> float:
    """sigma_N = sum over the cube of <n>^{-2}; the variance of u_N(x)."""
    _check_cutoff(N)
    return symmetric_sum(propagator(N), N)


def wick_l2_variance(N: int) -> float:
    """Var(int :u_N^2:) = 2 sum over the cube of <n>^{-4}."""
    _check_cutoff(N)
    return 2.0 * symmetric_sum(propagator(N) ** 2, N)


@lru_cache(maxsize=None)
def _sunset_terms(N: int) -> tuple[float, float]:
    c = pair_convolution(N)
    two = 2 * N
    p_big = 1.0 / (1.0 + cube_norm_sq(two))
    prod = p_big * c
    return symmetric_sum(prod, two, inner=N), symmetric_sum(prod, two)


def sunset(N: int) -> float:
    """sum_{n1+n2+n3=0} prod <n_i>^{-2}, all three modes in the cube."""
    _check_cutoff(N)
    return _sunset_terms(N)[0]


def _unit_time(t: float):
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time must lie in [0, 1], got {t}")


def wick_square_variance_profile(N: int, t: float = 1.0) -> float:
    """E ||:u_N(t)^2:||_{H^-1}^2 = 2 t^2 sum_n <n>^{-2} c_N(n) (all n, |n_j| <= 2N)."""
    _check_cutoff(N)
    _unit_time(t)
    return 2.0 * t * t * _sunset_terms(N)[1]


def mixed_pair_variance_profile(N: int, t: float = 1.0) -> float:
    """E ||u_N(t) w_N(t)||_{H^-1}^2 for independent u, w."""
    _check_cutoff(N)
    _unit_time(t)
    return t * t * _sunset_terms(N)[1]


def counter_energy_rates(N: int) -> tuple[float, float]:
    """E||dZ_S/dt(t)||_{H^1}^2 / t^2 and E||dZ_W/dt(t)||_{H^1}^2 / t^2.

    dZ_S/dt = (1/2) <n>^{-2} pi_N :u^2:, dZ_W/dt = <n>^{-2} pi_N (u w); the
    mode variances are 2 t^2 c_N(n) and t^2 c_N(n), giving sunset/2 and sunset.
    """
    s = sunset(N)
    return 0.5 * s, s


def delta_components(N: int, lam: float, time_factor: float = 1.0 / 3.0) -> tuple[float, float]:
    """(delta_S, delta_W) = (lam^2 / 2) int_0^1 E||dZ/dt||_{H^1}^2 dt.

    ``time_factor`` is int_0^1 t^2 dt; discrete left-point schemes pass
    sum_k (k/L)^2 / L instead.
    """
    _check_cutoff(N)
    rs, rw = counter_energy_rates(N)
    lam2 = float(lam) ** 2
    return 0.5 * lam2 * rs * time_factor, 0.5 * lam2 * rw * time_factor


def delta_counterterm(N: int, lam: float) -> float:
    """Beyond-Wick constant delta_{N,lam} = lam^2 sunset(N) / 4."""
    s, w = delta_components(N, lam)
    return s + w


def left_point_time_factor(L: int) -> float:
    """sum_{k<L} (k/L)^2 / L, the left-point Riemann value of int_0^1 t^2 dt."""
    return math.fsum((k / L) ** 2 for k in range(L)) / L


def delta_counterterm_discrete(N: int, lam: float, L: int) -> float:
    s, w = delta_components(N, lam, left_point_time_factor(L))
    return s + w


def cubic_variance(N: int, lam: float) -> float:
    """E H_N^2 with H_N = (lam/2) int :u_N^2: w_N; equals lam^2 sunset(N) / 2."""
    _check_cutoff(N)
    return (0.5 * lam) ** 2 * 2.0 * sunset(N)


def cross_log_sum(N: int, M: int) -> tuple[float, float]:
    """int_0^1 E<dZ_{S,N}, dZ_{S,M}>_{H^1} dt and the W counterpart, N <= M.

    With the cube projector chi_M = 1 wherever chi_N = 1, so both values reduce
    to the N-cutoff self pairings and do not depend on M.
    """
    _check_cutoff(N)
    _check_cutoff(M, "M")
    if N > M:
        raise ValueError("cross_log_sum needs N <= M")
    rs, rw = counter_energy_rates(N)
    return rs / 3.0, rw / 3.0


# ---------------------------------------------------------------------------
# the concentrating profile f_M
# ---------------------------------------------------------------------------


def _bump_raw(r):
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    inside = (r > 0.5) & (r < 1.0)
    ri = r[inside]
    out[inside] = np.exp(-1.0 / ((ri - 0.5) * (1.0 - ri)))
    return out


@lru_cache(maxsize=None)
def _bump_norm() -> float:
    x, w = np.polynomial.legendre.leggauss(200)
    r = 0.75 + 0.25 * x
    val = 0.25 * float(np.sum(w * 4.0 * math.pi * r * r * _bump_raw(r) ** 2))
    return 1.0 / math.sqrt(val)


def profile_radial(r) -> np.ndarray:
    """Radial profile of the Fourier transform of f: supported in 1/2 < r < 1,
    normalized to unit L^2 norm on R^3."""
    return _bump_norm() * _bump_raw(r)


def f_coefficients(M: int) -> np.ndarray:
    """f_hat_M(n) = M^{-3/2} psi(|n| / M) on the centered cube of half-width M."""
    _check_cutoff(M, "M", 2)
    r = np.sqrt(cube_norm_sq(M).astype(np.float64)) / M
    return M**-1.5 * profile_radial(r)


def f_profile(M: int) -> LatticeField:
    return LatticeField(GridSpec(M), f_coefficients(M).astype(np.complex128))


def f_compact(M: int, n: int | None = None) -> np.ndarray:
    """f_M as a compact real coefficient array on the cube of half-width n >= M."""
    n = M if n is None else n
    hs = half_space(n)
    r = np.sqrt(hs.norm_sq.astype(np.float64)) / M
    return M**-1.5 * profile_radial(r)


@dataclass(frozen=True)
class FMoments:
    l2: float
    h_neg_alpha: float
    l3: float


@lru_cache(maxsize=None)
def f_moments(M: int, alpha: float = 1.0) -> FMoments:
    """(int f_M^2, int (<nabla>^{-alpha} f_M)^2, int f_M^3)."""
    f = f_profile(M)
    c = f.coeffs.real
    l2 = symmetric_sum(c * c, M)
    hn = symmetric_sum(c * c * (1.0 + cube_norm_sq(M)) ** (-alpha), M)
    l3 = cubic_integral(f, f, f)
    return FMoments(l2, hn, l3)


# ---------------------------------------------------------------------------
# the Z_M approximation: closed-form second moments
# ---------------------------------------------------------------------------
#
# For |n| <= M the process X = A - Z_M solves dX = -kappa X dt + dA with
# kappa = M / <n>, and A = B / <n> - lam Z_W with dZ_W/dt = <n>^{-2} P(t),
# E[P(s) conj P(s')] = min(s, s')^2 c_N(n).  Hence
#   E|X(t)|^2 = (1 - e^{-2 kappa t}) / (2 kappa <n>^2) + lam^2 <n>^{-4} c_N(n) G_t(kappa)
# with G_t(kappa) = int_0^t int_0^t e^{-kappa(2t - s - s')} min(s, s')^2 ds ds'.


def _g_series_coeffs(K: int = 24) -> np.ndarray:
    # m_k = int int_{[0,1]^2} (2 - a - b)^k min(a, b)^2, exact by Gauss-Legendre
    x, w = np.polynomial.legendre.leggauss(40)
    a = 0.5 * (x + 1.0)
    wa = 0.5 * w
    out = np.empty(K)
    for k in range(K):
        # inner over b in [0, a]
        tot = 0.0
        for ai, wi in zip(a, wa):
            b = ai * a
            tot += wi * ai * float(np.sum(wa * (2.0 - ai - b) ** k * b * b))
        out[k] = 2.0 * tot * (-1.0) ** k / math.factorial(k)
    return out


_G_SERIES = _g_series_coeffs()


def g_scaled(x) -> np.ndarray:
    """g(x) = G_1(x): closed form for x >= 0.5, power series below."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    big = x >= 0.5
    xb = x[big]
    out[big] = 1.0 / xb**2 - 3.0 / xb**3 + (3.5 - 4.0 * np.exp(-xb) + 0.5 * np.exp(-2.0 * xb)) / xb**4
    xs = x[~big]
    out[~big] = np.polynomial.polynomial.polyval(xs, _G_SERIES)
    return out


def g_kernel(t, kappa) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return t**4 * g_scaled(np.asarray(kappa) * t)


_GL01 = np.polynomial.legendre.leggauss(48)


def g_kernel_time_integral(kappa) -> np.ndarray:
    """int_0^1 G_t(kappa) dt by Gauss-Legendre (smooth integrand)."""
    x, w = _GL01
    t = 0.5 * (x + 1.0)
    kappa = np.asarray(kappa, dtype=np.float64)
    vals = g_kernel(t[None, :], kappa.reshape(-1, 1))
    return (0.5 * vals @ w).reshape(kappa.shape)


def ou_variance(kappa, t=1.0) -> np.ndarray:
    """int_0^t e^{-2 kappa (t - s)} ds."""
    kappa = np.asarray(kappa, dtype=np.float64)
    return -np.expm1(-2.0 * kappa * t) / (2.0 * kappa)


def ou_variance_time_integral(kappa) -> np.ndarray:
    """int_0^1 ou_variance(kappa, t) dt."""
    kappa = np.asarray(kappa, dtype=np.float64)
    return 1.0 / (2.0 * kappa) + np.expm1(-2.0 * kappa) / (4.0 * kappa**2)


@dataclass(frozen=True)
class ZMModeTable:
    """Per-mode ingredients on the cube of half-width N, in compact order."""

    M: int
    N: int
    bracket_sq: np.ndarray
    weights: np.ndarray
    ball: np.ndarray
    kappa: np.ndarray
    pair_conv: np.ndarray


@lru_cache(maxsize=None)
def zm_mode_table(M: int, N: int) -> ZMModeTable:
    _check_cutoff(M, "M")
    if M > N:
        raise ValueError("Z_M needs M <= N")
    hs = half_space(N)
    ns = hs.norm_sq
    br2 = 1.0 + ns
    ball = ns <= M * M
    kappa = M / np.sqrt(br2)
    conv = pair_convolution_at(N, hs.modes)
    return ZMModeTable(M, N, br2, hs.weights, ball, kappa, conv)


def _time_grid_weights(kappa: np.ndarray, L: int, scheme: str) -> np.ndarray:
    h = 1.0 / L
    k = np.arange(L)
    lag = (L - 1 - k)[None, :]
    kh = (kappa * h)[:, None]
    if scheme == "euler":
        return (1.0 - kh) ** lag
    if scheme == "exact_kernel":
        return np.exp(-kh * lag) * (-np.expm1(-kh) / kh)
    raise ValueError(f"unknown scheme {scheme!r}")


def zm_second_moments(M: int, N: int, lam: float, L: int | None = None, scheme: str = "euler"):
    """Per-mode E|A(1)|^2, E|X(1)|^2 and int_0^1 E|X(t)|^2 dt on the compact cube.

    ``L = None`` gives the continuous-time values.  With ``L`` set, the values
    are exact for the discrete recursion driven by a left-point counter
    process: X_L = sum_k a_k dA_k with per-scheme weights a_k.
    """
    tab = zm_mode_table(M, N)
    br2, c = tab.bracket_sq, tab.pair_conv
    lam2 = float(lam) ** 2
    if L is None:
        ea = 1.0 / br2 + lam2 * c / (6.0 * br2**2)
        ex = np.where(tab.ball, ou_variance(tab.kappa) / br2 + lam2 * c * g_kernel(1.0, tab.kappa) / br2**2, ea)
        ix = np.where(
            tab.ball,
            ou_variance_time_integral(tab.kappa) / br2 + lam2 * c * g_kernel_time_integral(tab.kappa) / br2**2,
            0.0,
        )
        return ea, ex, ix
    if L < 1:
        raise ValueError("L must be positive")
    h = 1.0 / L
    t = np.arange(L) * h
    cmin = np.minimum.outer(t, t) ** 2
    total_min = float(cmin.sum())
    ea = 1.0 / br2 + lam2 * h * h * c * total_min / br2**2
    ex = ea.copy()
    ix = np.zeros_like(ea)
    # modes in the ball share kappa whenever they share |n|^2
    ball_idx = np.nonzero(tab.ball)[0]
    uniq, inv = np.unique(br2[ball_idx], return_inverse=True)
    kap = M / np.sqrt(uniq)
    if scheme == "euler" and np.any(kap * h > 1.0):
        raise ValueError("euler scheme needs kappa h <= 1; increase L")
    noise_x = np.empty(uniq.size)
    drift_x = np.empty(uniq.size)
    noise_i = np.empty(uniq.size)
    drift_i = np.empty(uniq.size)
    for u, kv in enumerate(kap):
        a = _time_grid_weights(np.array([kv]), L, scheme)[0]
        noise_x[u] = h * float(a @ a)
        drift_x[u] = h * h * float(a @ cmin @ a)
        # running values X_j for j = 0..L-1 (left-point time integral)
        ni = 0.0
        di = 0.0
        for j in range(1, L):
            aj = a[L - j :]  # both schemes weight increments by lag only
            ni += h * float(aj @ aj)
            cj = cmin[:j, :j]
            di += h * h * float(aj @ cj @ aj)
        noise_i[u] = h * ni
        drift_i[u] = h * di
    cb = c[ball_idx]
    b2 = uniq[inv]
    ex[ball_idx] = noise_x[inv] / b2 + lam2 * cb * drift_x[inv] / b2**2
    ix[ball_idx] = noise_i[inv] / b2 + lam2 * cb * drift_i[inv] / b2**2
    return ea, ex, ix


def alpha_numerator(M: int, N: int, lam: float, L: int | None = None, scheme: str = "euler") -> float:
    """E[2 int A Z_M - int Z_M^2] + E[2 lam int A Z_W + lam^2 int Z_W^2].

    Both brackets collapse to tadpole(N) - E int (A - Z_M)^2 because the
    Gaussian and second-chaos parts of A are orthogonal.
    """
    ea, ex, _ = zm_second_moments(M, N, lam, L, scheme)
    w = zm_mode_table(M, N).weights
    tad = math.fsum((w / zm_mode_table(M, N).bracket_sq).tolist())
    return tad - math.fsum((w * ex).tolist())


def alpha_coefficient(M: int, N: int, lam: float, L: int | None = None, scheme: str = "euler") -> float:
    """alpha_{M,N}: the numerator above divided by int f_M^2."""
    _check_cutoff(M, "M", 2)
    if M > N:
        raise ValueError("alpha_coefficient needs M <= N")
    return alpha_numerator(M, N, lam, L, scheme) / f_moments(M).l2


@dataclass(frozen=True)
class ZMExactMoments:
    """Exact values of the moment statistics of the Z_M suite (zero coupling)."""

    zm_pointwise: float
    recentred_gain: float
    wick_l2_variance: float
    profile_overlap: float
    kinetic: float


def zm_exact_moments(M: int, N: int, lam: float = 0.0) -> ZMExactMoments:
    """Continuous-time values for the Gaussian (lam = 0) case.

    Only the second-moment statistics are available in closed form when
    lam != 0; the fourth-moment ones are then reported as NaN.
    """
    tab = zm_mode_table(M, N)
    w = tab.weights
    ea, ex, ix = zm_second_moments(M, N, lam)
    br2 = tab.bracket_sq
    kap = tab.kappa
    fsum = lambda a: math.fsum((w * a).tolist())
    gain = fsum(np.where(tab.ball, ea - ex, 0.0))
    kinetic = M * M * fsum(ix)
    if lam != 0.0:
        return ZMExactMoments(math.nan, gain, math.nan, math.nan, kinetic)
    ez = np.where(
        tab.ball,
        (1.0 - 2.0 * (-np.expm1(-kap)) / kap + ou_variance(kap)) / br2,
        0.0,
    )
    fc = f_compact(M, N)
    return ZMExactMoments(
        zm_pointwise=fsum(ez),
        recentred_gain=gain,
        wick_l2_variance=2.0 * fsum(ex * ex),
        profile_overlap=fsum((ea + ez) * fc * fc),
        kinetic=kinetic,
    )


# ---------------------------------------------------------------------------
# brute-force oracles (unreduced enumeration, small N only)
# ---------------------------------------------------------------------------


def _cube_modes(N: int) -> np.ndarray:
    m = np.arange(-N, N + 1)
    return np.stack(np.meshgrid(m, m, m, indexing="ij"), axis=-1).reshape(-1, 3)


def _prop(modes):
    return 1.0 / (1.0 + (modes**2).sum(axis=-1))


def brute_tadpole(N: int) -> float:
    return math.fsum(1.0 / (1 + a * a + b * b + c * c) for a, b, c in itertools.product(range(-N, N + 1), repeat=3))


def brute_wick_l2_variance(N: int) -> float:
    return 2.0 * math.fsum(
        1.0 / (1 + a * a + b * b + c * c) ** 2 for a, b, c in itertools.product(range(-N, N + 1), repeat=3)
    )


def brute_sunset(N: int) -> float:
    """Enumerates all (n1, n2) in the cube and keeps n3 = -(n1 + n2) in the cube."""
    m = _cube_modes(N)
    terms = []
    for n1 in m:
        n3 = -(n1[None, :] + m)
        keep = np.all(np.abs(n3) <= N, axis=1)
        terms.append(_prop(n1) * _prop(m[keep]) * _prop(n3[keep]))
    return math.fsum(np.concatenate(terms).tolist())


def brute_pair_profile(N: int, outer: int | None = None, inner_cut: int | None = None) -> float:
    """sum_{n1, n2} chi chi <n1 + n2>^{-2} <n1>^{-2} <n2>^{-2}; ``outer`` bounds |n1 + n2|_inf."""
    m = _cube_modes(N)
    if inner_cut is not None:
        m = m[np.all(np.abs(m) <= inner_cut, axis=1)]
    terms = []
    for n1 in m:
        s = n1[None, :] + m
        if outer is not None:
            keep = np.all(np.abs(s) <= outer, axis=1)
        else:
            keep = np.ones(len(m), dtype=bool)
        terms.append(_prop(n1) * _prop(m[keep]) * _prop(s[keep]))
    return math.fsum(np.concatenate(terms).tolist())


def brute_cross_log_sum(N: int, M: int) -> tuple[float, float]:
    """Pair sums with explicit chi_N chi_M weights over the larger cube."""
    big = max(N, M)
    m = _cube_modes(big)
    inN = np.all(np.abs(m) <= N, axis=1)
    inM = np.all(np.abs(m) <= M, axis=1)
    wgt = (inN & inM).astype(float)
    terms = []
    for i, n1 in enumerate(m):
        s = n1[None, :] + m
        outer = np.all(np.abs(s) <= min(N, M), axis=1)
        terms.append(wgt[i] * wgt * outer * _prop(n1) * _prop(m) * _prop(s))
    pair = math.fsum(np.concatenate(terms).tolist())
    # S: (1/4) * 2 * pair / 3 ; W: pair / 3
    return pair / 6.0, pair / 3.0


def brute_f_moments(M: int, alpha: float = 1.0) -> FMoments:
    m = _cube_modes(M)
    f = M**-1.5 * profile_radial(np.sqrt((m**2).sum(axis=1)) / M)
    l2 = math.fsum((f * f).tolist())
    hn = math.fsum((f * f * (1.0 + (m**2).sum(axis=1)) ** (-alpha)).tolist())
    lut = {tuple(x): v for x, v in zip(m.tolist(), f)}
    terms = []
    nz = [(tuple(x), v) for x, v in zip(m.tolist(), f) if v != 0.0]
    for a, fa in nz:
        for b, fb in nz:
            c = (-a[0] - b[0], -a[1] - b[1], -a[2] - b[2])
            fc = lut.get(c, 0.0)
            if fc:
                terms.append(fa * fb * fc)
    return FMoments(l2, hn, math.fsum(terms))


def brute_pair_convolution_at(N: int, n) -> float:
    m = _cube_modes(N)
    other = np.asarray(n)[None, :] - m
    keep = np.all(np.abs(other) <= N, axis=1)
    return math.fsum((_prop(m[keep]) * _prop(other[keep])).tolist())


def _triangle_quadrature(fn, order: int = 60) -> float:
    """int_0^1 int_0^s fn(s, s') ds' ds by tensor Gauss-Legendre (fn smooth on the triangle)."""
    x, w = np.polynomial.legendre.leggauss(order)
    a = 0.5 * (x + 1.0)
    wa = 0.5 * w
    s = a[:, None]
    sp = s * a[None, :]
    return float(np.sum(wa[:, None] * wa[None, :] * s * fn(s, sp)))


def brute_alpha_numerator(M: int, N: int, lam: float) -> float:
    """Continuous-time numerator with E|X(1)|^2 from direct quadrature of the
    defining kernels and c_N(n) by pair enumeration, mode by mode."""
    m = _cube_modes(N)
    ns = (m**2).sum(axis=1)
    x, w = np.polynomial.legendre.leggauss(60)
    t = 0.5 * (x + 1.0)
    terms = []
    for mode, q in zip(m, ns):
        br2 = 1.0 + float(q)
        c = brute_pair_convolution_at(N, mode)
        if q <= M * M:
            kap = M / math.sqrt(br2)
            noise = 0.5 * float(np.sum(w * np.exp(-2.0 * kap * (1.0 - t))))
            drift = 2.0 * _triangle_quadrature(lambda s, sp: np.exp(-kap * (2.0 - s - sp)) * sp * sp)
            ex = noise / br2 + lam * lam * c * drift / br2**2
        else:
            ex = 1.0 / br2 + lam * lam * c / (6.0 * br2**2)
        terms.append(1.0 / br2 - ex)
    return math.fsum(terms)
