"""Time-discretized Gaussian processes, Wick processes and the drift equations.

Paths live on the uniform grid t_k = k / L.  Every path owns its own random
stream (see ``path_streams``); at each step it draws the S increment block and
then the W increment block, so results never depend on how paths are batched
or distributed over workers.  All time integrals are left-point Riemann sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import diagram_engine as dg
from .lattice_field import (
    FieldPair,
    GridSpec,
    LatticeField,
    a_norm_compact,
    compact_inner,
    compact_to_centered,
    fft_size,
    half_space,
    multiply,
    project,
    rfft_layout,
    restrict_compact,
    sample_gff_compact,
    standard_complex_normals,
)

MIN_SDE_STEPS = 8
QUINTIC_EPS = 0.1
DEFAULT_STEPS = 256


# ---------------------------------------------------------------------------
# random streams and summaries
# ---------------------------------------------------------------------------


def path_streams(seed: int, start: int, count: int, tag: int = 0) -> list[np.random.Generator]:
    """Independent generators for paths start .. start + count - 1 of a run."""
    return [np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(tag), start + i))) for i in range(count)]


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    count: int

    @classmethod
    def of(cls, samples) -> "Estimate":
        x = np.asarray(samples, dtype=np.float64).ravel()
        n = x.size
        if n == 0:
            return cls(math.nan, math.nan, 0)
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(np.mean(x)), se, n)

    def z_score(self, exact: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == exact else math.inf
        return (self.mean - exact) / self.stderr

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "count": self.count}


# ---------------------------------------------------------------------------
# path bundles
# ---------------------------------------------------------------------------


def _draw_step(gens: Sequence[np.random.Generator], size: int, scale: float):
    bs = np.empty((len(gens), size), dtype=np.complex128)
    bw = np.empty_like(bs)
    for i, g in enumerate(gens):
        bs[i] = standard_complex_normals(g, (), size)
        bw[i] = standard_complex_normals(g, (), size)
    return bs * scale, bw * scale


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Brownian increments of the S and W mode families for a batch of paths.

    ``inc_s[p, k]`` holds B^n(t_{k+1}) - B^n(t_k) in compact order (variance
    1/L per mode, complex rows split evenly between real and imaginary parts).
    """

    grid: GridSpec
    N: int
    L: int
    inc_s: np.ndarray
    inc_w: np.ndarray

    @property
    def paths(self) -> int:
        return self.inc_s.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.L

    def brownian(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(B_S(t_k), B_W(t_k)) compact, batched over paths."""
        return self.inc_s[:, :k].sum(axis=1), self.inc_w[:, :k].sum(axis=1)

    def snapshot(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(<1>_S(t_k), <1>_W(t_k)) compact."""
        br = half_space(self.N).bracket_sq ** -0.5
        bs, bw = self.brownian(k)
        return bs * br, bw * br

    def field_pair(self, k: int, path: int = 0) -> FieldPair:
        u, w = self.snapshot(k)
        return FieldPair(
            LatticeField.from_compact(self.grid, u[path], self.N),
            LatticeField.from_compact(self.grid, w[path], self.N),
        )

    def increments(self, k: int):
        return self.inc_s[:, k], self.inc_w[:, k]

    def refine_half(self) -> "PathBundle":
        """Coarsen by summing pairs of increments (same noise, half the steps)."""
        if self.L % 2:
            raise ValueError("need an even number of steps")
        s = self.inc_s.reshape(self.paths, self.L // 2, 2, -1).sum(axis=2)
        w = self.inc_w.reshape(self.paths, self.L // 2, 2, -1).sum(axis=2)
        return PathBundle(self.grid, self.N, self.L // 2, s, w)


def simulate_bundle(grid: GridSpec, N: int, L: int, rng: np.random.Generator, paths: int = 1) -> PathBundle:
    """Sample Brownian increments for ``paths`` independent paths.

    Each path gets a child stream spawned from ``rng`` and draws in the same
    order as the streaming engines below.
    """
    if N > grid.n_max:
        raise ValueError("cutoff N exceeds the grid")
    if L < 1 or paths < 1:
        raise ValueError("need L >= 1 and at least one path")
    gens = rng.spawn(paths)
    return bundle_from_streams(grid, N, L, gens)


def bundle_from_streams(grid: GridSpec, N: int, L: int, gens: Sequence[np.random.Generator]) -> PathBundle:
    size = half_space(N).size
    s = np.empty((len(gens), L, size), dtype=np.complex128)
    w = np.empty_like(s)
    for k in range(L):
        s[:, k], w[:, k] = _draw_step(gens, size, math.sqrt(1.0 / L))
    return PathBundle(grid, N, L, s, w)


def zero_bundle(grid: GridSpec, N: int, L: int, paths: int = 1) -> PathBundle:
    size = half_space(N).size
    z = np.zeros((paths, L, size), dtype=np.complex128)
    return PathBundle(grid, N, L, z, z.copy())


# ---------------------------------------------------------------------------
# Wick powers
# ---------------------------------------------------------------------------


def wick_square(u: LatticeField, N: int, sigma: float | None = None) -> LatticeField:
    """:u_N^2: = u_N^2 - sigma_N, exact on the cube of half-width 2N."""
    sigma = dg.tadpole(N) if sigma is None else sigma
    uN = project(u, N).regrid(GridSpec(N))
    sq = multiply(uN, uN)
    return sq - LatticeField.constant(sq.grid, sigma)


def wick_cubic_mixed(u: LatticeField, w: LatticeField, N: int, sigma: float | None = None) -> LatticeField:
    """:u_N^2 w_N: = u_N^2 w_N - sigma_N w_N, from one cubic product on a grid
    of at least 6N + 1 points (exact on the cube of half-width 3N)."""
    sigma = dg.tadpole(N) if sigma is None else sigma
    uc = project(u, N).regrid(GridSpec(N)).compact()
    wc = project(w, N).regrid(GridSpec(N)).compact()
    P = fft_size(6 * N + 1)
    v = rfft_layout(N, P).to_physical(np.stack([uc, wc]))
    cube = (v[0] * v[0] - sigma) * v[1]
    out = GridSpec(3 * N)
    return LatticeField(out, compact_to_centered(rfft_layout(3 * N, P).from_physical(cube), 3 * N))


def wick_integrals(u: np.ndarray, w: np.ndarray, N: int, size: int | None = None, sigma: float | None = None):
    """Batched (int :u^2:, int :u^2: w) for compact GFF arrays on the cube N."""
    sigma = dg.tadpole(N) if sigma is None else sigma
    P = size or GridSpec(N).physical_size
    lay = rfft_layout(N, P)
    wt = half_space(N).weights
    sq = np.einsum("...k,k->...", np.abs(u) ** 2, wt) - sigma
    U = lay.to_physical(u)
    W = lay.to_physical(w)
    cub = np.mean((U * U - sigma) * W, axis=(-3, -2, -1), dtype=np.float64)
    return sq, cub


# ---------------------------------------------------------------------------
# counter processes
# ---------------------------------------------------------------------------


class CounterRates:
    """dZ_S/dt = (1/2)<n>^{-2} :u^2:, dZ_W/dt = <n>^{-2} u w on the cube N."""

    def __init__(self, N: int):
        self.N = N
        hs = half_space(N)
        self.prop = 1.0 / hs.bracket_sq
        self.weights = hs.weights
        self.layout = rfft_layout(N, GridSpec(N).physical_size)
        self.tadpole = dg.tadpole(N)

    def __call__(self, u: np.ndarray, w: np.ndarray, t: float):
        lay = self.layout
        U = lay.to_physical(u)
        W = lay.to_physical(w)
        prods = lay.from_physical(np.stack([U * U, U * W]))
        sq = prods[0]
        sq[..., 0] -= t * self.tadpole
        return 0.5 * self.prop * sq, self.prop * prods[1]

    def h1_energy(self, z: np.ndarray) -> np.ndarray:
        return np.einsum("...k,k->...", np.abs(z) ** 2, self.weights / self.prop)


@dataclass(frozen=True, eq=False)
class CounterIntegrals:
    """Z_S(1), Z_W(1) (compact, batched) and the accumulated energies
    h sum_k ||dZ/dt(t_k)||_{H^1}^2 for both components."""

    N: int
    zs: np.ndarray
    zw: np.ndarray
    energy_s: np.ndarray
    energy_w: np.ndarray
    rate_s_final: np.ndarray
    rate_w_final: np.ndarray

    def as_fields(self, grid: GridSpec, path: int = 0) -> tuple[LatticeField, LatticeField]:
        return (
            LatticeField.from_compact(grid, self.zs[path], self.N),
            LatticeField.from_compact(grid, self.zw[path], self.N),
        )


def integrate_counter_processes(bundle: PathBundle) -> CounterIntegrals:
    """Left-point integration of dZ_S/dt and dZ_W/dt over the bundle grid.

    ``rate_*_final`` are the rates evaluated at t = 1 (useful for checking the
    H^1 energy of dZ/dt against the diagram values).
    """
    if bundle.L < 1 or bundle.paths < 1:
        raise ValueError("empty bundle")
    N, h = bundle.N, bundle.h
    rates = CounterRates(N)
    br = half_space(N).bracket_sq ** -0.5
    u = np.zeros((bundle.paths, half_space(N).size), dtype=np.complex128)
    w = np.zeros_like(u)
    zs = np.zeros_like(u)
    zw = np.zeros_like(u)
    es = np.zeros(bundle.paths)
    ew = np.zeros(bundle.paths)
    for k in range(bundle.L):
        rs, rw = rates(u, w, k * h)
        zs += h * rs
        zw += h * rw
        es += h * rates.h1_energy(rs)
        ew += h * rates.h1_energy(rw)
        ds, dw = bundle.increments(k)
        u = u + ds * br
        w = w + dw * br
    rs, rw = rates(u, w, 1.0)
    return CounterIntegrals(N, zs, zw, es, ew, rs, rw)


# ---------------------------------------------------------------------------
# the Z_M approximation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ZMPath:
    """Z_M(1) and X(1) = A(1) - Z_M(1) (compact, zero outside the ball), plus
    the left-point kinetic integral h sum_k ||dZ_M/dt(t_k)||_{H^1}^2."""

    M: int
    N: int
    scheme: str
    z: np.ndarray
    x: np.ndarray
    a: np.ndarray
    kinetic: np.ndarray


def _check_sde_steps(L: int):
    if L < MIN_SDE_STEPS:
        raise ValueError(f"SDE work needs at least {MIN_SDE_STEPS} time steps, got {L}")


def simulate_zm(bundle: PathBundle, M: int, lam: float, scheme: str = "euler") -> ZMPath:
    """Solve dZ = (M / <n>) (A - Z) dt on |n| <= M along the bundle.

    ``euler`` steps Z_{k+1} = Z_k + h kappa (A_k - Z_k).  ``exact_kernel``
    evaluates Z(1) = A(1) - int e^{-kappa (1 - s)} dA(s) with each increment
    weighted by the kernel averaged over its step.
    """
    if M > bundle.N:
        raise ValueError("Z_M needs M <= N")
    if scheme not in ("euler", "exact_kernel"):
        raise ValueError(f"unknown scheme {scheme!r}")
    _check_sde_steps(bundle.L)
    N, L, h = bundle.N, bundle.L, bundle.h
    tab = dg.zm_mode_table(M, N)
    ball = np.nonzero(tab.ball)[0]
    kap = tab.kappa[ball]
    if scheme == "euler" and np.any(kap * h > 1.0):
        raise ValueError("euler needs L >= M so that kappa h <= 1")
    rates = CounterRates(N)
    br = half_space(N).bracket_sq ** -0.5
    P = bundle.paths
    size = half_space(N).size
    u = np.zeros((P, size), dtype=np.complex128)
    w = np.zeros_like(u)
    a_tot = np.zeros_like(u)
    x = np.zeros((P, ball.size), dtype=np.complex128)
    z = np.zeros_like(x)
    kin = np.zeros(P)
    wts = tab.weights[ball]
    lag_weight = None
    if scheme == "exact_kernel":
        lag = np.arange(L)[::-1]
        kh = kap * h
        lag_weight = np.exp(-np.outer(lag, kh)) * (-np.expm1(-kh) / kh)
    for k in range(L):
        _, rw = rates(u, w, k * h)
        ds, dw = bundle.increments(k)
        da = ds * br - lam * h * rw
        a_tot += da
        if scheme == "euler":
            kin += h * M * M * np.einsum("pk,k->p", np.abs(x) ** 2, wts)
            z += h * kap * x
            x = (1.0 - kap * h) * x + da[:, ball]
        else:
            x += lag_weight[k] * da[:, ball]
        u = u + ds * br
        w = w + dw * br
    if scheme == "exact_kernel":
        z = a_tot[:, ball] - x
        kin[:] = math.nan
    zf = np.zeros((P, size), dtype=np.complex128)
    xf = a_tot.copy()
    zf[:, ball] = z
    xf[:, ball] = x
    return ZMPath(M, N, scheme, zf, xf, a_tot, kin)


# ---------------------------------------------------------------------------
# the streaming engine used by the variational experiments
# ---------------------------------------------------------------------------


@dataclass
class EngineOutput:
    """Per-path terminal data and lambda-independent accumulators.

    With X = X0 - lam X1 and Z_M = Z0 - lam Z1 (ball rows only), the scalars are
      k00 = h sum M^2 ||X0_k||^2, k01 = h sum M^2 <X0_k, X1_k>, k11 likewise,
      g0 = h sum <kappa X0_k, f>_{H^1}, g1 likewise for X1,
      cs0 = h sum <kappa X0_k, dZ_S/dt>_{H^1}, cw0 = ... with dZ_W/dt, cs1, cw1,
      es, ew = h sum ||dZ_{S,W}/dt||_{H^1}^2.
    """

    u: np.ndarray
    w: np.ndarray
    zs: np.ndarray
    zw: np.ndarray
    z0: np.ndarray | None = None
    z1: np.ndarray | None = None
    x0: np.ndarray | None = None
    x1: np.ndarray | None = None
    scalars: dict = field(default_factory=dict)


def run_engine(
    gens: Sequence[np.random.Generator] | None,
    N: int,
    L: int,
    M: int | None = None,
    f_ball: np.ndarray | None = None,
    bundle: PathBundle | None = None,
) -> EngineOutput:
    """Evolve a batch of paths step by step without storing the increments.

    Either ``gens`` (one stream per path) or a stored ``bundle`` supplies the
    noise; both produce identical output for the same streams.
    """
    h = 1.0 / L
    hs = half_space(N)
    size = hs.size
    P = len(gens) if bundle is None else bundle.paths
    rates = CounterRates(N)
    br = hs.bracket_sq ** -0.5
    h1w = hs.weights * hs.bracket_sq
    u = np.zeros((P, size), dtype=np.complex128)
    w = np.zeros_like(u)
    zs = np.zeros_like(u)
    zw = np.zeros_like(u)
    sc = {k: np.zeros(P) for k in ("es", "ew")}
    if M is not None:
        _check_sde_steps(L)
        tab = dg.zm_mode_table(M, N)
        ball = np.nonzero(tab.ball)[0]
        kap = tab.kappa[ball]
        if np.any(kap * h > 1.0):
            raise ValueError("euler needs L >= M so that kappa h <= 1")
        bw_h1 = h1w[ball]
        bw_l2 = hs.weights[ball]
        x0 = np.zeros((P, ball.size), dtype=np.complex128)
        x1 = np.zeros_like(x0)
        z0 = np.zeros_like(x0)
        z1 = np.zeros_like(x0)
        fb = np.zeros(ball.size) if f_ball is None else f_ball
        for key in ("k00", "k01", "k11", "g0", "g1", "cs0", "cs1", "cw0", "cw1"):
            sc[key] = np.zeros(P)
    for k in range(L):
        if k == 0:
            rs = np.zeros_like(u)
            rw = np.zeros_like(u)
        else:
            rs, rw = rates(u, w, k * h)
        zs += h * rs
        zw += h * rw
        sc["es"] += h * np.einsum("pk,k->p", np.abs(rs) ** 2, h1w)
        sc["ew"] += h * np.einsum("pk,k->p", np.abs(rw) ** 2, h1w)
        if bundle is None:
            ds, dw = _draw_step(gens, size, math.sqrt(h))
        else:
            ds, dw = bundle.increments(k)
        if M is not None:
            kx0 = kap * x0
            kx1 = kap * x1
            sc["k00"] += h * M * M * np.einsum("pk,k->p", np.abs(x0) ** 2, bw_l2)
            sc["k11"] += h * M * M * np.einsum("pk,k->p", np.abs(x1) ** 2, bw_l2)
            sc["k01"] += h * M * M * np.einsum("pk,k->p", (x0 * np.conj(x1)).real, bw_l2)
            sc["g0"] += h * (kx0.real @ (fb * bw_h1))
            sc["g1"] += h * (kx1.real @ (fb * bw_h1))
            rsb = rs[:, ball]
            rwb = rw[:, ball]
            sc["cs0"] += h * np.einsum("pk,k->p", (kx0 * np.conj(rsb)).real, bw_h1)
            sc["cs1"] += h * np.einsum("pk,k->p", (kx1 * np.conj(rsb)).real, bw_h1)
            sc["cw0"] += h * np.einsum("pk,k->p", (kx0 * np.conj(rwb)).real, bw_h1)
            sc["cw1"] += h * np.einsum("pk,k->p", (kx1 * np.conj(rwb)).real, bw_h1)
            z0 += h * kx0
            z1 += h * kx1
            x0 = (1.0 - kap * h) * x0 + ds[:, ball] * br[ball]
            x1 = (1.0 - kap * h) * x1 + h * rwb
        u = u + ds * br
        w = w + dw * br
    out = EngineOutput(u, w, zs, zw, scalars=sc)
    if M is not None:
        out.z0, out.z1, out.x0, out.x1 = z0, z1, x0, x1
    return out


# ---------------------------------------------------------------------------
# moment suite for Z_M
# ---------------------------------------------------------------------------


def _segment_cholesky(kappa: np.ndarray, dt: np.ndarray):
    """Cholesky factor of Cov(B(t+dt) - B(t), int_t^{t+dt} e^{-kappa (t+dt-s)} dB(s))."""
    v11 = dt
    v12 = -np.expm1(-kappa * dt) / kappa
    v22 = -np.expm1(-2.0 * kappa * dt) / (2.0 * kappa)
    l11 = np.sqrt(v11)
    l21 = np.where(l11 > 0, v12 / np.where(l11 > 0, l11, 1.0), 0.0)
    l22 = np.sqrt(np.maximum(v22 - l21**2, 0.0))
    return l11, l21, l22


def sample_zm_exact(M: int, N: int, gens: Sequence[np.random.Generator]):
    """Zero-coupling spectral sampler: per path and mode draw (B, X) at a
    uniform random time tau and at t = 1 from their exact joint law.

    Returns compact arrays A(1), X(1), X(tau) (zero outside the ball) and tau.
    """
    tab = dg.zm_mode_table(M, N)
    size = half_space(N).size
    P = len(gens)
    br = tab.bracket_sq ** -0.5
    A = np.empty((P, size), dtype=np.complex128)
    X1 = np.zeros_like(A)
    Xt = np.zeros_like(A)
    tau = np.empty(P)
    ball = tab.ball
    kap = np.where(ball, tab.kappa, 1.0)
    for i, g in enumerate(gens):
        tau[i] = g.random()
        z = [standard_complex_normals(g, (), size) for _ in range(4)]
        a11, a21, a22 = _segment_cholesky(kap, np.full(size, tau[i]))
        b11, b21, b22 = _segment_cholesky(kap, np.full(size, 1.0 - tau[i]))
        b_tau = a11 * z[0]
        x_tau = a21 * z[0] + a22 * z[1]
        db = b11 * z[2]
        jx = b21 * z[2] + b22 * z[3]
        b_one = b_tau + db
        x_one = np.exp(-kap * (1.0 - tau[i])) * x_tau + jx
        A[i] = br * b_one
        X1[i] = np.where(ball, br * x_one, br * b_one)
        Xt[i] = np.where(ball, br * x_tau, 0.0)
    return A, X1, Xt, tau


@dataclass
class ZMSuiteReport:
    M: int
    N: int
    lam: float
    paths: int
    estimates: dict
    exact: dict
    flags: list

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "N": self.N,
            "lambda": self.lam,
            "paths": self.paths,
            "estimates": {k: v.to_dict() for k, v in self.estimates.items()},
            "exact": self.exact,
            "flags": self.flags,
        }


ZM_STATISTICS = ("zm_pointwise", "recentred_gain", "wick_l2_variance", "profile_overlap", "kinetic", "a_norm_sq")


def zm_suite_samples(M: int, N: int, lam: float, gens, L: int | None = None, a_norm_paths: int = 0):
    """Per-path samples of the Z_M statistics for one chunk of streams."""
    tab = dg.zm_mode_table(M, N)
    hs = half_space(N)
    wt = hs.weights
    fc = dg.f_compact(M, N)
    if lam == 0.0:
        A, X1, Xt, _ = sample_zm_exact(M, N, gens)
        ex_mean = dg.zm_second_moments(M, N, 0.0)[1]
        lavo = M * M * np.einsum("pk,k->p", np.abs(Xt) ** 2, wt)
    else:
        L = L or max(16, M)
        zs = run_engine(gens, N, L, M)
        ball = np.nonzero(tab.ball)[0]
        A = zs.u - lam * zs.zw
        X1 = A.copy()
        X1[:, ball] = zs.x0 - lam * zs.x1
        ex_mean = dg.zm_second_moments(M, N, lam, L, "euler")[1]
        sc = zs.scalars
        lavo = sc["k00"] - 2 * lam * sc["k01"] + lam * lam * sc["k11"]
    Z = A - X1
    out = {
        "zm_pointwise": np.einsum("pk,k->p", np.abs(Z) ** 2, wt),
        "recentred_gain": np.einsum("pk,k->p", np.abs(A) ** 2 - np.abs(X1) ** 2, wt),
        "wick_l2_variance": (np.einsum("pk,k->p", np.abs(X1) ** 2, wt) - float(np.dot(ex_mean, wt))) ** 2,
        "profile_overlap": (A.real @ (fc * wt)) ** 2 + (Z.real @ (fc * wt)) ** 2,
        "kinetic": lavo,
    }
    if a_norm_paths:
        sub = Z[:a_norm_paths]
        out["a_norm_sq"] = a_norm_compact(sub, N, GridSpec(N).physical_size) ** 2
    return out


def zm_moment_suite(
    M: int,
    N: int,
    lam: float,
    paths: int,
    seed: int,
    a_norm_paths: int = 256,
    chunk: int = 64,
    L: int | None = None,
    runner: Callable | None = None,
) -> ZMSuiteReport:
    """Monte Carlo estimates of the Z_M moment statistics with standard errors.

    zm_pointwise: E|Z_M(x)|^2; recentred_gain: E[2 int A Z - int Z^2];
    wick_l2_variance: E|int :(A - Z)^2:|^2 (recentred by the exact mean);
    profile_overlap: E(int A f)^2 + E(int Z f)^2; kinetic: E int ||dZ/ds||_{H^1}^2;
    a_norm_sq: E||Z_M||_A^2 on the first ``a_norm_paths`` paths.
    """
    if M > N:
        raise ValueError("Z_M needs M <= N")
    flags = []
    if paths < 1000:
        flags.append(f"only {paths} paths (< 1000): estimates are indicative")
    tasks = []
    for start in range(0, paths, chunk):
        cnt = min(chunk, paths - start)
        an = max(0, min(cnt, a_norm_paths - start))
        tasks.append((M, N, lam, seed, start, cnt, L, an))
    results = (runner or _serial)(_zm_chunk, tasks)
    merged = {k: np.concatenate([r[k] for r in results if k in r]) for k in ZM_STATISTICS if any(k in r for r in results)}
    est = {k: Estimate.of(v) for k, v in merged.items()}
    exact = {}
    if lam == 0.0:
        ex = dg.zm_exact_moments(M, N)
        exact = {
            "zm_pointwise": ex.zm_pointwise,
            "recentred_gain": ex.recentred_gain,
            "wick_l2_variance": ex.wick_l2_variance,
            "profile_overlap": ex.profile_overlap,
            "kinetic": ex.kinetic,
        }
    return ZMSuiteReport(M, N, lam, paths, est, exact, flags)


def _zm_chunk(args):
    M, N, lam, seed, start, cnt, L, an = args
    return zm_suite_samples(M, N, lam, path_streams(seed, start, cnt, tag=4), L, an)


def _serial(fn, tasks):
    return [fn(t) for t in tasks]


# ---------------------------------------------------------------------------
# shift-drift Cauchy problem
# ---------------------------------------------------------------------------


class ShiftDriftInstability(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DriftPath:
    """Drift values Theta(t_k) (k = 0..L) and rates dTheta/dt on each step,
    compact on the cube N, for both components."""

    N: int
    L: int
    theta_s: np.ndarray
    theta_w: np.ndarray
    rate_s: np.ndarray
    rate_w: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.L

    def kinetic(self) -> float:
        """h sum_k ||dTheta/dt||_{H^1}^2 (both components), i.e. int ||theta||_{L^2}^2."""
        hs = half_space(self.N)
        wt = hs.weights * hs.bracket_sq
        e = np.abs(self.rate_s) ** 2 @ wt + np.abs(self.rate_w) ** 2 @ wt
        return float(self.h * np.sum(e))

    def terminal_h1_sq(self) -> float:
        hs = half_space(self.N)
        wt = hs.weights * hs.bracket_sq
        ts = self.h * self.rate_s.sum(axis=0)
        tw = self.h * self.rate_w.sum(axis=0)
        return float(np.abs(ts) ** 2 @ wt + np.abs(tw) ** 2 @ wt)

    def cameron_martin_gap(self) -> float:
        """kinetic - ||Theta(1)||_{H^1}^2; nonnegative for every path."""
        return self.kinetic() - self.terminal_h1_sq()

    @classmethod
    def constant(cls, N: int, L: int, rate_s: np.ndarray, rate_w: np.ndarray) -> "DriftPath":
        rs = np.repeat(np.asarray(rate_s, dtype=np.complex128)[None], L, axis=0)
        rw = np.repeat(np.asarray(rate_w, dtype=np.complex128)[None], L, axis=0)
        return cls.from_rates(N, L, rs, rw)

    @classmethod
    def from_rates(cls, N: int, L: int, rate_s: np.ndarray, rate_w: np.ndarray) -> "DriftPath":
        h = 1.0 / L
        zero = np.zeros((1, rate_s.shape[1]), dtype=np.complex128)
        ts = np.concatenate([zero, h * np.cumsum(rate_s, axis=0)])
        tw = np.concatenate([zero, h * np.cumsum(rate_w, axis=0)])
        return cls(N, L, ts, tw, rate_s, rate_w)

    @classmethod
    def zero(cls, N: int, L: int) -> "DriftPath":
        size = half_space(N).size
        z = np.zeros((L, size), dtype=np.complex128)
        return cls.from_rates(N, L, z, z.copy())


class QuinticDrift:
    """dW/dt(X) = (1 - Delta)^{-1} pi_N <nabla>^{-1/2-eps} (<nabla>^{-1/2-eps} X_N)^5."""

    def __init__(self, N: int, eps: float = QUINTIC_EPS):
        hs = half_space(N)
        self.smooth = hs.bracket_sq ** (-0.25 - 0.5 * eps)
        self.prop = 1.0 / hs.bracket_sq
        self.layout = rfft_layout(N, fft_size(6 * N + 1))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        v = self.layout.to_physical(self.smooth * x)
        return self.prop * self.smooth * self.layout.from_physical(v**5)


@dataclass
class ShiftDriftResult:
    drift: DriftPath
    discrete_residual: float
    consistency_residual: float
    max_h1: float
    energy_trace: np.ndarray


def solve_shift_drift(
    bundle: PathBundle,
    upsilon: DriftPath,
    lam: float,
    N: int | None = None,
    path: int = 0,
    eps: float = QUINTIC_EPS,
    guard: float = 1e8,
) -> ShiftDriftResult:
    """Explicit Euler for the coupled (Theta_S, Theta_W) system driven by one
    bundle path and the supplied drift rates.

    The discrete residual measures the left-point equation (zero up to
    rounding); the consistency residual evaluates the right-hand side at the
    step end and shrinks like O(1/L).
    """
    N = bundle.N if N is None else N
    if N != bundle.N or upsilon.N != N:
        raise ValueError("bundle, drift and cutoff must share N")
    if upsilon.L != bundle.L:
        raise ValueError("drift and bundle must share the time grid")
    if not np.isfinite(upsilon.kinetic()):
        raise ValueError("drift must have finite kinetic energy")
    L, h = bundle.L, bundle.h
    hs = half_space(N)
    br = hs.bracket_sq ** -0.5
    prop = 1.0 / hs.bracket_sq
    h1w = hs.weights * hs.bracket_sq
    lay = rfft_layout(N, GridSpec(N).physical_size)
    quint = QuinticDrift(N, eps)

    def rhs(ts, tw, u, w, k):
        U, W, TS, TW = lay.to_physical(np.stack([u, w, ts, tw]))
        prods = lay.from_physical(np.stack([U * TW + W * TS + TS * TW, 2.0 * TS * U + TS * TS]))
        fs = lam * prop * prods[0] - quint(u + ts) + upsilon.rate_s[k]
        fw = lam * prop * prods[1] - quint(w + tw) + upsilon.rate_w[k]
        return fs, fw

    size = hs.size
    ts = np.zeros((L + 1, size), dtype=np.complex128)
    tw = np.zeros_like(ts)
    rs = np.zeros((L, size), dtype=np.complex128)
    rw = np.zeros_like(rs)
    u = np.zeros(size, dtype=np.complex128)
    w = np.zeros_like(u)
    us = [u]
    ws = [w]
    energy = np.zeros(L + 1)
    for k in range(L):
        fs, fw = rhs(ts[k], tw[k], u, w, k)
        rs[k], rw[k] = fs, fw
        ts[k + 1] = ts[k] + h * fs
        tw[k + 1] = tw[k] + h * fw
        ds, dw = bundle.inc_s[path, k], bundle.inc_w[path, k]
        u = u + ds * br
        w = w + dw * br
        us.append(u)
        ws.append(w)
        e = float(np.abs(ts[k + 1]) ** 2 @ h1w + np.abs(tw[k + 1]) ** 2 @ h1w)
        energy[k + 1] = e
        if not math.isfinite(e) or e > guard:
            raise ShiftDriftInstability(f"H^1 energy {e:.3e} exceeded guard {guard:.1e} at step {k + 1} of {L}")
    disc = 0.0
    cons = 0.0
    for k in range(L):
        fs, fw = rhs(ts[k], tw[k], us[k], ws[k], k)
        ds = (ts[k + 1] - ts[k]) / h - fs
        dw = (tw[k + 1] - tw[k]) / h - fw
        disc = max(disc, math.sqrt(float(np.abs(ds) ** 2 @ h1w + np.abs(dw) ** 2 @ h1w)))
        gs, gw = rhs(ts[k + 1], tw[k + 1], us[k + 1], ws[k + 1], k)
        cs = (ts[k + 1] - ts[k]) / h - gs
        cw = (tw[k + 1] - tw[k]) / h - gw
        cons = max(cons, math.sqrt(float(np.abs(cs) ** 2 @ h1w + np.abs(cw) ** 2 @ h1w)))
    drift = DriftPath(N, L, ts, tw, rs, rw)
    return ShiftDriftResult(drift, disc, cons, float(np.sqrt(energy.max())), np.sqrt(energy))


# ---------------------------------------------------------------------------
# chaos checks
# ---------------------------------------------------------------------------


def hermite(k: int, x, var=1.0):
    """Hermite polynomial H_k(x; var) = var^{k/2} He_k(x / sqrt(var))."""
    var = np.asarray(var, dtype=np.float64)
    return var ** (k / 2.0) * special.eval_hermitenorm(k, np.asarray(x) / np.sqrt(var))


def _chaos_element(k: int, rng: np.random.Generator, trials: int, dim: int = 3) -> np.ndarray:
    """Random element of the k-th Wiener chaos over ``dim`` independent Gaussians."""
    idx = [a for a in np.ndindex(*(k + 1,) * dim) if sum(a) == k]
    coef = rng.standard_normal(len(idx))
    g = rng.standard_normal((dim, trials))
    x = np.zeros(trials)
    for c, a in zip(coef, idx):
        term = np.ones(trials)
        for j, aj in enumerate(a):
            if aj:
                term = term * special.eval_hermitenorm(aj, g[j])
        x += c * term
    return x


def chaos_checks(k: int, p: int, trials: int, rng: np.random.Generator, rho: float | None = None) -> dict:
    """(a) hypercontractivity ratio, (b) Hermite cross moments, (c) Wick's theorem on four points."""
    if k not in (1, 2, 3) or p not in (4, 6):
        raise ValueError("need k in {1, 2, 3} and p in {4, 6}")
    x = _chaos_element(k, rng, trials)
    l2 = math.sqrt(float(np.mean(x**2)))
    lp = float(np.mean(np.abs(x) ** p)) ** (1.0 / p)
    ratio = lp / l2
    bound = (p - 1) ** (k / 2.0)
    # (b) correlated pair with variances sf, sg and covariance c
    rho = float(rng.uniform(-0.9, 0.9)) if rho is None else rho
    sf, sg = float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0))
    c = rho * math.sqrt(sf * sg)
    z1 = rng.standard_normal(trials)
    z2 = rng.standard_normal(trials)
    f = math.sqrt(sf) * z1
    g = math.sqrt(sg) * (rho * z1 + math.sqrt(1 - rho * rho) * z2)
    cross = {}
    for a in range(1, 4):
        for b in range(1, 4):
            prod = hermite(a, f, sf) * hermite(b, g, sg)
            est = Estimate.of(prod)
            exact = math.factorial(a) * c**a if a == b else 0.0
            cross[(a, b)] = {"estimate": est.mean, "stderr": est.stderr, "exact": exact, "z": est.z_score(exact)}
    # (c) four-point function of a correlated Gaussian vector
    B = rng.standard_normal((4, 4))
    cov = B @ B.T / 4.0 + 0.25 * np.eye(4)
    y = np.linalg.cholesky(cov) @ rng.standard_normal((4, trials))
    prod = y[0] * y[1] * y[2] * y[3]
    wick = cov[0, 1] * cov[2, 3] + cov[0, 2] * cov[1, 3] + cov[0, 3] * cov[1, 2]
    fp = Estimate.of(prod)
    return {
        "k": k,
        "p": p,
        "trials": trials,
        "hypercontractivity": {"ratio": ratio, "bound": bound},
        "hermite": cross,
        "wick_four_point": {"estimate": fp.mean, "stderr": fp.stderr, "exact": float(wick), "z": fp.z_score(float(wick))},
    }


def gff_pair_compact(N: int, gens: Sequence[np.random.Generator], dtype=np.float64):
    """Independent (u, w) draws per stream: u first, then w."""
    size = half_space(N).size
    u = np.empty((len(gens), size), dtype=np.complex64 if dtype == np.float32 else np.complex128)
    w = np.empty_like(u)
    for i, g in enumerate(gens):
        u[i] = sample_gff_compact(N, 1.0, g, (), dtype)
        w[i] = sample_gff_compact(N, 1.0, g, (), dtype)
    return u, w


# ---------------------------------------------------------------------------
# Gaussian and counter-process moments against the diagram values
# ---------------------------------------------------------------------------

GFF_STATISTICS = (
    "pointwise_variance",
    "wick_l2_variance",
    "cubic_mean",
    "cubic_variance",
    "counter_rate_s",
    "counter_rate_w",
    "counter_energy_s",
    "counter_energy_w",
)


def gff_exact_moments(N: int, L: int) -> dict:
    rs, rw = dg.counter_energy_rates(N)
    tf = dg.left_point_time_factor(L)
    return {
        "pointwise_variance": dg.tadpole(N),
        "wick_l2_variance": dg.wick_l2_variance(N),
        "cubic_mean": 0.0,
        "cubic_variance": dg.cubic_variance(N, 2.0),
        "counter_rate_s": rs,
        "counter_rate_w": rw,
        "counter_energy_s": rs * tf,
        "counter_energy_w": rw * tf,
    }


def _gff_chunk(args):
    N, L, seed, start, count = args
    out = run_engine(path_streams(seed, start, count, tag=6), N, L)
    wt = half_space(N).weights
    sq, cub = wick_integrals(out.u, out.w, N)
    rates = CounterRates(N)
    rs, rw = rates(out.u, out.w, 1.0)
    return {
        "pointwise_variance": np.einsum("pk,k->p", np.abs(out.u) ** 2, wt),
        "wick_l2_variance": sq**2,
        "cubic_mean": cub,
        "cubic_variance": cub**2,
        "counter_rate_s": rates.h1_energy(rs),
        "counter_rate_w": rates.h1_energy(rw),
        "counter_energy_s": out.scalars["es"],
        "counter_energy_w": out.scalars["ew"],
    }


@dataclass
class MomentReport:
    N: int
    L: int
    paths: int
    estimates: dict
    exact: dict

    def z_scores(self) -> dict:
        return {k: self.estimates[k].z_score(self.exact[k]) for k in self.estimates}

    def to_dict(self) -> dict:
        z = self.z_scores()
        return {
            "N": self.N,
            "L": self.L,
            "paths": self.paths,
            "statistics": {
                k: {**self.estimates[k].to_dict(), "exact": self.exact[k], "z": z[k]} for k in self.estimates
            },
        }


def gff_moment_checks(
    N: int, paths: int, seed: int, L: int = 8, chunk: int = 2000, runner: Callable | None = None
) -> MomentReport:
    """Path-simulated terminal fields and counter rates versus exact sums:
    E u(x)^2, Var int :u^2:, E and Var of int :u^2: w, E||dZ/dt(1)||_{H^1}^2 and
    the left-point energies h sum_k ||dZ/dt(t_k)||_{H^1}^2."""
    _check_sde_steps(L)
    tasks = [(N, L, seed, st, min(chunk, paths - st)) for st in range(0, paths, chunk)]
    parts = (runner or _serial)(_gff_chunk, tasks)
    est = {k: Estimate.of(np.concatenate([p[k] for p in parts])) for k in GFF_STATISTICS}
    return MomentReport(N, L, paths, est, gff_exact_moments(N, L))
