"""Real fields on the 3-torus stored as Hermitian Fourier coefficient arrays.

Conventions used everywhere in the package:

* modes n in Z^3, <n> = (1 + |n|^2)^{1/2};
* u(x) = sum_n u_hat(n) e^{i n.x};
* integrals use the normalized measure dx / (2 pi)^3, so the exponentials are
  orthonormal and int u v = sum_n u_hat(n) conj(v_hat(n)).

Two storage forms are used.  ``LatticeField`` keeps a dense centered cube of
coefficients, indexed by ``n + n_max``.  The Monte Carlo engines work on a
*compact* form: row 0 is the zero mode, followed by one representative of each
conjugate pair taken from the half space ``HalfSpace.modes`` (canonical order).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import special

FORMAT_VERSION = "swgibbs-field/1"


class GridMismatchError(ValueError):
    pass


# ---------------------------------------------------------------------------
# grids and index bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Cube of modes |n_j| <= n_max plus the physical grid used for products.

    The physical grid has ``physical_size`` points per axis, the smallest
    5-smooth integer >= pad_factor * (2 n_max + 1).  With the default 3/2 rule
    this is >= 3 n_max + 2, enough for products of two band-limited fields read
    back on |n_j| <= n_max, and for exact cubic integrals.
    """

    n_max: int
    pad_factor: Fraction = Fraction(3, 2)

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be a positive integer, got {self.n_max}")
        pad = Fraction(self.pad_factor)
        if pad < Fraction(3, 2):
            raise ValueError("pad_factor must be at least 3/2")
        object.__setattr__(self, "pad_factor", pad)

    @property
    def width(self) -> int:
        return 2 * self.n_max + 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.width,) * 3

    @property
    def physical_size(self) -> int:
        target = math.ceil(self.pad_factor * self.width)
        return sfft.next_fast_len(target, real=True)

    def modes_1d(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def norm_sq(self) -> np.ndarray:
        return cube_norm_sq(self.n_max)

    def bracket_sq(self) -> np.ndarray:
        return 1.0 + cube_norm_sq(self.n_max)

    def to_dict(self) -> dict:
        return {"n_max": self.n_max, "pad_factor": str(self.pad_factor)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridSpec":
        return cls(int(d["n_max"]), Fraction(d.get("pad_factor", "3/2")))


def fft_size(min_points: int) -> int:
    return sfft.next_fast_len(int(min_points), real=True)


@lru_cache(maxsize=None)
def cube_norm_sq(n: int) -> np.ndarray:
    m = np.arange(-n, n + 1)
    out = m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Canonical indexing of the cube by the zero mode plus a half space.

    ``modes[0]`` is 0; the rest are the n with n3 > 0, or n3 = 0 and n2 > 0, or
    n3 = n2 = 0 and n1 > 0, sorted by (n3, n2, n1).  ``pos`` and ``neg`` are flat
    indices into the centered cube of n and -n for every row.
    """

    n_max: int
    modes: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    lookup: np.ndarray  # centered flat index -> row (sign encoded: -row-1 for conj)

    @property
    def size(self) -> int:
        return self.modes.shape[0]

    @property
    def norm_sq(self) -> np.ndarray:
        return (self.modes**2).sum(axis=1)

    @property
    def bracket_sq(self) -> np.ndarray:
        return 1.0 + self.norm_sq

    @property
    def weights(self) -> np.ndarray:
        """Multiplicity of each row in sums over the full cube (1 for n=0, else 2)."""
        w = np.full(self.size, 2.0)
        w[0] = 1.0
        return w

    def rows_for(self, modes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Rows and conjugation flags for arbitrary modes inside the cube."""
        modes = np.asarray(modes)
        n = self.n_max
        w = 2 * n + 1
        flat = ((modes[..., 0] + n) * w + (modes[..., 1] + n)) * w + (modes[..., 2] + n)
        code = self.lookup[flat]
        conj = code < 0
        rows = np.where(conj, -code - 1, code)
        return rows, conj


@lru_cache(maxsize=None)
def half_space(n: int) -> HalfSpace:
    w = 2 * n + 1
    m = np.arange(-n, n + 1)
    g = np.stack(np.meshgrid(m, m, m, indexing="ij"), axis=-1).reshape(-1, 3)
    n1, n2, n3 = g[:, 0], g[:, 1], g[:, 2]
    upper = (n3 > 0) | ((n3 == 0) & (n2 > 0)) | ((n3 == 0) & (n2 == 0) & (n1 > 0))
    hs = g[upper]
    order = np.lexsort((hs[:, 0], hs[:, 1], hs[:, 2]))
    hs = hs[order]
    modes = np.vstack([np.zeros((1, 3), dtype=hs.dtype), hs])

    def flat(a):
        return ((a[:, 0] + n) * w + (a[:, 1] + n)) * w + (a[:, 2] + n)

    pos = flat(modes)
    neg = flat(-modes)
    lookup = np.empty(w**3, dtype=np.int64)
    rows = np.arange(modes.shape[0])
    lookup[neg] = -rows - 1
    lookup[pos] = rows
    for a in (modes, pos, neg, lookup):
        a.setflags(write=False)
    return HalfSpace(n, modes, pos, neg, lookup)


class RfftLayout:
    """Maps compact coefficient rows into the real-FFT array of a P^3 grid."""

    def __init__(self, n: int, size: int):
        if size <= 2 * n:
            raise ValueError("physical grid too small for the mode cube")
        hs = half_space(n)
        self.n = n
        self.size = size
        self.rsize = size // 2 + 1
        m = hs.modes
        self.flat = ((m[:, 0] % size) * size + (m[:, 1] % size)) * self.rsize + m[:, 2]
        plane = np.nonzero((m[:, 2] == 0) & (np.arange(m.shape[0]) > 0))[0]
        self.plane_rows = plane
        mm = -m[plane]
        self.flat_mirror = ((mm[:, 0] % size) * size + (mm[:, 1] % size)) * self.rsize

    def scatter(self, c: np.ndarray) -> np.ndarray:
        batch = c.shape[:-1]
        out = np.zeros(batch + (self.size * self.size * self.rsize,), dtype=c.dtype)
        out[..., self.flat] = c
        out[..., self.flat_mirror] = np.conj(c[..., self.plane_rows])
        return out.reshape(batch + (self.size, self.size, self.rsize))

    def gather(self, spec: np.ndarray) -> np.ndarray:
        batch = spec.shape[:-3]
        return spec.reshape(batch + (-1,))[..., self.flat]

    def to_physical(self, c: np.ndarray) -> np.ndarray:
        P = self.size
        spec = self.scatter(c)
        return sfft.irfftn(spec, s=(P, P, P), axes=(-3, -2, -1)) * float(P**3)

    def from_physical(self, v: np.ndarray) -> np.ndarray:
        P = self.size
        spec = sfft.rfftn(v, axes=(-3, -2, -1))
        return self.gather(spec) / float(P**3)


@lru_cache(maxsize=None)
def rfft_layout(n: int, size: int) -> RfftLayout:
    return RfftLayout(n, size)


def compact_to_centered(c: np.ndarray, n: int) -> np.ndarray:
    hs = half_space(n)
    w = 2 * n + 1
    batch = c.shape[:-1]
    out = np.zeros(batch + (w**3,), dtype=np.complex128)
    out[..., hs.neg] = np.conj(c)
    out[..., hs.pos] = c
    out[..., hs.pos[0]] = c[..., 0].real
    return out.reshape(batch + (w, w, w))


def centered_to_compact(a: np.ndarray, n: int) -> np.ndarray:
    hs = half_space(n)
    batch = a.shape[:-3]
    return a.reshape(batch + (-1,))[..., hs.pos]


def restrict_compact(c: np.ndarray, n_from: int, n_to: int) -> np.ndarray:
    """Re-index compact rows from cutoff ``n_from`` to cutoff ``n_to``.

    Modes outside the source cube are set to zero, modes outside the target cube
    are dropped.
    """
    if n_from == n_to:
        return c
    dst = half_space(n_to)
    batch = c.shape[:-1]
    out = np.zeros(batch + (dst.size,), dtype=c.dtype)
    inside = np.all(np.abs(dst.modes) <= n_from, axis=1)
    rows, conj = half_space(n_from).rows_for(dst.modes[inside])
    vals = c[..., rows]
    vals = np.where(conj, np.conj(vals), vals)
    out[..., np.nonzero(inside)[0]] = vals
    return out


def compact_inner(f: np.ndarray, g: np.ndarray, n: int) -> np.ndarray:
    """int f g for compact arrays of real fields (batched)."""
    w = half_space(n).weights
    return np.einsum("...k,k->...", (f * np.conj(g)).real, w)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LatticeField:
    """Real field with Fourier coefficients on the cube |n_j| <= grid.n_max."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        a = np.array(self.coeffs, dtype=np.complex128)
        if a.shape != self.grid.shape:
            raise ValueError(f"coefficient array shape {a.shape} != {self.grid.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "coeffs", a)

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, grid: GridSpec) -> "LatticeField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "LatticeField":
        a = np.zeros(grid.shape, dtype=np.complex128)
        n = grid.n_max
        a[n, n, n] = value
        return cls(grid, a)

    @classmethod
    def from_modes(cls, grid: GridSpec, values: Mapping[Sequence[int], complex]) -> "LatticeField":
        """Build from a mode -> amplitude map; conjugate partners are filled in."""
        a = np.zeros(grid.shape, dtype=np.complex128)
        n = grid.n_max
        for mode, val in values.items():
            k = tuple(int(x) for x in mode)
            if max(abs(x) for x in k) > n:
                raise ValueError(f"mode {k} outside cube of half-width {n}")
            a[k[0] + n, k[1] + n, k[2] + n] = val
            a[-k[0] + n, -k[1] + n, -k[2] + n] = np.conj(val)
        a[n, n, n] = a[n, n, n].real
        return cls(grid, a)

    @classmethod
    def from_compact(cls, grid: GridSpec, c: np.ndarray, n: int | None = None) -> "LatticeField":
        n = grid.n_max if n is None else n
        c = restrict_compact(np.asarray(c), n, grid.n_max)
        return cls(grid, compact_to_centered(c, grid.n_max))

    @classmethod
    def from_physical(cls, grid: GridSpec, values: np.ndarray) -> "LatticeField":
        """Fourier coefficients of grid samples, truncated to the mode cube."""
        v = np.asarray(values, dtype=np.float64)
        P = v.shape[0]
        if v.shape != (P, P, P):
            raise ValueError("physical samples must be a cube array")
        layout = rfft_layout(grid.n_max, P)
        return cls(grid, compact_to_centered(layout.from_physical(v), grid.n_max))

    # access ---------------------------------------------------------------
    def __getitem__(self, mode: Sequence[int]) -> complex:
        n = self.grid.n_max
        k = tuple(int(x) for x in mode)
        if max(abs(x) for x in k) > n:
            return 0j
        return complex(self.coeffs[k[0] + n, k[1] + n, k[2] + n])

    def compact(self) -> np.ndarray:
        return centered_to_compact(self.coeffs, self.grid.n_max)

    def physical(self, size: int | None = None) -> np.ndarray:
        P = self.grid.physical_size if size is None else size
        return rfft_layout(self.grid.n_max, P).to_physical(self.compact())

    def hermitian_defect(self) -> float:
        a = self.coeffs
        flipped = np.conj(a[::-1, ::-1, ::-1])
        return float(np.max(np.abs(a - flipped)))

    def mean(self) -> float:
        n = self.grid.n_max
        return float(self.coeffs[n, n, n].real)

    def inner(self, other: "LatticeField") -> float:
        _check_same(self, other)
        return float(np.sum((self.coeffs * np.conj(other.coeffs)).real))

    def regrid(self, grid: GridSpec) -> "LatticeField":
        """Embed into a larger cube or truncate to a smaller one."""
        n0, n1 = self.grid.n_max, grid.n_max
        if n1 >= n0:
            a = np.zeros(grid.shape, dtype=np.complex128)
            s = slice(n1 - n0, n1 + n0 + 1)
            a[s, s, s] = self.coeffs
        else:
            s = slice(n0 - n1, n0 + n1 + 1)
            a = self.coeffs[s, s, s]
        return LatticeField(grid, a)

    def with_multiplier(self, mult: np.ndarray) -> "LatticeField":
        return LatticeField(self.grid, self.coeffs * mult)

    # arithmetic -------------------------------------------------------------
    def __add__(self, other: "LatticeField") -> "LatticeField":
        _check_same(self, other)
        return LatticeField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "LatticeField") -> "LatticeField":
        _check_same(self, other)
        return LatticeField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "LatticeField":
        return LatticeField(self.grid, -self.coeffs)

    def __mul__(self, scalar: float) -> "LatticeField":
        return LatticeField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    # serialization ----------------------------------------------------------
    def to_dict(self) -> dict:
        hs = half_space(self.grid.n_max)
        c = self.compact()
        inter = np.empty(2 * c.size)
        inter[0::2] = c.real
        inter[1::2] = c.imag
        return {
            "version": FORMAT_VERSION,
            "grid": self.grid.to_dict(),
            "modes": hs.modes.tolist(),
            "coeffs": inter.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LatticeField":
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported field container version {d.get('version')!r}")
        grid = GridSpec.from_dict(d["grid"])
        inter = np.asarray(d["coeffs"], dtype=np.float64)
        vals = inter[0::2] + 1j * inter[1::2]
        return cls.from_modes(grid, {tuple(m): v for m, v in zip(d["modes"], vals)})

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, s: str) -> "LatticeField":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True, eq=False)
class FieldPair:
    """(u, w): Schrodinger and wave components on a shared grid."""

    u: LatticeField
    w: LatticeField

    def __post_init__(self):
        _check_same(self.u, self.w)

    @property
    def grid(self) -> GridSpec:
        return self.u.grid


def _check_same(f: LatticeField, g: LatticeField):
    if f.grid != g.grid:
        raise GridMismatchError(f"grid mismatch: {f.grid} vs {g.grid}")


# ---------------------------------------------------------------------------
# projection, sampling, products, norms
# ---------------------------------------------------------------------------


def cube_mask(n_max: int, N: int) -> np.ndarray:
    m = np.abs(np.arange(-n_max, n_max + 1)) <= N
    return m[:, None, None] & m[None, :, None] & m[None, None, :]


def project(f: LatticeField, N: int) -> LatticeField:
    """Sharp cube projector: keep modes with max_j |n_j| <= N."""
    if N < 1:
        raise ValueError("cutoff N must be >= 1")
    return f.with_multiplier(cube_mask(f.grid.n_max, N))


def standard_complex_normals(rng: np.random.Generator, batch: tuple, size: int, dtype=np.float64) -> np.ndarray:
    """Compact array of iid standard Gaussians: row 0 real N(0,1), other rows
    complex with independent real and imaginary parts of variance 1/2."""
    z = rng.standard_normal(batch + (2 * size - 1,), dtype=dtype)
    out = np.empty(batch + (size,), dtype=np.complex64 if dtype == np.float32 else np.complex128)
    out[..., 0] = z[..., 0]
    s = np.sqrt(0.5).astype(dtype)
    out[..., 1:].real = z[..., 1::2] * s
    out[..., 1:].imag = z[..., 2::2] * s
    return out


def sample_gff_compact(n: int, s: float, rng: np.random.Generator, batch: tuple = (), dtype=np.float64) -> np.ndarray:
    hs = half_space(n)
    g = standard_complex_normals(rng, batch, hs.size, dtype)
    return g * (hs.bracket_sq ** (-0.5 * s)).astype(dtype)


def sample_gff(grid: GridSpec, s: float, rng: np.random.Generator) -> LatticeField:
    """Draw u with u_hat(n) = g_n / <n>^s (s = 1: massive free field, s = 0: white noise)."""
    c = sample_gff_compact(grid.n_max, s, rng)
    return LatticeField(grid, compact_to_centered(c, grid.n_max))


def multiply(f: LatticeField, g: LatticeField) -> LatticeField:
    """Exact coefficients of the pointwise product, on the cube of half-width 2 n_max."""
    _check_same(f, g)
    n = f.grid.n_max
    out_grid = GridSpec(2 * n, f.grid.pad_factor)
    P = fft_size(4 * n + 1)
    lay_in = rfft_layout(n, P)
    v = lay_in.to_physical(np.stack([f.compact(), g.compact()]))
    prod = v[0] * v[1]
    lay_out = rfft_layout(2 * n, P)
    return LatticeField(out_grid, compact_to_centered(lay_out.from_physical(prod), 2 * n))


def multiply_truncated(f: LatticeField, g: LatticeField) -> LatticeField:
    """Product read back on the input cube (the 3/2-rule grid is alias free there)."""
    _check_same(f, g)
    lay = rfft_layout(f.grid.n_max, f.grid.physical_size)
    v = lay.to_physical(np.stack([f.compact(), g.compact()]))
    return LatticeField(f.grid, compact_to_centered(lay.from_physical(v[0] * v[1]), f.grid.n_max))


def cubic_integral(f: LatticeField, g: LatticeField, h: LatticeField) -> float:
    """int f g h, exact on the padded grid (aliasing cannot reach the zero mode)."""
    _check_same(f, g)
    _check_same(f, h)
    lay = rfft_layout(f.grid.n_max, f.grid.physical_size)
    v = lay.to_physical(np.stack([f.compact(), g.compact(), h.compact()]))
    return float(np.mean(v[0] * v[1] * v[2]))


def sobolev_norm(f: LatticeField, s: float) -> float:
    w = f.grid.bracket_sq() ** s
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def bessel_potential(f: LatticeField, s: float) -> LatticeField:
    """<nabla>^s f."""
    return f.with_multiplier(f.grid.bracket_sq() ** (0.5 * s))


def lp_norm(f: LatticeField, p: float, size: int | None = None) -> float:
    """L^p norm by grid quadrature (p = inf: max over grid points)."""
    v = f.physical(size)
    if math.isinf(p):
        return float(np.max(np.abs(v)))
    return float(np.mean(np.abs(v) ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# Littlewood-Paley calculus
# ---------------------------------------------------------------------------

LP_PLATEAU = 5.0 / 4.0
LP_SUPPORT = 8.0 / 5.0


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=np.float64)

    def h(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    a = h(x)
    b = h(1.0 - x)
    return a / (a + b)


def lp_bump(r: np.ndarray) -> np.ndarray:
    """Radial bump: 1 on [0, 5/4], 0 beyond 8/5, smooth monotone in between."""
    r = np.abs(np.asarray(r, dtype=np.float64))
    return _smooth_step((LP_SUPPORT - r) / (LP_SUPPORT - LP_PLATEAU))


@dataclass(frozen=True)
class LPBlockSet:
    """Dyadic partition of unity phi_j(xi) = phi(xi/2^j) - phi(xi/2^{j-1}), phi_0 = phi."""

    j_max: int

    @classmethod
    def for_grid(cls, grid: GridSpec) -> "LPBlockSet":
        rmax = math.sqrt(3.0) * grid.n_max
        j = 0
        while LP_PLATEAU * 2.0**j < rmax:
            j += 1
        return cls(j)

    def multiplier(self, j: int, radius: np.ndarray) -> np.ndarray:
        if j < 0 or j > self.j_max:
            return np.zeros_like(radius, dtype=np.float64)
        if j == self.j_max:
            upper = np.ones_like(radius, dtype=np.float64)
        else:
            upper = lp_bump(radius / 2.0**j)
        if j == 0:
            return upper
        return upper - lp_bump(radius / 2.0 ** (j - 1))

    def low_multiplier(self, j: int, radius: np.ndarray) -> np.ndarray:
        """sum_{i <= j} phi_i."""
        if j < 0:
            return np.zeros_like(radius, dtype=np.float64)
        if j >= self.j_max:
            return np.ones_like(radius, dtype=np.float64)
        return lp_bump(radius / 2.0**j)


def _radius(grid: GridSpec) -> np.ndarray:
    return np.sqrt(grid.norm_sq().astype(np.float64))


def lp_block(f: LatticeField, j: int, blocks: LPBlockSet | None = None) -> LatticeField:
    blocks = blocks or LPBlockSet.for_grid(f.grid)
    return f.with_multiplier(blocks.multiplier(j, _radius(f.grid)))


def besov_norm(f: LatticeField, s: float, p: float, q: float, size: int | None = None) -> float:
    """|| 2^{s j} ||P_j f||_{L^p} ||_{l^q(j)}; the Holder-Zygmund norm is p = q = inf."""
    blocks = LPBlockSet.for_grid(f.grid)
    vals = np.array([2.0 ** (s * j) * lp_norm(lp_block(f, j, blocks), p, size) for j in range(blocks.j_max + 1)])
    if math.isinf(q):
        return float(vals.max())
    return float(np.sum(vals**q) ** (1.0 / q))


def holder_norm(f: LatticeField, s: float) -> float:
    return besov_norm(f, s, math.inf, math.inf)


def paraproduct_decompose(f: LatticeField, g: LatticeField):
    """Split fg into (f low x g high, resonant, f high x g low) parts.

    lo = sum_{j < k-2} P_j f P_k g, resonant = sum_{|j-k| <= 2}, hi = sum_{k < j-2}.
    Each part lives on the doubled cube, like ``multiply``.
    """
    _check_same(f, g)
    blocks = LPBlockSet.for_grid(f.grid)
    r = _radius(f.grid)
    J = blocks.j_max
    Pf = [f.with_multiplier(blocks.multiplier(j, r)) for j in range(J + 1)]
    Pg = [g.with_multiplier(blocks.multiplier(j, r)) for j in range(J + 1)]
    out_grid = GridSpec(2 * f.grid.n_max, f.grid.pad_factor)
    lo = LatticeField.zeros(out_grid)
    hi = LatticeField.zeros(out_grid)
    res = LatticeField.zeros(out_grid)
    for k in range(J + 1):
        if k - 3 >= 0:
            lo = lo + multiply(f.with_multiplier(blocks.low_multiplier(k - 3, r)), Pg[k])
            hi = hi + multiply(Pf[k], g.with_multiplier(blocks.low_multiplier(k - 3, r)))
        near = [i for i in range(k - 2, k + 3) if 0 <= i <= J]
        gk = Pg[near[0]]
        for i in near[1:]:
            gk = gk + Pg[i]
        res = res + multiply(Pf[k], gk)
    return lo, res, hi


# ---------------------------------------------------------------------------
# heat smoothing, A-norm, mollifier
# ---------------------------------------------------------------------------

A_NORM_LEVELS = 20


def heat_smooth(f: LatticeField, t: float) -> LatticeField:
    if not t > 0:
        raise ValueError("heat time must be positive")
    return f.with_multiplier(np.exp(-t * f.grid.norm_sq()))


def a_norm_compact(c: np.ndarray, n: int, size: int, levels: int = A_NORM_LEVELS) -> np.ndarray:
    """max_j t_j^{3/8} ||p_{t_j} * f||_{L^3} with t_j = 2^-j, batched over leading axes."""
    hs = half_space(n)
    lay = rfft_layout(n, size)
    best = None
    for j in range(levels + 1):
        t = 2.0**-j
        v = lay.to_physical(c * np.exp(-t * hs.norm_sq))
        val = t**0.375 * np.mean(np.abs(v) ** 3, axis=(-3, -2, -1)) ** (1.0 / 3.0)
        best = val if best is None else np.maximum(best, val)
    return best


def a_norm(f: LatticeField, levels: int = A_NORM_LEVELS) -> float:
    """Heat-kernel L^3 norm, sup over the geometric time grid t_j = 2^-j, j <= levels."""
    return float(a_norm_compact(f.compact(), f.grid.n_max, f.grid.physical_size, levels))


def _eta_raw(r):
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _eta_cumulative(x):
    """Q(x) = int_0^x q eta_raw(q) dq, closed form via the exponential integral."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)

    def F(v):
        v = np.asarray(v, dtype=np.float64)
        out = np.zeros_like(v)
        pos = v > 0
        vp = v[pos]
        out[pos] = vp * np.exp(-1.0 / vp) - special.exp1(1.0 / vp)
        return out

    return 0.5 * (F(np.ones_like(x)) - F(1.0 - x**2))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(80)


def _gl(a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return mid + half * _GL_X, half * _GL_W


@lru_cache(maxsize=None)
def _eta_norm_const() -> float:
    x, w = _gl(0.0, 1.0)
    return 1.0 / math.sqrt(4.0 * math.pi * float(np.sum(w * x**2 * _eta_raw(x) ** 2)))


def mollifier_profile(s: np.ndarray) -> np.ndarray:
    """Autocorrelation rho_hat(|xi|) of the radial bump eta (support |xi| <= 1, int eta^2 = 1).

    For radial eta, rho_hat(s) = (2 pi / s) int_0^1 r eta(r) [Q(min(s + r, 1)) - Q(|s - r|)] dr
    with Q(x) = int_0^x q eta(q) dq.  rho_hat(0) = 1 and rho_hat vanishes for s >= 2.
    """
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    out = np.zeros_like(s)
    c2 = _eta_norm_const() ** 2
    for idx, sv in np.ndenumerate(s):
        if sv == 0.0:
            out[idx] = 1.0
            continue
        if sv >= 2.0:
            continue
        cuts = sorted({0.0, 1.0, min(max(sv, 0.0), 1.0), min(max(1.0 - sv, 0.0), 1.0)})
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b <= a:
                continue
            r, w = _gl(a, b)
            inner = _eta_cumulative(np.minimum(sv + r, 1.0)) - _eta_cumulative(np.abs(sv - r))
            total += float(np.sum(w * r * _eta_raw(r) * inner))
        out[idx] = 2.0 * math.pi * c2 * total / sv
    return out


def mollifier_multiplier(grid: GridSpec, eps: float) -> np.ndarray:
    if not eps > 0:
        raise ValueError("mollifier scale must be positive")
    ns = grid.norm_sq()
    uniq, inv = np.unique(ns, return_inverse=True)
    vals = mollifier_profile(eps * np.sqrt(uniq.astype(np.float64)))
    return vals[inv].reshape(ns.shape)


def mollifier_kernel(grid: GridSpec, eps: float) -> LatticeField:
    """rho_eps restricted to the grid's mode cube (exact when 2/eps < n_max)."""
    return LatticeField(grid, mollifier_multiplier(grid, eps).astype(np.complex128))


def mollify(f: LatticeField, eps: float) -> LatticeField:
    return f.with_multiplier(mollifier_multiplier(f.grid, eps))


def iter_modes(grid: GridSpec) -> Iterable[tuple[int, int, int]]:
    m = grid.modes_1d()
    for a in m:
        for b in m:
            for c in m:
                yield int(a), int(b), int(c)
