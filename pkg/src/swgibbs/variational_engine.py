"""Hamiltonians, cutoffs and the variational objective after the drift change of variables.

Notation for one path (all fields on the cube N, evaluated at t = 1):
  u, w        the Gaussian fields <1>_S, <1>_W
  Z_S, Z_W    counter processes, dZ_S/dt = (1/2)(1 - Delta)^{-1} :u^2:, dZ_W/dt = (1 - Delta)^{-1} u w
  Ups_S/W     the drift integrated to t = 1
  Th_S        Ups_S - lam Z_W,   Th_W = Ups_W - lam Z_S

The objective reported term by term is
  E[ (lam/2) int :u^2 w:                                  (wick_cubic)
   + lam int u Th_S Th_W + (lam/2) int w Th_S^2           (mixed)
   + (lam/2) int Th_S^2 Th_W                              (cubic_drift)
   + taming                                               (taming)
   + (1/2) int_0^1 ||dUps/dt||_{H^1}^2 dt ]               (kinetic)
For the cutoff variants the first four terms are multiplied by the indicator of
|int :(u + Th_S)^2:| <= K.  ``bd_objective`` is the functional before the change
of variables, H(u + Th_S, w + Th_W) + delta + taming + (1/2) int ||dTh/dt||_{H^1}^2;
without a cutoff both agree in expectation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import diagram_engine as dg
from .lattice_field import (
    FieldPair,
    GridSpec,
    LatticeField,
    a_norm_compact,
    cubic_integral,
    half_space,
    project,
    restrict_compact,
    rfft_layout,
    sample_gff_compact,
)
from .parallel import chunk_size_for, make_runner
from .stochastic_lab import Estimate, gff_pair_compact, path_streams, run_engine

VARIANTS = ("cutoff", "grand_canonical", "a_norm_tamed")
FAMILIES = ("zero", "constant_in_time", "zm_blowup")
A_NORM_POWER = 20


@dataclass(frozen=True)
class PotentialSpec:
    N: int
    lam: float
    K: float = 1.0
    A: float = 1.0
    gamma: float = 3.0
    variant: str = "cutoff"
    delta: float = 1e-3

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant in ("cutoff", "a_norm_tamed") and not self.K > 0:
            raise ValueError("cutoff level K must be positive")
        if self.variant == "grand_canonical" and (not self.A > 0 or self.gamma < 3):
            raise ValueError("grand canonical taming needs A > 0 and gamma >= 3")
        if self.variant == "a_norm_tamed" and not self.delta > 0:
            raise ValueError("A-norm taming needs delta > 0")

    @property
    def uses_indicator(self) -> bool:
        return self.variant in ("cutoff", "a_norm_tamed")

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "lambda": self.lam,
            "K": self.K,
            "A": self.A,
            "gamma": self.gamma,
            "variant": self.variant,
            "delta": self.delta,
        }


def sign(x: float) -> float:
    return 0.0 if x == 0 else math.copysign(1.0, x)


@dataclass(frozen=True, eq=False)
class DriftFamilySpec:
    """zero, constant_in_time (rates = a pair of compact arrays on the cube N), or
    zm_blowup (M and the sign multiplying sqrt(alpha) f_M; sign None means sgn(lam))."""

    family: str
    M: int | None = None
    sign: float | None = None
    rates: tuple | None = None
    label: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.family == "zm_blowup" and (self.M is None or self.M < 2):
            raise ValueError("zm_blowup needs M >= 2")
        if self.family == "constant_in_time" and self.rates is None:
            raise ValueError("constant_in_time needs a pair of rate fields")

    def check(self, N: int):
        if self.family == "zm_blowup" and self.M > N:
            raise ValueError("zm_blowup needs M <= N")
        if self.family == "constant_in_time":
            size = half_space(N).size
            if any(np.shape(r) != (size,) for r in self.rates):
                raise ValueError("constant drift fields must be compact arrays on the cube N")

    def params(self) -> tuple:
        if self.family == "zm_blowup":
            return (self.M, self.sign)
        return (self.label,)

    def describe(self) -> dict:
        d = {"family": self.family}
        if self.family == "zm_blowup":
            d.update(M=self.M, sign=self.sign)
        if self.label:
            d["label"] = self.label
        return d


# ---------------------------------------------------------------------------
# Hamiltonians, cutoff, taming
# ---------------------------------------------------------------------------


def _restrict_pair(pair: FieldPair, N: int) -> tuple[LatticeField, LatticeField]:
    if pair.grid.n_max < N:
        raise ValueError("field grid smaller than the cutoff")
    g = GridSpec(N)
    return project(pair.u, N).regrid(g), project(pair.w, N).regrid(g)


def wick_l2(u: LatticeField, N: int) -> float:
    """int :u_N^2: = ||u_N||_{L^2}^2 - sigma_N."""
    uN = project(u, N)
    return float(np.sum(np.abs(uN.coeffs) ** 2)) - dg.tadpole(N)


def hamiltonian_wick(pair: FieldPair, spec: PotentialSpec) -> float:
    """(lam/2) int :u_N^2 w_N: by exact cubic quadrature."""
    u, w = _restrict_pair(pair, spec.N)
    sigma = dg.tadpole(spec.N)
    one = LatticeField.constant(u.grid, 1.0)
    val = cubic_integral(u, u, w) - sigma * cubic_integral(one, one, w)
    return 0.5 * spec.lam * val


def hamiltonian_renormalized(pair: FieldPair, spec: PotentialSpec) -> float:
    return hamiltonian_wick(pair, spec) + dg.delta_counterterm(spec.N, spec.lam)


def cutoff_indicator(u: LatticeField, N: int, K: float) -> bool:
    return abs(wick_l2(u, N)) <= K


def grand_canonical_penalty(x, A: float, gamma: float):
    return A * np.abs(x) ** gamma


def domination_holds(x: float, K: float, A: float, gamma: float) -> bool:
    """1{|x| <= K} <= exp(-A |x|^gamma) exp(A K^gamma)."""
    if abs(x) > K:
        return True
    # compare logs: the right side overflows for large A K^gamma
    return A * (K**gamma - abs(x) ** gamma) >= -1e-15


def taming_value(pair: FieldPair, spec: PotentialSpec, variant: str | None = None) -> float:
    """Additive exponent penalty of the selected variant (0 for the hard cutoff)."""
    if variant is not None and variant != spec.variant:
        raise ValueError(f"variant mismatch: spec has {spec.variant!r}, asked for {variant!r}")
    if spec.variant == "cutoff":
        return 0.0
    u, w = _restrict_pair(pair, spec.N)
    if spec.variant == "grand_canonical":
        return float(grand_canonical_penalty(wick_l2(u, spec.N), spec.A, spec.gamma))
    P = u.grid.physical_size
    au = a_norm_compact(u.compact(), spec.N, P)
    aw = a_norm_compact(w.compact(), spec.N, P)
    return float(spec.delta * (au**A_NORM_POWER + aw**A_NORM_POWER))


# ---------------------------------------------------------------------------
# per-path evaluation of the objective
# ---------------------------------------------------------------------------

TERMS = ("wick_cubic", "mixed", "cubic_drift", "taming", "kinetic")
EXTRA = ("total", "bd_objective", "coercive", "indicator", "concentration", "upsilon_l2_cubed")


@dataclass(frozen=True)
class _EvalConfig:
    lam: float
    sign: float
    alpha: float
    delta_disc: float


def _h1(a, b, wt_h1):
    return (a * np.conj(b)).real @ wt_h1


def _evaluate_chunk(args):
    (spec, drift, N, L, seed, start, count, configs, physical, tag) = args
    gens = path_streams(seed, start, count, tag)
    M = drift.M if drift.family == "zm_blowup" else None
    fc = dg.f_compact(M, N) if M is not None else None
    hs = half_space(N)
    wt = hs.weights
    wt_h1 = wt * hs.bracket_sq
    out = run_engine(gens, N, L, M, f_ball=None if fc is None else fc[dg.zm_mode_table(M, N).ball])
    sc = out.scalars
    sigma = dg.tadpole(N)
    P = GridSpec(N).physical_size
    lay = rfft_layout(N, P)
    if M is not None:
        ball = np.nonzero(dg.zm_mode_table(M, N).ball)[0]
        z0 = np.zeros_like(out.u)
        z1 = np.zeros_like(out.u)
        z0[:, ball] = out.z0
        z1[:, ball] = out.z1
        f_h1 = float(fc**2 @ wt_h1)
        f_zw = out.zw.real @ (fc * wt_h1)
        f_zs = out.zs.real @ (fc * wt_h1)
    elif drift.family == "constant_in_time":
        a_s, a_w = (np.asarray(r, dtype=np.complex128) for r in drift.rates)
    need_phys = physical
    if need_phys:
        U = lay.to_physical(out.u)
        W = lay.to_physical(out.w)
        ZS = lay.to_physical(out.zs)
        ZW = lay.to_physical(out.zw)
        if M is not None:
            Z0 = lay.to_physical(z0)
            Z1 = lay.to_physical(z1)
            F = lay.to_physical(fc.astype(np.complex128))
        elif drift.family == "constant_in_time":
            AS = lay.to_physical(a_s)
            AW = lay.to_physical(a_w)
    axes = (-3, -2, -1)
    results = []
    for cfg in configs:
        lam, s, alpha = cfg.lam, cfg.sign, cfg.alpha
        root = math.sqrt(alpha) if alpha > 0 else 0.0
        if M is not None:
            ups = -(z0 - lam * z1) - s * root * fc
            ups_s = ups_w = ups
            kin = (
                sc["k00"] - 2 * lam * sc["k01"] + lam * lam * sc["k11"]
                + 2 * s * root * (sc["g0"] - lam * sc["g1"])
                + alpha * f_h1
            )
            c_s = -(sc["cw0"] - lam * sc["cw1"]) - s * root * f_zw
            c_w = -(sc["cs0"] - lam * sc["cs1"]) - s * root * f_zs
        elif drift.family == "constant_in_time":
            ups_s = np.broadcast_to(a_s, out.u.shape)
            ups_w = np.broadcast_to(a_w, out.u.shape)
            kin = np.full(count, 0.5 * (float(np.abs(a_s) ** 2 @ wt_h1) + float(np.abs(a_w) ** 2 @ wt_h1)))
            c_s = _h1(out.zw, a_s[None, :], wt_h1)
            c_w = _h1(out.zs, a_w[None, :], wt_h1)
        else:
            ups_s = ups_w = np.zeros_like(out.u)
            kin = np.zeros(count)
            c_s = c_w = np.zeros(count)
        th_s = ups_s - lam * out.zw
        th_w = ups_w - lam * out.zs
        conc = np.einsum("pk,k->p", np.abs(out.u + th_s) ** 2, wt) - sigma
        ind = (np.abs(conc) <= spec.K).astype(float)
        ups_l2 = np.einsum("pk,k->p", np.abs(ups_s) ** 2, wt)
        coerc_core = np.einsum("pk,k->p", 2 * (out.u * np.conj(ups_s)).real + np.abs(ups_s) ** 2, wt)
        if spec.variant == "grand_canonical":
            tame = spec.A * np.abs(conc) ** spec.gamma
        elif spec.variant == "a_norm_tamed":
            au = a_norm_compact(out.u + th_s, N, P)
            aw = a_norm_compact(out.w + th_w, N, P)
            tame = spec.delta * (au**A_NORM_POWER + aw**A_NORM_POWER)
        else:
            tame = np.zeros(count)
        row = {"indicator": ind, "concentration": conc, "kinetic": kin, "upsilon_l2_cubed": ups_l2**1.5}
        row["coercive"] = 0.5 * spec.A * np.abs(coerc_core) ** 3 + kin
        theta_kin = kin - lam * (c_s + c_w) + 0.5 * lam * lam * (sc["es"] + sc["ew"])
        if need_phys:
            if M is not None:
                UPS = -(Z0 - lam * Z1) - s * root * F
                UPS_S = UPS_W = UPS
            elif drift.family == "constant_in_time":
                UPS_S, UPS_W = AS, AW
            else:
                UPS_S = UPS_W = np.zeros_like(U)
            TS = UPS_S - lam * ZW
            TW = UPS_W - lam * ZS
            wc = 0.5 * lam * np.mean((U * U - sigma) * W, axis=axes)
            mixed = lam * np.mean(U * TS * TW, axis=axes) + 0.5 * lam * np.mean(W * TS * TS, axis=axes)
            cub = 0.5 * lam * np.mean(TS * TS * TW, axis=axes)
            ham = 0.5 * lam * np.mean(((U + TS) ** 2 - sigma) * (W + TW), axis=axes) + cfg.delta_disc
            gate = ind if spec.uses_indicator else 1.0
            row["wick_cubic"] = gate * wc
            row["mixed"] = gate * mixed
            row["cubic_drift"] = gate * cub
            row["taming"] = gate * tame
            row["total"] = row["wick_cubic"] + row["mixed"] + row["cubic_drift"] + row["taming"] + kin
            row["bd_objective"] = gate * (ham + tame) + theta_kin
            # reduced bound used by the strong-coupling certificate: the gated
            # pure-drift cubic, L^2 moments of the drift, 3/4 of the vector kinetic energy
            ups_w_l2 = np.einsum("pk,k->p", np.abs(ups_w) ** 2, wt)
            row["cubic_gain"] = ind * 0.5 * lam * np.mean(UPS_S * UPS_S * UPS_W, axis=axes)
            row["l2_moments"] = ups_l2**1.5 + ups_w_l2**1.5
            row["gated_taming"] = ind * tame
            row["kinetic_cost"] = 1.5 * kin
            row["certificate"] = row["cubic_gain"] + row["gated_taming"] + row["l2_moments"] + row["kinetic_cost"]
        results.append(row)
    return results


@dataclass
class VariationalReport:
    spec: PotentialSpec
    drift: dict
    paths: int
    L: int
    terms: dict
    extras: dict
    alpha: float | None = None
    flags: list = field(default_factory=list)

    @property
    def total(self) -> Estimate:
        return self.extras["total"]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "drift": self.drift,
            "paths": self.paths,
            "L": self.L,
            "alpha": self.alpha,
            "terms": {k: v.to_dict() for k, v in self.terms.items()},
            "extras": {k: v.to_dict() for k, v in self.extras.items()},
            "flags": self.flags,
        }


def default_steps(N: int, M: int | None = None) -> int:
    return max(16, M or 0)


def _alpha_for(M, N, lam, L):
    """alpha_{M,N} for the left-point scheme, clipped at 0: when the raw value is
    negative the square root is undefined and the profile term is switched off."""
    if M is None:
        return 0.0
    return max(dg.alpha_coefficient(M, N, lam, L, "euler"), 0.0)


def _run_configs(spec, drift, N, L, paths, seed, configs, physical, runner, tag):
    chunk = chunk_size_for(N)
    tasks = [
        (spec, drift, N, L, seed, start, min(chunk, paths - start), configs, physical, tag)
        for start in range(0, paths, chunk)
    ]
    chunks = (runner or make_runner(1))(_evaluate_chunk, tasks)
    merged = []
    for ci in range(len(configs)):
        keys = chunks[0][ci].keys()
        merged.append({k: np.concatenate([c[ci][k] for c in chunks]) for k in keys})
    return merged


def _report_from(spec, drift, paths, L, samples, alpha):
    terms = {k: Estimate.of(samples[k]) for k in TERMS if k in samples}
    extras = {k: Estimate.of(samples[k]) for k in EXTRA if k in samples}
    extras["concentration_sq"] = Estimate.of(samples["concentration"] ** 2)
    flags = []
    if paths < 1000:
        flags.append(f"only {paths} paths")
    return VariationalReport(spec, drift.describe(), paths, L, terms, extras, alpha, flags)


def objective_W(
    drift: DriftFamilySpec,
    spec: PotentialSpec,
    paths: int,
    seed: int,
    L: int | None = None,
    runner: Callable | None = None,
    tag: int = 1,
) -> VariationalReport:
    """Monte Carlo evaluation of the objective for one drift; paths use streams
    derived from (seed, tag) so different drifts see common random numbers."""
    N = spec.N
    drift.check(N)
    M = drift.M if drift.family == "zm_blowup" else None
    L = L or default_steps(N, M)
    alpha = _alpha_for(M, N, spec.lam, L)
    s = sign(spec.lam) if drift.sign is None else drift.sign
    cfg = _EvalConfig(spec.lam, s, alpha, dg.delta_counterterm_discrete(N, spec.lam, L))
    samples = _run_configs(spec, drift, N, L, paths, seed, [cfg], True, runner, tag)[0]
    rep = _report_from(spec, drift, paths, L, samples, alpha if M is not None else None)
    if M is not None and alpha == 0.0:
        rep.flags.append("alpha_{M,N} <= 0: profile term switched off")
    return rep


# ---------------------------------------------------------------------------
# partition function estimates
# ---------------------------------------------------------------------------


@dataclass
class LogZEstimate:
    method: str
    estimate: float
    stderr: float
    ci_halfwidth: float
    unreliable: bool
    details: dict

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "ci95": self.ci_halfwidth,
            "unreliable": self.unreliable,
            **self.details,
        }


def exponent_samples(spec: PotentialSpec, u: np.ndarray, w: np.ndarray) -> dict:
    """Per-sample exponent F and its ingredients for GFF draws (compact arrays)."""
    N = spec.N
    sigma = dg.tadpole(N)
    lay = rfft_layout(N, GridSpec(N).physical_size)
    wt = half_space(N).weights
    U = lay.to_physical(u)
    W = lay.to_physical(w)
    h = 0.5 * spec.lam * np.mean((U * U - sigma) * W, axis=(-3, -2, -1), dtype=np.float64)
    hd = h + dg.delta_counterterm(N, spec.lam)
    s = np.einsum("pk,k->p", np.abs(u) ** 2, wt) - sigma
    ind = np.abs(s) <= spec.K
    if spec.variant == "grand_canonical":
        F = hd + spec.A * np.abs(s) ** spec.gamma
    elif spec.variant == "a_norm_tamed":
        P = GridSpec(N).physical_size
        tame = spec.delta * (a_norm_compact(u, N, P) ** A_NORM_POWER + a_norm_compact(w, N, P) ** A_NORM_POWER)
        F = (hd + tame) * ind
    else:
        F = hd * ind
    return {"F": F, "H": hd, "wick_l2": s, "indicator": ind}


def _naive_chunk(args):
    spec, seed, start, count = args
    u, w = gff_pair_compact(spec.N, path_streams(seed, start, count, tag=7))
    return exponent_samples(spec, u, w)


def _log_mean_exp(x: np.ndarray):
    m = float(np.max(x))
    e = np.exp(x - m)
    mean = float(np.mean(e))
    se = float(np.std(e, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf
    return m + math.log(mean), se / mean, e


def estimate_logZ(
    spec: PotentialSpec,
    paths: int,
    method: str = "naive",
    seed: int = 0,
    drift: DriftFamilySpec | None = None,
    runner: Callable | None = None,
) -> LogZEstimate:
    """log E_mu[exp(-F)] with F the variant's exponent.

    For the cutoff variants F = (H + delta + taming) 1{accepted}, the structure
    under which the drift objective is an exact lower bound.  The hard-cutoff
    value log E[exp(-H - delta) 1{accepted}] is reported alongside.
    """
    if paths < 1000:
        raise ValueError("estimate_logZ needs at least 1000 samples")
    if method == "naive":
        chunk = chunk_size_for(spec.N)
        tasks = [(spec, seed, st, min(chunk, paths - st)) for st in range(0, paths, chunk)]
        parts = (runner or make_runner(1))(_naive_chunk, tasks)
        F = np.concatenate([p["F"] for p in parts])
        H = np.concatenate([p["H"] for p in parts])
        ind = np.concatenate([p["indicator"] for p in parts])
        est, rel_se, e = _log_mean_exp(-F)
        top = np.sort(e)[::-1][: max(1, paths // 100)]
        share = float(top.sum() / e.sum())
        hard = -H.astype(np.float64)
        hard = np.where(ind, hard, -np.inf)
        if np.any(ind):
            hm = float(np.max(hard[ind]))
            he = np.where(ind, np.exp(hard - hm), 0.0)
            hard_est = hm + math.log(float(np.mean(he)))
        else:
            hard_est = -math.inf
        return LogZEstimate(
            "naive",
            est,
            rel_se,
            1.96 * rel_se,
            share > 0.5,
            {"top1pct_weight_share": share, "acceptance": float(np.mean(ind)), "hard_cutoff_logZ": hard_est},
        )
    if method == "drift_bound":
        drift = drift or DriftFamilySpec("zero")
        rep = objective_W(drift, spec, paths, seed, runner=runner)
        bd = rep.extras["bd_objective"]
        return LogZEstimate(
            "drift_bound",
            -bd.mean,
            bd.stderr,
            1.96 * bd.stderr,
            False,
            {"drift": drift.describe(), "objective_total": -rep.total.mean},
        )
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# drift optimization
# ---------------------------------------------------------------------------


def constant_direction(N: int, mode=(1, 0, 0), amplitude: float = 1.0) -> np.ndarray:
    """Compact array of amplitude * cos(mode . x) on the cube N."""
    hs = half_space(N)
    rows, conj = hs.rows_for(np.array([mode]))
    c = np.zeros(hs.size, dtype=np.complex128)
    c[rows[0]] = 0.5 * amplitude if any(mode) else amplitude
    return c


def candidate_drifts(family: str, spec: PotentialSpec, scales=(-1.0, -0.5, 0.5, 1.0)) -> list[DriftFamilySpec]:
    if family == "zero":
        return [DriftFamilySpec("zero")]
    if family == "constant_in_time":
        base = constant_direction(spec.N)
        out = [DriftFamilySpec("zero")]
        for s in scales:
            out.append(DriftFamilySpec("constant_in_time", rates=(s * base, s * base), label=f"cos100*{s:+g}"))
        return out
    if family == "zm_blowup":
        out = [DriftFamilySpec("zero")]
        M = 2
        while M <= spec.N:
            out.append(DriftFamilySpec("zm_blowup", M=M))
            M *= 2
        return out
    raise ValueError(f"unknown family {family!r}")


@dataclass
class OptimizationResult:
    best: DriftFamilySpec
    report: VariationalReport
    evaluated: list
    exhausted: bool

    def to_dict(self) -> dict:
        return {
            "best": self.best.describe(),
            "report": self.report.to_dict(),
            "evaluated": self.evaluated,
            "budget_exhausted": self.exhausted,
        }


def optimize_drift(
    family: str,
    spec: PotentialSpec,
    budget: int,
    seed: int = 0,
    paths: int = 1000,
    candidates: Sequence[DriftFamilySpec] | None = None,
    runner: Callable | None = None,
) -> OptimizationResult:
    """Grid search over a finite drift family with common random numbers.

    The zero drift is always evaluated first, so the incumbent can never be
    worse than it.  Ties: lower objective, then lower kinetic energy, then
    lexicographic parameters.  ``budget`` caps the total number of path
    evaluations.
    """
    cands = list(candidates) if candidates is not None else candidate_drifts(family, spec)
    if not cands or cands[0].family != "zero":
        cands = [DriftFamilySpec("zero")] + [c for c in cands if c.family != "zero"]
    used = 0
    exhausted = False
    evaluated = []
    best = None
    for idx, cand in enumerate(cands):
        if used + paths > budget:
            exhausted = True
            break
        try:
            rep = objective_W(cand, spec, paths, seed, runner=runner)
        except ValueError as err:
            evaluated.append({"candidate": cand.describe(), "error": str(err)})
            continue
        used += paths
        key = (rep.total.mean, rep.terms["kinetic"].mean, str(cand.params()))
        evaluated.append({"candidate": cand.describe(), "total": rep.total.to_dict(), "kinetic": rep.terms["kinetic"].to_dict()})
        if best is None or key < best[0]:
            best = (key, cand, rep)
    if best is None:
        raise ValueError("budget too small to evaluate the zero drift")
    return OptimizationResult(best[1], best[2], evaluated, exhausted)


# ---------------------------------------------------------------------------
# strong-coupling certificate
# ---------------------------------------------------------------------------


@dataclass
class CertificateReport:
    lam: float
    M: int
    N: int
    L: int
    paths: int
    alpha: float
    parts: dict
    kinetic_expected: float
    K: float
    diverging: bool
    alpha_raw: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "M": self.M,
            "N": self.N,
            "L": self.L,
            "paths": self.paths,
            "alpha": self.alpha,
            "alpha_raw": self.alpha_raw,
            "alpha_clipped": self.alpha != self.alpha_raw,
            "K": self.K,
            "kinetic_expected": self.kinetic_expected,
            "diverging": self.diverging,
            "parts": {k: v.to_dict() for k, v in self.parts.items()},
        }


def kinetic_expectation(M: int, N: int, lam: float, L: int, alpha: float) -> float:
    """E[kinetic] = M^2 sum_ball int E|X|^2 + alpha ||f_M||_{H^1}^2 (left-point, euler)."""
    tab = dg.zm_mode_table(M, N)
    _, _, ix = dg.zm_second_moments(M, N, lam, L, "euler")
    fc = dg.f_compact(M, N)
    f_h1 = math.fsum((tab.weights * tab.bracket_sq * fc * fc).tolist())
    return M * M * math.fsum((tab.weights * ix).tolist()) + alpha * f_h1


CERTIFICATE_PARTS = ("cubic_gain", "gated_taming", "l2_moments", "kinetic_cost", "certificate")


def divergence_sweep(
    lams: Sequence[float],
    Ms: Sequence[int],
    paths: int,
    seed: int,
    N_of: Callable[[int], int] = lambda M: M,
    L: int | None = None,
    K: float = 0.5,
    variant: str = "cutoff",
    A: float = 1.0,
    runner: Callable | None = None,
) -> list[CertificateReport]:
    """Certificate drift evaluated on a lam x M grid; all lam at one M share paths.

    The certificate total is the reduced bound: gated cubic gain of the drift,
    gated taming, L^2 moments of the drift and 3/4 of the vector kinetic energy.
    The full objective and its parts are reported alongside.

    When alpha_{M,N} < 0 (small M against large |lam|) the square root is
    undefined; the profile term is then switched off (alpha clipped to 0) and the
    report keeps the raw value.
    """
    reports = []
    for M in Ms:
        N = N_of(M)
        if not 2 <= M <= N:
            raise ValueError("need 2 <= M <= N")
        steps = L or default_steps(N, M)
        spec = PotentialSpec(N, 1.0, K=K, A=A, variant=variant)
        drift = DriftFamilySpec("zm_blowup", M=M)
        cfgs = []
        alphas = []
        raws = []
        for lam in lams:
            a = _alpha_for(M, N, lam, steps)
            alphas.append(a)
            raws.append(dg.alpha_coefficient(M, N, lam, steps, "euler"))
            cfgs.append(_EvalConfig(lam, sign(lam), a, dg.delta_counterterm_discrete(N, lam, steps)))
        samples = _run_configs(spec, drift, N, steps, paths, seed, cfgs, True, runner, tag=2)
        for lam, a, raw, smp in zip(lams, alphas, raws, samples):
            parts = {k: Estimate.of(smp[k]) for k in TERMS + CERTIFICATE_PARTS}
            for k in ("total", "bd_objective", "coercive"):
                parts[k] = Estimate.of(smp[k])
            parts["acceptance"] = Estimate.of(smp["indicator"])
            parts["concentration_sq"] = Estimate.of(smp["concentration"] ** 2)
            cg, tot = parts["cubic_gain"], parts["certificate"]
            div = bool(lam != 0 and cg.mean + 2 * cg.stderr < 0 and tot.mean + 2 * tot.stderr < 0)
            reports.append(
                CertificateReport(
                    lam, M, N, steps, paths, a, parts, kinetic_expectation(M, N, lam, steps, a), K, div, raw
                )
            )
    return reports


def divergence_certificate(lam: float, M: int, N: int, paths: int, seed: int = 0, **kw) -> CertificateReport:
    return divergence_sweep([lam], [M], paths, seed, N_of=lambda _: N, **kw)[0]


@dataclass
class ConcentrationReport:
    M: int
    N: int
    lam: float
    L: int
    paths: int
    K: float
    second_moment: Estimate
    mean: Estimate
    acceptance: Estimate

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "N": self.N,
            "lambda": self.lam,
            "L": self.L,
            "paths": self.paths,
            "K": self.K,
            "second_moment": self.second_moment.to_dict(),
            "second_moment_times_M": self.second_moment.mean * self.M,
            "mean": self.mean.to_dict(),
            "acceptance": self.acceptance.to_dict(),
        }


def cutoff_concentration(
    M: int,
    N: int,
    lam: float,
    paths: int,
    seed: int = 0,
    K: float = 0.5,
    L: int | None = None,
    runner: Callable | None = None,
) -> ConcentrationReport:
    """E|int (:u^2: + 2 u Th_S + Th_S^2)|^2 under the certificate drift, and
    the acceptance rate of the K cutoff."""
    if M > N:
        raise ValueError("need M <= N")
    steps = L or default_steps(N, M)
    a = _alpha_for(M, N, lam, steps)
    spec = PotentialSpec(N, lam, K=K, variant="cutoff")
    drift = DriftFamilySpec("zm_blowup", M=M)
    cfg = _EvalConfig(lam, sign(lam), a, 0.0)
    smp = _run_configs(spec, drift, N, steps, paths, seed, [cfg], False, runner, tag=3)[0]
    s = smp["concentration"]
    return ConcentrationReport(
        M, N, lam, steps, paths, K, Estimate.of(s * s), Estimate.of(s), Estimate.of(np.abs(s) <= K)
    )


# ---------------------------------------------------------------------------
# singularity diagnostic
# ---------------------------------------------------------------------------


def _singularity_chunk(args):
    N, lam, seed, start, count, single = args
    dtype = np.float32 if single else np.float64
    u, w = gff_pair_compact(N, path_streams(seed, start, count, tag=5), dtype)
    sigma = dg.tadpole(N)
    lay = rfft_layout(N, GridSpec(N).physical_size)
    out = np.empty(count)
    for i in range(count):
        U = lay.to_physical(u[i])
        W = lay.to_physical(w[i])
        out[i] = 0.5 * lam * float(np.mean((U * U - np.float32(sigma) if single else U * U - sigma) * W, dtype=np.float64))
    return out


@dataclass
class SingularityRow:
    N: int
    log_N: float
    h_sq: Estimate
    exact_h_sq: float
    scaled_norm: float
    rescaled: float

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "logN": self.log_N,
            "H_sq": self.h_sq.to_dict(),
            "exact_H_sq": self.exact_h_sq,
            "norm_logN_m34": self.scaled_norm,
            "norm_logN_m34_times_logN_14": self.rescaled,
        }


def singularity_diagnostic(
    N_list: Sequence[int],
    lam: float,
    paths: int,
    seed: int = 0,
    single_precision: bool = True,
    runner: Callable | None = None,
) -> list[SingularityRow]:
    """||(log N)^{-3/4} H_N||_{L^2(mu)} per N from independent GFF pairs."""
    if list(N_list) != sorted(set(N_list)):
        raise ValueError("N_list must be strictly increasing")
    rows = []
    for N in N_list:
        chunk = max(1, min(512, chunk_size_for(N)))
        tasks = [(N, lam, seed, st, min(chunk, paths - st), single_precision) for st in range(0, paths, chunk)]
        h = np.concatenate((runner or make_runner(1))(_singularity_chunk, tasks))
        est = Estimate.of(h * h)
        lg = math.log(N)
        norm = math.sqrt(max(est.mean, 0.0)) * lg**-0.75
        rows.append(SingularityRow(N, lg, est, dg.cubic_variance(N, lam), norm, norm * lg**0.25))
    return rows
