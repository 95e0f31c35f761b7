"""Command line front-end: deterministic CSV/JSON artifacts plus a manifest per run.

Exit codes: 0 success with all checks passing, 1 a configured check failed,
2 usage error (unknown subcommand or option, missing seed), 3 invalid
configuration values, 4 output directory not writable.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from . import diagram_engine as dg
from .parallel import make_runner

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_CONFIG, EXIT_OUTPUT = 0, 1, 2, 3, 4
OUT_ENV = "SWGIBBS_OUT_DIR"
DEFAULT_OUT = "swgibbs-out"


class ConfigError(ValueError):
    pass


class OutputError(OSError):
    pass


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def parse_int_list(text) -> list[int]:
    """'1..4' -> [1,2,3,4]; '8,16,32' -> [8,16,32]; mixed forms allowed."""
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    if isinstance(text, int):
        return [text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ConfigError(f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    if not out:
        raise ConfigError("empty integer list")
    return out


def parse_float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    vals = [float(p) for p in str(text).split(",") if p.strip()]
    if not vals:
        raise ConfigError("empty list")
    return vals


def _positive(values, name, minimum=1):
    if any(v < minimum for v in values):
        raise ConfigError(f"{name} values must be >= {minimum}")
    return values


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, np.floating):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


class Run:
    """Collects rows and checks for one subcommand, then writes artifacts."""

    def __init__(self, ctx: click.Context, name: str, params: dict, stochastic: bool):
        obj = ctx.obj
        if stochastic and obj["seed"] is None:
            raise click.UsageError(f"{name} is stochastic and needs --seed")
        self.name = name
        self.obj = obj
        self.params = {k: _jsonable(v) for k, v in params.items() if k != "spec"}
        self.config = {
            "subcommand": name,
            "params": self.params,
            "seed": obj["seed"] if stochastic else None,
            "format": obj["format"],
        }
        self.config_hash = hashlib.sha256(json.dumps(self.config, sort_keys=True).encode()).hexdigest()
        self.columns: list[str] = []
        self.rows: list[dict] = []
        self.details: dict = {}
        self.checks: list[dict] = []
        self.start = time.perf_counter()
        self.runner = make_runner(obj["threads"])

    def check(self, name: str, passed: bool, **info):
        self.checks.append({"check": name, "passed": bool(passed), **info})

    def csv_text(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.columns)
        for r in self.rows:
            wr.writerow([_fmt(r.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def json_text(self) -> str:
        return _dumps(
            {
                "config": self.config,
                "config_hash": self.config_hash,
                "columns": self.columns,
                "rows": self.rows,
                "details": self.details,
                "checks": self.checks,
            }
        )

    def finish(self) -> int:
        out = Path(self.obj["out"])
        try:
            out.mkdir(parents=True, exist_ok=True)
            artifacts = {}
            if self.obj["format"] == "csv":
                artifacts[f"{self.name}.csv"] = self.csv_text()
                if self.checks:
                    artifacts[f"{self.name}.checks.csv"] = _checks_csv(self.checks)
            else:
                artifacts[f"{self.name}.json"] = self.json_text()
            digests = {}
            for fname, text in artifacts.items():
                data = text.encode()
                (out / fname).write_bytes(data)
                digests[fname] = hashlib.sha256(data).hexdigest()
            manifest = {
                "config": self.config,
                "config_hash": self.config_hash,
                "version": __version__,
                "wall_time_s": time.perf_counter() - self.start,
                "artifacts": digests,
                "checks_passed": all(c["passed"] for c in self.checks),
            }
            (out / f"{self.name}.manifest.json").write_text(_dumps(manifest))
        except OSError as err:
            raise OutputError(f"cannot write to {out}: {err}") from err
        for c in self.checks:
            click.echo(f"{'PASS' if c['passed'] else 'FAIL'} {self.name}: {c['check']}", err=True)
        return EXIT_OK if all(c["passed"] for c in self.checks) else EXIT_CHECK


def _checks_csv(checks) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["check", "passed", "detail"])
    for c in checks:
        detail = json.dumps(_jsonable({k: v for k, v in c.items() if k not in ("check", "passed")}), sort_keys=True)
        wr.writerow([c["check"], _fmt(c["passed"]), detail])
    return buf.getvalue()


def _band(values, factor):
    vals = [v for v in values]
    if any(not math.isfinite(v) or v <= 0 for v in vals):
        return False, math.inf
    ratio = max(vals) / min(vals)
    return ratio <= factor, ratio


# ---------------------------------------------------------------------------
# group
# ---------------------------------------------------------------------------


def _load_spec(path: str) -> dict:
    text = Path(path).read_text()
    data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("spec file must hold a mapping")
    return data


GLOBAL_KEYS = ("seed", "out", "threads", "format")


@click.group()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), help="YAML or JSON config file.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Master seed (u64).")
@click.option("--out", "out_dir", type=str, default=None, help="Output directory.")
@click.option("--threads", type=click.IntRange(1, None), default=None, help="Worker processes.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None)
@click.version_option(__version__)
@click.pass_context
def cli(ctx, spec_path, seed, out_dir, threads, fmt):
    """Reproduce lattice diagram, Monte Carlo and variational experiments."""
    spec = _load_spec(spec_path) if spec_path else {}
    unknown_global = {k for k in spec if k in GLOBAL_KEYS}
    seed = seed if seed is not None else spec.get("seed")
    out = out_dir or os.environ.get(OUT_ENV) or spec.get("out") or DEFAULT_OUT
    ctx.obj = {
        "seed": None if seed is None else int(seed),
        "out": out,
        "threads": int(threads or spec.get("threads") or 1),
        "format": fmt or spec.get("format") or "csv",
    }
    if ctx.obj["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    flat = {k.replace("-", "_"): v for k, v in spec.items() if k not in unknown_global and not isinstance(v, dict)}
    defaults = {}
    for name, cmd in cli.commands.items():
        alias = {}
        for p in cmd.params:
            alias[p.name] = p.name
            for o in p.opts:
                alias[o.lstrip("-").replace("-", "_")] = p.name
        section = spec.get(name, {}) if isinstance(spec.get(name), dict) else {}
        merged = {alias[k]: v for k, v in flat.items() if k in alias}
        bad = sorted(k for k in section if k.replace("-", "_") not in alias)
        if bad:
            raise ConfigError(f"unknown keys for {name}: {bad}")
        merged.update({alias[k.replace("-", "_")]: v for k, v in section.items()})
        defaults[name] = {k: (",".join(map(str, v)) if isinstance(v, list) else v) for k, v in merged.items()}
    ctx.default_map = defaults


# ---------------------------------------------------------------------------
# diagrams / scaling
# ---------------------------------------------------------------------------

DIAGRAM_TABLE = ("tadpole", "sunset", "delta_counterterm", "cross_log", "cubic_var", "wick_square_var", "mixed_pair_var")


@cli.command()
@click.option("--n", "n_range", default="1..4", show_default=True, help="Cutoffs, e.g. 1..4 or 8,16,32.")
@click.option("--m", "m_cut", type=int, default=None, help="Second cutoff for cross_log (default max N).")
@click.option("--lambda", "lam", type=float, default=1.0, show_default=True)
@click.option("--kinds", default=",".join(DIAGRAM_TABLE), show_default=True)
@click.pass_context
def diagrams(ctx, n_range, m_cut, lam, kinds):
    """Exact diagram values: kind,N,M,lambda,value."""
    Ns = _positive(parse_int_list(n_range), "N")
    ks = [k.strip() for k in kinds.split(",") if k.strip()]
    bad = [k for k in ks if k not in DIAGRAM_TABLE]
    if bad:
        raise ConfigError(f"unknown diagram kinds {bad}")
    M = m_cut if m_cut is not None else max(Ns)
    if M < max(Ns):
        raise ConfigError("--m must be at least max N")
    run = Run(ctx, "diagrams", dict(n=Ns, m=M, lam=lam, kinds=ks), stochastic=False)
    run.columns = ["kind", "N", "M", "lambda", "value"]
    for k in ks:
        for N in Ns:
            if k == "tadpole":
                run.rows.append(dict(kind=k, N=N, M="", value=dg.tadpole(N), **{"lambda": ""}))
            elif k == "sunset":
                run.rows.append(dict(kind=k, N=N, M="", value=dg.sunset(N), **{"lambda": ""}))
            elif k == "delta_counterterm":
                run.rows.append(dict(kind=k, N=N, M="", value=dg.delta_counterterm(N, lam), **{"lambda": lam}))
            elif k == "cubic_var":
                run.rows.append(dict(kind=k, N=N, M="", value=dg.cubic_variance(N, lam), **{"lambda": lam}))
            elif k == "wick_square_var":
                run.rows.append(dict(kind=k, N=N, M="", value=dg.wick_square_variance_profile(N, 1.0), **{"lambda": ""}))
            elif k == "mixed_pair_var":
                run.rows.append(dict(kind=k, N=N, M="", value=dg.mixed_pair_variance_profile(N, 1.0), **{"lambda": ""}))
            elif k == "cross_log":
                s, w = dg.cross_log_sum(N, M)
                run.rows.append(dict(kind="cross_log_s", N=N, M=M, value=s, **{"lambda": ""}))
                run.rows.append(dict(kind="cross_log_w", N=N, M=M, value=w, **{"lambda": ""}))
    return run.finish()


SCALING_KINDS = {
    "tadpole": ("ratio", dg.tadpole),
    "sunset": ("difference", dg.sunset),
    "delta_counterterm": ("difference", lambda n: dg.delta_counterterm(n, 1.0)),
    "cubic_var": ("difference", lambda n: dg.cubic_variance(n, 1.0)),
    "wick_square_var": ("difference", lambda n: dg.wick_square_variance_profile(n, 1.0)),
    "mixed_pair_var": ("difference", lambda n: dg.mixed_pair_variance_profile(n, 1.0)),
    "cross_log_s": ("difference", None),
    "cross_log_w": ("difference", None),
}


def scaling_rows(kind: str, Ns: list[int], M: int | None = None, ratio_band=(1.9, 2.1), diff_tol=0.1):
    """Values, successive ratios or differences, and the pass flag."""
    mode, fn = SCALING_KINDS[kind]
    if fn is None:
        Mc = M or max(Ns)
        idx = 0 if kind == "cross_log_s" else 1
        fn = lambda n: dg.cross_log_sum(n, Mc)[idx]  # noqa: E731
    vals = [fn(N) for N in Ns]
    rows = []
    if mode == "ratio":
        stats = [b / a for a, b in zip(vals, vals[1:])]
        passed = all(ratio_band[0] <= r <= ratio_band[1] for r in stats)
    else:
        stats = [b - a for a, b in zip(vals, vals[1:])]
        spreads = [abs(d2 - d1) / max(abs(d1), abs(d2)) for d1, d2 in zip(stats, stats[1:])]
        passed = bool(spreads) and all(s <= diff_tol for s in spreads)
    for i, N in enumerate(Ns):
        rows.append({"kind": kind, "N": N, "value": vals[i], mode: stats[i - 1] if i else ""})
    return rows, stats, passed


@cli.command()
@click.option("--kind", "kinds", default="tadpole,sunset", show_default=True, help="Comma list of diagram kinds.")
@click.option("--n", "n_range", default="8,16,32,64", show_default=True)
@click.option("--m", "m_cut", type=int, default=None, help="Second cutoff for cross_log kinds.")
@click.pass_context
def scaling(ctx, kinds, n_range, m_cut):
    """Growth checks: ratios in [1.9, 2.1] for tadpole, successive differences within 10% otherwise."""
    Ns = _positive(parse_int_list(n_range), "N")
    if len(Ns) < 2 or Ns != sorted(set(Ns)):
        raise ConfigError("--n needs at least two increasing cutoffs")
    ks = [k.strip() for k in kinds.split(",") if k.strip()]
    bad = [k for k in ks if k not in SCALING_KINDS]
    if bad:
        raise ConfigError(f"unknown scaling kinds {bad}")
    if m_cut is not None and m_cut < max(Ns):
        raise ConfigError("--m must be at least max N")
    run = Run(ctx, "scaling", dict(kinds=ks, n=Ns, m=m_cut), stochastic=False)
    run.columns = ["kind", "N", "value", "ratio", "difference"]
    for k in ks:
        rows, stats, passed = scaling_rows(k, Ns, m_cut)
        run.rows.extend(rows)
        run.check(f"{k} growth", passed, statistics=stats)
    return run.finish()


# ---------------------------------------------------------------------------
# Monte Carlo moments
# ---------------------------------------------------------------------------


@cli.command("mc-moments")
@click.option("--n", "N", type=int, default=4, show_default=True)
@click.option("--paths", type=int, default=10000, show_default=True)
@click.option("--steps", "L", type=int, default=8, show_default=True)
@click.option("--chaos-trials", type=int, default=100000, show_default=True)
@click.option("--z-max", type=float, default=3.0, show_default=True)
@click.pass_context
def mc_moments(ctx, N, paths, L, chaos_trials, z_max):
    """Gaussian, Wick and counter-process moments against exact sums; chaos checks."""
    from .stochastic_lab import chaos_checks, gff_moment_checks

    if N < 1 or paths < 2 or L < 8 or chaos_trials < 2:
        raise ConfigError("need N >= 1, paths >= 2, steps >= 8, chaos trials >= 2")
    run = Run(ctx, "mc-moments", dict(n=N, paths=paths, steps=L, chaos_trials=chaos_trials, z_max=z_max), True)
    seed = run.obj["seed"]
    rep = gff_moment_checks(N, paths, seed, L, runner=run.runner)
    run.columns = ["statistic", "mean", "stderr", "count", "exact", "z"]
    for k, v in rep.to_dict()["statistics"].items():
        run.rows.append({"statistic": k, **v})
        run.check(f"{k} within {z_max} stderr", abs(v["z"]) <= z_max, z=v["z"])
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(8,)))
    chaos = {}
    for k in (1, 2, 3):
        for p in (4, 6):
            c = chaos_checks(k, p, chaos_trials, rng)
            chaos[f"k{k}_p{p}"] = c
            hc = c["hypercontractivity"]
            run.rows.append({"statistic": f"hypercontractivity_k{k}_p{p}", "mean": hc["ratio"], "exact": hc["bound"]})
            run.check(f"hypercontractivity k={k} p={p}", hc["ratio"] <= hc["bound"] * 1.05, **hc)
    run.details["chaos"] = chaos
    return run.finish()


# ---------------------------------------------------------------------------
# Z_M suite
# ---------------------------------------------------------------------------

ZM_SCALINGS = {
    "zm_pointwise": -1,
    "recentred_gain": -1,
    "wick_l2_variance": 1,
    "profile_overlap": 2,
    "kinetic": -3,
}


@cli.command("zm-check")
@click.option("--m", "m_range", default="8,16,32", show_default=True)
@click.option("--lambda", "lam", type=float, default=0.0, show_default=True)
@click.option("--paths", type=int, default=10000, show_default=True)
@click.option("--a-norm-paths", type=int, default=256, show_default=True)
@click.option("--band", type=float, default=2.0, show_default=True)
@click.pass_context
def zm_check(ctx, m_range, lam, paths, a_norm_paths, band):
    """Z_M moment suite with N = M; scaled statistics must stay in a factor band."""
    from .stochastic_lab import zm_moment_suite

    Ms = _positive(parse_int_list(m_range), "M", 2)
    if paths < 2:
        raise ConfigError("paths must be >= 2")
    run = Run(ctx, "zm-check", dict(m=Ms, lam=lam, paths=paths, a_norm_paths=a_norm_paths, band=band), True)
    run.columns = ["M", "statistic", "mean", "stderr", "count", "exact", "scaled"]
    scaled = {k: [] for k in ZM_SCALINGS}
    for M in Ms:
        rep = zm_moment_suite(M, M, lam, paths, run.obj["seed"], a_norm_paths=a_norm_paths, runner=run.runner)
        for k, est in rep.estimates.items():
            sc = est.mean * float(M) ** ZM_SCALINGS[k] if k in ZM_SCALINGS else ""
            if k in ZM_SCALINGS:
                scaled[k].append(sc)
            run.rows.append({"M": M, "statistic": k, **est.to_dict(), "exact": rep.exact.get(k, ""), "scaled": sc})
        run.details[f"M{M}"] = rep.to_dict()
    for k, vals in scaled.items():
        ok, ratio = _band(vals, band)
        run.check(f"{k} scaled by M^{ZM_SCALINGS[k]} within factor {band}", ok, ratio=ratio)
    return run.finish()


# ---------------------------------------------------------------------------
# certificate / concentration
# ---------------------------------------------------------------------------


@cli.command("certify-divergence")
@click.option("--lambda", "lams", default="1,2,4,8", show_default=True)
@click.option("--m", "m_range", default="4,8,16", show_default=True)
@click.option("--n", "n_cut", type=int, default=None, help="Fixed N (default N = M).")
@click.option("--paths", type=int, default=10000, show_default=True)
@click.option("--K", "K", type=float, default=0.5, show_default=True)
@click.option("--variant", type=click.Choice(["cutoff", "grand_canonical"]), default="cutoff", show_default=True)
@click.option("--concentration/--no-concentration", default=False, show_default=True)
@click.pass_context
def certify_divergence(ctx, lams, m_range, n_cut, paths, K, variant, concentration):
    """Strong-coupling drift on a lambda x M grid."""
    from .variational_engine import cutoff_concentration, divergence_sweep

    ls = parse_float_list(lams)
    Ms = _positive(parse_int_list(m_range), "M", 2)
    if n_cut is not None and n_cut < max(Ms):
        raise ConfigError("--n must be at least max M")
    if paths < 2 or K <= 0:
        raise ConfigError("need paths >= 2 and K > 0")
    params = dict(lams=ls, m=Ms, n=n_cut, paths=paths, K=K, variant=variant, concentration=concentration)
    run = Run(ctx, "certify-divergence", params, True)
    seed = run.obj["seed"]
    reps = divergence_sweep(
        ls, Ms, paths, seed, N_of=(lambda M: n_cut) if n_cut else (lambda M: M), K=K, variant=variant,
        runner=run.runner,
    )
    parts = ("total", "wick_cubic", "mixed", "cubic_drift", "taming", "kinetic", "certificate", "cubic_gain",
             "l2_moments", "kinetic_cost", "acceptance")
    run.columns = ["lambda", "M", "N", "alpha", "alpha_raw", "kinetic_expected", "diverging"]
    for p in parts:
        run.columns += [p, f"{p}_se"]
    for r in reps:
        row = {"lambda": r.lam, "M": r.M, "N": r.N, "alpha": r.alpha, "alpha_raw": r.alpha_raw,
               "kinetic_expected": r.kinetic_expected, "diverging": r.diverging}
        for p in parts:
            row[p] = r.parts[p].mean
            row[f"{p}_se"] = r.parts[p].stderr
        run.rows.append(row)
    run.details["reports"] = [r.to_dict() for r in reps]
    checks = certificate_checks(reps)
    for name, ok, info in checks:
        run.check(name, ok, **info)
    if concentration:
        conc = [cutoff_concentration(M, n_cut or M, ls[0], paths, seed, K=K, runner=run.runner) for M in Ms]
        run.details["concentration"] = [c.to_dict() for c in conc]
        for name, ok, info in concentration_checks(conc):
            run.check(name, ok, **info)
    return run.finish()


def certificate_checks(reps, band=2.0, nsig=2.0):
    """Monotone decrease in |lam| at each M, kinetic/M^3 band at each lam,
    and at the largest |lam| a lower objective at the largest M than the smallest."""
    out = []
    Ms = sorted({r.M for r in reps})
    lams = sorted({abs(r.lam) for r in reps})
    by = {(r.M, abs(r.lam)): r for r in reps}
    for M in Ms:
        seq = [by[(M, l)].parts["total"] for l in lams if (M, l) in by]
        ok = all(b.mean < a.mean + nsig * math.hypot(a.stderr, b.stderr) for a, b in zip(seq, seq[1:]))
        out.append((f"objective decreasing in |lambda| at M={M}", ok, {"totals": [e.mean for e in seq]}))
    for l in lams:
        vals = [by[(M, l)].parts["kinetic"].mean / M**3 for M in Ms if (M, l) in by]
        ok, ratio = _band(vals, band)
        out.append((f"kinetic/M^3 within factor {band} at |lambda|={l}", ok, {"values": vals, "ratio": ratio}))
    if len(Ms) > 1:
        lo, hi = by[(Ms[0], lams[-1])].parts["total"], by[(Ms[-1], lams[-1])].parts["total"]
        out.append(
            (f"objective at M={Ms[-1]} below M={Ms[0]} for |lambda|={lams[-1]}", hi.mean < lo.mean,
             {"small_M": lo.mean, "large_M": hi.mean})
        )
    return out


def concentration_checks(conc, band=2.0):
    vals = [c.second_moment.mean * c.M for c in conc]
    ok, ratio = _band(vals, band)
    acc = [c.acceptance.mean for c in conc]
    return [
        (f"concentration * M within factor {band}", ok, {"values": vals, "ratio": ratio}),
        ("acceptance increasing in M", all(b > a for a, b in zip(acc, acc[1:])), {"acceptance": acc}),
    ]


@cli.command()
@click.option("--m", "m_range", default="8,16,32", show_default=True)
@click.option("--lambda", "lam", type=float, default=1.0, show_default=True)
@click.option("--paths", type=int, default=1000, show_default=True)
@click.option("--K", "K", type=float, default=0.5, show_default=True)
@click.pass_context
def concentration(ctx, m_range, lam, paths, K):
    """Cutoff concentration under the certificate drift, N = M."""
    from .variational_engine import cutoff_concentration

    Ms = _positive(parse_int_list(m_range), "M", 2)
    if paths < 2 or K <= 0:
        raise ConfigError("need paths >= 2 and K > 0")
    run = Run(ctx, "concentration", dict(m=Ms, lam=lam, paths=paths, K=K), True)
    conc = [cutoff_concentration(M, M, lam, paths, run.obj["seed"], K=K, runner=run.runner) for M in Ms]
    run.columns = ["M", "N", "lambda", "second_moment", "second_moment_se", "scaled", "acceptance", "acceptance_se"]
    for c in conc:
        run.rows.append({"M": c.M, "N": c.N, "lambda": c.lam, "second_moment": c.second_moment.mean,
                         "second_moment_se": c.second_moment.stderr, "scaled": c.second_moment.mean * c.M,
                         "acceptance": c.acceptance.mean, "acceptance_se": c.acceptance.stderr})
    for name, ok, info in concentration_checks(conc):
        run.check(name, ok, **info)
    return run.finish()


# ---------------------------------------------------------------------------
# singularity / logZ / drift optimization
# ---------------------------------------------------------------------------


@cli.command()
@click.option("--n", "n_range", default="8,16,32,64", show_default=True)
@click.option("--lambda", "lam", type=float, default=1.0, show_default=True)
@click.option("--paths", type=int, default=10000, show_default=True)
@click.option("--double/--single", default=False, show_default=True, help="FFT precision.")
@click.option("--band", type=float, default=2.0, show_default=True)
@click.pass_context
def singularity(ctx, n_range, lam, paths, double, band):
    """||(log N)^{-3/4} H_N||_{L^2} per N; the rescaled column should sit in a band."""
    from .variational_engine import singularity_diagnostic

    Ns = _positive(parse_int_list(n_range), "N", 2)
    if Ns != sorted(set(Ns)) or paths < 2:
        raise ConfigError("--n must be strictly increasing and paths >= 2")
    run = Run(ctx, "singularity", dict(n=Ns, lam=lam, paths=paths, double=double, band=band), True)
    rows = singularity_diagnostic(Ns, lam, paths, run.obj["seed"], not double, runner=run.runner)
    run.columns = ["N", "logN", "H_sq", "H_sq_se", "exact_H_sq", "norm", "rescaled"]
    for r in rows:
        run.rows.append({"N": r.N, "logN": r.log_N, "H_sq": r.h_sq.mean, "H_sq_se": r.h_sq.stderr,
                         "exact_H_sq": r.exact_h_sq, "norm": r.scaled_norm, "rescaled": r.rescaled})
    if lam != 0:
        ok, ratio = _band([r.rescaled for r in rows], band)
        run.check(f"rescaled norm within factor {band}", ok, ratio=ratio)
    return run.finish()


@cli.command()
@click.option("--lambda", "lams", default="0.1,10", show_default=True)
@click.option("--n", "n_range", default="4,8,16", show_default=True)
@click.option("--paths", type=int, default=10000, show_default=True)
@click.option("--K", "K", type=float, default=1.0, show_default=True)
@click.option("--A", "A", type=float, default=1.0, show_default=True)
@click.option("--gamma", type=float, default=3.0, show_default=True)
@click.option("--variant", type=click.Choice(["cutoff", "grand_canonical", "a_norm_tamed"]), default="cutoff")
@click.option("--delta", type=float, default=1e-3, show_default=True)
@click.option("--bound/--no-bound", default=True, show_default=True, help="Also report the zero-drift bound.")
@click.pass_context
def logz(ctx, lams, n_range, paths, K, A, gamma, variant, delta, bound):
    """Naive log Z estimates with heavy-tail flags and the zero-drift lower bound."""
    from .variational_engine import PotentialSpec, estimate_logZ

    ls = parse_float_list(lams)
    Ns = _positive(parse_int_list(n_range), "N")
    if paths < 1000:
        raise ConfigError("logz needs paths >= 1000")
    params = dict(lams=ls, n=Ns, paths=paths, K=K, A=A, gamma=gamma, variant=variant, delta=delta, bound=bound)
    run = Run(ctx, "logz", params, True)
    run.columns = ["lambda", "N", "naive", "naive_ci95", "unreliable", "acceptance", "top1pct_share",
                   "hard_cutoff", "drift_bound", "drift_bound_ci95"]
    for lam in ls:
        for N in Ns:
            try:
                spec = PotentialSpec(N, lam, K=K, A=A, gamma=gamma, variant=variant, delta=delta)
            except ValueError as err:
                raise ConfigError(str(err)) from err
            nv = estimate_logZ(spec, paths, "naive", run.obj["seed"], runner=run.runner)
            row = {"lambda": lam, "N": N, "naive": nv.estimate, "naive_ci95": nv.ci_halfwidth,
                   "unreliable": nv.unreliable, "acceptance": nv.details["acceptance"],
                   "top1pct_share": nv.details["top1pct_weight_share"], "hard_cutoff": nv.details["hard_cutoff_logZ"]}
            if bound:
                db = estimate_logZ(spec, paths, "drift_bound", run.obj["seed"], runner=run.runner)
                row.update(drift_bound=db.estimate, drift_bound_ci95=db.ci_halfwidth)
                if not nv.unreliable:
                    comb = 3 * math.hypot(nv.stderr, db.stderr)
                    run.check(f"bound below naive at lambda={lam}, N={N}", db.estimate <= nv.estimate + comb,
                              bound=db.estimate, naive=nv.estimate)
            run.rows.append(row)
    return run.finish()


@cli.command("drift-opt")
@click.option("--family", type=click.Choice(["zero", "constant_in_time", "zm_blowup"]), default="zm_blowup")
@click.option("--n", "N", type=int, default=8, show_default=True)
@click.option("--lambda", "lam", type=float, default=5.0, show_default=True)
@click.option("--K", "K", type=float, default=0.5, show_default=True)
@click.option("--variant", type=click.Choice(["cutoff", "grand_canonical", "a_norm_tamed"]), default="cutoff")
@click.option("--paths", type=int, default=1000, show_default=True)
@click.option("--budget", type=int, default=10000, show_default=True, help="Total path evaluations.")
@click.pass_context
def drift_opt(ctx, family, N, lam, K, variant, paths, budget):
    """Grid search over a drift family with common random numbers."""
    from .variational_engine import PotentialSpec, optimize_drift

    if N < 1 or paths < 2 or budget < paths:
        raise ConfigError("need N >= 1, paths >= 2 and budget >= paths")
    try:
        spec = PotentialSpec(N, lam, K=K, variant=variant)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    run = Run(ctx, "drift-opt", dict(family=family, n=N, lam=lam, K=K, variant=variant, paths=paths, budget=budget), True)
    res = optimize_drift(family, spec, budget, run.obj["seed"], paths, runner=run.runner)
    run.columns = ["candidate", "total", "total_se", "kinetic", "best"]
    best = json.dumps(res.best.describe(), sort_keys=True)
    for e in res.evaluated:
        cand = json.dumps(e["candidate"], sort_keys=True)
        if "error" in e:
            run.rows.append({"candidate": cand, "total": "", "total_se": "", "kinetic": "", "best": False})
            continue
        run.rows.append({"candidate": cand, "total": e["total"]["mean"], "total_se": e["total"]["stderr"],
                         "kinetic": e["kinetic"]["mean"], "best": cand == best})
    run.details = res.to_dict()
    zero = res.evaluated[0]["total"]
    b = res.report.total
    run.check("best not worse than zero drift", b.mean <= zero["mean"] + 2 * math.hypot(zero["stderr"], b.stderr))
    return run.finish()


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="swgibbs", standalone_mode=False)
    except click.exceptions.NoSuchOption as err:
        err.show()
        return EXIT_USAGE
    except click.UsageError as err:
        err.show()
        return EXIT_USAGE
    except click.BadParameter as err:
        err.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except OutputError as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_OUTPUT
    except (ConfigError, ValueError) as err:
        click.echo(f"error: {err}", err=True)
        return EXIT_CONFIG
    except click.ClickException as err:
        err.show()
        return EXIT_USAGE
    if isinstance(rv, int):
        return rv
    return EXIT_OK


def entry() -> None:
    sys.exit(main())
