import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swgibbs import diagram_engine as dg
from swgibbs.lattice_field import FieldPair, GridSpec, LatticeField, sample_gff
from swgibbs.variational_engine import (
    DriftFamilySpec,
    PotentialSpec,
    constant_direction,
    cutoff_concentration,
    cutoff_indicator,
    divergence_certificate,
    domination_holds,
    estimate_logZ,
    hamiltonian_renormalized,
    hamiltonian_wick,
    kinetic_expectation,
    objective_W,
    optimize_drift,
    sign,
    singularity_diagnostic,
    taming_value,
    wick_l2,
)

seeds = st.integers(0, 2**32 - 1)


def gff_pair(N, seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(N)
    return FieldPair(sample_gff(g, 1.0, rng), sample_gff(g, 1.0, rng))


# --- specs ----------------------------------------------------------------------------


def test_potential_spec_validation():
    with pytest.raises(ValueError):
        PotentialSpec(0, 1.0)
    with pytest.raises(ValueError):
        PotentialSpec(2, 1.0, variant="soft")
    with pytest.raises(ValueError):
        PotentialSpec(2, 1.0, K=0.0)
    with pytest.raises(ValueError):
        PotentialSpec(2, 1.0, variant="grand_canonical", gamma=2.0)
    with pytest.raises(ValueError):
        PotentialSpec(2, 1.0, variant="a_norm_tamed", delta=0.0)
    assert PotentialSpec(2, 1.0).uses_indicator
    assert not PotentialSpec(2, 1.0, variant="grand_canonical").uses_indicator


def test_drift_family_validation():
    with pytest.raises(ValueError):
        DriftFamilySpec("spiral")
    with pytest.raises(ValueError):
        DriftFamilySpec("zm_blowup", M=1)
    with pytest.raises(ValueError):
        DriftFamilySpec("constant_in_time")
    with pytest.raises(ValueError):
        DriftFamilySpec("zm_blowup", M=8).check(4)
    bad = DriftFamilySpec("constant_in_time", rates=(np.zeros(3), np.zeros(3)))
    with pytest.raises(ValueError):
        bad.check(2)


def test_sign_convention():
    assert sign(0.0) == 0.0 and sign(2.0) == 1.0 and sign(-0.1) == -1.0


# --- Hamiltonian ----------------------------------------------------------------------------


def test_hamiltonian_of_zero_field():
    g = GridSpec(3)
    z = LatticeField.zeros(g)
    spec = PotentialSpec(3, 1.5)
    assert hamiltonian_wick(FieldPair(z, z), spec) == 0.0
    assert hamiltonian_renormalized(FieldPair(z, z), spec) == pytest.approx(dg.delta_counterterm(3, 1.5))


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 4), st.floats(-4, 4))
def test_hamiltonian_linear_in_coupling(seed, N, lam):
    pair = gff_pair(N, seed)
    h1 = hamiltonian_wick(pair, PotentialSpec(N, 1.0))
    h = hamiltonian_wick(pair, PotentialSpec(N, lam))
    assert h == pytest.approx(lam * h1, rel=1e-12, abs=1e-12)
    assert hamiltonian_wick(pair, PotentialSpec(N, 0.0)) == 0.0
    flipped = FieldPair(pair.u, -pair.w)
    assert hamiltonian_wick(flipped, PotentialSpec(N, lam)) == pytest.approx(-h, rel=1e-12, abs=1e-12)
    ren = hamiltonian_renormalized(pair, PotentialSpec(N, lam))
    assert ren - h == pytest.approx(dg.delta_counterterm(N, lam), rel=1e-12, abs=1e-12)


def test_hamiltonian_matches_physical_quadrature():
    N = 3
    pair = gff_pair(N, 7)
    P = 64
    U, W = pair.u.physical(P), pair.w.physical(P)
    direct = 0.5 * 2.0 * float(np.mean((U * U - dg.tadpole(N)) * W))
    assert hamiltonian_wick(pair, PotentialSpec(N, 2.0)) == pytest.approx(direct, rel=1e-11)


def test_indicator_and_wick_l2():
    N = 2
    z = LatticeField.zeros(GridSpec(N))
    assert wick_l2(z, N) == pytest.approx(-dg.tadpole(N))
    assert not cutoff_indicator(z, N, 1.0)
    assert cutoff_indicator(z, N, dg.tadpole(N) + 1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 10), st.floats(0.01, 5), st.sampled_from([3.0, 4.0, 5.5]))
def test_indicator_dominated_by_grand_canonical_weight(x, K, A, gamma):
    assert domination_holds(x, K, A, gamma)


def test_taming_variants():
    N = 2
    pair = gff_pair(N, 3)
    spec = PotentialSpec(N, 1.0)
    assert taming_value(pair, spec) == 0.0
    with pytest.raises(ValueError):
        taming_value(pair, spec, "grand_canonical")
    gc = PotentialSpec(N, 1.0, A=2.0, variant="grand_canonical")
    x = wick_l2(pair.u, N)
    assert taming_value(pair, gc) == pytest.approx(2.0 * abs(x) ** 3)
    an = PotentialSpec(N, 1.0, variant="a_norm_tamed", delta=0.5)
    assert taming_value(pair, an) > 0
    assert taming_value(pair, an) == pytest.approx(0.5 * taming_value(pair, PotentialSpec(N, 1.0, variant="a_norm_tamed", delta=1.0)))


# --- objective -------------------------------------------------------------------------------


def test_zero_drift_at_zero_coupling():
    rep = objective_W(DriftFamilySpec("zero"), PotentialSpec(3, 0.0), 256, seed=1)
    assert rep.terms["kinetic"].mean == 0.0
    assert rep.total.mean == 0.0
    assert rep.flags == ["only 256 paths"]


def test_parts_sum_to_total():
    rep = objective_W(DriftFamilySpec("zm_blowup", M=4), PotentialSpec(4, 1.0, K=5.0), 400, seed=2)
    parts = sum(rep.terms[k].mean for k in ("wick_cubic", "mixed", "cubic_drift", "taming", "kinetic"))
    assert parts == pytest.approx(rep.total.mean, rel=1e-12)


def test_kinetic_two_ways():
    M, N, lam = 4, 4, 1.0
    rep = objective_W(DriftFamilySpec("zm_blowup", M=M), PotentialSpec(N, lam), 3000, seed=5)
    exact = kinetic_expectation(M, N, lam, rep.L, rep.alpha)
    assert abs(rep.terms["kinetic"].z_score(exact)) < 4


def test_constant_drift_kinetic_is_deterministic():
    N = 3
    c = constant_direction(N, amplitude=0.4)
    rep = objective_W(DriftFamilySpec("constant_in_time", rates=(c, c), label="c"), PotentialSpec(N, 1.0), 64, seed=0)
    # a cos(x1) has H^1 norm^2 a^2 (L^2 mass a^2 / 2 times <e1>^2 = 2); S and W, halved
    assert rep.terms["kinetic"].mean == pytest.approx(0.4**2, rel=1e-12)
    assert rep.terms["kinetic"].stderr == 0.0


def test_objective_bound_form_agrees_in_expectation():
    """Without a cutoff the drift form and the direct bound form share their mean."""
    spec = PotentialSpec(4, 1.0, A=1e-3, variant="grand_canonical")
    rep = objective_W(DriftFamilySpec("zm_blowup", M=4), spec, 4000, seed=9)
    a, b = rep.extras["total"], rep.extras["bd_objective"]
    assert abs(a.mean - b.mean) < 4 * (a.stderr + b.stderr)


def test_objective_common_random_numbers():
    spec = PotentialSpec(3, 1.0)
    a = objective_W(DriftFamilySpec("zero"), spec, 128, seed=3)
    b = objective_W(DriftFamilySpec("zero"), spec, 128, seed=3)
    assert a.total.mean == b.total.mean


# --- log Z -------------------------------------------------------------------------------------


def test_logz_requires_samples():
    with pytest.raises(ValueError):
        estimate_logZ(PotentialSpec(2, 1.0), 10)
    with pytest.raises(ValueError):
        estimate_logZ(PotentialSpec(2, 1.0), 1000, method="magic")


def test_logz_zero_coupling():
    spec = PotentialSpec(2, 0.0, variant="grand_canonical", A=1e-6)
    est = estimate_logZ(spec, 2000, seed=1)
    assert abs(est.estimate) < 1e-3
    assert not est.unreliable


def test_logz_bound_below_naive():
    spec = PotentialSpec(2, 0.5, K=2.0)
    naive = estimate_logZ(spec, 4000, seed=2)
    bound = estimate_logZ(spec, 4000, method="drift_bound", seed=2)
    assert bound.estimate <= naive.estimate + 3 * (naive.stderr + bound.stderr)
    assert 0 < naive.details["acceptance"] <= 1


# --- drift optimization ----------------------------------------------------------------------


def test_optimize_zero_family():
    res = optimize_drift("zero", PotentialSpec(2, 1.0), budget=1000, paths=500)
    assert res.best.family == "zero"
    assert len(res.evaluated) == 1


def test_optimize_at_zero_coupling_prefers_zero_drift():
    res = optimize_drift("constant_in_time", PotentialSpec(2, 0.0), budget=10**6, paths=200)
    assert res.best.family == "zero"
    assert not res.exhausted
    assert len(res.evaluated) == 5


def test_optimize_budget_and_errors():
    res = optimize_drift("constant_in_time", PotentialSpec(2, 0.0), budget=400, paths=200)
    assert res.exhausted and len(res.evaluated) == 2
    with pytest.raises(ValueError):
        optimize_drift("zero", PotentialSpec(2, 0.0), budget=10, paths=200)
    bad = [DriftFamilySpec("zero"), DriftFamilySpec("zm_blowup", M=8)]
    res = optimize_drift("zm_blowup", PotentialSpec(4, 1.0), budget=10**6, paths=100, candidates=bad)
    assert "error" in res.evaluated[1]


# --- certificate, concentration, singularity -------------------------------------------------------


def test_certificate_at_zero_coupling_not_diverging():
    rep = divergence_certificate(0.0, 4, 4, 200, seed=1)
    assert not rep.diverging
    assert rep.parts["cubic_gain"].mean == 0.0
    assert rep.alpha == rep.alpha_raw


def test_certificate_clips_negative_alpha():
    rep = divergence_certificate(8.0, 4, 4, 100, seed=1)
    assert rep.alpha_raw < 0 and rep.alpha == 0.0
    assert rep.to_dict()["alpha_clipped"]


def test_certificate_parts_sum():
    rep = divergence_certificate(2.0, 4, 4, 200, seed=2)
    p = rep.parts
    s = p["cubic_gain"].mean + p["gated_taming"].mean + p["l2_moments"].mean + p["kinetic_cost"].mean
    assert s == pytest.approx(p["certificate"].mean, rel=1e-10)


def test_concentration_report():
    rep = cutoff_concentration(4, 4, 1.0, 200, seed=1)
    assert rep.second_moment.mean >= rep.mean.mean**2 - 1e-12
    assert 0 <= rep.acceptance.mean <= 1
    with pytest.raises(ValueError):
        cutoff_concentration(8, 4, 1.0, 10)


def test_singularity_linear_in_coupling_and_exact():
    a = singularity_diagnostic([2, 4], 1.0, 4000, seed=3, single_precision=False)
    b = singularity_diagnostic([2, 4], 2.0, 4000, seed=3, single_precision=False)
    for ra, rb in zip(a, b):
        assert rb.h_sq.mean == pytest.approx(4 * ra.h_sq.mean, rel=1e-12)
        assert abs(ra.h_sq.z_score(ra.exact_h_sq)) < 4
    with pytest.raises(ValueError):
        singularity_diagnostic([4, 2], 1.0, 10)


def test_singularity_single_precision_unbiased():
    # float32 draws come from a different stream, so both are compared with the exact value
    for single in (True, False):
        row = singularity_diagnostic([4], 1.0, 3000, seed=4, single_precision=single)[0]
        assert abs(row.h_sq.z_score(row.exact_h_sq)) < 4
        assert math.isfinite(row.rescaled)
