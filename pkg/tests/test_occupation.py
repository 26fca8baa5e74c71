"""Occupation coefficient estimates and their differential identities.

Expensive fields are built once per module and shared. Every numeric
tolerance below was frozen against an independent route: closed-form
dilute expressions, direct Monte Carlo of the defining integrals with
the weight field held fixed, or repeated-seed scatter measurements.
"""

import math

import numpy as np
import pytest

from finitekin.geometry import DomainSpec
from finitekin.ensemble import lattice_pdf
from finitekin.occupation import (
    OccupationField,
    PairOccupation,
    bg_sweep,
    check_grad_k1_identity,
    check_laplacian_identity,
    check_streaming_identity,
    estimate_k1,
    estimate_k2,
    evaluate_grad_k2,
)


def taper(x, start, stop):
    x = np.asarray(x, dtype=np.float64)
    t = np.clip((x - start) / (stop - start), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(math.pi * t))


def slab(center):
    lo_edge = center - 0.22
    hi_edge = center + 0.22

    def density(x):
        x = np.asarray(x, dtype=np.float64)
        out = np.ones_like(x)
        tl = np.clip((lo_edge - x) / 0.14, 0.0, 1.0)
        tr = np.clip((x - hi_edge) / 0.14, 0.0, 1.0)
        out = np.where(x < lo_edge, 0.5 * (1.0 + np.cos(math.pi * tl)), out)
        out = np.where(x > hi_edge, 0.5 * (1.0 + np.cos(math.pi * tr)), out)
        return out

    return density


def unit_domain(sigma):
    return DomainSpec(lo=np.zeros(3), hi=np.ones(3), sigma=sigma)


# ---------------------------------------------------------------------------
# shared fields


@pytest.fixture(scope="module")
def ramp6():
    dom = unit_domain(0.18)
    pdf = lattice_pdf(dom, 6, density=lambda x: 0.2 + 1.6 * x)
    fld = estimate_k1(pdf, samples=1200000, grid=(12, 4, 4), seed=3)
    return pdf, fld


@pytest.fixture(scope="module")
def uniform12():
    dom = unit_domain(0.15)
    pdf = lattice_pdf(dom, 12)
    fld = estimate_k1(pdf, samples=200000, grid=(6, 4, 4), seed=1)
    return pdf, fld


@pytest.fixture(scope="module")
def dilute2():
    dom = unit_domain(0.06)
    pdf = lattice_pdf(dom, 2)
    fld = estimate_k1(pdf, samples=400000, grid=(4, 4, 4), seed=2)
    return pdf, fld


# ---------------------------------------------------------------------------
# k1 fixed point


def test_k1_two_body_dilute_matches_oracles(dilute2):
    pdf, fld = dilute2
    sigma = pdf.domain.sigma
    center = np.full(3, 0.5)
    got = float(fld.k1_at(center[None])[0])
    mid_err = float(fld.stderr[2, 2, 2])

    # direct MC of the defining ratio with the weight field frozen
    rng = np.random.default_rng(2024)
    draws = rng.uniform(0.5 * sigma, 1.0 - 0.5 * sigma, size=(400000, 3))
    w = 1.0 / np.clip(fld.k1_at(draws), 1e-12, None)
    clear = np.linalg.norm(draws - center, axis=1) > sigma
    oracle = float((w * clear).sum() / w.sum())
    se_oracle = float(np.std(w * clear - oracle * w) /
                      (w.mean() * math.sqrt(draws.shape[0])))
    assert abs(got - oracle) <= 3.0 * (mid_err + se_oracle) + 2e-4

    # dilute closed form: one excluded ball over the accessible volume
    v_excl = 4.0 / 3.0 * math.pi * sigma**3
    v_eff = (1.0 - sigma) ** 3
    assert abs(got - (1.0 - v_excl / v_eff)) <= 5e-4


def test_k1_values_lie_in_unit_interval(uniform12):
    _, fld = uniform12
    assert np.all(fld.k1 > 0.0)
    assert np.all(fld.k1 <= 1.0)
    assert np.all(fld.stderr >= 0.0)


def test_k1_residual_history_is_monotone(ramp6):
    _, fld = ramp6
    resid = fld.residuals
    assert len(resid) >= 2
    assert resid[-1] < 1e-3
    for a, b in zip(resid[1:], resid[2:]):
        assert b <= a * 1.05


def test_k1_restart_from_half_converges_to_same_field():
    dom = unit_domain(0.15)
    pdf = lattice_pdf(dom, 6)
    base = estimate_k1(pdf, samples=150000, grid=(4, 4, 4), seed=9)
    again = estimate_k1(pdf, samples=150000, grid=(4, 4, 4), seed=9,
                        k1_init=0.5)
    combined = np.sqrt(base.stderr**2 + again.stderr**2)
    assert np.all(np.abs(base.k1 - again.k1) <= 2.0 * combined + 1e-6)


def test_k1_decreases_toward_jamming():
    vals = []
    for sigma in (0.06, 0.12, 0.2, 0.28):
        dom = unit_domain(sigma)
        pdf = lattice_pdf(dom, 4)
        fld = estimate_k1(pdf, samples=60000, grid=(2, 2, 2), seed=4)
        vals.append(float(fld.k1_at(np.full((1, 3), 0.5))[0]))
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_k1_rejects_degenerate_grid():
    dom = unit_domain(0.1)
    pdf = lattice_pdf(dom, 4)
    with pytest.raises(ValueError):
        estimate_k1(pdf, samples=1000, grid=(6, 1, 6), seed=0)


def test_field_csv_round_trip(tmp_path, uniform12):
    _, fld = uniform12
    path = tmp_path / "k1.csv"
    fld.to_csv(str(path))
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (fld.k1.size, 5)
    assert np.array_equal(data[:, 3], fld.k1.ravel())
    assert np.array_equal(data[:, 4], fld.stderr.ravel())


# ---------------------------------------------------------------------------
# k2


def test_k2_two_body_is_exactly_one():
    dom = unit_domain(0.2)
    pdf = lattice_pdf(dom, 2)
    pair = estimate_k2(pdf, (0.4, 0.5, 0.5), (0.6, 0.5, 0.5), samples=1000)
    assert pair.value == 1.0
    assert pair.stderr == 0.0


def test_k2_three_body_contact_pair_matches_oracles():
    sigma = 0.08
    dom = unit_domain(sigma)
    pdf = lattice_pdf(dom, 3)
    fld = estimate_k1(pdf, samples=300000, grid=(4, 4, 4), seed=5)
    r1 = np.array([0.5 - sigma / 2.0, 0.5, 0.5])
    r2 = np.array([0.5 + sigma / 2.0, 0.5, 0.5])
    pair = estimate_k2(pdf, r1, r2, samples=300000, field=fld, seed=6)

    # direct MC with the weight field frozen
    rng = np.random.default_rng(77)
    draws = rng.uniform(0.5 * sigma, 1.0 - 0.5 * sigma, size=(400000, 3))
    w = 1.0 / np.clip(fld.k1_at(draws), 1e-12, None)
    clear = ((np.linalg.norm(draws - r1, axis=1) > sigma)
             & (np.linalg.norm(draws - r2, axis=1) > sigma))
    oracle = float((w * clear).sum() / w.sum())
    se_oracle = float(np.std(w * clear - oracle * w) /
                      (w.mean() * math.sqrt(draws.shape[0])))
    assert abs(pair.value - oracle) <= 3.0 * (pair.stderr + se_oracle) + 1e-4

    # dilute closed form: two balls at contact share a lens
    union = 9.0 * math.pi * sigma**3 / 4.0
    v_eff = (1.0 - sigma) ** 3
    assert abs(pair.value - (1.0 - union / v_eff)) <= 6e-4


def test_k2_is_symmetric_under_center_exchange(uniform12):
    pdf, fld = uniform12
    r1 = np.array([0.39, 0.5, 0.5])
    r2 = np.array([0.61, 0.5, 0.5])
    a = estimate_k2(pdf, r1, r2, samples=200000, field=fld, seed=21)
    b = estimate_k2(pdf, r2, r1, samples=200000, field=fld, seed=22)
    band = 3.0 * math.sqrt(a.stderr**2 + b.stderr**2)
    assert abs(a.value - b.value) <= band + 1e-4


def test_k2_rejects_overlapping_centers():
    dom = unit_domain(0.2)
    pdf = lattice_pdf(dom, 3)
    with pytest.raises(ValueError):
        estimate_k2(pdf, (0.45, 0.5, 0.5), (0.55, 0.5, 0.5), samples=1000)


def test_pair_occupation_range_guard_trips():
    with pytest.raises(RuntimeError):
        PairOccupation(r1=np.zeros(3), r2=np.ones(3), value=1.2,
                       stderr=1e-6, samples=10)


# ---------------------------------------------------------------------------
# differential identities


def test_grad_identity_uniform_profile_is_null(uniform12):
    pdf, fld = uniform12
    r1 = np.full(3, 0.5)
    rep = check_grad_k1_identity(pdf, fld, r1, samples=300000, seed=11,
                                 detail=True)
    assert rep.name == "grad-k1"
    assert np.linalg.norm(rep.lhs) <= 0.15
    assert np.linalg.norm(rep.rhs) <= 0.08


def test_grad_identity_ramp_profile_within_five_percent(ramp6):
    pdf, fld = ramp6
    r1 = np.array([5.5 / 12.0, 0.5, 0.5])
    disc = check_grad_k1_identity(pdf, fld, r1, samples=10**6, seed=11)
    assert disc <= 0.05


def test_grad_identity_two_body_pair_factor_drops():
    dom = unit_domain(0.15)
    pdf = lattice_pdf(dom, 2, density=lambda x: np.exp(2.0 * x))
    fld = estimate_k1(pdf, samples=600000, grid=(12, 4, 4), seed=7)
    r1 = np.array([5.5 / 12.0, 0.5, 0.5])
    disc = check_grad_k1_identity(pdf, fld, r1, samples=300000, seed=13)
    assert disc <= 0.08


def test_identity_discrepancy_shrinks_like_root_samples(ramp6):
    pdf, fld = ramp6
    r1 = np.array([5.5 / 12.0, 0.5, 0.5])
    budgets = [1000, 3162, 10000, 31623, 100000]
    means = []
    for b in budgets:
        discs = [check_grad_k1_identity(pdf, fld, r1, samples=b,
                                        seed=100 + 7 * rep)
                 for rep in range(3)]
        means.append(np.mean(discs))
    slope = np.polyfit(np.log10(budgets), np.log10(means), 1)[0]
    assert -0.65 <= slope <= -0.35


def test_streaming_identity_stationary_gas_is_null(uniform12):
    pdf, fld = uniform12
    r1 = np.full(3, 0.5)
    v1 = np.array([0.5, 0.3, 0.0])
    rep = check_streaming_identity(pdf, fld, r1, v1, dk1_dt=0.0,
                                   samples=200000, seed=17, detail=True)
    assert rep.name == "streaming-k1"
    assert abs(rep.lhs[0]) <= 0.06
    assert abs(rep.rhs[0]) <= 0.06


def test_streaming_identity_equilibrium_ensemble_is_null(uniform12):
    pdf, fld = uniform12
    r1 = np.full(3, 0.5)
    v1 = np.array([0.0, 0.0, 0.7])
    rep = check_streaming_identity(pdf, fld, r1, v1, dk1_dt=0.0,
                                   samples=200000, seed=19, detail=True)
    assert abs(rep.lhs[0]) <= 0.06
    assert abs(rep.rhs[0]) <= 0.06


def test_streaming_identity_drifting_slab_within_ten_percent():
    dom = unit_domain(0.12)
    drift = np.array([0.35, 0.0, 0.0])
    dt = 0.05
    half = drift[0] * dt / 2.0
    pdf_m = lattice_pdf(dom, 6, density=slab(0.5 - half), velocity=drift)
    pdf_mid = lattice_pdf(dom, 6, density=slab(0.5), velocity=drift)
    pdf_p = lattice_pdf(dom, 6, density=slab(0.5 + half), velocity=drift)
    fld_m = estimate_k1(pdf_m, samples=400000, grid=(12, 4, 4), seed=5)
    fld_mid = estimate_k1(pdf_mid, samples=400000, grid=(12, 4, 4), seed=5)
    fld_p = estimate_k1(pdf_p, samples=400000, grid=(12, 4, 4), seed=5)

    r1 = np.array([3.5 / 12.0, 0.5, 0.5])
    k1m = float(fld_m.k1_at(r1[None])[0])
    k1p = float(fld_p.k1_at(r1[None])[0])
    dk1_dt = (k1p - k1m) / dt
    v1 = np.array([0.0, 0.8, 0.0])
    disc = check_streaming_identity(pdf_mid, fld_mid, r1, v1,
                                    dk1_dt=dk1_dt, samples=200000, seed=100)
    assert disc <= 0.10


def test_laplacian_identity_uniform_profile_is_null(uniform12):
    pdf, fld = uniform12
    r1 = np.full(3, 0.5)
    rep = check_laplacian_identity(pdf, fld, r1, samples=300000, seed=23,
                                   detail=True)
    assert rep.name == "laplacian-k1"
    assert abs(rep.rhs[0]) <= 1.0


def test_laplacian_identity_ramp_profile_within_ten_percent():
    dom = unit_domain(0.18)
    pdf = lattice_pdf(dom, 3,
                      density=lambda x: (0.2 + 1.6 * x) * taper(x, 0.7, 0.85))
    fld = estimate_k1(pdf, samples=2400000, grid=(6, 2, 2), seed=3)
    r1 = np.array([7.0 / 12.0, 0.5, 0.5])
    disc = check_laplacian_identity(pdf, fld, r1, samples=10**6, seed=50)
    assert disc <= 0.10


def test_laplacian_identity_two_body_within_ten_percent():
    dom = unit_domain(0.15)
    pdf = lattice_pdf(dom, 2,
                      density=lambda x: np.exp(4.0 * x) * taper(x, 0.75, 0.9))
    fld = estimate_k1(pdf, samples=2400000, grid=(6, 2, 2), seed=7)
    r1 = np.array([5.0 / 12.0, 0.5, 0.5])
    disc = check_laplacian_identity(pdf, fld, r1, samples=200000, seed=50)
    assert disc <= 0.10


def test_identity_report_serializes(uniform12):
    pdf, fld = uniform12
    rep = check_grad_k1_identity(pdf, fld, np.full(3, 0.5), samples=50000,
                                 seed=29, detail=True)
    record = rep.as_dict()
    assert record["identity"] == "grad-k1"
    assert record["samples"] == 50000
    assert len(record["lhs"]) == 3
    assert "discrepancy" in record
    assert isinstance(rep.to_json(), str)


# ---------------------------------------------------------------------------
# collision-subset chain variants


def test_pair_gradient_vanishes_at_contact_with_causal_chain(uniform12):
    pdf, fld = uniform12
    sigma = pdf.domain.sigma
    r1 = np.array([0.5 - sigma / 2.0, 0.5, 0.5])
    r2 = np.array([0.5 + sigma / 2.0, 0.5, 0.5])
    vec_b, err_b = evaluate_grad_k2(pdf, fld, r1, r2, samples=10**5,
                                    seed=31, variant="B")
    assert np.linalg.norm(vec_b) <= 3.0 * err_b + 1e-12


def test_pair_gradient_stays_finite_at_contact_with_plain_chain(uniform12):
    pdf, fld = uniform12
    sigma = pdf.domain.sigma
    r1 = np.array([0.5 - sigma / 2.0, 0.5, 0.5])
    r2 = np.array([0.5 + sigma / 2.0, 0.5, 0.5])
    vec_a, err_a = evaluate_grad_k2(pdf, fld, r1, r2, samples=10**5,
                                    seed=31, variant="A")
    assert np.linalg.norm(vec_a) > 10.0 * err_a
    assert np.linalg.norm(vec_a) > 0.1


# ---------------------------------------------------------------------------
# Boltzmann-Grad sweep


@pytest.fixture(scope="module")
def sweep_rows():
    members = [(2, math.sqrt(0.02)), (4, 0.1), (16, 0.05), (64, 0.025),
               (256, 0.0125)]

    def make_pdf(domain, n):
        return lattice_pdf(domain, n)

    return bg_sweep(members, make_pdf, samples=30000, seed=12)


def test_bg_sweep_k1_approaches_unity(sweep_rows):
    gaps = [abs(row["k1"] - 1.0) for row in sweep_rows[1:]]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.05


def test_bg_sweep_k2_approaches_unity(sweep_rows):
    assert abs(sweep_rows[-1]["k2"] - 1.0) < 0.05


def test_bg_sweep_two_body_member_has_unit_k2(sweep_rows):
    assert sweep_rows[0]["N"] == 2
    assert sweep_rows[0]["k2"] == 1.0


def test_bg_sweep_needs_three_members():
    with pytest.raises(ValueError):
        bg_sweep([(2, 0.1), (4, 0.05)], lambda d, n: None)
