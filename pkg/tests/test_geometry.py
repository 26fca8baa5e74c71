"""Indicator algebra and configuration admissibility checks."""

import numpy as np
import pytest

from finitekin.geometry import (
    DomainSpec,
    NBodyConfiguration,
    binary_theta_A,
    binary_theta_B,
    boundary_theta,
    ensemble_theta,
    ensemble_theta_batch,
    strong_heaviside,
    vec3,
)


def make_domain(edge=10.0, sigma=1.0, periodic=False):
    return DomainSpec(lo=vec3(0, 0, 0), hi=vec3(edge, edge, edge), sigma=sigma, periodic=periodic)


def test_strong_heaviside_threshold():
    assert strong_heaviside(0.0) == 0.0
    assert strong_heaviside(1e-300) == 1.0
    assert strong_heaviside(-1e-300) == 0.0
    arr = strong_heaviside(np.array([-1.0, 0.0, 2.0]))
    assert arr.tolist() == [0.0, 0.0, 1.0]


def test_boundary_theta_cases():
    dom = make_domain(edge=10.0, sigma=1.0)
    assert boundary_theta(dom, vec3(5, 5, 5)) == 1.0
    # exactly half a diameter from a wall: excluded by the strong convention
    assert boundary_theta(dom, vec3(0.5, 5, 5)) == 0.0
    assert boundary_theta(dom, vec3(0.5 + 1e-9, 5, 5)) == 1.0
    assert boundary_theta(dom, vec3(-1.0, 5, 5)) == 0.0
    batch = boundary_theta(dom, np.array([[5.0, 5.0, 5.0], [9.6, 5.0, 5.0]]))
    assert batch.tolist() == [1.0, 0.0]


def test_pair_contact_is_excluded():
    dom = make_domain()
    cfg = NBodyConfiguration(np.array([[3.0, 5.0, 5.0], [4.0, 5.0, 5.0]]))  # distance == sigma
    assert binary_theta_A(cfg, dom.sigma, 0) == 0.0
    assert binary_theta_B(cfg, dom.sigma, 0) == 0.0
    assert ensemble_theta(cfg, dom, "A") == 0.0
    assert ensemble_theta(cfg, dom, "B") == 0.0


def test_variants_agree_on_random_configurations():
    dom = make_domain()
    rng = np.random.default_rng(20260821)
    agree = 0
    admitted = 0
    for _ in range(400):
        pos = rng.uniform(0.0, 10.0, size=(6, 3))
        cfg = NBodyConfiguration(pos)
        a = ensemble_theta(cfg, dom, "A")
        b = ensemble_theta(cfg, dom, "B")
        assert a == b
        agree += 1
        admitted += int(a == 1.0)
    assert agree == 400
    assert 0 < admitted < 400  # the sample actually exercises both outcomes


def test_overlap_and_wall_cases_are_rejected():
    dom = make_domain()
    rng = np.random.default_rng(7)
    for _ in range(100):
        base = rng.uniform(2.0, 8.0, size=3)
        # overlapping pair plus a bystander
        off = rng.normal(size=3)
        off *= 0.5 * dom.sigma / np.linalg.norm(off)
        pos = np.stack([base, base + off, rng.uniform(2.0, 8.0, size=3)])
        cfg = NBodyConfiguration(pos)
        assert ensemble_theta(cfg, dom, "A") == 0.0
        assert ensemble_theta(cfg, dom, "B") == 0.0
    # wall-contact case
    pos = np.array([[0.5, 5.0, 5.0], [5.0, 5.0, 5.0]])
    assert ensemble_theta(NBodyConfiguration(pos), dom, "A") == 0.0


def test_permutation_invariance():
    dom = make_domain()
    rng = np.random.default_rng(99)
    pos = rng.uniform(1.0, 9.0, size=(5, 3))
    cfg = NBodyConfiguration(pos)
    for variant in ("A", "B"):
        ref = ensemble_theta(cfg, dom, variant)
        for _ in range(10):
            perm = rng.permutation(5)
            assert ensemble_theta(NBodyConfiguration(pos[perm]), dom, variant) == ref


def test_sigma_monotonicity():
    # growing the diameter can only turn admissible configurations inadmissible
    rng = np.random.default_rng(5)
    pos = rng.uniform(1.0, 9.0, size=(40, 6, 3))
    prev = None
    for sigma in (0.5, 1.0, 1.5, 2.0):
        dom = make_domain(sigma=sigma)
        cur = ensemble_theta_batch(pos, dom, "A")
        if prev is not None:
            assert np.all(cur <= prev)
        prev = cur


def test_batch_matches_scalar_reference():
    dom = make_domain(sigma=1.4)
    rng = np.random.default_rng(31)
    pos = rng.uniform(0.0, 10.0, size=(200, 5, 3))
    for variant in ("A", "B"):
        batch = ensemble_theta_batch(pos, dom, variant)
        scalar = np.array([ensemble_theta(NBodyConfiguration(p), dom, variant) for p in pos])
        assert np.array_equal(batch, scalar)


def test_domain_validation():
    with pytest.raises(ValueError):
        DomainSpec(lo=vec3(0, 0, 0), hi=vec3(1, 1, 1), sigma=0.0)
    with pytest.raises(ValueError):
        DomainSpec(lo=vec3(0, 0, 0), hi=vec3(1, 1, 1), sigma=1.0)  # edge == sigma
    with pytest.raises(ValueError):
        DomainSpec(lo=vec3(1, 0, 0), hi=vec3(0, 1, 1), sigma=0.1)


def test_accessible_volume():
    dom = make_domain(edge=10.0, sigma=1.0)
    assert dom.volume() == pytest.approx(1000.0)
    assert dom.accessible_volume() == pytest.approx(9.0**3)
