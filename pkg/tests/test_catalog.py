"""Invariant catalog: registry, closed-form values, homogeneity and pointwise invariance."""

import math

import numpy as np
import pytest

from cvilab import catalog, models
from cvilab.geometry import DimensionError


def sigma_k_half(n, k):
    # eigenvalues of P = g/2 on the unit sphere
    return math.comb(n, k) / 2**k


def test_registry_contents():
    assert len(catalog.CVI_IDS) == 14
    assert len(catalog.BASIS6_IDS) == 17
    assert catalog.get("σ₂").id == "sigma2"
    with pytest.raises(catalog.UnknownInvariantError):
        catalog.get("Q8")
    rows = {r["id"]: r for r in catalog.catalog_table()}
    assert rows["Q6"]["weight"] == -6 and rows["Q6"]["order"] == 6
    assert rows["L1"]["pointwise_conformal"] and not rows["Q4"]["pointwise_conformal"]


def test_minimum_dimension_is_enforced():
    with pytest.raises(DimensionError):
        catalog.eval_invariant("Q6", models.round_sphere(4), [1.0, 1.0, 1.0, 1.0])
    with pytest.raises(DimensionError):
        catalog.eval_riem_basis6(models.round_sphere(4), [1.0, 1.0, 1.0, 1.0])


@pytest.mark.parametrize("n", [4, 5, 6])
def test_sigma2_and_J_on_unit_spheres(n):
    chart = models.round_sphere(n)
    pts = chart.sample_points(4, seed=0, margin=0.5)
    vals = catalog.eval_many(["J", "sigma2"], chart, pts)
    assert np.allclose(vals["J"], n / 2, rtol=1e-12)
    assert np.allclose(vals["sigma2"], sigma_k_half(n, 2), rtol=1e-10)


def test_sphere_values_scale_with_radius():
    r = 1.7
    chart = models.round_sphere(4, radius=r)
    pts = chart.sample_points(3, seed=0, margin=0.5)
    assert np.allclose(catalog.eval_invariant("Q4", chart, pts), 6 / r**4, rtol=1e-9)


def test_weyl_invariants_vanish_on_spheres_and_products_are_not_conformally_flat():
    sphere = models.round_sphere(5)
    pts = sphere.sample_points(3, seed=1, margin=0.5)
    for id in ("W2", "L1", "L2", "K1", "K2"):
        assert np.max(np.abs(catalog.eval_invariant(id, sphere, pts))) < 1e-9
    prod = models.zoo()["s2xs2"]
    w2 = catalog.eval_invariant("W2", prod, prod.sample_points(2, seed=0, margin=0.5))
    # unit factors in n = 4: |Rm|^2 = 8, |Ric|^2 = 4, R = 4
    rm2, ric2, scal = 8.0, 4.0, 4.0
    assert np.allclose(w2, rm2 - 4 * ric2 / 2 + 2 * scal**2 / 6, rtol=1e-10)


def test_torus_invariants_vanish():
    chart = models.flat_torus(6)
    vals = catalog.eval_riem_basis6(chart, chart.sample_points(2, seed=0))
    assert np.max(np.abs(vals)) == 0.0


@pytest.mark.parametrize("id", ["J", "sigma2", "Q4", "W2", "I1", "K3", "L2", "mDJ2"])
def test_homogeneity(id):
    n = max(4, catalog.get(id).min_dim)
    chart = models.generic_metric(n, seed=4, eps=0.08, coords_used=3)
    assert catalog.homogeneity_check(id, chart, 1.7, chart.sample_points(3, seed=2)) < 1e-10
    with pytest.raises(ValueError):
        catalog.homogeneity_check(id, chart, -1.0)


def test_basis_values_on_s6():
    chart = models.round_sphere(6)
    row = catalog.eval_riem_basis6(chart, chart.sample_points(1, seed=0, margin=0.8)[0])
    vals = dict(zip(catalog.BASIS6_IDS, row))
    # P = g/2: J = 3, |P|^2 = 3/2, tr P^3 = 3/4; all derivative terms vanish
    assert vals["J3"] == pytest.approx(27.0)
    assert vals["JP2"] == pytest.approx(4.5)
    assert vals["trP3"] == pytest.approx(0.75)
    for key in ("BP", "mJDJ", "WP2", "JW2", "mDJ2", "divCP", "D2J"):
        assert abs(vals[key]) < 1e-8


def test_K3_is_not_constant_on_an_einstein_product():
    # Page x S2 is Einstein with nonconstant |W|^2; K3 is not asserted constant there
    assert not catalog.get("K3").constant_at_einstein
    chart = models.page_sphere_product()
    vals = catalog.eval_invariant("K3", chart, chart.sample_points(6, seed=0))
    assert np.ptp(vals) > 1e-3 * np.max(np.abs(vals))
