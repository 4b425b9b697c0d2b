"""Metric families, linearizations and integral identities."""

import math

import numpy as np
import pytest

from cvilab import catalog, deform, models
from cvilab.geometry import GeometryError


def test_family_validation():
    chart = models.flat_torus(4)
    with pytest.raises(GeometryError):
        deform.MetricFamily(chart, "bogus", None)
    with pytest.raises(GeometryError):
        deform.MetricFamily.conformal(chart, "cos(x1)", torder=3)
    asym = [["0"] * 4 for _ in range(4)]
    asym[0][1] = "cos(x1)"
    with pytest.raises(GeometryError):
        deform.MetricFamily.path(chart, asym)


def test_J_variation_on_torus_is_minus_laplacian():
    # flat metric: DJ(U) = -Delta U, and Delta cos(x1 + 2 x2) = -5 cos(x1 + 2 x2)
    chart = models.flat_torus(4)
    pts = chart.sample_points(5, seed=0)
    d = deform.d_dt_invariant("J", deform.MetricFamily.conformal(chart, "cos(x1 + 2*x2)", torder=2), pts)
    assert np.allclose(d.value, 0.0)
    assert np.allclose(d.first, 5 * np.cos(pts[:, 0] + 2 * pts[:, 1]), atol=1e-12)
    # the same derivative by a one-sided finite difference
    fam = deform.MetricFamily.conformal(chart, "cos(x1 + 2*x2)")
    h = 1e-4
    big = models.conformal_perturb(chart, f"{h}*cos(x1 + 2*x2)", check=False)
    fd = catalog.eval_invariant("J", big, pts) / h
    assert np.allclose(deform.d_dt_invariant("J", fam, pts).first, fd, atol=1e-3)


def test_J_is_stationary_along_first_harmonics_of_the_sphere():
    # DJ(U) = -2 U J - Delta U vanishes for U = Y1 because J = n/2 and Delta Y1 = -n Y1
    chart = models.round_sphere(5)
    pts = chart.sample_points(4, seed=2, margin=0.5)
    d = deform.d_dt_invariant("J", deform.MetricFamily.conformal(chart, "cos(th1)"), pts)
    assert np.max(np.abs(d.first)) < 1e-10


@pytest.mark.parametrize("target", ["P", "C", "B", "R", "J"])
def test_linearization_comparators(target):
    chart = models.generic_metric(4, seed=1, eps=0.08, coords_used=3)
    res = deform.linearization_comparator(target, chart, "0.3*cos(x1 - x3) + 0.2*sin(x2)")
    assert res < 1e-9


def test_metric_comparator_and_unknown_target():
    chart = models.generic_metric(4, seed=2, coords_used=2)
    h = [["0"] * 4 for _ in range(4)]
    h[0][0] = "cos(x2)"
    h[0][1] = h[1][0] = "0.5*sin(x1)"
    assert deform.linearization_comparator("R-metric", chart, h=h) < 1e-9
    with pytest.raises(ValueError):
        deform.linearization_comparator("R-metric", chart)
    with pytest.raises(ValueError):
        deform.linearization_comparator("Q", chart, "cos(x1)")


def test_relate_derivatives():
    chart = models.generic_metric(4, seed=3, coords_used=2)
    pts = chart.sample_points(3, seed=0)
    assert deform.relate_derivatives_residual("sigma2", chart, "cos(x1)*sin(x2)", pts) < 1e-9


def test_self_adjointness_small():
    chart = models.generic_metric(4, seed=0, coords_used=2)
    out = deform.self_adjointness_residual("J", chart, "cos(x1)", "sin(x1 + x2)", profile="smoke")
    assert out["residual"] < 1e-8
    assert abs(out["a12"]) > 1e-3


def test_conformal_gradient_on_torus():
    chart = models.generic_metric(4, seed=5, coords_used=2)
    out = deform.conformal_gradient_residual("J", chart, "cos(x2)", profile="smoke")
    assert out["residual"] < 1e-8


def test_check_constant_rejects_nonconstant_invariants():
    sphere = models.round_sphere(4)
    assert deform.check_constant("J", sphere, profile="smoke") == pytest.approx(2.0)
    bumpy = models.conformal_perturb(sphere, "0.1*cos(th1)")
    with pytest.raises(deform.NonconstantInvariantError):
        deform.check_constant("J", bumpy, profile="smoke")


def test_almost_schur_on_sphere_and_ricci_floor():
    sphere = models.round_sphere(4)
    out = deform.almost_schur_check(sphere, profile="smoke")
    assert out["lhs"] < 1e-12 and out["rhs"] < 1e-12 and out["pass"]
    assert out["ric_min"] == pytest.approx(3.0)
    bumpy = models.conformal_perturb(sphere, "0.15*cos(th1)")
    out = deform.almost_schur_check(bumpy, profile="smoke")
    assert out["pass"] and out["lhs"] < out["rhs"]
    with pytest.raises(deform.RicciFloorError):
        deform.almost_schur_check(bumpy, ricci_floor=10.0, profile="smoke")


def test_critical_primitive_requires_critical_dimension():
    with pytest.raises(ValueError):
        deform.critical_primitive("Q4", models.round_sphere(5), "cos(th1)")


def test_critical_primitive_of_J_in_dimension_two():
    # on S2, J = K and the primitive of u K along e^{2su} g is explicit when u is constant
    sphere = models.round_sphere(2)
    out = deform.critical_primitive("J", sphere, "0.3", profile="smoke")
    # J(e^{2su} g) dvol = J dvol for a constant u, so the primitive is u * int J dvol = 0.3 * 4 pi
    assert out["value"] == pytest.approx(0.3 * 4 * math.pi, rel=1e-10)
