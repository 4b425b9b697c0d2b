"""Model metrics: spheres, tori, products, generic perturbations and the Page metric."""

import math

import numpy as np
import pytest

from cvilab import models
from cvilab.dsl import diff_expr, evaluate, parse_expr
from cvilab.geometry import GeometryError, curvature_frame


@pytest.mark.parametrize("n", [3, 4, 6])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_zonal_harmonics_are_eigenfunctions(n, k):
    # for f(th1): Laplacian f = f'' + (n - 1) cot(th1) f'
    chart = models.round_sphere(n)
    f = models.sphere_harmonic(chart, k)
    c = chart.coords[0]
    d1, d2 = diff_expr(f, c), diff_expr(diff_expr(f, c), c)
    for th in (0.3, 1.1, 2.4):
        env = {c: th}
        lap = evaluate(d2, env) + (n - 1) * math.cos(th) / math.sin(th) * evaluate(d1, env)
        assert lap == pytest.approx(-k * (k + n - 1) * evaluate(f, env), abs=1e-12)
    with pytest.raises(ValueError):
        models.sphere_harmonic(chart, 4)


def test_sphere_ricci_and_scaling():
    chart = models.round_sphere(5, radius=2.0)
    pts = chart.sample_points(3, seed=0, margin=0.5)
    fr = curvature_frame(chart, pts)
    ric, g = fr.ricci.value, fr.g.value
    assert np.allclose(ric, (5 - 1) / 2.0**2 * g, atol=1e-10)


def test_product_rejects_shared_coordinates_and_large_dimension():
    with pytest.raises(GeometryError):
        models.product(models.round_sphere(2), models.round_sphere(2))
    with pytest.raises(GeometryError):
        models.product(models.flat_torus(5), models.round_sphere(4, prefix="s"))


def test_generic_metric_is_seeded_and_bounded():
    a = models.generic_metric(5, seed=3)
    b = models.generic_metric(5, seed=3)
    assert a == b
    assert a != models.generic_metric(5, seed=4)
    with pytest.raises(GeometryError):
        models.generic_metric(5, eps=0.2)
    assert a.deps == frozenset(a.coords)
    assert models.generic_metric(5, coords_used=2).deps == frozenset(a.coords[:2])


def test_conformal_perturb_rejects_unknown_symbols():
    with pytest.raises(GeometryError):
        models.conformal_perturb(models.round_sphere(4), parse_expr("q*cos(th1)", ["q", "th1"]))


def test_zoo_names():
    assert set(models.zoo()) == {"sphere4", "sphere5", "sphere6", "torus4", "torus5", "torus6",
                                 "s2xs2", "s2xs2r2", "t2xs2", "page"}


def test_page_parameters():
    p = models.PageParameters.compute()
    assert p.quartic_residual < 1e-14
    assert 0.27 < p.nu < 0.29
    assert p.c == pytest.approx(1 / (3 + 6 * p.nu**2 - p.nu**4))


def test_page_is_einstein_with_the_stated_constant():
    p = models.PageParameters.compute()
    chart = models.page_metric(p)
    assert chart.pointwise_only
    fr = curvature_frame(chart, chart.sample_points(5, seed=0))
    ric, g = fr.ricci.value, fr.g.value
    assert np.max(np.abs(ric - 3 * (1 + p.nu**2) * g)) < 1e-8


def test_page_weyl_components_match_the_corrected_closed_forms():
    p = models.PageParameters.compute()
    for r in (0.3 * p.nu, 0.6 * p.nu):
        W = models.page_frame_weyl((r, 0.4, 1.2, 2.0), p)
        ref = models.page_weyl_formula(r, p)
        assert W[0, 1, 0, 1] == pytest.approx(ref["W0101_corrected"], rel=1e-6)
        assert abs(W[0, 1, 2, 3]) == pytest.approx(abs(ref["W0123_corrected"]), rel=1e-6)
        assert W[0, 1, 0, 1] != pytest.approx(ref["W0101"], rel=1e-3)


def test_page_sphere_product_is_einstein():
    p = models.PageParameters.compute()
    chart = models.page_sphere_product(p)
    fr = curvature_frame(chart, chart.sample_points(3, seed=1))
    ric, g = fr.ricci.value, fr.g.value
    assert np.max(np.abs(ric - p.einstein_constant * g)) < 1e-8
