"""Quadrature on spheres and tori, and trigonometric tensor fields on the flat torus."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvilab import models
from cvilab.dsl import diff_expr, evaluate, parse_expr
from cvilab.quad import (
    FourierTensorField,
    QuadratureError,
    build_rule,
    e_map,
    integrate,
    poisson_solve_torus,
    tt_mode,
    tt_project,
    volume,
)


def sphere_area(n, r=1.0):
    return 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2) * r**n


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_sphere_volume(n):
    assert volume(models.round_sphere(n)) == pytest.approx(sphere_area(n), rel=1e-12)


def test_scaled_sphere_and_torus_volume():
    assert volume(models.round_sphere(4, radius=2.0)) == pytest.approx(sphere_area(4, 2.0), rel=1e-12)
    assert volume(models.flat_torus(3, periods=[1.0, 2.0, 3.0])) == pytest.approx(6.0, rel=1e-13)


def test_zonal_integral_on_s2():
    chart = models.round_sphere(2)
    val, err = integrate(chart, parse_expr("cos(th1)^2", chart.coords))
    assert val == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert err < 1e-10


def test_collapsed_axes_match_full_grid():
    chart = models.round_sphere(4)
    e = parse_expr("cos(th1)^2*sin(th2)", chart.coords)

    def total(rule):
        vals = np.array([evaluate(e, dict(zip(chart.coords, p))) for p in rule.nodes])
        dens = np.sqrt(np.linalg.det(chart.metric_values(rule.nodes)))
        return rule.reduce(vals * dens)

    full = build_rule(chart, ["th1", "th2"], "smoke", collapse=False, scale=0.4)
    short = build_rule(chart, ["th1", "th2"], "smoke", scale=0.4)
    assert len(short) < len(full)
    assert total(short) == pytest.approx(total(full), rel=1e-12)


def test_pointwise_chart_cannot_be_integrated():
    with pytest.raises(QuadratureError):
        build_rule(models.page_metric())


def test_unconverged_integral_raises():
    chart = models.flat_torus(2, nodes=4)
    with pytest.raises(QuadratureError):
        integrate(chart, parse_expr("exp(3*cos(x1))", chart.coords), tol=1e-12)


def _expr_grid(chart, e, pts):
    return np.array([evaluate(e, dict(zip(chart.coords, p))) for p in pts])


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(-2, 2), min_size=3, max_size=3).filter(any), st.floats(-1, 1), st.floats(-1, 1))
def test_e_map_is_divergence_free_with_trace_upsilon(k, a, b):
    n = 3
    ups = FourierTensorField.scalar(n, [(tuple(k), a, b)])
    h = e_map(ups)
    assert h.max_divergence() < 1e-12
    tr = h.trace()
    diff = tr - ups
    assert all(np.max(np.abs(m.cos)) < 1e-12 and np.max(np.abs(m.sin)) < 1e-12 for m in diff.modes)


@pytest.mark.parametrize("k", [(1, 0, 0, 0), (1, 2, 0, 0), (2, 1, 1, 0)])
def test_tt_modes(k):
    h = tt_mode(4, k, seed=3)
    assert h.max_divergence() < 1e-12
    assert all(abs(np.trace(m.cos)) < 1e-12 for m in h.modes)
    ups = FourierTensorField.scalar(4, [(k, 0.7, -0.2)])
    assert abs(h.inner(e_map(ups))) < 1e-12
    mixed = h + e_map(ups)
    proj = tt_project(mixed)
    assert abs(proj.inner(proj) - h.inner(h)) < 1e-12


def test_poisson_solution():
    n = 3
    ups = FourierTensorField.scalar(n, [((1, 1, 0), 0.5, 0.2), ((0, 2, 1), -0.3, None)])
    f = poisson_solve_torus(ups)
    coords = ("x1", "x2", "x3")
    fe, ue = f.to_expr(coords), ups.to_expr(coords)
    lap = sum((diff_expr(diff_expr(fe, c), c) for c in coords), parse_expr("0"))
    pts = np.random.default_rng(0).uniform(0, 2 * math.pi, (5, n))
    chart = models.flat_torus(n)
    assert np.allclose(_expr_grid(chart, lap, pts), -_expr_grid(chart, ue, pts) / (n - 1))


def test_sobolev_and_inner_match_quadrature():
    n = 2
    chart = models.flat_torus(n, nodes=32)
    h = FourierTensorField.build(n, [((1, 1), np.array([[1.0, 0.3], [0.3, -0.5]]), None),
                                     ((0, 2), None, np.array([[0.2, 0.0], [0.0, 0.4]]))])
    comps = h.to_expr(chart.coords)
    total = 0.0
    for i in range(n):
        for j in range(n):
            for c in chart.coords:
                d = diff_expr(comps[i][j], c)
                total += integrate(chart, d * d)[0]
    assert h.sobolev(1) == pytest.approx(total, rel=1e-12)
    sq = sum(integrate(chart, comps[i][j] * comps[i][j])[0] for i in range(n) for j in range(n))
    assert h.inner(h) == pytest.approx(sq, rel=1e-12)


def test_tensor_amplitudes_must_be_symmetric():
    with pytest.raises(ValueError):
        FourierTensorField.build(2, [((1, 0), np.array([[0.0, 1.0], [0.0, 0.0]]), None)])
