"""Curvature of coordinate charts against a symbolic oracle and the standard identities."""

import numpy as np
import pytest
import sympy as sp

from cvilab import models
from cvilab.dsl import parse_expr
from cvilab.geometry import (
    AxisRule,
    Chart,
    DimensionError,
    GeometryError,
    SingularMetricError,
    curvature_frame,
    divergence,
    identity_residuals,
    weyl_bianchi_residual,
)

COORDS = ("x", "y", "z")
ENTRIES = {
    (0, 0): "1 + 0.3*sin(x)*cos(y)",
    (1, 1): "2 + 0.2*cos(z)",
    (2, 2): "1.5 + 0.1*sin(x + z)",
    (0, 1): "0.1*cos(x - y)",
    (1, 2): "0.05*sin(y)",
}
POINT = (0.4, -1.1, 0.7)


def _chart():
    metric = [[parse_expr("0")] * 3 for _ in range(3)]
    for (i, j), txt in ENTRIES.items():
        metric[i][j] = metric[j][i] = parse_expr(txt, COORDS)
    return Chart("oracle", COORDS, tuple(tuple(r) for r in metric), ((0, 6.3),) * 3, (True,) * 3)


def _sympy_ricci():
    """Metric derivatives from sympy, then the textbook Christoffel and Ricci formulas."""
    xs = sp.symbols(COORDS)
    loc = dict(zip(COORDS, xs))
    subs = dict(zip(xs, POINT))
    g = [[sp.Integer(0)] * 3 for _ in range(3)]
    for (i, j), txt in ENTRIES.items():
        g[i][j] = g[j][i] = sp.sympify(txt, locals=loc)
    G = np.array([[float(g[i][j].evalf(subs=subs)) for j in range(3)] for i in range(3)])
    dG = np.array([[[float(sp.diff(g[i][j], xs[a]).evalf(subs=subs)) for j in range(3)]
                    for i in range(3)] for a in range(3)])  # [a, i, j]
    ddG = np.array([[[[float(sp.diff(g[i][j], xs[a], xs[b]).evalf(subs=subs)) for j in range(3)]
                      for i in range(3)] for b in range(3)] for a in range(3)])  # [a, b, i, j]
    Gi = np.linalg.inv(G)
    # Gamma_{dbc} = (d_c g_db + d_b g_dc - d_d g_bc) / 2 and its first derivatives
    low = 0.5 * (np.einsum("cdb->dbc", dG) + np.einsum("bdc->dbc", dG) - dG)
    dlow = 0.5 * (np.einsum("acdb->adbc", ddG) + np.einsum("abdc->adbc", ddG) - ddG)  # [a, d, b, c]
    gam = np.einsum("ad,dbc->abc", Gi, low)
    dGi = -np.einsum("ip,epq,qj->eij", Gi, dG, Gi)
    dgam = np.einsum("ead,dbc->eabc", dGi, low) + np.einsum("ad,edbc->eabc", Gi, dlow)  # d_e Gamma^a_bc
    ric = (np.einsum("aabc->bc", dgam) - np.einsum("caba->bc", dgam)
           + np.einsum("aad,dbc->bc", gam, gam) - np.einsum("acd,dba->bc", gam, gam))
    return ric, float(np.einsum("ij,ij->", Gi, ric))


def test_ricci_and_scalar_match_symbolic_oracle():
    ric, scal = _sympy_ricci()
    fr = curvature_frame(_chart(), np.array(POINT), metric_order=2)
    assert np.allclose(fr.ricci.value[0], ric, rtol=1e-10, atol=1e-12)
    assert float(fr.scalar.value[0]) == pytest.approx(scal, rel=1e-10)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_round_sphere_curvature(n):
    chart = models.round_sphere(n, radius=1.5)
    fr = curvature_frame(chart, chart.sample_points(3, seed=1), metric_order=2)
    assert np.allclose(fr.scalar.value, n * (n - 1) / 1.5**2, rtol=1e-11)
    assert np.allclose(fr.ricci.value, (n - 1) / 1.5**2 * fr.g.value, rtol=1e-10, atol=1e-12)
    assert np.allclose(fr.J.value, n / (2 * 1.5**2))


def test_riemann_sign_convention():
    chart = models.round_sphere(3)
    fr = curvature_frame(chart, np.array([1.0, 0.8, 0.3]), metric_order=2)
    R, g = fr.riemann.value[0], fr.g.value[0]
    # unit curvature: R_ijkl = g_ik g_jl - g_il g_jk and Ric_jl = g^ik R_ijkl
    assert np.allclose(R, np.einsum("ik,jl->ijkl", g, g) - np.einsum("il,jk->ijkl", g, g))
    assert np.allclose(np.einsum("ik,ijkl->jl", np.linalg.inv(g), R), 2 * g)


@pytest.mark.parametrize("n", [4, 5, 6])
def test_identities_on_generic_metrics(n):
    chart = models.generic_metric(n, seed=n, eps=0.08)
    fr = curvature_frame(chart, chart.sample_points(2, seed=3), deriv_order=1)
    res = identity_residuals(fr)
    assert max(res.values()) < 1e-9, res


def test_weyl_vanishes_on_conformally_flat_metric():
    chart = models.conformal_perturb(models.flat_torus(4), "0.2*sin(x1) + 0.1*cos(x2 + x3)")
    fr = curvature_frame(chart, chart.sample_points(2, seed=0), metric_order=2)
    assert np.max(np.abs(fr.W.value)) < 1e-12 * max(1.0, np.max(np.abs(fr.riemann.value)))


def test_divergence_and_bianchi_helpers():
    chart = models.generic_metric(5, seed=2, eps=0.08, coords_used=3)
    pt = chart.sample_points(1, seed=5)[0]
    assert weyl_bianchi_residual(chart, pt) < 1e-9
    divW = divergence(chart, pt, "W")
    assert np.all(np.isfinite(divW))
    with pytest.raises(ValueError):
        divergence(chart, pt, "nonsense")


def test_chart_validation():
    one, zero = parse_expr("1"), parse_expr("0")
    x = parse_expr("x", ["x"])
    with pytest.raises(GeometryError, match="symmetric"):
        Chart("bad", ("x", "y"), ((one, x), (zero, one)), ((0, 1), (0, 1)), (False, False))
    with pytest.raises(GeometryError, match="undeclared"):
        Chart("bad", ("x", "y"), ((one, parse_expr("q")), (parse_expr("q"), one)), ((0, 1), (0, 1)), (False, False))
    with pytest.raises(DimensionError):
        Chart("bad", ("x",), ((one,),), ((0, 1),), (False,))
    with pytest.raises(GeometryError):
        AxisRule("simpson", 4)


def test_degenerate_metric_is_rejected():
    zero, one = parse_expr("0"), parse_expr("1")
    chart = Chart("flat-degenerate", ("x", "y"), ((one, zero), (zero, zero)), ((0, 1), (0, 1)), (False, False))
    with pytest.raises(SingularMetricError):
        curvature_frame(chart, np.array([0.5, 0.5]), metric_order=2)


def test_scaling_by_constant():
    chart = models.generic_metric(4, seed=1)
    pts = chart.sample_points(2, seed=0)
    a = curvature_frame(chart, pts, metric_order=2).scalar.value
    b = curvature_frame(chart.scaled(2.0), pts, metric_order=2).scalar.value
    assert np.allclose(b, a / 4.0, rtol=1e-12)
