"""Flat-torus second variations, linear terms and the Riemann linearization."""

import numpy as np
import pytest
import sympy as sp

from cvilab import rigidity
from cvilab.quad import FourierTensorField, e_map, tt_mode


def sympy_second_derivative_of_total_R():
    """``d^2/dt^2 int R(delta + t h)`` on T4 with ``h_23 = cos(x1)``, base volume fixed."""
    t = sp.Symbol("t")
    x = sp.symbols("x1:5")
    n = 4
    g = sp.eye(n)
    g[1, 2] = g[2, 1] = t * sp.cos(x[0])
    gi = g.inv()
    gam = [[[sum(gi[a, d] * (sp.diff(g[d, b], x[c]) + sp.diff(g[d, c], x[b]) - sp.diff(g[b, c], x[d]))
                 for d in range(n)) / 2 for c in range(n)] for b in range(n)] for a in range(n)]

    def ric(b, c):
        return sum(
            sp.diff(gam[a][b][c], x[a]) - sp.diff(gam[a][b][a], x[c])
            + sum(gam[a][a][d] * gam[d][b][c] - gam[a][c][d] * gam[d][b][a] for d in range(n))
            for a in range(n)
        )

    R = sum(gi[b, c] * ric(b, c) for b in range(n) for c in range(n))
    c2 = sp.series(R, t, 0, 3).removeO().coeff(t, 2)
    return float(2 * sp.integrate(sp.simplify(c2), (x[0], 0, 2 * sp.pi)) * (2 * sp.pi) ** 3)


def test_single_mode_against_sympy():
    amp = np.zeros((4, 4))
    amp[1, 2] = amp[2, 1] = 1.0
    h = FourierTensorField.build(4, [((1, 0, 0, 0), amp, None)])
    expected = sympy_second_derivative_of_total_R()
    q = rigidity.d2_flat_form("R", 4, h, profile="smoke")
    assert q == pytest.approx(expected, rel=1e-10)
    # |nabla h|^2 = 2 sin^2(x1), so A = -1/2 for the scalar curvature
    assert q / h.sobolev(1) == pytest.approx(-0.5, rel=1e-10)


def test_d2_requires_divergence_free_fields():
    h = FourierTensorField.build(4, [((1, 0, 0, 0), np.eye(4), None)])
    with pytest.raises(ValueError):
        rigidity.d2_flat_form("R", 4, h)


def test_fit_for_scalar_curvature():
    fit = rigidity.fit_AB("R", 4, profile="smoke")
    assert fit.A == pytest.approx(-0.5, rel=1e-8)
    assert fit.residual < 1e-8
    assert fit.A_negative
    with pytest.raises(ValueError):
        rigidity.fit_AB("R", 4, frequencies=((1, 0), (0, 1)))


@pytest.mark.parametrize("id,c", [("R", 1.0), ("Q4", 1 / 6), ("sigma2", 0.0)])
def test_linear_terms(id, c):
    out = rigidity.linear_term_probe(id, 4)
    assert out["c"] == pytest.approx(c, abs=1e-10)
    assert out["mean_integral"] < 1e-10


def test_e_map_and_tt_modes_are_orthogonal():
    n = 5
    tt = tt_mode(n, (1, 2, 0, 0, 0), seed=3)
    e = e_map(FourierTensorField.scalar(n, [((1, 2, 0, 0, 0), 1.0, None)]))
    assert abs(tt.inner(e)) < 1e-14 * np.sqrt(tt.inner(tt) * e.inner(e))


def test_singular_identity_for_R():
    out = rigidity.singular_identity_check_R(4, profile="smoke")
    assert out["residual"] < 1e-6


def test_riemann_linearization_and_E_factor():
    out = rigidity.flat_riemann_linearization_residual(4)
    assert out["linearization"] < 1e-12
    assert out["relation"] < 1e-10
    assert out["flagged"]
    assert out["measured_factor"] == pytest.approx(1 / 6, rel=1e-10)
