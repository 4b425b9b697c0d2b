"""Einstein operator polynomials, sphere spectra, stability verdicts and weight -4 cones."""

import math
from fractions import Fraction

import pytest

from cvilab import spectra
from cvilab.harness.suites import STABLE_IDS, UNSTABLE_IDS


def gjms_on_harmonic(l, n, k):
    # Gamma(l + n/2 + k) / Gamma(l + n/2 - k) written as a finite product
    h = Fraction(n, 2)
    return math.prod(l + h + i for i in range(-k, k))


@pytest.mark.parametrize("n", range(3, 9))
@pytest.mark.parametrize("k", [1, 2, 3])
def test_gjms_polynomial_matches_the_product_formula(n, k):
    J = spectra.sphere_J(n)
    q = spectra.gjms_polynomial(n, k, J)
    for l in range(6):
        lam = spectra.sphere_eigenvalue(l, n)
        assert sum(c * lam**i for i, c in enumerate(q)) == gjms_on_harmonic(l, n, k)


def test_critical_q_curvatures_of_spheres():
    # Q_n of the unit S^n is (n - 1)!
    for n in (2, 4, 6):
        assert spectra.q_curvature_constant(n // 2, n, spectra.sphere_J(n)) == math.factorial(n - 1)
    assert spectra.q_curvature_constant(2, 5, spectra.sphere_J(5)) == Fraction(2, 1) * gjms_on_harmonic(0, 5, 2)


def test_q4_spectrum_on_s4():
    rows = spectra.sphere_spectrum_table("Q4", 4, 1, 3)
    assert [r[1] for r in rows] == [0, 4, 10, 18]
    # P4 = lam (lam + 2) and Q4 = 6 on the unit S4
    assert [r[2] for r in rows] == [-24, 0, 96, 336]


def test_radius_scaling():
    a = spectra.sphere_spectrum_table("Q4", 4, 1, 4)
    b = spectra.sphere_spectrum_table("Q4", 4, 2, 4)
    for (_, _, v1), (_, _, v2) in zip(a, b):
        assert v2 == v1 / 16


@pytest.mark.parametrize("n", [4, 5, 6, 7])
def test_verdicts(n):
    for id in STABLE_IDS + UNSTABLE_IDS:
        if n < 6 and id in ("v3", "Q6"):
            continue
        v = spectra.stability_verdict(id, n)
        assert v.stable == (id in STABLE_IDS), (id, n)
        if v.stable:
            assert v.kernel_modes == [1]


def test_verdict_does_not_depend_on_kmax():
    for id in ("Q4", "K1"):
        assert spectra.stability_verdict(id, 5, k_max=10).stable == spectra.stability_verdict(id, 5, k_max=80).stable


def test_general_einstein_verdicts():
    v = spectra.stability_verdict("K2", 5, einstein_generic=True)
    assert v.stable is None and "indeterminate" in v.mode
    assert spectra.stability_verdict("Q4", 5, einstein_generic=True).stable


def test_unsupported_invariant():
    with pytest.raises(spectra.UnsupportedInvariantError):
        spectra.einstein_operator("W2", 4)


def test_cone_classification():
    v = spectra.cone_classify(1, 0, 4)
    assert v.E and v.V and v.SV and v.routes_agree
    v = spectra.cone_classify(0, 0, 4)
    assert not (v.E or v.V or v.SV)
    v = spectra.cone_classify(-1, 0, 4)
    assert not (v.E or v.V or v.SV)
    # boundary of the strict cone: (n^2 - 4) a + (n - 1) b = 0
    v = spectra.cone_classify(3, -12, 4)
    assert v.V and not v.SV and v.routes_agree
    with pytest.raises(ValueError):
        spectra.cone_classify(1, 0, 2)


@pytest.mark.parametrize("n", [4, 5, 6])
def test_cone_nesting_and_routes_on_a_grid(n):
    grid = [Fraction(i - 6, 6) for i in range(13)]
    for a in grid:
        for b in grid:
            v = spectra.cone_classify(a, b, n)
            assert v.routes_agree
            assert (not v.SV or v.V) and (not v.V or v.E)


def test_det_gradient_routes():
    grid = [Fraction(i - 5, 5) for i in range(11)]
    for g2 in grid:
        for g3 in grid:
            assert spectra.det_gradient_membership(g2, g3).routes_agree


@pytest.mark.parametrize("id,k", [("J", 1), ("Q4", 2), ("sigma2", 2)])
def test_jet_cross_check(id, k):
    assert spectra.jet_cross_check(id, 4, k)["residual"] < 1e-8
