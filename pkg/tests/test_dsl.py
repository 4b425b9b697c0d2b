"""Expression parsing, printing, symbolic derivatives and jet arithmetic."""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from cvilab.dsl import (
    JetOrderError,
    ParseError,
    UnknownSymbolError,
    diff_expr,
    eval_jet,
    evaluate,
    free_symbols,
    jet_space,
    parse_expr,
    substitute,
    to_text,
)
from cvilab.dsl.expr import Const
from cvilab.dsl.jet import Jet, mat_inverse, mat_logdet

X, Y = sp.symbols("x y")
ENV = {"x": 0.37, "y": -0.81}


def _atoms():
    return st.sampled_from(["x", "y", "2", "3/7", "0.25", "1.5"])


def _grow(children):
    unary = st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: f"{t[0]}({t[1]})")
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
    power = st.tuples(children, st.integers(2, 3)).map(lambda t: f"({t[0]})^{t[1]}")
    return unary | binary | power


EXPRS = st.recursive(_atoms(), _grow, max_leaves=6)


def _sympy(text: str):
    return sp.sympify(text.replace("^", "**"), locals={"x": X, "y": Y})


@settings(max_examples=60, deadline=None)
@given(EXPRS)
def test_print_parse_round_trip(text):
    e = parse_expr(text, ["x", "y"])
    again = parse_expr(to_text(e), ["x", "y"])
    assert again == e
    assert evaluate(again, ENV) == evaluate(e, ENV)


@settings(max_examples=40, deadline=None)
@given(EXPRS)
def test_jet_partials_match_sympy(text):
    e = parse_expr(text, ["x", "y"])
    ref = _sympy(text)
    jet = eval_jet(e, ENV, 3, ["x", "y"])
    subs = {X: ENV["x"], Y: ENV["y"]}
    for a, b in itertools.product(range(4), repeat=2):
        if a + b > 3:
            continue
        want = float(sp.diff(ref, X, a, Y, b).evalf(subs=subs)) if a + b else float(ref.evalf(subs=subs))
        got = float(jet.partial((a, b)))
        assert got == pytest.approx(want, rel=1e-10, abs=1e-10 * max(1.0, abs(want)))


@settings(max_examples=40, deadline=None)
@given(EXPRS)
def test_symbolic_derivative_matches_sympy(text):
    e = parse_expr(text, ["x", "y"])
    d = diff_expr(e, "x")
    want = float(sp.diff(_sympy(text), X).evalf(subs={X: ENV["x"], Y: ENV["y"]}))
    assert evaluate(d, ENV) == pytest.approx(want, rel=1e-11, abs=1e-11)


def test_decimal_literals_are_exact():
    e = parse_expr("0.1")
    assert isinstance(e, Const) and e.value == Fraction(1, 10)


def test_caret_is_power_and_double_star_is_rejected():
    assert evaluate(parse_expr("2^3^2"), {}) == 2.0**9
    assert evaluate(parse_expr("-x^2", ["x"]), {"x": 3.0}) == -9.0
    with pytest.raises(ParseError):
        parse_expr("x**2", ["x"])


def test_parse_error_reports_offset():
    with pytest.raises(ParseError) as info:
        parse_expr("sin(x + )", ["x"])
    assert info.value.offset == 8


def test_unknown_symbol():
    with pytest.raises(UnknownSymbolError) as info:
        parse_expr("x + z", ["x"])
    assert info.value.name == "z"


def test_free_symbols_and_substitute():
    e = parse_expr("a*sin(x) + b", None)
    assert free_symbols(e) == {"a", "b", "x"}
    s = substitute(e, {"a": parse_expr("2"), "b": parse_expr("x^2", ["x"])})
    assert evaluate(s, {"x": 0.5}) == pytest.approx(2 * math.sin(0.5) + 0.25)


def test_jet_order_limit():
    with pytest.raises(JetOrderError):
        jet_space(2, 8)
    with pytest.raises(JetOrderError):
        jet_space(2, 2, torder=3)


def test_deformation_variable_derivatives():
    sp2 = jet_space(1, 2, torder=2)
    x = Jet.variable(sp2, 0, np.array(0.3))
    t = Jet.variable(sp2, None, np.array(0.0))
    f = (x * (t * 2.0)).exp()  # exp(2 t x)
    d = f.tderivs()
    assert d[..., 0] == pytest.approx(1.0)
    assert d[..., 1] == pytest.approx(0.6)
    assert d[..., 2] == pytest.approx(0.36)


def test_matrix_inverse_and_logdet():
    rng = np.random.default_rng(0)
    space = jet_space(2, 2)
    a = rng.standard_normal((3, 3))
    base = a @ a.T + 3 * np.eye(3)
    x = Jet.variable(space, 0, np.array(0.0))
    y = Jet.variable(space, 1, np.array(0.0))
    pert = rng.standard_normal((3, 3))
    pert = pert + pert.T
    c = np.zeros((3, 3, space.size))
    for i in range(3):
        for j in range(3):
            c[i, j] = (x * (pert[i, j] * (1.0 + y)) + base[i, j]).c
    g = Jet(space, c)
    inv = mat_inverse(g)
    assert np.allclose(inv.value, np.linalg.inv(base))
    # d/dx log det = tr(g^-1 dg)
    ld = mat_logdet(g)
    assert float(ld.partial((1, 0))) == pytest.approx(np.trace(np.linalg.solve(base, pert)))
    assert float(ld.value) == pytest.approx(np.log(np.linalg.det(base)))
