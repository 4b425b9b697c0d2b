"""Expression trees for metric components and test fields.

The grammar is small on purpose: identifiers, rational literals, ``+ - * / ^``,
calls to ``sin cos exp log sqrt`` and parentheses.  ``^`` is right associative
and binds tighter than unary minus, so ``-x^2`` is ``-(x^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class ExprError(Exception):
    pass


class ParseError(ExprError):
    """Syntax error; ``offset`` is the byte offset into the source text."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownSymbolError(ExprError):
    def __init__(self, name: str, offset: int | None = None):
        where = "" if offset is None else f" at offset {offset}"
        super().__init__(f"unknown symbol {name!r}{where}")
        self.name = name


class Expr:
    """Base node.  Nodes are immutable and hashable."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, other):
        return power(self, Fraction(other))

    def __str__(self):
        return to_text(self)

    def symbols(self) -> frozenset[str]:
        return free_symbols(self)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: Fraction

    def __repr__(self):
        return f"Const({self.value})"


@dataclass(frozen=True, slots=True)
class Sym(Expr):
    name: str

    def __repr__(self):
        return f"Sym({self.name})"


@dataclass(frozen=True, slots=True)
class Num(Expr):
    """A binary64 constant that is not a rational literal (bound parameters)."""

    value: float


@dataclass(frozen=True, slots=True)
class Add(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    factors: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class Div(Expr):
    num: Expr
    den: Expr


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: Fraction


@dataclass(frozen=True, slots=True)
class Func(Expr):
    name: str
    arg: Expr


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Const(Fraction(x))
    if isinstance(x, float):
        if x.is_integer():
            return Const(Fraction(int(x)))
        return Num(x)
    if isinstance(x, str):
        return Sym(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _is_const(e: Expr, v=None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


# Smart constructors: constant folding and flattening only, no simplification.

def add(*args: Expr) -> Expr:
    terms: list[Expr] = []
    acc = Fraction(0)
    for a in args:
        for t in (a.terms if isinstance(a, Add) else (a,)):
            if isinstance(t, Const):
                acc += t.value
            else:
                terms.append(t)
    if acc != 0 or not terms:
        terms.append(Const(acc))
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


def mul(*args: Expr) -> Expr:
    factors: list[Expr] = []
    acc = Fraction(1)
    for a in args:
        for f in (a.factors if isinstance(a, Mul) else (a,)):
            if isinstance(f, Const):
                acc *= f.value
            else:
                factors.append(f)
    if acc == 0:
        return ZERO
    if acc != 1 or not factors:
        factors.insert(0, Const(acc))
    return factors[0] if len(factors) == 1 else Mul(tuple(factors))


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _split_coeff(e: Expr) -> tuple[Fraction, Expr]:
    if isinstance(e, Const):
        return e.value, ONE
    if isinstance(e, Neg):
        c, rest = _split_coeff(e.arg)
        return -c, rest
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        return e.factors[0].value, mul(*e.factors[1:])
    return Fraction(1), e


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0):
        raise ExprError("division by constant zero")
    if _is_const(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    if _is_const(a, 0):
        return ZERO
    ca, ra = _split_coeff(a)
    cb, rb = _split_coeff(b)
    if cb == 0:
        raise ExprError("division by constant zero")
    coeff = ca / cb
    if (ca, cb) == (1, 1):
        return Div(a, b)
    core = ra if _is_const(rb, 1) else Div(ra, rb)
    if coeff == -1:
        return neg(core)
    return mul(Const(coeff), core)


def power(a: Expr, p: Fraction) -> Expr:
    p = Fraction(p)
    if p == 0:
        return ONE
    if p == 1:
        return a
    if isinstance(a, Const):
        if p.denominator == 1:
            if a.value == 0 and p < 0:
                raise ExprError("zero to a negative power")
            return Const(a.value ** int(p))
    return Pow(a, p)


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if isinstance(a, Const) and a.value == 0:
        if name in ("sin", "sqrt"):
            return ZERO
        if name in ("cos", "exp"):
            return ONE
    if isinstance(a, Const) and a.value == 1 and name in ("log", "sqrt"):
        return ZERO if name == "log" else ONE
    return Func(name, a)


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, declared: frozenset[str] | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.declared = declared

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val, off = self.take()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                e = add(e, rhs) if val == "+" else add(e, neg(rhs))
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.unary()
                e = mul(e, rhs) if val == "*" else div(e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, val, off = self.peek()
        if kind == "op" and val == "^":
            self.take()
            _, _, eoff = self.peek()
            exponent = self.unary()
            if not isinstance(exponent, Const):
                raise ParseError("exponent must be a rational constant", eoff)
            return power(base, exponent.value)
        return base

    def atom(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Const(Fraction(val))
        if kind == "id":
            nk, nv, _ = self.peek()
            if nk == "op" and nv == "(":
                if val not in FUNCTIONS:
                    raise UnknownSymbolError(val, off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return func(val, arg)
            if self.declared is not None and val not in self.declared:
                raise UnknownSymbolError(val, off)
            return Sym(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ParseError("unexpected end of input", off)
        raise ParseError(f"unexpected token {val!r}", off)


def parse_expr(text: str, declared_symbols: Iterable[str] | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    Identifiers not in ``declared_symbols`` raise :class:`UnknownSymbolError`;
    pass ``None`` to accept any identifier.
    """
    declared = None if declared_symbols is None else frozenset(declared_symbols)
    return _Parser(text, declared).parse()


# ---------------------------------------------------------------- traversal

def free_symbols(e: Expr) -> frozenset[str]:
    if isinstance(e, Sym):
        return frozenset((e.name,))
    if isinstance(e, (Const, Num)):
        return frozenset()
    out: set[str] = set()
    for c in children(e):
        out |= free_symbols(c)
    return frozenset(out)


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Add):
        return e.terms
    if isinstance(e, Mul):
        return e.factors
    if isinstance(e, Div):
        return (e.num, e.den)
    if isinstance(e, (Neg, Func)):
        return (e.arg,)
    if isinstance(e, Pow):
        return (e.base,)
    return ()


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace symbols by expressions (used to bind parameters)."""
    if isinstance(e, Sym):
        return mapping.get(e.name, e)
    if isinstance(e, (Const, Num)):
        return e
    if isinstance(e, Add):
        return add(*(substitute(t, mapping) for t in e.terms))
    if isinstance(e, Mul):
        return mul(*(substitute(f, mapping) for f in e.factors))
    if isinstance(e, Div):
        return div(substitute(e.num, mapping), substitute(e.den, mapping))
    if isinstance(e, Neg):
        return neg(substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return power(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Func):
        return func(e.name, substitute(e.arg, mapping))
    raise TypeError(e)


def diff_expr(e: Expr, symbol: str) -> Expr:
    """Symbolic derivative with constant folding only."""
    if isinstance(e, Sym):
        return ONE if e.name == symbol else ZERO
    if isinstance(e, (Const, Num)):
        return ZERO
    if isinstance(e, Add):
        return add(*(diff_expr(t, symbol) for t in e.terms))
    if isinstance(e, Neg):
        return neg(diff_expr(e.arg, symbol))
    if isinstance(e, Mul):
        terms = []
        for i, f in enumerate(e.factors):
            df = diff_expr(f, symbol)
            if _is_const(df, 0):
                continue
            terms.append(mul(*e.factors[:i], df, *e.factors[i + 1:]))
        return add(*terms) if terms else ZERO
    if isinstance(e, Div):
        dn = diff_expr(e.num, symbol)
        dd = diff_expr(e.den, symbol)
        if _is_const(dd, 0):
            return div(dn, e.den)
        first = div(dn, e.den)
        second = div(mul(e.num, dd), power(e.den, Fraction(2)))
        if _is_const(dn, 0):
            return neg(second)
        return add(first, neg(second))
    if isinstance(e, Pow):
        db = diff_expr(e.base, symbol)
        if _is_const(db, 0):
            return ZERO
        return mul(Const(e.exponent), power(e.base, e.exponent - 1), db)
    if isinstance(e, Func):
        da = diff_expr(e.arg, symbol)
        if _is_const(da, 0):
            return ZERO
        a = e.arg
        if e.name == "sin":
            outer = func("cos", a)
        elif e.name == "cos":
            outer = neg(func("sin", a))
        elif e.name == "exp":
            outer = e
        elif e.name == "log":
            return div(da, a)
        else:  # sqrt
            return div(da, mul(Const(Fraction(2)), e))
        if isinstance(outer, Neg):
            return neg(mul(outer.arg, da))
        return mul(outer, da)
    raise TypeError(e)


# ---------------------------------------------------------------- printing

_PREC = {"add": 1, "mul": 2, "neg": 3, "pow": 4, "atom": 5}


def _fmt_fraction(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def _prec(e: Expr) -> int:
    if isinstance(e, Add):
        return _PREC["add"]
    if isinstance(e, (Mul, Div)):
        return _PREC["mul"]
    if isinstance(e, Neg):
        return _PREC["neg"]
    if isinstance(e, Pow):
        return _PREC["pow"]
    if isinstance(e, Const):
        if e.value < 0:
            return _PREC["neg"]
        return _PREC["mul"] if e.value.denominator != 1 else _PREC["atom"]
    if isinstance(e, Num):
        return _PREC["neg"] if e.value < 0 else _PREC["atom"]
    return _PREC["atom"]


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_text(e)
    return f"({s})" if _prec(e) < min_prec else s


def to_text(e: Expr) -> str:
    """Render ``e`` in the input grammar; ``parse_expr(to_text(e))`` rebuilds it."""
    if isinstance(e, Const):
        v = e.value
        if v < 0:
            return "-" + _fmt_fraction(-v)
        return _fmt_fraction(v)
    if isinstance(e, Num):
        r = repr(e.value)
        return r if "e" not in r else f"{Fraction(e.value)}"
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Add):
        parts = [to_text(e.terms[0])]
        for t in e.terms[1:]:
            if isinstance(t, Neg):
                parts.append(" - " + _wrap(t.arg, _PREC["mul"]))
            elif isinstance(t, Const) and t.value < 0:
                parts.append(" - " + _fmt_fraction(-t.value) if t.value.denominator == 1
                             else f" - ({_fmt_fraction(-t.value)})")
            else:
                parts.append(" + " + _wrap(t, _PREC["add"] + 1))
        return "".join(parts)
    if isinstance(e, Mul):
        out = [_wrap(e.factors[0], _PREC["mul"])]
        for f in e.factors[1:]:
            out.append(_wrap(f, _PREC["mul"] + 1 if isinstance(f, (Mul, Div)) else _PREC["neg"] + 1))
        return "*".join(out)
    if isinstance(e, Div):
        return f"{_wrap(e.num, _PREC['mul'])}/{_wrap(e.den, _PREC['pow'])}"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _PREC["pow"])
    if isinstance(e, Pow):
        p = e.exponent
        exp_txt = _fmt_fraction(p) if p > 0 and p.denominator == 1 else f"({_fmt_fraction(p)})"
        return f"{_wrap(e.base, _PREC['atom'])}^{exp_txt}"
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    raise TypeError(e)


# ---------------------------------------------------------------- float evaluation

def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """Plain binary64 evaluation (no derivatives)."""
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Sym):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnknownSymbolError(e.name) from None
    if isinstance(e, Add):
        return math.fsum(evaluate(t, env) for t in e.terms)
    if isinstance(e, Mul):
        out = 1.0
        for f in e.factors:
            out *= evaluate(f, env)
        return out
    if isinstance(e, Div):
        return evaluate(e.num, env) / evaluate(e.den, env)
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Pow):
        return evaluate(e.base, env) ** float(e.exponent)
    if isinstance(e, Func):
        return getattr(math, e.name)(evaluate(e.arg, env))
    raise TypeError(e)
