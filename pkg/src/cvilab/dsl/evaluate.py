"""Evaluation of expression trees as jets at batches of points."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .expr import Add, Const, Div, Expr, Func, Mul, Neg, Num, Pow, Sym, UnknownSymbolError
from .jet import MAX_ORDER, Jet, JetOrderError, JetSpace, jet_space


def expr_jet(
    e: Expr,
    space: JetSpace,
    variables: Mapping[str, tuple[int, np.ndarray]],
    params: Mapping[str, float] | None = None,
    cache: dict | None = None,
) -> Jet:
    """Jet of ``e`` in ``space``.

    ``variables`` maps a coordinate name to ``(var, values)``: ``var`` is the
    jet variable index (``None`` for a coordinate held fixed) and ``values`` the
    batch of base-point coordinates.  ``params`` binds the remaining symbols.
    """
    params = params or {}
    cache = {} if cache is None else cache
    batch = _batch_shape(variables)

    def rec(node: Expr) -> Jet:
        hit = cache.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = Jet.constant(space, np.full(batch, float(node.value)))
        elif isinstance(node, Num):
            out = Jet.constant(space, np.full(batch, node.value))
        elif isinstance(node, Sym):
            if node.name in variables:
                var, vals = variables[node.name]
                vals = np.broadcast_to(np.asarray(vals, dtype=float), batch)
                out = Jet.constant(space, vals) if var is None else Jet.variable(space, var, vals)
            elif node.name in params:
                out = Jet.constant(space, np.full(batch, float(params[node.name])))
            else:
                raise UnknownSymbolError(node.name)
        elif isinstance(node, Add):
            out = rec(node.terms[0])
            for t in node.terms[1:]:
                out = out + rec(t)
        elif isinstance(node, Mul):
            consts = [f for f in node.factors if isinstance(f, Const)]
            rest = [f for f in node.factors if not isinstance(f, Const)]
            scale = 1.0
            for f in consts:
                scale *= float(f.value)
            out = rec(rest[0]) if rest else Jet.constant(space, np.ones(batch))
            for f in rest[1:]:
                out = out * rec(f)
            if scale != 1.0:
                out = out * scale
        elif isinstance(node, Div):
            num = rec(node.num)
            if isinstance(node.den, Const):
                out = num * (1.0 / float(node.den.value))
            else:
                out = num * rec(node.den).reciprocal()
        elif isinstance(node, Neg):
            out = -rec(node.arg)
        elif isinstance(node, Pow):
            p = node.exponent
            base = rec(node.base)
            out = base ** int(p) if p.denominator == 1 and p >= 0 else base.power(float(p))
        elif isinstance(node, Func):
            out = getattr(rec(node.arg), node.name)()
        else:
            raise TypeError(node)
        cache[node] = out
        return out

    return rec(e)


def _batch_shape(variables) -> tuple[int, ...]:
    shapes = [np.shape(v) for _, v in variables.values()]
    return np.broadcast_shapes(*shapes) if shapes else ()


def eval_jet(
    e: Expr,
    point: Mapping[str, float] | Sequence[float],
    order: int,
    coords: Sequence[str] | None = None,
    params: Mapping[str, float] | None = None,
) -> Jet:
    """All partial derivatives of ``e`` up to total ``order`` at ``point``.

    ``point`` is either a mapping from coordinate name to value or a sequence
    matched against ``coords``.  Every coordinate becomes a jet variable, in
    the order given.
    """
    if order > MAX_ORDER:
        raise JetOrderError(f"jet order {order} exceeds the maximum {MAX_ORDER}")
    if isinstance(point, Mapping):
        coords = list(point) if coords is None else list(coords)
        values = [point[c] for c in coords]
    else:
        if coords is None:
            raise ValueError("coords are required when point is a sequence")
        coords = list(coords)
        values = list(point)
    space = jet_space(len(coords), order, 0)
    variables = {c: (i, np.float64(v)) for i, (c, v) in enumerate(zip(coords, values))}
    return expr_jet(e, space, variables, params)
