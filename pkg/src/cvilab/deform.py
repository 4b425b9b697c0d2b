"""Exact first and second variations along metric families.

The deformation parameter ``t`` is an extra jet variable of order 1 or 2, so
every variation below is a Taylor coefficient, never a finite difference.

Families
--------
``conformal``    ``exp(2 sigma) g`` with ``sigma = s (u0 + t Upsilon) + a1 t + a2 t^2``
``path``         ``g + t h``
``lie``          ``g + t L_X g`` (the linear path tangent to the diffeomorphism flow)
``volume_normalized_conformal``  conformal with ``a1, a2`` chosen from quadrature
                 moments so that the volume is constant to second order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping

import numpy as np

from . import catalog
from .catalog import InvariantEntry
from .dsl.expr import ZERO, Expr, as_expr, free_symbols, parse_expr
from .dsl.jet import Jet, contract, jet_space
from .geometry import (
    Chart,
    CurvatureFrame,
    GeometryError,
    active_layout,
    metric_jet,
    variable_map,
)
from .dsl.evaluate import expr_jet
from .quad import QuadratureRule, build_rule

FAMILY_KINDS = ("conformal", "path", "lie", "volume_normalized_conformal")
NODE_BUDGET = 6_000_000  # rough element budget per batch of nodes


class NonconstantInvariantError(ValueError):
    pass


class RicciFloorError(ValueError):
    pass


def relative_residual(a, b, scale: float | None = None, floor: float = 1e-300) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = float(np.max(np.abs(a - b), initial=0.0))
    if scale is None:
        scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    if diff == 0.0:
        return 0.0
    return diff / max(scale, floor)


def _expr(chart: Chart, e) -> Expr:
    if isinstance(e, str):
        return parse_expr(e, list(chart.coords) + list(chart.param_map))
    return as_expr(e)


# ---------------------------------------------------------------- families

@dataclass(frozen=True)
class MetricFamily:
    chart: Chart
    kind: str
    field: object  # Expr, n x n Expr matrix, or n-vector of Expr
    torder: int = 1
    base_log: Expr = ZERO
    s: float = 1.0
    shift: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise GeometryError(f"unknown family kind {self.kind!r}")
        if self.torder not in (1, 2):
            raise GeometryError("t-jet order must be 1 or 2")
        if self.kind == "lie" and self.torder != 1:
            raise GeometryError("lie families carry first-order information only")

    @classmethod
    def conformal(cls, chart, upsilon, torder=1):
        return cls(chart, "conformal", _expr(chart, upsilon), torder)

    @classmethod
    def path(cls, chart, h, torder=1):
        h = tuple(tuple(_expr(chart, e) for e in row) for row in h)
        for i in range(chart.n):
            for j in range(i + 1, chart.n):
                if h[i][j] != h[j][i]:
                    raise GeometryError("h must be symmetric")
        return cls(chart, "path", h, torder)

    @classmethod
    def lie(cls, chart, X):
        return cls(chart, "lie", tuple(_expr(chart, e) for e in X), 1)

    @classmethod
    def volume_normalized_conformal(cls, chart, upsilon, torder=2, profile="standard"):
        ups = _expr(chart, upsilon)
        rule = build_rule(chart, free_symbols(ups) & set(chart.coords), profile)
        dv = _sqrt_det_values(chart, rule.nodes)
        uv = _field_values(chart, ups, rule.nodes)
        V = rule.reduce(dv)
        M1 = rule.reduce(uv * dv)
        M2 = rule.reduce(uv * uv * dv)
        n = chart.n
        # Vol(exp(2 t U) g) = V (1 + a t + b t^2 + ...); rescale by (1 + ...)^(-1/n)
        a, b = n * M1 / V, n * n * M2 / (2 * V)
        p = -1.0 / n
        c1 = p * a
        c2 = p * b + p * (p - 1) / 2 * a * a
        # log of the scale factor: log(1 + c1 t + c2 t^2) = c1 t + (c2 - c1^2/2) t^2
        return cls(chart, "volume_normalized_conformal", ups, torder, shift=(c1, c2 - c1 * c1 / 2))

    # ---- bookkeeping
    def symbols(self) -> set[str]:
        out: set[str] = set(free_symbols(self.base_log))
        if self.kind in ("conformal", "volume_normalized_conformal"):
            out |= free_symbols(self.field)
        elif self.kind == "path":
            for row in self.field:
                for e in row:
                    out |= free_symbols(e)
        else:
            for e in self.field:
                out |= free_symbols(e)
        return out & set(self.chart.coords)

    def layout(self, extra=()):
        return active_layout(self.chart, set(self.symbols()) | set(extra))

    def log_factor(self, space, variables, params, cache) -> Jet:
        """``u0 + t Upsilon + a1 t + a2 t^2`` (before the factor ``s``)."""
        batch = np.broadcast_shapes(*[np.shape(v) for _, v in variables.values()])
        tvar = Jet.variable(space, None, np.zeros(batch))
        w = expr_jet(self.base_log, space, variables, params, cache)
        w = w + tvar * expr_jet(self.field, space, variables, params, cache)
        a1, a2 = self.shift
        if a1:
            w = w + tvar * a1
        if a2 and space.torder >= 2:
            w = w + tvar * tvar * a2
        return w

    def metric_jet(self, points, order: int, var, cache=None) -> Jet:
        chart = self.chart
        cache = {} if cache is None else cache
        nvars = sum(v is not None for v in var)
        space = jet_space(nvars, order, self.torder)
        points = np.atleast_2d(points)
        variables = variable_map(chart, points, var)
        params = chart.param_map
        if self.kind == "lie":
            g1 = metric_jet(chart, points, order + 1, var, self.torder, cache={})
            fr = CurvatureFrame.__new__(CurvatureFrame)
            fr.n, fr.var = chart.n, list(var)
            sp1 = g1.space
            X = _stack_vector(
                [expr_jet(e, sp1, variables, params, {}) for e in self.field]
            )
            dg = fr.partial(g1)  # [k, i, j]
            dX = fr.partial(X)  # [i, k] = d_i X^k
            g = g1.truncate(order)
            h = (
                contract("k,kij->ij", X, dg)
                + contract("kj,ik->ij", g, dX)
                + contract("ik,jk->ij", g, dX)
            )
            tvar = Jet.variable(space, None, np.zeros(len(points)))
            return g + contract(",ij->ij", tvar, h)
        g = metric_jet(chart, points, order, var, self.torder, cache)
        if self.kind == "path":
            n = chart.n
            c = np.zeros((len(points), n, n, space.size))
            for i in range(n):
                for j in range(i, n):
                    if self.field[i][j] != ZERO:
                        c[:, i, j] = c[:, j, i] = expr_jet(
                            self.field[i][j], space, variables, params, cache
                        ).c
            tvar = Jet.variable(space, None, np.zeros(len(points)))
            return g + contract(",ij->ij", tvar, Jet(space, c))
        sigma = self.log_factor(space, variables, params, cache) * self.s
        return contract(",ij->ij", (sigma * 2.0).exp(), g)


def _stack_vector(jets) -> Jet:
    from .dsl.jet import stack

    return stack(jets, axis=-1)


def _sqrt_det_values(chart: Chart, pts) -> np.ndarray:
    return np.sqrt(np.linalg.det(chart.metric_values(pts)))


def _field_values(chart: Chart, e: Expr, pts) -> np.ndarray:
    from .dsl.expr import evaluate

    env = chart.param_map
    return np.array([evaluate(e, dict(env, **dict(zip(chart.coords, p)))) for p in pts])


# ---------------------------------------------------------------- evaluation context

class Context:
    """A frame along a family at a batch of points, with cached field jets."""

    def __init__(self, family: MetricFamily | None, chart: Chart, points, order: int, extra=()):
        self.chart = chart
        self.family = family
        self.points = np.atleast_2d(points)
        self.order = order
        extra = set(extra)
        for e in extra:
            if not isinstance(e, str):
                raise TypeError("extra must be symbol names")
        if family is not None:
            _, var = family.layout(extra)
        else:
            _, var = active_layout(chart, extra)
        self.var = var
        self._cache: dict = {}
        if family is not None:
            g = family.metric_jet(self.points, order, var, self._cache)
        else:
            g = metric_jet(chart, self.points, order, var, 0, self._cache)
        self.frame = CurvatureFrame(g, var)
        self._fields: dict = {}

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def space(self):
        return self.frame.g.space

    def field(self, e: Expr) -> Jet:
        if e not in self._fields:
            variables = variable_map(self.chart, self.points, self.var)
            self._fields[e] = expr_jet(e, self.space, variables, self.chart.param_map, self._cache)
        return self._fields[e]

    def log_factor(self) -> Jet:
        variables = variable_map(self.chart, self.points, self.var)
        return self.family.log_factor(self.space, variables, self.chart.param_map, self._cache)

    def base_frame(self) -> CurvatureFrame:
        """Frame of the metric at ``t = 0`` (no deformation variable)."""
        if "base" not in self._fields:
            g0 = self.frame.g.tcoeff(0)
            self._fields["base"] = CurvatureFrame(g0, self.var)
        return self._fields["base"]


def _chunk_size(n: int, space_size: int, torder: int, budget: int = NODE_BUDGET) -> int:
    per = (n**4) * space_size * 4
    return max(1, min(256, budget // max(per, 1)))


def integrate_family(
    family: MetricFamily | None,
    chart: Chart,
    order: int,
    integrand: Callable[[Context], Mapping[str, Jet]],
    extra_symbols: Iterable[str] = (),
    profile: str = "standard",
    rule: QuadratureRule | None = None,
) -> dict[str, np.ndarray]:
    """``int`` of each named integrand (already including any volume factor).

    Returns, per name, the integrals of ``d^j/dt^j`` of the integrand at
    ``t = 0`` for ``j = 0..T`` (``T = 0`` without a family).
    """
    extra = set(extra_symbols)
    deps = extra | (family.symbols() if family is not None else set())
    if rule is None:
        rule = build_rule(chart, deps, profile)
    nv = len(active_layout(chart, deps)[0])
    torder = family.torder if family is not None else 0
    size = jet_space(nv, order, torder).size
    step = _chunk_size(chart.n, size, torder)
    chunks: dict[str, list[np.ndarray]] = {}
    for i0 in range(0, len(rule), step):
        ctx = Context(family, chart, rule.nodes[i0:i0 + step], order, extra)
        for name, jet in integrand(ctx).items():
            chunks.setdefault(name, []).append(jet.tderivs())
    return {name: rule.reduce_many(np.concatenate(v, axis=0)) for name, v in chunks.items()}


# ---------------------------------------------------------------- pointwise variations

@dataclass(frozen=True)
class DeformationJet:
    value: np.ndarray
    first: np.ndarray
    second: np.ndarray | None = None


def d_dt_invariant(id: str, family: MetricFamily, point, order: int | None = None) -> DeformationJet:
    entry = catalog.get(id)
    entry.check_dim(family.chart.n)
    order = family.torder if order is None else order
    if order > family.torder:
        family = replace(family, torder=order)
    ctx = Context(family, family.chart, point, entry.order)
    d = entry.evaluate(ctx.frame).tderivs()
    single = np.asarray(point).ndim == 1
    pick = (lambda a: float(a[0])) if single else (lambda a: a)
    return DeformationJet(pick(d[..., 0]), pick(d[..., 1]), pick(d[..., 2]) if order >= 2 else None)


def relate_derivatives_residual(id: str, chart: Chart, upsilon, points) -> float:
    """Conformal ``DL(Upsilon)`` against metric ``DL[2 Upsilon g]`` pointwise."""
    ups = _expr(chart, upsilon)
    h = [[(2 * ups) * e if e != ZERO else ZERO for e in row] for row in chart.metric]
    a = d_dt_invariant(id, MetricFamily.conformal(chart, ups), points).first
    b = d_dt_invariant(id, MetricFamily.path(chart, h), points).first
    return relative_residual(a, b)


COMPARATORS = ("P", "C", "B", "R", "J", "R-metric")


def linearization_comparator(target: str, chart: Chart, upsilon=None, point=None, h=None) -> float:
    """Jet variation of ``P, C, B, R, J`` against the closed forms.

    ``target = "R-metric"`` compares ``DR[h]`` with ``-<Ric,h> + delta^2 h - Delta tr h``.
    """
    if target not in COMPARATORS:
        raise ValueError(f"no comparator for {target!r}")
    pts = np.atleast_2d(chart.sample_points(4, seed=0) if point is None else point)
    n = chart.n
    if target == "R-metric":
        if h is None:
            raise ValueError("R-metric comparison needs h")
        fam = MetricFamily.path(chart, h)
        ctx = Context(fam, chart, pts, 4)
        fr, base = ctx.frame, ctx.base_frame()
        lhs = fr.scalar.tcoeff(1).value
        hj = _path_h(ctx)
        ddh = base.nabla(base.nabla(hj))  # [a, b, i, j] = nabla_a nabla_b h_ij
        div2 = _div2(base, ddh)
        trh = contract("ij,ij->", base.ginv, hj)
        rhs = (-base.inner(base.ricci, hj) + div2 - base.laplacian(trh)).value
        return relative_residual(lhs, rhs)
    ups = _expr(chart, upsilon)
    fam = MetricFamily.conformal(chart, ups)
    order = {"P": 3, "C": 4, "B": 5, "R": 3, "J": 3}[target]
    ctx = Context(fam, chart, pts, order)
    fr, base = ctx.frame, ctx.base_frame()
    U = _base_field(ctx, ups)
    dU = base.partial(U)
    if target == "P":
        lhs = fr.P.tcoeff(1).value
        rhs = -base.nabla(dU).value
    elif target == "C":
        lhs = fr.C.tcoeff(1).value
        rhs = _dc(base, dU)
    elif target == "B":
        lhs = fr.B.tcoeff(1).value
        Uup = contract("ps,s->p", base.ginv, dU)
        CU = contract("isj,s->ij", base.C, Uup)
        rhs = (contract(",ij->ij", U, base.B) * -2.0 - (CU + CU.transpose(0, 2, 1)) * (n - 4)).value
    elif target == "R":
        lhs = fr.scalar.tcoeff(1).value
        rhs = (U * base.scalar * -2.0 - base.laplacian(U) * (2 * (n - 1))).value
    else:
        lhs = fr.J.tcoeff(1).value
        rhs = (U * base.J * -2.0 - base.laplacian(U)).value
    return relative_residual(lhs, rhs)


def _base_field(ctx: Context, e: Expr) -> Jet:
    return ctx.field(e).tcoeff(0)


def _path_h(ctx: Context) -> Jet:
    """The path direction ``h`` as a jet without the deformation variable."""
    return ctx.frame.g.tcoeff(1)


def _div2(base: CurvatureFrame, ddh: Jet) -> Jet:
    x = contract("ai,abij->bj", base.ginv, ddh)
    return contract("bj,bj->", base.ginv, x)


def _dc(base: CurvatureFrame, dU: Jet) -> np.ndarray:
    Uup = contract("ps,s->p", base.ginv, dU)
    return contract("ijpk,p->ijk", base.W, Uup).value


def diffeo_identity_residual(id: str, chart: Chart, X, point=None) -> dict:
    """``DL[L_X g]`` against ``dL(X)`` pointwise."""
    entry = catalog.get(id)
    entry.check_dim(chart.n)
    pts = np.atleast_2d(chart.sample_points(3, seed=0) if point is None else point)
    fam = MetricFamily.lie(chart, X)
    lhs = entry.evaluate(Context(fam, chart, pts, entry.order).frame).tcoeff(1).value
    ctx = Context(None, chart, pts, entry.order + 1, fam.symbols())
    fr = ctx.frame
    fr.target = 1
    L = entry.evaluate(fr)
    dL = fr.partial(L).value  # [B, n]
    Xv = np.stack([ctx.field(e).value for e in fam.field], axis=-1)
    rhs = np.einsum("bk,bk->b", Xv, dL)
    return {"lhs": lhs, "rhs": rhs, "residual": relative_residual(lhs, rhs)}


# ---------------------------------------------------------------- integral identities

def self_adjointness_residual(id: str, chart: Chart, u1, u2, profile: str = "standard") -> dict:
    """``int U1 DL(U2) - int U2 DL(U1)`` relative to the pairing size."""
    entry = catalog.get(id)
    entry.check_dim(chart.n)
    e1, e2 = _expr(chart, u1), _expr(chart, u2)
    syms = (free_symbols(e1) | free_symbols(e2)) & set(chart.coords)
    rule = build_rule(chart, syms, profile)

    def pairing(a: Expr, b: Expr):
        fam = MetricFamily.conformal(chart, b)

        def integrand(ctx):
            L = entry.evaluate(ctx.frame)
            dv = ctx.base_frame().dvol
            f = ctx.field(a).tcoeff(0)
            return {"p": L * f * dv}

        out = integrate_family(fam, chart, entry.order, integrand, syms, rule=rule)
        return out["p"][1]

    a12 = pairing(e1, e2)
    a21 = pairing(e2, e1)
    scale = max(abs(a12), abs(a21))
    return {"a12": a12, "a21": a21, "residual": relative_residual(a12, a21, scale)}


def conformal_gradient_residual(id: str, chart: Chart, upsilon, profile: str = "standard") -> dict:
    """``d/dt int L dvol`` along ``exp(2tU) g`` against ``(n-2k) int L U dvol``."""
    entry = catalog.get(id)
    entry.check_dim(chart.n)
    ups = _expr(chart, upsilon)
    fam = MetricFamily.conformal(chart, ups)
    n, k = chart.n, entry.k

    def integrand(ctx):
        fr = ctx.frame
        L = entry.evaluate(fr)
        return {"S": L * fr.dvol, "G": L * ctx.field(ups) * fr.dvol, "A": L * fr.dvol}

    out = integrate_family(fam, chart, entry.order, integrand, profile=profile)
    lhs = out["S"][1]
    rhs = (n - 2 * k) * out["G"][0]
    scale = max(abs(lhs), abs(rhs), abs(out["A"][0]) * _sup(chart, ups))
    return {"lhs": lhs, "rhs": rhs, "residual": relative_residual(lhs, rhs, scale)}


def _sup(chart: Chart, e: Expr) -> float:
    pts = chart.sample_points(64, seed=0)
    return float(np.max(np.abs(_field_values(chart, e, pts)), initial=0.0))


def _grad_J3(fr, n):
    C = catalog
    return C.lap_J2(fr) * -3.0 + C.J_(fr) ** 3 * (n - 6)


def _grad_JP2(fr, n):
    C = catalog
    return -C.lap_P2(fr) - C.div_P_dJ(fr) * 2.0 - C.lap_J2(fr) + C.J_(fr) * C.norm_P(fr) * (n - 6)


def _grad_trP3(fr, n):
    C = catalog
    return (
        C.div_P_dJ(fr) * -3.0
        - C.lap_P2(fr) * 1.5
        - C.div_CP(fr) * 3.0
        + C.tr_P3(fr) * (n - 6)
    )


def _grad_mJDJ(fr, n):
    C = catalog
    return C.bilap_J(fr) * 2.0 + C.lap_J2(fr) * ((n - 2) / 2) - C.J_(fr) * C.lap_J(fr) * (n - 6)


def _grad_BP(fr, n):
    C = catalog
    return C.div_CP(fr) * (3 * (n - 4)) + C.BP(fr) * (n - 6)


def _grad_WP2(fr, n):
    C = catalog
    return C.div_CP(fr) * (2 * (n - 3)) + C.div_WC(fr) + C.WP2(fr) * (n - 6)


def _grad_JW2(fr, n):
    C = catalog
    return -C.lap_W2(fr) + C.J_(fr) * C.norm_W(fr) * (n - 6)


def _grad_J2(fr, n):
    # (1/2) D int J^2 = int (-Delta J + (n-4)/2 J^2) U, so the full gradient doubles it
    C = catalog
    return (-C.lap_J(fr) + C.J_(fr) * C.J_(fr) * ((n - 4) / 2)) * 2.0


def _grad_P2(fr, n):
    C = catalog
    return (-C.lap_J(fr) + C.norm_P(fr) * ((n - 4) / 2)) * 2.0


# basis id -> (gradient evaluator, metric order it needs)
GRADIENT_FORMULAS = {
    "J3": (_grad_J3, 4),
    "JP2": (_grad_JP2, 4),
    "trP3": (_grad_trP3, 4),
    "mJDJ": (_grad_mJDJ, 6),
    "BP": (_grad_BP, 4),
    "WP2": (_grad_WP2, 4),
    "JW2": (_grad_JW2, 4),
    "J2": (_grad_J2, 4),
    "P2": (_grad_P2, 4),
}
WEIGHT6_GRADIENT_IDS = ("J3", "JP2", "trP3", "mJDJ", "BP", "WP2", "JW2")


def weight6_gradient_residual(basis_id: str, chart: Chart, upsilon, profile: str = "standard") -> dict:
    """``d/dt int b dvol`` against ``int (stated gradient) U dvol``.

    Also accepts ``J2`` and ``P2`` for the weight -4 functionals.
    """
    if basis_id not in GRADIENT_FORMULAS:
        raise ValueError(f"no gradient formula for {basis_id!r}")
    entry = catalog.get(basis_id)
    grad, gorder = GRADIENT_FORMULAS[basis_id]
    ups = _expr(chart, upsilon)
    fam = MetricFamily.conformal(chart, ups)
    n = chart.n
    order = max(entry.order, gorder)

    def integrand(ctx):
        fr = ctx.frame
        b = entry.evaluate(fr)
        G = grad(fr, n)
        return {"S": b * fr.dvol, "G": G * ctx.field(ups) * fr.dvol, "A": G * fr.dvol}

    out = integrate_family(fam, chart, order, integrand, profile=profile)
    lhs, rhs = out["S"][1], out["G"][0]
    return {"lhs": lhs, "rhs": rhs, "residual": relative_residual(lhs, rhs)}


def mean_zero(chart: Chart, upsilon, profile: str = "standard") -> Expr:
    ups = _expr(chart, upsilon)
    rule = build_rule(chart, free_symbols(ups) & set(chart.coords), profile)
    dv = _sqrt_det_values(chart, rule.nodes)
    mean = rule.reduce(_field_values(chart, ups, rule.nodes) * dv) / rule.reduce(dv)
    return ups - as_expr(float(mean)) if mean != 0 else ups


def check_constant(id: str, chart: Chart, profile: str = "standard", tol: float = 1e-8) -> float:
    """Mean of ``L`` at quadrature nodes; raises when its spread exceeds ``tol``."""
    entry = catalog.get(id)
    rule = build_rule(chart, (), profile)
    vals = integrate_values(entry, chart, rule)
    spread = float(np.std(vals))
    if spread > tol * max(1.0, abs(float(np.mean(vals)))):
        raise NonconstantInvariantError(f"{id} is not constant on {chart.name} (std {spread:.2e})")
    return float(np.mean(vals))


def integrate_values(entry: InvariantEntry, chart: Chart, rule: QuadratureRule) -> np.ndarray:
    out = []
    step = _chunk_size(chart.n, 200, 0)
    for i0 in range(0, len(rule), step):
        ctx = Context(None, chart, rule.nodes[i0:i0 + step], entry.order)
        out.append(entry.evaluate(ctx.frame).value)
    return np.concatenate(out)


def _gauss01(nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1), 0.5 * w


def second_variation_residual(id: str, chart: Chart, upsilon, profile: str = "standard") -> dict:
    """``d^2/dt^2`` of the standard primitive along the volume-normalized family
    against ``int U0 DL(U0) dvol`` with ``U0`` the mean-zero part of ``U``."""
    entry = catalog.get(id)
    entry.check_dim(chart.n)
    L0 = check_constant(id, chart, profile)
    n, k = chart.n, entry.k
    ups = _expr(chart, upsilon)
    fam = MetricFamily.volume_normalized_conformal(chart, ups, 2, profile)
    syms = free_symbols(ups) & set(chart.coords)
    rule = build_rule(chart, syms, profile)
    if n != 2 * k:

        def integrand(ctx):
            fr = ctx.frame
            return {"S": entry.evaluate(fr) * fr.dvol * (1.0 / (n - 2 * k)), "V": fr.dvol}

        out = integrate_family(fam, chart, entry.order, integrand, rule=rule)
        lhs = out["S"][2]
        vol = out["V"]
    else:
        lhs, vol = 0.0, np.zeros(3)
        for s, w in zip(*_gauss01(8)):
            f = replace(fam, s=float(s))

            def integrand(ctx):
                fr = ctx.frame
                return {"S": ctx.log_factor() * entry.evaluate(fr) * fr.dvol, "V": fr.dvol}

            out = integrate_family(f, chart, entry.order, integrand, rule=rule)
            lhs += w * out["S"][2]
        vol = integrate_family(fam, chart, 0, lambda ctx: {"V": ctx.frame.dvol}, rule=rule)["V"]
    u0 = mean_zero(chart, ups, profile)

    def quad_form(ctx):
        return {"Q": entry.evaluate(ctx.frame) * ctx.field(u0).tcoeff(0) * ctx.base_frame().dvol}

    rhs = integrate_family(MetricFamily.conformal(chart, u0), chart, entry.order, quad_form, rule=rule)["Q"][1]
    norm = integrate_family(
        None, chart, 0, lambda ctx: {"N": ctx.field(u0) ** 2 * ctx.frame.dvol}, syms, rule=rule
    )["N"][0]
    return {
        "lhs": lhs,
        "rhs": rhs,
        "L": L0,
        "norm2": norm,
        "volume_derivatives": (vol[1], vol[2]),
        "residual": relative_residual(lhs, rhs, max(abs(lhs), abs(rhs), 1e-12 * abs(norm))),
    }


def critical_primitive(
    id: str,
    chart: Chart,
    u,
    direction=None,
    nodes: int = 8,
    profile: str = "standard",
) -> dict:
    """``int_0^1 int u L(e^{2su} g) dvol ds`` by Gauss-Legendre in ``s``.

    With a ``direction`` phi, also compares the derivative of the primitive
    along ``u + t phi`` with ``int phi L dvol`` at ``e^{2u} g``.
    """
    entry = catalog.get(id)
    entry.check_dim(chart.n)
    ue = _expr(chart, u)
    if chart.n != 2 * entry.k:
        raise ValueError(f"{id} is not critical in dimension {chart.n}")
    phi = _expr(chart, direction) if direction is not None else ZERO
    syms = (free_symbols(ue) | free_symbols(phi)) & set(chart.coords)
    rule = build_rule(chart, syms, profile)
    fam = MetricFamily(chart, "conformal", phi, 1, base_log=ue)
    value = grad = 0.0
    for s, w in zip(*_gauss01(nodes)):
        f = replace(fam, s=float(s))

        def integrand(ctx):
            fr = ctx.frame
            return {"S": ctx.log_factor() * entry.evaluate(fr) * fr.dvol}

        out = integrate_family(f, chart, entry.order, integrand, syms, rule=rule)["S"]
        value += w * out[0]
        grad += w * out[1]
    result = {"value": value}
    if direction is not None:
        end = replace(fam, s=1.0)

        def at_end(ctx):
            fr = ctx.frame
            return {"G": ctx.field(phi) * entry.evaluate(fr) * fr.dvol}

        rhs = integrate_family(end, chart, entry.order, at_end, syms, rule=rule)["G"][0]
        result.update(gradient=grad, expected=rhs, residual=relative_residual(grad, rhs))
    return result


def gamma_pairing_residuals(
    chart: Chart,
    f,
    u,
    X,
    h=None,
    id: str = "R",
    profile: str = "standard",
) -> dict:
    """Weak forms of the trace and divergence identities for the adjoint
    linearization, plus the closed-form adjoint duality when ``id`` is ``R``."""
    entry = catalog.get(id)
    entry.check_dim(chart.n)
    fe, ue = _expr(chart, f), _expr(chart, u)
    Xe = tuple(_expr(chart, e) for e in X)
    syms = set(free_symbols(fe) | free_symbols(ue))
    for e in Xe:
        syms |= free_symbols(e)
    he = None
    if h is not None:
        he = tuple(tuple(_expr(chart, e) for e in row) for row in h)
        for row in he:
            for e in row:
                syms |= free_symbols(e)
    syms &= set(chart.coords)
    rule = build_rule(chart, syms, profile)
    m = entry.order

    def weak(fam, order=m):
        def integrand(ctx):
            L = entry.evaluate(ctx.frame)
            return {"p": L * ctx.field(fe).tcoeff(0) * ctx.base_frame().dvol}

        return integrate_family(fam, chart, order, integrand, syms, rule=rule)["p"][1]

    # (a) trace identity: DL(u)/2 = DL[u g]
    ug = [[ue * e if e != ZERO else ZERO for e in row] for row in chart.metric]
    a_lhs = 0.5 * weak(MetricFamily.conformal(chart, ue))
    a_rhs = weak(MetricFamily.path(chart, ug))
    # (b) divergence identity: DL[L_X g] = dL(X)
    b_lhs = weak(MetricFamily.lie(chart, Xe))

    def dL_X(ctx):
        fr = ctx.frame
        fr.target = 1
        dL = fr.partial(entry.evaluate(fr))
        Xj = _stack_vector([ctx.field(e) for e in Xe])
        return {"p": contract("k,k->", Xj, dL) * ctx.field(fe) * fr.dvol}

    b_rhs = integrate_family(None, chart, m + 1, dL_X, syms, rule=rule)["p"][0]
    out = {
        "trace": relative_residual(a_lhs, a_rhs),
        "divergence": relative_residual(b_lhs, b_rhs),
        "values": {"trace": (a_lhs, a_rhs), "divergence": (b_lhs, b_rhs)},
    }
    if entry.id == "R" and he is not None:
        c_rhs = weak(MetricFamily.path(chart, he))

        def adjoint(ctx):
            fr = ctx.frame
            F = ctx.field(fe)
            H = _matrix_jet(ctx, he)
            gstar = (
                contract(",ij->ij", -F, fr.ricci)
                + fr.nabla(fr.partial(F))
                - contract(",ij->ij", fr.laplacian(F), fr.g)
            )
            return {"p": fr.inner(gstar, H) * fr.dvol}

        c_lhs = integrate_family(None, chart, 3, adjoint, syms, rule=rule)["p"][0]
        out["adjoint"] = relative_residual(c_lhs, c_rhs)
        out["values"]["adjoint"] = (c_lhs, c_rhs)
    return out


def _matrix_jet(ctx: Context, h) -> Jet:
    n = ctx.n
    sp = ctx.space
    c = np.zeros((len(ctx.points), n, n, sp.size))
    for i in range(n):
        for j in range(i, n):
            if h[i][j] != ZERO:
                c[:, i, j] = c[:, j, i] = ctx.field(h[i][j]).c
    return Jet(sp, c)


def almost_schur_check(
    chart: Chart, ricci_floor: float = 0.0, profile: str = "standard", symbols=None
) -> dict:
    """``int (R - Rbar)^2`` against ``4n(n-1)/(n-2)^2 int |Ric - R g / n|^2``."""
    n = chart.n
    if n < 3:
        raise GeometryError("almost-Schur needs n >= 3")
    syms = set(chart.dependencies) if symbols is None else set(symbols)
    rule = build_rule(chart, syms, profile)
    R, S0, dv, ric_min = [], [], [], math.inf
    for i0 in range(0, len(rule), 32):
        fr = Context(None, chart, rule.nodes[i0:i0 + 32], 2, syms).frame
        R.append(fr.scalar.value)
        S0.append(fr.norm2(fr.ricci_trace_free).value)
        dv.append(fr.dvol.value)
        eig = np.linalg.eigvals(np.linalg.solve(fr.g.value, fr.ricci.value)).real
        ric_min = min(ric_min, float(eig.min()))
    if ric_min < ricci_floor - 1e-12:
        raise RicciFloorError(f"minimum Ricci eigenvalue {ric_min:.4g} is below {ricci_floor}")
    R, S0, dv = map(np.concatenate, (R, S0, dv))
    Rbar = rule.reduce(R * dv) / rule.reduce(dv)
    lhs = rule.reduce((R - Rbar) ** 2 * dv)
    rhs = 4 * n * (n - 1) / (n - 2) ** 2 * rule.reduce(S0 * dv)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ric_min": ric_min,
        "ratio": lhs / rhs if rhs > 0 else None,
        "pass": bool(lhs <= rhs * (1 + 1e-8) + 1e-12),
    }
