"""Coordinate charts and pointwise curvature from metric jets.

Conventions
-----------
* ``(nabla_i nabla_j - nabla_j nabla_i) X^k = R_ij^k_s X^s`` and ``R_ijkl`` lowers
  the third index, so the round unit sphere has ``R_ijkl = g_ik g_jl - g_il g_jk``.
* ``Ric_jl = g^ik R_ijkl``, ``J = R / (2(n-1))``, ``P = (Ric - J g) / (n-2)``.
* ``C_ijk = nabla_i P_jk - nabla_j P_ik`` and ``B_ij = nabla^k C_kij + W_isjt P^st``.
* ``Delta = g^ij nabla_i nabla_j`` and ``delta(omega) = tr nabla omega``.

Every tensor is a :class:`~cvilab.dsl.jet.Jet` with shape ``(batch, n, ..., n)``
and all indices down.  A covariant derivative puts the new index right after
the batch axis, so ``frame.nabla(P)[:, i, j, k]`` is ``nabla_i P_jk``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dsl.evaluate import expr_jet
from .dsl.expr import ZERO, Const, Expr, as_expr, evaluate, free_symbols
from .dsl.jet import Jet, JetDomainError, contract, jet_space

LETTERS = "abcdefghijklmnopqrsuvwxy"


class GeometryError(ValueError):
    pass


class SingularMetricError(GeometryError):
    pass


class DimensionError(GeometryError):
    pass


@dataclass(frozen=True)
class AxisRule:
    """Per-axis quadrature: ``scheme`` is ``trapezoid`` or ``gauss``."""

    scheme: str
    nodes: int
    density: Expr = Const(1)  # factor of sqrt(det g) that depends on this axis only

    def __post_init__(self):
        if self.scheme not in ("trapezoid", "gauss"):
            raise GeometryError(f"unknown quadrature scheme {self.scheme!r}")
        if self.nodes < 1:
            raise GeometryError("quadrature needs at least one node")


@dataclass(frozen=True)
class Chart:
    """A coordinate patch with symbolic metric components.

    ``symmetry`` lists axis groups used to collapse quadrature axes that an
    integrand cannot depend on: ``("free", axes)`` for translation-invariant
    axes and ``("chain", axes)`` for nested polar angles of a round sphere.
    ``deps`` are the coordinates on which the chart genuinely depends beyond
    those symmetries.
    """

    name: str
    coords: tuple[str, ...]
    metric: tuple[tuple[Expr, ...], ...]
    domain: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...]
    quadrature: tuple[AxisRule, ...] | None = None
    params: tuple[tuple[str, float], ...] = ()
    symmetry: tuple[tuple[str, tuple[int, ...]], ...] = ()
    deps: frozenset[str] | None = None
    pointwise_only: bool = False
    margins: tuple[float, ...] | None = None

    def __post_init__(self):
        n = len(self.coords)
        if not 2 <= n <= 8:
            raise DimensionError(f"chart dimension {n} outside 2..8")
        if len(self.metric) != n or any(len(row) != n for row in self.metric):
            raise GeometryError("metric must be an n x n matrix")
        if len(self.domain) != n or len(self.periodic) != n:
            raise GeometryError("domain and periodicity must have one entry per coordinate")
        for i in range(n):
            for j in range(i + 1, n):
                if self.metric[i][j] != self.metric[j][i]:
                    raise GeometryError(
                        f"metric is not symmetric: g[{i + 1}][{j + 1}] != g[{j + 1}][{i + 1}]"
                    )
        allowed = set(self.coords) | {p for p, _ in self.params}
        for row in self.metric:
            for e in row:
                extra = free_symbols(e) - allowed
                if extra:
                    raise GeometryError(f"metric uses undeclared symbols {sorted(extra)}")
        if self.quadrature is not None and len(self.quadrature) != n:
            raise GeometryError("quadrature must have one rule per coordinate")

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def param_map(self) -> dict[str, float]:
        return dict(self.params)

    @functools.cached_property
    def metric_symbols(self) -> frozenset[str]:
        out: set[str] = set()
        for row in self.metric:
            for e in row:
                out |= free_symbols(e)
        return frozenset(out) & frozenset(self.coords)

    @property
    def dependencies(self) -> frozenset[str]:
        return self.metric_symbols if self.deps is None else self.deps

    @property
    def closed(self) -> bool:
        return self.quadrature is not None and not self.pointwise_only

    def with_metric(self, metric, **changes) -> "Chart":
        return replace(self, metric=tuple(tuple(r) for r in metric), **changes)

    def scaled(self, c: float) -> "Chart":
        """The chart of ``c^2 g``."""
        f = as_expr(float(c) ** 2)
        metric = [[e if e == ZERO else f * e for e in row] for row in self.metric]
        dens = self.quadrature
        if dens is not None:
            first = replace(dens[0], density=as_expr(float(c) ** self.n) * dens[0].density)
            dens = (first,) + dens[1:]
        return self.with_metric(metric, name=f"{self.name}*{c}^2", quadrature=dens)

    # ---------------------------------------------------------- sampling
    def metric_values(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        env_base = self.param_map
        out = np.empty((len(points), self.n, self.n))
        for b, p in enumerate(points):
            env = dict(env_base, **dict(zip(self.coords, p)))
            for i in range(self.n):
                for j in range(i, self.n):
                    out[b, i, j] = out[b, j, i] = evaluate(self.metric[i][j], env)
        return out

    def sample_points(self, count: int, seed: int = 0, margin: float | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        lo = np.array([a for a, _ in self.domain], dtype=float)
        hi = np.array([b for _, b in self.domain], dtype=float)
        margins = np.array(
            self.margins if self.margins is not None else [0.0] * self.n, dtype=float
        )
        if margin is not None:
            margins = np.where(self.periodic, 0.0, margin)
        return rng.uniform(lo + margins, hi - margins, size=(count, self.n))

    def validate(self, points: np.ndarray | None = None, min_eig: float = 1e-8) -> None:
        """Symmetry is checked at construction; positivity here at sample points."""
        if points is None:
            points = self.sample_points(16, seed=0)
        vals = self.metric_values(points)
        eig = np.linalg.eigvalsh(vals)
        if not np.all(np.isfinite(eig)) or eig.min() <= min_eig:
            raise SingularMetricError(
                f"metric of {self.name} is not positive definite (min eigenvalue {eig.min():.3g})"
            )
        for i, per in enumerate(self.periodic):
            if per:
                a, b = self.domain[i]
                if not b > a:
                    raise GeometryError(f"periodic axis {self.coords[i]} has empty period")


# ------------------------------------------------------------------ metric jets

def active_layout(chart: Chart, extra_symbols=()) -> tuple[list[str], list[int | None]]:
    """Jet variables: chart coordinates that any involved expression depends on."""
    used = set(chart.metric_symbols) | set(extra_symbols)
    names = [c for c in chart.coords if c in used]
    var = [names.index(c) if c in names else None for c in chart.coords]
    return names, var


def variable_map(chart: Chart, points: np.ndarray, var: Sequence[int | None]):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return {c: (var[a], points[:, a]) for a, c in enumerate(chart.coords)}


def metric_jet(chart: Chart, points, order: int, var, torder: int = 0, cache=None) -> Jet:
    nvars = sum(v is not None for v in var)
    space = jet_space(nvars, order, torder)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    variables = variable_map(chart, points, var)
    cache = {} if cache is None else cache
    n = chart.n
    comps = {}
    for i in range(n):
        for j in range(i, n):
            comps[(i, j)] = expr_jet(chart.metric[i][j], space, variables, chart.param_map, cache)
    c = np.zeros((len(points), n, n, space.size))
    for (i, j), jet in comps.items():
        c[:, i, j] = c[:, j, i] = jet.c
    return Jet(space, c)


def field_jet(chart: Chart, e: Expr, points, order: int, var, torder: int = 0, cache=None) -> Jet:
    nvars = sum(v is not None for v in var)
    space = jet_space(nvars, order, torder)
    variables = variable_map(chart, points, var)
    return expr_jet(e, space, variables, chart.param_map, cache)


# ------------------------------------------------------------------ frame

def _spec(nidx: int, skip: str = "") -> str:
    pool = [ch for ch in LETTERS if ch not in skip]
    return "".join(pool[:nidx])


class CurvatureFrame:
    """All curvature tensors of a metric jet, computed lazily and memoized.

    ``var[a]`` is the jet variable of coordinate ``a`` or ``None`` when no
    quantity depends on it (its partial derivatives vanish).
    """

    def __init__(self, g: Jet, var: Sequence[int | None]):
        self.g = g
        self.n = g.shape[-1]
        self.var = list(var)
        self._cov: dict[tuple[str, int], Jet] = {}
        if g.space.order < 0:
            raise SingularMetricError("metric jet has negative order")
        eig = np.linalg.eigvalsh(g.value)
        if not np.all(np.isfinite(eig)) or eig.min() <= 0:
            raise SingularMetricError("metric is not positive definite at the evaluation point")

    @property
    def order(self) -> int:
        return self.g.space.order

    # ---- calculus primitives
    def partial(self, T: Jet) -> Jet:
        """Coordinate derivatives; the new index follows the batch axis."""
        if T.space.order < 1:
            raise JetDomainError("not enough jet order for another derivative")
        tgt = jet_space(T.space.nvars, T.space.order - 1, T.space.torder)
        out = np.zeros((T.shape[0], self.n) + T.shape[1:] + (tgt.size,))
        for a, v in enumerate(self.var):
            if v is not None:
                out[:, a] = T.d(v).c
        return Jet(tgt, out)

    def nabla(self, T: Jet) -> Jet:
        """Levi-Civita derivative of a covariant tensor (index first)."""
        r = len(T.shape) - 1
        out = self.partial(T)
        gam = self.christoffel
        idx = _spec(r, skip="cpq")
        for s in range(r):
            t_in = idx[:s] + "p" + idx[s + 1:]
            res = f"c{idx}"
            term = contract(f"pc{idx[s]},{t_in}->{res}", gam, T)
            out = out - term
        return out

    def cov(self, name: str, k: int = 1) -> Jet:
        """Memoized ``nabla^k`` of a named tensor (``'J'``, ``'P'``, ``'W'``, ...)."""
        if k == 0:
            return getattr(self, name)
        key = (name, k)
        if key not in self._cov:
            self._cov[key] = self.nabla(self.cov(name, k - 1))
        return self._cov[key]

    def raise_all(self, T: Jet) -> Jet:
        r = len(T.shape) - 1
        gi = self.ginv
        out = T
        for s in range(r):
            idx = _spec(r, skip="pq")
            t_in = idx[:s] + "p" + idx[s + 1:]
            out = contract(f"{idx[s]}p,{t_in}->{idx}", gi, out)
        return out

    def inner(self, A: Jet, B: Jet) -> Jet:
        """Full contraction ``<A, B>`` with the metric."""
        r = len(A.shape) - 1
        idx = _spec(r)
        return contract(f"{idx},{idx}->", A, self.raise_all(B))

    def norm2(self, A: Jet) -> Jet:
        return self.inner(A, A)

    def trace(self, T: Jet, i: int = 0, j: int = 1) -> Jet:
        r = len(T.shape) - 1
        idx = list(_spec(r, skip="pq"))
        idx[i], idx[j] = "p", "q"
        rest = "".join(ch for k, ch in enumerate(idx) if k not in (i, j))
        return contract(f"pq,{''.join(idx)}->{rest}", self.ginv, T)

    def laplacian(self, f: Jet) -> Jet:
        return self.trace(self.nabla(self.nabla(f)))

    def divergence(self, omega: Jet) -> Jet:
        """``delta omega = tr nabla omega`` on the first index of ``omega``."""
        return self.trace(self.nabla(omega), 0, 1)

    def gradient(self, f: Jet) -> Jet:
        return contract("ij,j->i", self.ginv, self.partial(f))

    # ---- metric data
    @functools.cached_property
    def ginv(self) -> Jet:
        from .dsl.jet import mat_inverse

        return mat_inverse(self.g)

    @functools.cached_property
    def dvol(self) -> Jet:
        """Volume density ``sqrt(det g)``."""
        from .dsl.jet import mat_logdet

        return (mat_logdet(self.g) * 0.5).exp()

    @functools.cached_property
    def christoffel_lower(self) -> Jet:
        """``Gamma_{k,ij} = (d_i g_jk + d_j g_ik - d_k g_ij) / 2`` stored ``[k, i, j]``."""
        dg = self.partial(self.g)  # [a, i, j] = d_a g_ij
        t1 = dg.transpose(0, 3, 1, 2)  # [k, i, j] <- d_i g_jk
        t2 = dg.transpose(0, 3, 2, 1)  # d_j g_ik
        t3 = dg  # d_k g_ij
        return (t1 + t2 - t3) * 0.5

    @functools.cached_property
    def christoffel(self) -> Jet:
        """``Gamma^k_ij`` stored ``[k, i, j]``."""
        return contract("kl,lij->kij", self.ginv, self.christoffel_lower)

    @functools.cached_property
    def riemann(self) -> Jet:
        """``R_ijkl`` (all indices down)."""
        d2g = self.partial(self.partial(self.g))  # [a, b, i, j] = d_a d_b g_ij
        # 1/2 (g_jk,il + g_il,jk - g_jl,ik - g_ik,jl)
        lin = (
            d2g.transpose(0, 1, 3, 4, 2)  # d_i d_l g_jk
            + d2g.transpose(0, 3, 1, 2, 4)  # d_j d_k g_il
            - d2g.transpose(0, 1, 3, 2, 4)  # d_i d_k g_jl
            - d2g.transpose(0, 3, 1, 4, 2)  # d_j d_l g_ik
        ) * 0.5
        gl = self.christoffel_lower.truncate(lin.order)
        gu = self.christoffel.truncate(lin.order)
        q = contract("pjk,pil->ijkl", gl, gu)  # Gamma_{p,jk} Gamma^p_il
        return lin + q - q.transpose(0, 1, 2, 4, 3)

    @functools.cached_property
    def ricci(self) -> Jet:
        return contract("ik,ijkl->jl", self.ginv, self.riemann)

    @functools.cached_property
    def scalar(self) -> Jet:
        return contract("jl,jl->", self.ginv, self.ricci)

    @functools.cached_property
    def J(self) -> Jet:
        return self.scalar * (1.0 / (2 * (self.n - 1)))

    @functools.cached_property
    def P(self) -> Jet:
        if self.n < 3:
            raise DimensionError("the Schouten tensor needs n >= 3")
        J = self.J
        gJ = contract(",ij->ij", J, self.g)
        return (self.ricci - gJ) * (1.0 / (self.n - 2))

    @functools.cached_property
    def W(self) -> Jet:
        P, g = self.P, self.g.truncate(self.P.order)
        pg = contract("ik,jl->ijkl", P, g)  # P_ik g_jl
        # W = Rm - P_ik g_jl - P_jl g_ik + P_il g_jk + P_jk g_il
        return (
            self.riemann
            - pg
            - pg.transpose(0, 2, 1, 4, 3)  # P_jl g_ik
            + pg.transpose(0, 1, 2, 4, 3)  # P_il g_jk
            + pg.transpose(0, 2, 1, 3, 4)  # P_jk g_il
        )

    @functools.cached_property
    def C(self) -> Jet:
        dP = self.cov("P")
        return dP - dP.transpose(0, 2, 1, 3)

    @functools.cached_property
    def B(self) -> Jet:
        if self.n < 4:
            raise DimensionError("the Bach tensor is only formed for n >= 4")
        divC = self.trace(self.cov("C"), 0, 1)  # nabla^k C_kij
        WP = contract("isjt,st->ij", self.W, self.raise_all(self.P))
        return divC + WP

    @functools.cached_property
    def ricci_trace_free(self) -> Jet:
        return self.ricci - contract(",ij->ij", self.scalar * (1.0 / self.n), self.g)


# ------------------------------------------------------------------ entry points

def curvature_frame(
    chart: Chart,
    point,
    deriv_order: int = 0,
    metric_order: int | None = None,
    extra_symbols=(),
) -> CurvatureFrame:
    """Frame at one or more points with jets deep enough for ``deriv_order``
    covariant derivatives of the Bach tensor (metric order ``4 + deriv_order``).
    """
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    if pts.shape[1] != chart.n:
        raise GeometryError("point has the wrong number of coordinates")
    m = 4 + deriv_order if metric_order is None else metric_order
    _, var = active_layout(chart, extra_symbols)
    g = metric_jet(chart, pts, m, var)
    return CurvatureFrame(g, var)


SELECTORS = ("W", "B", "C", "CP", "field")


def divergence(chart: Chart, point, tensor_selector: str, field_expr: Expr | None = None):
    """Contracted covariant derivative of a selected tensor at ``point``.

    ``W`` -> ``nabla^k W_ijkl``; ``B`` -> ``nabla^k B_jk``; ``C`` -> ``nabla^k C_kij``;
    ``CP`` -> ``nabla^k (C_skt P^st)``; ``field`` -> ``Delta f`` of ``field_expr``.
    """
    if tensor_selector not in SELECTORS:
        raise GeometryError(f"unknown selector {tensor_selector!r}")
    if tensor_selector == "field":
        if field_expr is None:
            raise GeometryError("selector 'field' needs a field expression")
        fr = curvature_frame(chart, point, metric_order=3, extra_symbols=free_symbols(field_expr))
        f = field_jet(chart, field_expr, np.atleast_2d(point), 3, fr.var)
        return fr.laplacian(f).value
    order = {"W": 3, "B": 5, "C": 4, "CP": 4}[tensor_selector]
    fr = curvature_frame(chart, point, metric_order=order)
    if tensor_selector == "W":
        return fr.trace(fr.cov("W"), 0, 3).value  # nabla^k W_ijkl: derivative slot 0 with k slot 3
    if tensor_selector == "B":
        return fr.trace(fr.cov("B"), 0, 2).value
    if tensor_selector == "C":
        return fr.trace(fr.cov("C"), 0, 1).value
    CP = contract("skt,st->k", fr.C, fr.raise_all(fr.P))
    return fr.divergence(CP).value


def weyl_bianchi_residual(chart: Chart, point) -> float:
    """Max-norm mismatch of the cyclic ``nabla W`` identity, relative to ``|nabla W|``."""
    if chart.n < 4:
        raise DimensionError("the Weyl-Bianchi identity check needs n >= 4")
    fr = curvature_frame(chart, point, metric_order=3)
    lhs, rhs = weyl_bianchi_sides(fr)
    scale = max(1.0, float(np.abs(fr.cov("W").value).max()))
    return float(np.abs(lhs - rhs).max()) / scale


def weyl_bianchi_sides(fr: CurvatureFrame):
    dW = fr.cov("W").value  # [m, i, j, k, l]
    C = fr.C.value
    g = fr.g.value
    lhs = (
        dW
        + np.einsum("bijmkl->bmijkl", dW)  # nabla_i W_jmkl placed at [m,i,j,k,l]
        + np.einsum("bjmikl->bmijkl", dW)  # nabla_j W_mikl
    )
    e = lambda s, A, B: np.einsum(s, A, B)  # noqa: E731
    rhs = (
        e("bimk,bjl->bmijkl", C, g)
        + e("bmjk,bil->bmijkl", C, g)
        + e("bjik,bml->bmijkl", C, g)
        - e("biml,bjk->bmijkl", C, g)
        - e("bmjl,bik->bmijkl", C, g)
        - e("bjil,bmk->bmijkl", C, g)
    )
    return lhs, rhs


def _rel(lhs: np.ndarray, rhs: np.ndarray, *scales) -> float:
    diff = float(np.abs(lhs - rhs).max(initial=0.0))
    if diff == 0.0:
        return 0.0
    ref = max([float(np.abs(lhs).max(initial=0.0)), float(np.abs(rhs).max(initial=0.0))]
              + [float(s) for s in scales])
    return diff / ref


def identity_residuals(fr: CurvatureFrame) -> dict[str, float]:
    """Relative residuals of the standard tensor identities on one frame.

    The frame needs metric order 5 (one derivative of the Bach tensor).
    """
    n = fr.n
    R, W, C, P, B = (fr.riemann.value, fr.W.value, fr.C.value, fr.P.value, fr.B.value)
    gi = fr.ginv.value
    sR = float(np.abs(R).max())
    out = {
        "riemann_antisym": _rel(R, -R.transpose(0, 2, 1, 3, 4), sR),
        "riemann_pair": _rel(R, R.transpose(0, 3, 4, 1, 2), sR),
        "riemann_bianchi": _rel(R + R.transpose(0, 2, 3, 1, 4) + R.transpose(0, 3, 1, 2, 4), 0 * R, sR),
        "weyl_tracefree": _rel(np.einsum("bik,bijkl->bjl", gi, W), 0, float(np.abs(W).max())),
        "cotton_antisym": _rel(C, -C.transpose(0, 2, 1, 3), float(np.abs(C).max())),
        "cotton_cyclic": _rel(C + C.transpose(0, 2, 3, 1) + C.transpose(0, 3, 1, 2), 0, float(np.abs(C).max())),
        "cotton_tracefree": _rel(np.einsum("bik,bijk->bj", gi, C), 0, float(np.abs(C).max())),
        "schouten_trace": _rel(np.einsum("bij,bij->b", gi, P), fr.J.value, float(np.abs(P).max())),
    }
    dW = fr.trace(fr.cov("W"), 0, 3).value
    out["div_weyl"] = _rel(dW, (n - 3) * C)
    lhs, rhs = weyl_bianchi_sides(fr)
    out["weyl_bianchi"] = _rel(lhs, rhs, float(np.abs(fr.cov("W").value).max()))
    if n >= 4:
        out["bach_symmetric"] = _rel(B, B.transpose(0, 2, 1), float(np.abs(B).max()))
        out["bach_tracefree"] = _rel(np.einsum("bij,bij->b", gi, B), 0, float(np.abs(B).max()))
        dB = fr.trace(fr.cov("B"), 0, 2).value
        CP = np.einsum("bsjt,bsu,btv,buv->bj", C, gi, gi, P)
        # at n = 4 both sides vanish; judge against the size of the pieces instead
        out["div_bach"] = _rel(dB, -(n - 4) * CP, float(np.abs(fr.cov("B").value).max()),
                               float(np.abs(C).max() * np.abs(P).max()))
    return out
