"""Quadrature on closed charts and exact Fourier arithmetic on flat tori.

Integrals reduce over nodes with :func:`math.fsum`, so totals do not depend on
how node evaluations were batched.

Axis collapsing: a chart lists symmetry groups of axes.  For a ``free`` group
(torus translations) an axis on which neither the chart nor the integrand
depends is replaced by a single node carrying the full axis weight.  For a
``chain`` group (nested polar angles of a round sphere) every axis after the
last dependent one is collapsed the same way, using the axis density factor of
``sqrt(det g)``.  This is exact for integrands that are invariant under the
corresponding isometries, which holds for every natural invariant of a metric
and test fields that respect the symmetry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .dsl.expr import Const, Expr, as_expr, evaluate, free_symbols
from .geometry import AxisRule, Chart, GeometryError

PROFILE_SCALE = {"smoke": 0.75, "standard": 1.0, "deep": 1.5}


class QuadratureError(RuntimeError):
    pass


def _axis_nodes(rule: AxisRule, lo: float, hi: float, count: int):
    if rule.scheme == "trapezoid":
        x = lo + (hi - lo) * np.arange(count) / count
        w = np.full(count, (hi - lo) / count)
    else:
        t, w = np.polynomial.legendre.leggauss(count)
        x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * w
    return x, w


@dataclass(frozen=True)
class AxisPlan:
    coord: str
    scheme: str
    nodes: int
    collapsed: bool


@dataclass
class QuadratureRule:
    """Tensor-product nodes in chart coordinates with coordinate weights.

    The weights integrate against ``dx``; callers multiply the integrand by
    ``sqrt(det g)`` at the nodes.  ``collapsed`` axes carry a single node.
    """

    chart_name: str
    nodes: np.ndarray
    weights: np.ndarray
    axes: tuple[AxisPlan, ...]
    error_estimate: float | None = None

    def __len__(self):
        return len(self.weights)

    def reduce(self, values: np.ndarray) -> float:
        """Weighted sum with a fixed, batching-independent summation."""
        values = np.asarray(values, dtype=float)
        return math.fsum((self.weights * values).tolist())

    def reduce_many(self, values: np.ndarray) -> np.ndarray:
        """Column-wise :meth:`reduce` for values of shape ``(N, ...)``."""
        values = np.asarray(values, dtype=float)
        flat = values.reshape(len(self.weights), -1)
        prod = self.weights[:, None] * flat
        out = np.array([math.fsum(prod[:, j].tolist()) for j in range(flat.shape[1])])
        return out.reshape(values.shape[1:])


def collapsible_axes(chart: Chart, dependencies: Iterable[str]) -> set[int]:
    deps = set(chart.dependencies) | set(dependencies)
    out: set[int] = set()
    for kind, axes in chart.symmetry:
        if kind == "free":
            out |= {a for a in axes if chart.coords[a] not in deps}
        elif kind == "chain":
            last = max((i for i, a in enumerate(axes) if chart.coords[a] in deps), default=-1)
            out |= set(axes[last + 1:])
        else:
            raise GeometryError(f"unknown symmetry kind {kind!r}")
    return out


def build_rule(
    chart: Chart,
    dependencies: Iterable[str] = (),
    profile: str = "standard",
    collapse: bool = True,
    scale: float | None = None,
) -> QuadratureRule:
    """Quadrature for integrands depending on ``dependencies`` beyond the chart."""
    if chart.quadrature is None or chart.pointwise_only:
        raise QuadratureError(f"chart {chart.name} is pointwise only and cannot be integrated")
    factor = PROFILE_SCALE[profile] if scale is None else scale
    dependencies = set(dependencies)
    unknown = dependencies - set(chart.coords)
    if unknown:
        raise QuadratureError(f"integrand depends on non-coordinates {sorted(unknown)}")
    skip = collapsible_axes(chart, dependencies) if collapse else set()
    env = chart.param_map
    xs, ws, plans = [], [], []
    for a, (rule, (lo, hi)) in enumerate(zip(chart.quadrature, chart.domain)):
        count = max(2, int(round(rule.nodes * factor)))
        x, w = _axis_nodes(rule, lo, hi, count)
        if a in skip:
            dens = _density_values(rule.density, chart.coords[a], x, env)
            mid = 0.5 * (lo + hi)
            d_mid = _density_values(rule.density, chart.coords[a], np.array([mid]), env)[0]
            if d_mid == 0:
                raise QuadratureError(f"axis {chart.coords[a]} density vanishes at its midpoint")
            total = math.fsum((w * dens).tolist())
            x, w = np.array([mid]), np.array([total / d_mid])
        xs.append(x)
        ws.append(w)
        plans.append(AxisPlan(chart.coords[a], rule.scheme, len(x), a in skip))
    grid = np.stack(np.meshgrid(*xs, indexing="ij"), axis=-1).reshape(-1, chart.n)
    wts = np.ones(1)
    for w in ws:
        wts = np.multiply.outer(wts, w).ravel()
    return QuadratureRule(chart.name, grid, wts, tuple(plans))


def _density_values(e: Expr, coord: str, x: np.ndarray, env) -> np.ndarray:
    extra = free_symbols(e) - {coord} - set(env)
    if extra:
        raise QuadratureError(f"axis density depends on {sorted(extra)}")
    return np.array([evaluate(e, dict(env, **{coord: float(v)})) for v in x])


def sqrt_det(chart: Chart, points: np.ndarray) -> np.ndarray:
    g = chart.metric_values(points)
    return np.sqrt(np.linalg.det(g))


def integrate(
    chart: Chart,
    field: Expr | Callable[[np.ndarray], np.ndarray] | float,
    profile: str = "standard",
    dependencies: Iterable[str] | None = None,
    tol: float = 1e-6,
    check: bool = True,
) -> tuple[float, float]:
    """``int field dvol`` and the relative change under one node doubling.

    ``field`` is an expression in the chart coordinates or a callable on node
    arrays of shape ``(N, n)``; callables must name their ``dependencies``.
    """
    if isinstance(field, (int, float)):
        field = as_expr(field)
    if isinstance(field, Expr):
        deps = free_symbols(field) & set(chart.coords)
        expr = field

        def fn(pts):
            env = chart.param_map
            return np.array(
                [evaluate(expr, dict(env, **dict(zip(chart.coords, p)))) for p in pts]
            )
    else:
        deps = set(dependencies or chart.coords)
        fn = field

    def run(scale):
        rule = build_rule(chart, deps, profile, scale=scale * PROFILE_SCALE[profile])
        vals = fn(rule.nodes) * sqrt_det(chart, rule.nodes)
        return rule.reduce(vals), rule.reduce(np.abs(vals))

    value, mag = run(1.0)
    fine, _ = run(2.0)
    err = abs(fine - value) / max(abs(fine), mag, 1e-300)
    if check and err > tol:
        raise QuadratureError(
            f"quadrature on {chart.name} did not converge: doubling changed the result by {err:.2e}"
        )
    return fine, err


def volume(chart: Chart, profile: str = "standard") -> float:
    return integrate(chart, Const(1), profile)[0]


# ---------------------------------------------------------------------- Fourier

def _canonical(k) -> tuple[tuple[int, ...], int]:
    """Canonical representative of +-k and the sign needed to reach it."""
    k = tuple(int(v) for v in k)
    for v in k:
        if v != 0:
            return (k, 1) if v > 0 else (tuple(-x for x in k), -1)
    return k, 1


@dataclass(frozen=True)
class FourierMode:
    k: tuple[int, ...]
    cos: np.ndarray  # amplitude of cos(k.x)
    sin: np.ndarray  # amplitude of sin(k.x)


@dataclass(frozen=True)
class FourierTensorField:
    """A finite trigonometric field on the flat torus ``(R / 2 pi Z)^n``.

    Amplitudes are ``(n, n)`` symmetric matrices for 2-tensors and shape
    ``()`` arrays for scalars.  Frequencies are stored canonically (first
    nonzero entry positive) and merged.
    """

    n: int
    modes: tuple[FourierMode, ...]
    rank: int = 2

    @classmethod
    def build(cls, n: int, terms, rank: int = 2) -> "FourierTensorField":
        """``terms``: iterable of ``(k, cos_amp, sin_amp)``."""
        acc: dict[tuple[int, ...], list[np.ndarray]] = {}
        shape = (n, n) if rank == 2 else ()
        for k, ca, sa in terms:
            if len(k) != n:
                raise ValueError("frequency has the wrong length")
            kc, sign = _canonical(k)
            ca = np.zeros(shape) if ca is None else np.asarray(ca, dtype=float)
            sa = np.zeros(shape) if sa is None else np.asarray(sa, dtype=float)
            if rank == 2 and (not np.allclose(ca, ca.T, atol=0) or not np.allclose(sa, sa.T, atol=0)):
                raise ValueError("tensor amplitudes must be symmetric")
            if rank == 2:
                ca, sa = 0.5 * (ca + ca.T), 0.5 * (sa + sa.T)
            slot = acc.setdefault(kc, [np.zeros(shape), np.zeros(shape)])
            slot[0] = slot[0] + ca
            slot[1] = slot[1] + sign * sa
        modes = []
        for kc in sorted(acc):
            ca, sa = acc[kc]
            if not any(kc):
                sa = np.zeros(shape)  # sin(0) vanishes
            if np.any(ca) or np.any(sa):
                modes.append(FourierMode(kc, ca, sa))
        return cls(n, tuple(modes), rank)

    @classmethod
    def scalar(cls, n: int, terms) -> "FourierTensorField":
        return cls.build(n, terms, rank=0)

    # ---- algebra
    def __add__(self, other: "FourierTensorField") -> "FourierTensorField":
        return FourierTensorField.build(
            self.n,
            [(m.k, m.cos, m.sin) for m in self.modes + other.modes],
            self.rank,
        )

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "FourierTensorField":
        return FourierTensorField(
            self.n, tuple(FourierMode(m.k, c * m.cos, c * m.sin) for m in self.modes), self.rank
        )

    def trace(self) -> "FourierTensorField":
        if self.rank != 2:
            raise ValueError("trace needs a 2-tensor")
        return FourierTensorField.scalar(
            self.n, [(m.k, np.trace(m.cos), np.trace(m.sin)) for m in self.modes]
        )

    def divergence_modes(self):
        """Per-mode ``k_i h_ij`` for the cosine and sine parts."""
        out = []
        for m in self.modes:
            k = np.array(m.k, dtype=float)
            out.append((m.k, k @ m.cos, k @ m.sin))
        return out

    def is_divergence_free(self) -> bool:
        return all(not np.any(a) and not np.any(b) for _, a, b in self.divergence_modes())

    def max_divergence(self) -> float:
        vals = [np.abs(a).max(initial=0) for _, a, _ in self.divergence_modes()]
        vals += [np.abs(b).max(initial=0) for _, _, b in self.divergence_modes()]
        return max(vals, default=0.0)

    @property
    def volume(self) -> float:
        return (2 * math.pi) ** self.n

    def inner(self, other: "FourierTensorField") -> float:
        """``L^2`` inner product with the flat metric."""
        by_k = {m.k: m for m in other.modes}
        total = 0.0
        for m in self.modes:
            o = by_k.get(m.k)
            if o is None:
                continue
            if any(m.k):
                total += 0.5 * self.volume * (np.sum(m.cos * o.cos) + np.sum(m.sin * o.sin))
            else:
                total += self.volume * np.sum(m.cos * o.cos)
        return float(total)

    def sobolev(self, order: int) -> float:
        """``int |nabla^order h|^2 dvol``, exact per mode."""
        total = 0.0
        for m in self.modes:
            k2 = float(sum(v * v for v in m.k))
            if order == 0 and not any(m.k):
                total += self.volume * float(np.sum(m.cos**2))
            elif any(m.k):
                total += 0.5 * self.volume * k2**order * float(np.sum(m.cos**2) + np.sum(m.sin**2))
        return total

    def is_parallel(self) -> bool:
        return all(not any(m.k) for m in self.modes)

    # ---- conversion
    def phase(self, k, coords: Sequence[str]) -> Expr:
        out = Const(0)
        for kv, c in zip(k, coords):
            if kv:
                out = out + as_expr(int(kv)) * as_expr(c)
        return out

    def component_expr(self, coords: Sequence[str], i: int | None = None, j: int | None = None) -> Expr:
        from .dsl.expr import func

        out: Expr = Const(0)
        for m in self.modes:
            ca = m.cos if self.rank == 0 else m.cos[i, j]
            sa = m.sin if self.rank == 0 else m.sin[i, j]
            ph = self.phase(m.k, coords)
            if any(m.k):
                if ca:
                    out = out + as_expr(float(ca)) * func("cos", ph)
                if sa:
                    out = out + as_expr(float(sa)) * func("sin", ph)
            elif ca:
                out = out + as_expr(float(ca))
        return out

    def to_expr(self, coords: Sequence[str]):
        """Scalar ``Expr`` or an ``n x n`` tuple of component ``Expr``."""
        if self.rank == 0:
            return self.component_expr(coords)
        return tuple(
            tuple(self.component_expr(coords, i, j) for j in range(self.n)) for i in range(self.n)
        )

    def active_axes(self) -> set[int]:
        return {a for m in self.modes for a, v in enumerate(m.k) if v}


def poisson_solve_torus(upsilon: FourierTensorField, n: int | None = None) -> FourierTensorField:
    """Mean-zero ``f`` with ``Delta f = -(Upsilon - mean) / (n - 1)``."""
    if upsilon.rank != 0:
        raise ValueError("poisson_solve_torus needs a scalar field")
    n = upsilon.n if n is None else n
    terms = []
    for m in upsilon.modes:
        if not any(m.k):
            continue
        k2 = float(sum(v * v for v in m.k))
        terms.append((m.k, m.cos / ((n - 1) * k2), m.sin / ((n - 1) * k2)))
    return FourierTensorField.scalar(upsilon.n, terms)


def e_map(upsilon: FourierTensorField, n: int | None = None) -> FourierTensorField:
    """``E(Upsilon) = nabla^2 f - (Delta f / n) g + (Upsilon / n) g``."""
    if upsilon.rank != 0:
        raise ValueError("e_map needs a scalar field")
    n = upsilon.n if n is None else n
    f = {m.k: m for m in poisson_solve_torus(upsilon, n).modes}
    eye = np.eye(upsilon.n)
    terms = []
    for m in upsilon.modes:
        k = np.array(m.k, dtype=float)
        k2 = float(k @ k)
        fm = f.get(m.k)
        fc = fm.cos if fm is not None else 0.0
        fs = fm.sin if fm is not None else 0.0
        # d_i d_j cos(k.x) = -k_i k_j cos(k.x); Delta cos = -|k|^2 cos
        hess = -np.outer(k, k)
        ca = hess * fc + (k2 * fc / n) * eye + (m.cos / n) * eye
        sa = hess * fs + (k2 * fs / n) * eye + (m.sin / n) * eye
        terms.append((m.k, ca, sa))
    return FourierTensorField.build(upsilon.n, terms)


def tt_project(h: FourierTensorField, tol: float = 1e-12) -> FourierTensorField:
    """Transverse-traceless part ``h - E(tr h)`` of a divergence-free field."""
    if h.max_divergence() > tol:
        raise ValueError("tt_project needs a divergence-free field")
    return h - e_map(h.trace(), h.n)


def tt_mode(n: int, k, seed: int = 0, amplitude: float = 1.0, sin: bool = False) -> FourierTensorField:
    """A random single-mode transverse-traceless field with frequency ``k``."""
    rng = np.random.default_rng(seed)
    k = np.array(k, dtype=float)
    if not k.any():
        raise ValueError("frequency must be nonzero")
    u = k / np.linalg.norm(k)
    proj = np.eye(n) - np.outer(u, u)
    a = rng.standard_normal((n, n))
    a = proj @ (a + a.T) @ proj
    a -= np.trace(a) / (n - 1) * proj
    a = amplitude * a / np.linalg.norm(a)
    zero = np.zeros((n, n))
    return FourierTensorField.build(n, [(tuple(int(v) for v in k), zero if sin else a, a if sin else zero)])
