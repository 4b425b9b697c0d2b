"""The model zoo: round spheres, flat tori, products, perturbations, Page."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dsl.expr import ZERO, Const, Expr, as_expr, evaluate, free_symbols, func, parse_expr
from .geometry import AxisRule, Chart, DimensionError, GeometryError, SingularMetricError

TWO_PI = 2 * math.pi
POLE_MARGIN = 0.1


def _diag(entries) -> tuple[tuple[Expr, ...], ...]:
    n = len(entries)
    return tuple(tuple(entries[i] if i == j else ZERO for j in range(n)) for i in range(n))


def _num(x: float) -> Expr:
    return as_expr(float(x))


def sphere_coords(n: int, prefix: str = "") -> tuple[str, ...]:
    return tuple(f"{prefix}th{i}" for i in range(1, n)) + (f"{prefix}ph",)


def round_sphere(n: int, radius: float = 1.0, nodes: int = 24, prefix: str = "") -> Chart:
    """Unit-normalized polar chart ``radius^2 (dth1^2 + sin^2 th1 (dth2^2 + ...))``."""
    if not 2 <= n <= 7:
        raise DimensionError("round_sphere supports 2 <= n <= 7")
    if radius <= 0:
        raise GeometryError("radius must be positive")
    coords = sphere_coords(n, prefix)
    r2 = _num(radius**2)
    entries, factor = [], Const(1)
    for c in coords:
        entries.append(r2 * factor)
        factor = factor * func("sin", as_expr(c)) ** 2
    quad = []
    for a, c in enumerate(coords):
        if a < n - 1:
            p = n - 1 - a
            dens = func("sin", as_expr(c)) ** p
            if a == 0:
                dens = _num(radius**n) * dens
            quad.append(AxisRule("gauss", nodes, dens))
        else:
            quad.append(AxisRule("trapezoid", nodes))
    domain = tuple((0.0, math.pi) for _ in range(n - 1)) + ((0.0, TWO_PI),)
    return Chart(
        name=f"S{n}(r={radius:g})",
        coords=coords,
        metric=_diag(entries),
        domain=domain,
        periodic=(False,) * (n - 1) + (True,),
        quadrature=tuple(quad),
        symmetry=(("chain", tuple(range(n))),),
        deps=frozenset(),
        margins=(POLE_MARGIN,) * (n - 1) + (0.0,),
    )


def default_torus_nodes(n: int) -> int:
    # integrals usually collapse all but two or three axes, so the per-axis count can stay high
    return 20


def flat_torus(n: int, periods=None, nodes: int | None = None, prefix: str = "x") -> Chart:
    if not 2 <= n <= 8:
        raise DimensionError("flat_torus supports 2 <= n <= 8")
    periods = [TWO_PI] * n if periods is None else list(periods)
    if len(periods) != n or any(p <= 0 for p in periods):
        raise GeometryError("periods must be positive, one per axis")
    nodes = default_torus_nodes(n) if nodes is None else nodes
    coords = tuple(f"{prefix}{i}" for i in range(1, n + 1))
    return Chart(
        name=f"T{n}",
        coords=coords,
        metric=_diag([Const(1)] * n),
        domain=tuple((0.0, float(p)) for p in periods),
        periodic=(True,) * n,
        quadrature=tuple(AxisRule("trapezoid", nodes) for _ in range(n)),
        symmetry=(("free", tuple(range(n))),),
        deps=frozenset(),
    )


def product(a: Chart, b: Chart, max_dim: int = 8) -> Chart:
    n = a.n + b.n
    if n > max_dim:
        raise DimensionError(f"product dimension {n} exceeds {max_dim}")
    clash = set(a.coords) & set(b.coords)
    if clash:
        raise GeometryError(f"product factors share coordinates {sorted(clash)}; use prefixes")
    metric = [[ZERO] * n for _ in range(n)]
    for i in range(a.n):
        for j in range(a.n):
            metric[i][j] = a.metric[i][j]
    for i in range(b.n):
        for j in range(b.n):
            metric[a.n + i][a.n + j] = b.metric[i][j]
    quad = None
    if a.quadrature is not None and b.quadrature is not None:
        quad = a.quadrature + b.quadrature
    shift = tuple((kind, tuple(x + a.n for x in axes)) for kind, axes in b.symmetry)
    deps = None
    if a.deps is not None and b.deps is not None:
        deps = a.deps | b.deps
    margins = tuple(a.margins or (0.0,) * a.n) + tuple(b.margins or (0.0,) * b.n)
    params = dict(a.params)
    params.update(dict(b.params))
    return Chart(
        name=f"{a.name}x{b.name}",
        coords=a.coords + b.coords,
        metric=tuple(tuple(r) for r in metric),
        domain=a.domain + b.domain,
        periodic=a.periodic + b.periodic,
        quadrature=quad,
        params=tuple(sorted(params.items())),
        symmetry=a.symmetry + shift,
        deps=deps,
        pointwise_only=a.pointwise_only or b.pointwise_only,
        margins=margins,
    )


def conformal_perturb(chart: Chart, upsilon: Expr | str, check: bool = True) -> Chart:
    """The chart of ``exp(2 Upsilon) g``."""
    if isinstance(upsilon, str):
        upsilon = parse_expr(upsilon, chart.coords)
    extra = free_symbols(upsilon) - set(chart.coords) - set(chart.param_map)
    if extra:
        raise GeometryError(f"conformal factor uses undeclared symbols {sorted(extra)}")
    if upsilon == ZERO:
        return chart
    factor = func("exp", 2 * upsilon)
    metric = [[e if e == ZERO else factor * e for e in row] for row in chart.metric]
    deps = None if chart.deps is None else chart.deps | (free_symbols(upsilon) & set(chart.coords))
    out = chart.with_metric(metric, name=f"exp(2u){chart.name}", deps=deps)
    if check:
        _check_positive(out, 1e-8)
    return out


def _check_positive(chart: Chart, floor: float, points=None) -> float:
    if points is None:
        points = chart.sample_points(512, seed=0)
        if chart.closed:
            from .quad import build_rule

            # the metric only varies along its declared dependencies
            deps = chart.coords if chart.deps is None else chart.deps
            counts = [1 if chart.deps is not None and c not in deps else max(2, r.nodes // 2)
                      for c, r in zip(chart.coords, chart.quadrature)]
            if math.prod(counts) <= 8192:
                points = build_rule(chart, deps, "smoke").nodes
    eig = np.linalg.eigvalsh(chart.metric_values(points))
    if eig.min() <= floor:
        raise SingularMetricError(
            f"{chart.name}: metric eigenvalue {eig.min():.3g} is below {floor:g}"
        )
    return float(eig.min())


def generic_metric(
    n: int,
    seed: int = 0,
    eps: float = 0.05,
    coords_used: int | None = None,
    modes: int = 2,
    nodes: int | None = None,
) -> Chart:
    """Flat torus plus a seeded symmetric trigonometric perturbation.

    ``coords_used`` limits the perturbation to the first few coordinates so
    that integrals can collapse the remaining axes.
    """
    if eps > 0.1:
        raise GeometryError("generic_metric requires eps <= 0.1")
    base = flat_torus(n, nodes=nodes)
    m = n if coords_used is None else coords_used
    if not 1 <= m <= n:
        raise GeometryError("coords_used must lie in 1..n")
    rng = np.random.default_rng(seed)
    used = base.coords[:m]
    metric = [list(r) for r in base.metric]
    for i in range(n):
        for j in range(i, n):
            e: Expr = Const(1) if i == j else ZERO
            for _ in range(modes):
                k = rng.integers(-1, 2, size=m)
                if not k.any():
                    k[rng.integers(m)] = 1
                phase = sum((int(kv) * as_expr(c) for kv, c in zip(k, used) if kv), ZERO)
                a, b = rng.uniform(-1, 1, size=2)
                e = e + _num(eps * a) * func("cos", phase) + _num(eps * b) * func("sin", phase)
            metric[i][j] = metric[j][i] = e
    chart = base.with_metric(
        metric, name=f"generic(n={n},seed={seed},eps={eps:g})", deps=frozenset(used)
    )
    _check_positive(chart, 0.1)
    return chart


def sphere_harmonic(chart_or_n, k: int, prefix: str = "") -> Expr:
    """Zonal harmonic of degree ``k`` in ``x_1 = cos th1`` on the round sphere."""
    if isinstance(chart_or_n, Chart):
        n, c = chart_or_n.n, chart_or_n.coords[0]
    else:
        n, c = int(chart_or_n), sphere_coords(int(chart_or_n), prefix)[0]
    x = func("cos", as_expr(c))
    if k == 0:
        return Const(1)
    if k == 1:
        return x
    if k == 2:
        return x**2 - Const(1) / (n + 1)
    if k == 3:
        return x**3 - Const(3) / (n + 3) * x
    raise ValueError("zonal harmonics implemented for k <= 3")


# ---------------------------------------------------------------------- Page

def _page_nu(tol: float = 1e-13) -> float:
    f = lambda v: v**4 + 4 * v**3 - 6 * v**2 + 12 * v - 3  # noqa: E731
    df = lambda v: 4 * v**3 + 12 * v**2 - 12 * v + 12  # noqa: E731
    v = 0.28
    for _ in range(100):
        step = f(v) / df(v)
        v -= step
        if abs(step) < tol:
            break
    return v


@dataclass(frozen=True)
class PageParameters:
    nu: float
    c: float

    @classmethod
    def compute(cls) -> "PageParameters":
        nu = _page_nu()
        return cls(nu, 1.0 / (3 + 6 * nu**2 - nu**4))

    @property
    def quartic_residual(self) -> float:
        v = self.nu
        return abs(v**4 + 4 * v**3 - 6 * v**2 + 12 * v - 3)

    @property
    def env(self) -> dict[str, float]:
        return {"nu": self.nu, "c": self.c}

    @cached_property
    def beta2(self) -> Expr:
        return parse_expr(
            "c^2*(nu^2 - r^2)*(3 - nu^2 - (1 + nu^2)*r^2)/(1 - r^2)", ["r", "nu", "c"]
        )

    @cached_property
    def beta(self) -> Expr:
        return func("sqrt", self.beta2)

    @cached_property
    def alpha(self) -> Expr:
        return as_expr("c") / self.beta

    @cached_property
    def gamma2(self) -> Expr:
        return parse_expr("c*(1 - r^2)", ["r", "c"])

    @cached_property
    def gamma(self) -> Expr:
        return func("sqrt", self.gamma2)

    def values(self, r: float) -> dict[str, float]:
        env = dict(self.env, r=float(r))
        return {
            "alpha": evaluate(self.alpha, env),
            "beta": evaluate(self.beta, env),
            "gamma": evaluate(self.gamma, env),
        }

    @property
    def einstein_constant(self) -> float:
        return 3 * (1 + self.nu**2)


def page_metric(params: PageParameters | None = None) -> Chart:
    """The Page metric in coordinates ``(r, tau, rho, theta)``; pointwise only."""
    p = PageParameters.compute() if params is None else params
    s2 = func("sin", as_expr("rho") / 2) ** 2
    b2 = p.beta2
    metric = [[ZERO] * 4 for _ in range(4)]
    metric[0][0] = p.alpha**2
    metric[1][1] = b2
    metric[1][3] = metric[3][1] = Const(-4) * b2 * s2
    metric[2][2] = p.gamma2
    metric[3][3] = Const(16) * b2 * s2**2 + p.gamma2 * func("sin", as_expr("rho")) ** 2
    nu = p.nu
    return Chart(
        name="Page",
        coords=("r", "tau", "rho", "theta"),
        metric=tuple(tuple(r) for r in metric),
        domain=((0.05 * nu, 0.95 * nu), (0.0, TWO_PI), (0.1, math.pi - 0.1), (0.0, TWO_PI)),
        periodic=(False, True, False, True),
        params=tuple(sorted(p.env.items())),
        pointwise_only=True,
    )


def page_coframe(params: PageParameters, point) -> np.ndarray:
    """Rows are the coframe ``e^a_i`` at ``point = (r, tau, rho, theta)``."""
    r, _, rho, _ = point
    v = params.values(r)
    a, b, g = v["alpha"], v["beta"], v["gamma"]
    e = np.zeros((4, 4))
    e[0, 0] = a
    e[1, 1] = b
    e[1, 3] = -4 * b * math.sin(rho / 2) ** 2
    e[2, 2] = g
    e[3, 3] = g * math.sin(rho)
    return e


def page_sphere_product(params: PageParameters | None = None) -> Chart:
    """Page x S^2 with the sphere scaled so the product is Einstein."""
    p = PageParameters.compute() if params is None else params
    radius = 1.0 / math.sqrt(p.einstein_constant)
    return product(page_metric(p), round_sphere(2, radius, prefix="s"))


# ---------------------------------------------------------------------- zoo

def zoo(profile: str = "standard") -> dict[str, Chart]:
    """Named charts used by suites and shipped as manifests."""
    return {
        "sphere4": round_sphere(4),
        "sphere5": round_sphere(5),
        "sphere6": round_sphere(6),
        "torus4": flat_torus(4),
        "torus5": flat_torus(5),
        "torus6": flat_torus(6),
        "s2xs2": product(round_sphere(2, prefix="a"), round_sphere(2, prefix="b")),
        "s2xs2r2": product(round_sphere(2, prefix="a"), round_sphere(2, 2.0, prefix="b")),
        "t2xs2": product(flat_torus(2), round_sphere(2, prefix="s")),
        "page": page_metric(),
    }


def page_frame_weyl(point, params: PageParameters | None = None) -> np.ndarray:
    """Weyl tensor of the Page metric in the orthonormal frame ``(e0, e1, e2, e3)``."""
    from .geometry import curvature_frame

    p = PageParameters.compute() if params is None else params
    chart = page_metric(p)
    W = curvature_frame(chart, np.atleast_2d(point)).W.value[0]
    F = np.linalg.inv(page_coframe(p, point))  # columns are the dual frame vectors
    return np.einsum("ijkl,ia,jb,kc,ld->abcd", W, F, F, F, F)


def page_weyl_formula(r: float, params: PageParameters | None = None) -> dict[str, float]:
    """Closed-form ``W_0101`` and ``W_0123``; ``beta'`` comes from the jet of ``beta^2``.

    The plain keys hold the forms as usually quoted; the ``_corrected`` keys use
    ``(1 + nu^2)`` in place of ``(1 + nu)^2`` and ``gamma^-4`` in place of
    ``gamma^4``, which is what the curvature computation produces.
    """
    from .dsl.evaluate import expr_jet
    from .dsl.jet import jet_space

    p = PageParameters.compute() if params is None else params
    jb = expr_jet(p.beta2, jet_space(1, 1), {"r": (0, np.array([float(r)]))}, p.env)
    b2, db2 = float(jb.value[0]), float(jb.partial((1,))[0])
    beta = math.sqrt(b2)
    dbeta = db2 / (2 * beta)
    g2 = p.c * (1 - r * r)
    inner = g2 * beta * dbeta / p.c + r * b2
    return {
        "W0101": g2**-2 * (g2 - (1 + p.nu) ** 2 * g2**2 - (3 + r * r) * b2),
        "W0123": 2 * g2**2 * inner,
        # readings that match the computed frame components
        "W0101_corrected": g2**-2 * (g2 - (1 + p.nu**2) * g2**2 - (3 + r * r) * b2),
        "W0123_corrected": 2 * g2**-2 * inner,
    }
