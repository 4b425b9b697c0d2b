"""Line-oriented chart manifests.

A manifest is plain text, one declaration per line, ``#`` starting a comment::

    name = S4(r=1)
    dim = 4
    coords = th1, th2, th3, ph
    param nu = 0.28170
    g[1][1] = 1
    g[2][2] = sin(th1)^2
    domain th1 = 0 .. 3.141592653589793
    periodic ph = 0 .. 6.283185307179586
    quadrature = gauss:24 x gauss:24 x gauss:24 x trapezoid:24
    density th1 = sin(th1)^3
    symmetry chain = th1, th2, th3, ph
    deps = none
    margin th1 = 0.1
    pointwise_only = true

Unlisted metric entries are zero.  Only ``g[i][j]`` with ``i <= j`` is
required; a lower entry that is given must agree with its mirror.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

from ..dsl.expr import ZERO, Const, ExprError, parse_expr, to_text
from ..geometry import AxisRule, Chart, GeometryError, SingularMetricError

__all__ = [
    "ManifestError",
    "ManifestParseError",
    "ManifestValidationError",
    "load_chart_manifest",
    "parse_chart_manifest",
    "dump_chart_manifest",
    "data_dir",
    "zoo_manifest_path",
]


class ManifestError(Exception):
    pass


class ManifestParseError(ManifestError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ManifestValidationError(ManifestError):
    """``invariant`` names the failed check: symmetry, positivity, periodicity or structure."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


_KEY = re.compile(r"^(param|domain|periodic|density|margin|symmetry)\s+(\w+)\s*=\s*(.*)$")
_METRIC = re.compile(r"^g\[(\d+)\]\[(\d+)\]\s*=\s*(.*)$")
_PLAIN = re.compile(r"^(\w+)\s*=\s*(.*)$")


def data_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "data"


def zoo_manifest_path(name: str) -> Path:
    return data_dir() / f"{name}.chart"


def _float(text: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ManifestParseError(line, f"expected a number, got {text!r}") from None


def _interval(text: str, line: int) -> tuple[float, float]:
    parts = text.split("..")
    if len(parts) != 2:
        raise ManifestParseError(line, f"expected 'lo .. hi', got {text!r}")
    lo, hi = (_float(p.strip(), line) for p in parts)
    if not lo < hi:
        raise ManifestParseError(line, "interval must satisfy lo < hi")
    return lo, hi


def _bool(text: str, line: int) -> bool:
    if text in ("true", "false"):
        return text == "true"
    raise ManifestParseError(line, f"expected true or false, got {text!r}")


def parse_chart_manifest(text: str, validate: bool = True) -> Chart:
    """Build a chart from manifest text; see the module docstring for the grammar."""
    fields: dict = {}
    params: dict[str, float] = {}
    entries: dict[tuple[int, int], tuple[str, int]] = {}
    intervals: dict[str, tuple[tuple[float, float], bool, int]] = {}
    densities: dict[str, tuple[str, int]] = {}
    margins: dict[str, float] = {}
    symmetry: list[tuple[str, list[str], int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _METRIC.match(line)
        if m:
            key = (int(m.group(1)), int(m.group(2)))
            if key in entries:
                raise ManifestParseError(lineno, f"g[{key[0]}][{key[1]}] given twice")
            entries[key] = (m.group(3).strip(), lineno)
            continue
        m = _KEY.match(line)
        if m:
            kind, name, value = m.group(1), m.group(2), m.group(3).strip()
            if kind == "param":
                params[name] = _float(value, lineno)
            elif kind in ("domain", "periodic"):
                if name in intervals:
                    raise ManifestParseError(lineno, f"interval for {name!r} given twice")
                intervals[name] = (_interval(value, lineno), kind == "periodic", lineno)
            elif kind == "density":
                densities[name] = (value, lineno)
            elif kind == "margin":
                margins[name] = _float(value, lineno)
            else:
                axes = [a.strip() for a in value.split(",") if a.strip()]
                if name not in ("free", "chain") or not axes:
                    raise ManifestParseError(lineno, f"bad symmetry declaration {line!r}")
                symmetry.append((name, axes, lineno))
            continue
        m = _PLAIN.match(line)
        if not m:
            raise ManifestParseError(lineno, f"cannot parse {line!r}")
        key, value = m.group(1), m.group(2).strip()
        if key in fields:
            raise ManifestParseError(lineno, f"{key!r} given twice")
        if key == "name":
            fields[key] = value
        elif key == "dim":
            try:
                fields[key] = int(value)
            except ValueError:
                raise ManifestParseError(lineno, f"dim must be an integer, got {value!r}") from None
        elif key == "coords":
            coords = tuple(c.strip() for c in value.split(","))
            if any(not re.fullmatch(r"[A-Za-z_]\w*", c) for c in coords):
                raise ManifestParseError(lineno, f"bad coordinate list {value!r}")
            fields[key] = (coords, lineno)
        elif key == "quadrature":
            rules = []
            for part in value.split(" x "):
                bits = part.strip().split(":")
                if len(bits) != 2 or bits[0] not in ("gauss", "trapezoid") or not bits[1].isdigit():
                    raise ManifestParseError(lineno, f"bad quadrature rule {part.strip()!r}")
                rules.append((bits[0], int(bits[1])))
            fields[key] = (rules, lineno)
        elif key == "deps":
            fields[key] = None if value == "all" else (
                frozenset() if value == "none" else frozenset(v.strip() for v in value.split(","))
            )
        elif key == "pointwise_only":
            fields[key] = _bool(value, lineno)
        else:
            raise ManifestParseError(lineno, f"unknown key {key!r}")

    if "coords" not in fields:
        raise ManifestParseError(len(text.splitlines()) + 1, "missing 'coords'")
    coords, cline = fields["coords"]
    n = len(coords)
    if fields.get("dim", n) != n:
        raise ManifestParseError(cline, f"dim = {fields['dim']} but {n} coordinates given")
    declared = list(coords) + list(params)

    def expr(src: str, lineno: int):
        try:
            return parse_expr(src, declared)
        except ExprError as exc:
            raise ManifestParseError(lineno, str(exc)) from None

    metric = [[ZERO] * n for _ in range(n)]
    given = [[False] * n for _ in range(n)]
    for (i, j), (src, lineno) in sorted(entries.items()):
        if not (1 <= i <= n and 1 <= j <= n):
            raise ManifestParseError(lineno, f"index g[{i}][{j}] outside 1..{n}")
        metric[i - 1][j - 1] = expr(src, lineno)
        given[i - 1][j - 1] = True
    for i in range(n):
        for j in range(i + 1, n):
            if given[i][j] and given[j][i]:
                if metric[i][j] != metric[j][i]:
                    raise ManifestValidationError(
                        "symmetry", f"g[{i + 1}][{j + 1}] != g[{j + 1}][{i + 1}]"
                    )
            elif given[j][i]:
                metric[i][j] = metric[j][i]
            else:
                metric[j][i] = metric[i][j]

    domain, periodic = [], []
    for c in coords:
        if c not in intervals:
            raise ManifestValidationError("structure", f"no domain or periodic line for {c!r}")
        (lo, hi), per, _ = intervals[c]
        domain.append((lo, hi))
        periodic.append(per)
    for name, (_, _, lineno) in intervals.items():
        if name not in coords:
            raise ManifestParseError(lineno, f"interval for undeclared coordinate {name!r}")

    quadrature = None
    if "quadrature" in fields:
        rules, qline = fields["quadrature"]
        if len(rules) != n:
            raise ManifestParseError(qline, f"quadrature lists {len(rules)} rules for {n} axes")
        quad = []
        for c, (scheme, nodes) in zip(coords, rules):
            dens = Const(1)
            if c in densities:
                dens = expr(*densities[c])
            quad.append(AxisRule(scheme, nodes, dens))
        quadrature = tuple(quad)
    elif densities:
        raise ManifestParseError(next(iter(densities.values()))[1], "density without quadrature")

    sym = []
    for kind, axes, lineno in symmetry:
        try:
            sym.append((kind, tuple(coords.index(a) for a in axes)))
        except ValueError:
            raise ManifestParseError(lineno, f"symmetry names unknown axes {axes}") from None

    deps = fields.get("deps")
    if deps is not None and not deps <= set(coords):
        raise ManifestValidationError("structure", f"deps {sorted(deps - set(coords))} are not coordinates")
    margin_tuple = tuple(margins.get(c, 0.0) for c in coords) if margins else None

    try:
        chart = Chart(
            name=fields.get("name", "manifest"),
            coords=coords,
            metric=tuple(tuple(r) for r in metric),
            domain=tuple(domain),
            periodic=tuple(periodic),
            quadrature=quadrature,
            params=tuple(sorted(params.items())),
            symmetry=tuple(sym),
            deps=deps,
            pointwise_only=fields.get("pointwise_only", False),
            margins=margin_tuple,
        )
    except GeometryError as exc:
        kind = "symmetry" if "symmetric" in str(exc) else "structure"
        raise ManifestValidationError(kind, str(exc)) from None
    if validate:
        _validate(chart)
    return chart


def _validate(chart: Chart) -> None:
    from ..models import _check_positive

    for c, (lo, hi), per in zip(chart.coords, chart.domain, chart.periodic):
        if per and not math.isfinite(hi - lo):
            raise ManifestValidationError("periodicity", f"period of {c!r} is not finite")
    periodic_axes = [i for i, p in enumerate(chart.periodic) if p]
    if periodic_axes:
        # components must agree at both ends of every periodic axis
        pts = chart.sample_points(16, seed=1)
        for i in periodic_axes:
            lo, hi = chart.domain[i]
            a, b = pts.copy(), pts.copy()
            a[:, i], b[:, i] = lo, hi
            ga, gb = chart.metric_values(a), chart.metric_values(b)
            scale = max(1.0, float(abs(ga).max()))
            if float(abs(ga - gb).max()) > 1e-9 * scale:
                raise ManifestValidationError(
                    "periodicity", f"metric is not periodic along {chart.coords[i]!r}"
                )
    try:
        _check_positive(chart, 0.0)
    except SingularMetricError as exc:
        raise ManifestValidationError("positivity", str(exc)) from None
    except (ZeroDivisionError, FloatingPointError, ValueError) as exc:
        raise ManifestValidationError("positivity", f"metric could not be evaluated: {exc}") from None


def load_chart_manifest(path) -> Chart:
    return parse_chart_manifest(Path(path).read_text())


def _num_text(x: float) -> str:
    return repr(float(x))


def dump_chart_manifest(chart: Chart) -> str:
    """Serialize ``chart`` so that :func:`parse_chart_manifest` rebuilds it exactly."""
    n = chart.n
    lines = [f"name = {chart.name}", f"dim = {n}", "coords = " + ", ".join(chart.coords)]
    for p, v in chart.params:
        lines.append(f"param {p} = {_num_text(v)}")
    for i in range(n):
        for j in range(i, n):
            e = chart.metric[i][j]
            if e != ZERO:
                lines.append(f"g[{i + 1}][{j + 1}] = {to_text(e)}")
    for c, (lo, hi), per in zip(chart.coords, chart.domain, chart.periodic):
        kind = "periodic" if per else "domain"
        lines.append(f"{kind} {c} = {_num_text(lo)} .. {_num_text(hi)}")
    if chart.quadrature is not None:
        lines.append("quadrature = " + " x ".join(f"{r.scheme}:{r.nodes}" for r in chart.quadrature))
        for c, r in zip(chart.coords, chart.quadrature):
            if r.density != Const(1):
                lines.append(f"density {c} = {to_text(r.density)}")
    for kind, axes in chart.symmetry:
        lines.append(f"symmetry {kind} = " + ", ".join(chart.coords[a] for a in axes))
    if chart.deps is not None:
        deps = [c for c in chart.coords if c in chart.deps]
        lines.append("deps = " + (", ".join(deps) if deps else "none"))
    if chart.margins is not None:
        for c, m in zip(chart.coords, chart.margins):
            if m:
                lines.append(f"margin {c} = {_num_text(m)}")
    if chart.pointwise_only:
        lines.append("pointwise_only = true")
    return "\n".join(lines) + "\n"
