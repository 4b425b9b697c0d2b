"""The ``cvi`` command line."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .. import __version__, catalog, deform, models, rigidity, spectra
from ..dsl.expr import parse_expr
from .manifest import ManifestError, load_chart_manifest
from .report import cone_csv, spectrum_csv
from .suites import GRID, PROFILES, SUITE_NAMES, run_suite


def _chart(spec: str):
    """A zoo name, a manifest path or ``generic:<n>[:<seed>]``."""
    if spec.startswith("generic:"):
        bits = spec.split(":")[1:]
        n = int(bits[0])
        seed = int(bits[1]) if len(bits) > 1 else 0
        return models.generic_metric(n, seed=seed, coords_used=min(n, 3))
    zoo = models.zoo()
    if spec in zoo:
        return zoo[spec]
    path = Path(spec)
    if path.exists():
        return load_chart_manifest(path)
    raise SystemExit(f"cvi: unknown chart {spec!r}; use a zoo name ({', '.join(zoo)}), "
                     "a manifest path or generic:<n>[:<seed>]")


def _points(chart, text: str | None, count: int, seed: int) -> np.ndarray:
    if text is None:
        return chart.sample_points(count, seed=seed)
    rows = []
    for chunk in text.split(";"):
        vals = [float(v) for v in chunk.split(",")]
        if len(vals) != chart.n:
            raise SystemExit(f"cvi: a point needs {chart.n} coordinates, got {len(vals)}")
        rows.append(vals)
    return np.array(rows)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _json(obj) -> str:
    def default(x):
        if isinstance(x, Fraction):
            return str(x)
        if isinstance(x, np.ndarray):
            return x.tolist()
        if isinstance(x, np.generic):
            return x.item()
        raise TypeError(type(x))

    return json.dumps(obj, indent=2, default=default) + "\n"


# ---------------------------------------------------------------- commands

def cmd_catalog(args) -> int:
    rows = catalog.catalog_table()
    if args.json:
        _emit(_json(rows), args.out)
        return 0
    lines = [f"{'id':8} {'weight':>6} {'min_dim':>7} {'order':>5}  description"]
    for r in rows:
        lines.append(f"{r['id']:8} {r['weight']:>6} {r['min_dim']:>7} {r['order']:>5}  {r['description']}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_eval(args) -> int:
    chart = _chart(args.chart)
    pts = _points(chart, args.point, args.count, args.seed)
    vals = catalog.eval_many(args.id, chart, pts)
    out = {"chart": chart.name, "points": pts, "values": {k: np.atleast_1d(v) for k, v in vals.items()}}
    _emit(_json(out), args.out)
    return 0


def cmd_linearize(args) -> int:
    chart = _chart(args.chart)
    pts = _points(chart, args.point, args.count, args.seed)
    ups = parse_expr(args.upsilon, list(chart.coords) + list(chart.param_map))
    d = deform.d_dt_invariant(args.id, deform.MetricFamily.conformal(chart, ups), pts, order=2 if args.second else 1)
    out = {"chart": chart.name, "id": args.id, "upsilon": args.upsilon, "points": pts,
           "value": np.atleast_1d(d.value), "first": np.atleast_1d(d.first)}
    if args.second:
        out["second"] = np.atleast_1d(d.second)
    _emit(_json(out), args.out)
    return 0


def _run_suites(names, args) -> list:
    reports = []
    for name in names:
        rep = run_suite(name, args.profile, args.seed, args.tol_scale)
        reports.append(rep)
        for line in rep.summary_lines():
            print(line, file=sys.stderr if args.out is None and args.json else sys.stdout)
    return reports


def _resolve(names) -> list[str]:
    if not names or names == ["all"]:
        return list(SUITE_NAMES)
    bad = [n for n in names if n not in SUITE_NAMES]
    if bad:
        raise SystemExit(f"cvi: unknown suite(s) {', '.join(bad)}; choose from {', '.join(SUITE_NAMES)}")
    return names


def cmd_verify(args) -> int:
    names = _resolve(args.suite)
    reports = _run_suites(names, args)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for rep in reports:
            (out / f"{rep.suite}.json").write_text(rep.to_json(args.timing))
    elif args.json:
        sys.stdout.write("".join(r.to_json(args.timing) for r in reports))
    flagged = [(r.suite, c.case_id) for r in reports for c in r.flagged]
    if flagged:
        print("flagged discrepancies:")
        for suite, case in flagged:
            print(f"  {suite}: {case}")
    return 0 if all(r.passed for r in reports) else 1


def cmd_report(args) -> int:
    args.json = False
    names = _resolve(args.suite)
    out = Path(args.out or "cvi-report")
    out.mkdir(parents=True, exist_ok=True)
    args.out = str(out)
    reports = _run_suites(names, args)
    for rep in reports:
        (out / f"{rep.suite}.json").write_text(rep.to_json(args.timing))
    summary = {
        "version": __version__,
        "profile": args.profile,
        "seed": args.seed,
        "suites": {r.suite: ("pass" if r.passed else "fail") for r in reports},
        "flagged": [{"suite": r.suite, "case": c.case_id} for r in reports for c in r.flagged],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "spectrum_Q4_S4.csv").write_text(spectrum_csv(spectra.sphere_spectrum_table("Q4", 4, 1, 20)))
    rows = [(float(v.alpha), float(v.beta), v.E, v.V, v.SV) for v in
            (spectra.cone_classify(a, b, 4) for a in GRID for b in GRID)]
    (out / "cone_n4.csv").write_text(cone_csv(rows))
    print(f"reports written to {out}")
    return 0 if all(r.passed for r in reports) else 1


def cmd_spectrum(args) -> int:
    radius = Fraction(args.radius) if args.radius is not None else 1
    table = spectra.sphere_spectrum_table(args.id, args.n, radius, args.k_max)
    if args.verdict:
        v = spectra.stability_verdict(args.id, args.n, radius, args.k_max)
        _emit(_json(v.as_dict()), args.out)
        return 0
    _emit(spectrum_csv(table), args.out)
    return 0


def cmd_cone(args) -> int:
    if args.alpha is not None and args.beta is not None:
        v = spectra.cone_classify(Fraction(args.alpha), Fraction(args.beta), args.n)
        _emit(_json(v.as_dict()), args.out)
        return 0
    steps = args.grid
    vals = [Fraction(2 * i - (steps - 1), steps - 1) for i in range(steps)]
    rows = []
    for a in vals:
        for b in vals:
            v = spectra.cone_classify(a, b, args.n)
            rows.append((float(a), float(b), v.E, v.V, v.SV))
    _emit(cone_csv(rows), args.out)
    return 0


def cmd_rigidity(args) -> int:
    fit = rigidity.fit_AB(args.id, args.n, args.profile, seed=args.seed)
    _emit(_json(fit.as_dict()), args.out)
    return 0


# ---------------------------------------------------------------- parser

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the flags without defaults so they never mask a value given earlier
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", choices=PROFILES, default=d("standard"), help="quadrature and sample budget")
    common.add_argument("--seed", type=int, default=d(0), help="seed for sample points and generic metrics")
    common.add_argument("--tol-scale", type=float, default=d(1.0), help="multiply every tolerance by this factor")
    common.add_argument("--out", default=d(None), help="output file (or directory for verify and report)")
    return common


def build_parser() -> argparse.ArgumentParser:
    top, common = _global_flags(False), _global_flags(True)
    p = argparse.ArgumentParser(prog="cvi", description="Conformally variational invariants laboratory.",
                                parents=[top])
    p.add_argument("--version", action="version", version=f"cvi {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("catalog", parents=[common], help="list the invariant catalog")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_catalog)

    s = sub.add_parser("eval", parents=[common], help="evaluate invariants on a chart")
    s.add_argument("id", nargs="+")
    s.add_argument("--chart", default="sphere4", help="zoo name, manifest path or generic:<n>[:<seed>]")
    s.add_argument("--point", help="comma-separated coordinates; separate points with ';'")
    s.add_argument("--count", type=int, default=3, help="random points when --point is absent")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("linearize", parents=[common], help="conformal variation of an invariant")
    s.add_argument("id")
    s.add_argument("--chart", default="sphere4")
    s.add_argument("--upsilon", required=True, help="conformal direction in the chart coordinates")
    s.add_argument("--point")
    s.add_argument("--count", type=int, default=3)
    s.add_argument("--second", action="store_true", help="also report the second variation")
    s.set_defaults(func=cmd_linearize)

    s = sub.add_parser("verify", parents=[common], help="run verification suites")
    s.add_argument("suite", nargs="*", help=f"suite names or 'all' ({', '.join(SUITE_NAMES)})")
    s.add_argument("--json", action="store_true", help="print reports as JSON")
    s.add_argument("--timing", action="store_true", help="include wall times in reports")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("spectrum", parents=[common], help="sphere spectrum of an Einstein operator")
    s.add_argument("--id", default="Q4")
    s.add_argument("--n", type=int, default=4)
    s.add_argument("--radius", default=None, help="sphere radius (rational)")
    s.add_argument("--k-max", type=int, default=20)
    s.add_argument("--verdict", action="store_true", help="print the stability verdict instead")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("cone", parents=[common], help="weight -4 cone membership")
    s.add_argument("--n", type=int, default=4)
    s.add_argument("--alpha")
    s.add_argument("--beta")
    s.add_argument("--grid", type=int, default=21, help="grid size on [-1, 1]^2")
    s.set_defaults(func=cmd_cone)

    s = sub.add_parser("rigidity", parents=[common], help="flat-metric second variation fit")
    s.add_argument("--id", default="R")
    s.add_argument("--n", type=int, default=4)
    s.set_defaults(func=cmd_rigidity)

    s = sub.add_parser("report", parents=[common], help="run suites and write reports and plot data")
    s.add_argument("suite", nargs="*")
    s.add_argument("--timing", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (catalog.UnknownInvariantError, spectra.UnsupportedInvariantError, ManifestError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"cvi: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
