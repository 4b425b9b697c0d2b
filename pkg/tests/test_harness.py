"""Chart manifests, suite reports and the command line."""

import json

import numpy as np
import pytest

from cvilab import catalog, models
from cvilab.harness import (
    SUITE_NAMES,
    CaseRecord,
    ManifestParseError,
    ManifestValidationError,
    SuiteReport,
    UnknownSuiteError,
    cone_csv,
    dump_chart_manifest,
    load_chart_manifest,
    parse_chart_manifest,
    run_suite,
    spectrum_csv,
)
from cvilab.harness.cli import main
from cvilab.harness.manifest import zoo_manifest_path
from cvilab.harness.suites import list_cases
from cvilab import spectra

ZOO = models.zoo()


@pytest.mark.parametrize("name", sorted(ZOO))
def test_shipped_manifests_round_trip(name):
    chart = ZOO[name]
    loaded = load_chart_manifest(zoo_manifest_path(name))
    assert loaded == chart
    assert parse_chart_manifest(dump_chart_manifest(loaded)) == chart
    pts = chart.sample_points(3, seed=7)
    for id in ("J", "W2") if chart.n >= 4 else ("J",):
        assert np.array_equal(catalog.eval_invariant(id, loaded, pts), catalog.eval_invariant(id, chart, pts))


def test_sphere_manifest_matches_the_builder():
    loaded = load_chart_manifest(zoo_manifest_path("sphere4"))
    sphere = models.round_sphere(4)
    assert loaded == sphere
    pts = sphere.sample_points(4, seed=0, margin=0.5)
    assert np.array_equal(catalog.eval_invariant("Q4", loaded, pts), catalog.eval_invariant("Q4", sphere, pts))


TORUS2 = """\
dim = 2
coords = x, y
g[1][1] = 1
g[2][2] = 1
periodic x = 0 .. 6.283185307179586
periodic y = 0 .. 6.283185307179586
"""


def test_minimal_manifest_and_comments():
    chart = parse_chart_manifest("# flat\n" + TORUS2 + "   # trailing comment\n")
    assert chart.n == 2 and chart.periodic == (True, True)


def test_parse_error_reports_the_line():
    with pytest.raises(ManifestParseError) as err:
        parse_chart_manifest(TORUS2.replace("g[2][2] = 1", "g[2][2] = sin(x + )"))
    assert err.value.line == 4
    with pytest.raises(ManifestParseError) as err:
        parse_chart_manifest(TORUS2 + "what is this\n")
    assert err.value.line == 7


def test_asymmetric_metric_is_a_symmetry_error():
    text = TORUS2 + "g[1][2] = 0.1*cos(x)\ng[2][1] = 0.2*cos(x)\n"
    with pytest.raises(ManifestValidationError) as err:
        parse_chart_manifest(text)
    assert err.value.invariant == "symmetry"


@pytest.mark.parametrize("extra", ["g[1][2] = 1\n", "g[1][2] = 1.5*cos(y)\n"])
def test_degenerate_or_indefinite_metric_is_a_positivity_error(extra):
    with pytest.raises(ManifestValidationError) as err:
        parse_chart_manifest(TORUS2 + extra)
    assert err.value.invariant == "positivity"


def test_nonperiodic_metric_on_a_periodic_axis_is_a_periodicity_error():
    with pytest.raises(ManifestValidationError) as err:
        parse_chart_manifest(TORUS2.replace("g[1][1] = 1", "g[1][1] = 2 + x/10"))
    assert err.value.invariant == "periodicity"


def test_case_status_logic():
    with pytest.raises(ValueError):
        CaseRecord("c", "d", "maybe")
    rep = SuiteReport("s", "smoke", 0)
    rep.cases = [CaseRecord("a", "d", "pass"), CaseRecord("b", "d", "skipped"),
                 CaseRecord("c", "d", "flagged-discrepancy")]
    assert rep.passed and len(rep.flagged) == 1
    rep.cases.append(CaseRecord("d", "d", "fail", residual=1.0, tolerance=1e-8))
    assert not rep.passed and rep.counts()["fail"] == 1
    assert rep.summary_lines()[0].startswith("s: FAIL")


def test_reports_are_byte_stable_and_exclude_timing():
    a = run_suite("page", "smoke", seed=0)
    b = run_suite("page", "smoke", seed=0)
    assert a.to_json() == b.to_json()
    data = json.loads(a.to_json())
    assert "wall_time" not in data["cases"][0]
    assert "wall_time" in json.loads(a.to_json(timing=True))["cases"][0]
    assert data["environment"]["seed"] == 0
    assert a.passed and [c.case_id for c in a.flagged] == ["Page closed-form Weyl components"]


def test_tolerance_scale_can_fail_a_suite():
    assert not run_suite("page", "smoke", tol_scale=1e-30).passed


def test_unknown_suite():
    with pytest.raises(UnknownSuiteError):
        run_suite("nope")
    assert len(SUITE_NAMES) == 13
    assert "page" in SUITE_NAMES and list_cases("cones", "smoke")


def test_csv_headers():
    text = spectrum_csv(spectra.sphere_spectrum_table("Q4", 4, 1, 2))
    assert text.splitlines() == ["k,lambda,eigenvalue", "0,0.0,-24.0", "1,4.0,0.0", "2,10.0,96.0"]
    assert cone_csv([(1.0, 0.0, True, True, False)]).splitlines() == ["alpha,beta,E,V,SV", "1.0,0.0,1,1,0"]


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["catalog", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert sum(r["cvi"] for r in rows) == 14
    assert main(["eval", "J", "--chart", "sphere4", "--count", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert np.allclose(out["values"]["J"], 2.0)
    assert main(["eval", "Q9"]) == 2
    assert main(["spectrum", "--id", "W2"]) == 2
    assert main(["--profile", "smoke", "verify", "page", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "page.json").exists()
    assert main(["verify", "page", "--profile", "smoke", "--tol-scale", "1e-30"]) == 1
    with pytest.raises(SystemExit) as err:
        main(["verify", "nope"])
    assert err.value.code != 0
    assert main(["eval", "J", "--chart", str(zoo_manifest_path("torus4")), "--point", "0,0,0,0"]) == 0
    capsys.readouterr()
    assert main(["cone", "--alpha", "1", "--beta", "0"]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["E"] and verdict["V"] and verdict["SV"]


def test_cli_report(tmp_path):
    assert main(["report", "page", "cones", "--profile", "smoke", "--out", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["cone_n4.csv", "cones.json", "page.json", "spectrum_Q4_S4.csv", "summary.json"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["suites"] == {"page": "pass", "cones": "pass"}
