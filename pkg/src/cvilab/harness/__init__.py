"""Suites, chart manifests, reports and the ``cvi`` command line."""

from .manifest import (
    ManifestError,
    ManifestParseError,
    ManifestValidationError,
    dump_chart_manifest,
    load_chart_manifest,
    parse_chart_manifest,
)
from .report import CaseRecord, SuiteReport, cone_csv, spectrum_csv
from .suites import SUITE_NAMES, UnknownSuiteError, run_suite

__all__ = [
    "ManifestError",
    "ManifestParseError",
    "ManifestValidationError",
    "dump_chart_manifest",
    "load_chart_manifest",
    "parse_chart_manifest",
    "CaseRecord",
    "SuiteReport",
    "cone_csv",
    "spectrum_csv",
    "SUITE_NAMES",
    "UnknownSuiteError",
    "run_suite",
]
