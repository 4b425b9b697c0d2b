"""Suite reports and CSV plot data."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

from .. import __version__

STATUSES = ("pass", "fail", "flagged-discrepancy", "skipped")


def inputs_digest(*parts) -> str:
    """Short sha256 of the case inputs, stable across runs."""
    text = json.dumps(parts, sort_keys=True, default=repr, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _clean(x):
    if isinstance(x, float):
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item") and callable(x.item):  # numpy scalars
        return _clean(x.item())
    return x


@dataclass
class CaseRecord:
    case_id: str
    digest: str
    status: str
    residual: float | None = None
    tolerance: float | None = None
    wall_time: float = 0.0
    detail: dict = field(default_factory=dict)
    message: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown case status {self.status!r}")

    def as_dict(self, timing: bool = False) -> dict:
        out = {
            "case": self.case_id,
            "inputs_digest": self.digest,
            "status": self.status,
            "max_relative_residual": _clean(self.residual),
            "tolerance": _clean(self.tolerance),
        }
        if timing:
            out["wall_time"] = round(self.wall_time, 3)
        if self.message:
            out["message"] = self.message
        if self.detail:
            out["detail"] = _clean(self.detail)
        return out


@dataclass
class SuiteReport:
    suite: str
    profile: str
    seed: int
    tol_scale: float = 1.0
    cases: list[CaseRecord] = field(default_factory=list)
    version: str = __version__

    @property
    def passed(self) -> bool:
        """Flagged discrepancies count as passing; skipped cases are ignored."""
        return all(c.status in ("pass", "flagged-discrepancy", "skipped") for c in self.cases)

    @property
    def flagged(self) -> list[CaseRecord]:
        return [c for c in self.cases if c.status == "flagged-discrepancy"]

    @property
    def failures(self) -> list[CaseRecord]:
        return [c for c in self.cases if c.status == "fail"]

    def counts(self) -> dict[str, int]:
        return {s: sum(c.status == s for c in self.cases) for s in STATUSES}

    def as_dict(self, timing: bool = False) -> dict:
        return {
            "suite": self.suite,
            "profile": self.profile,
            "status": "pass" if self.passed else "fail",
            "environment": {"version": self.version, "seed": self.seed, "tol_scale": self.tol_scale},
            "counts": self.counts(),
            "cases": [c.as_dict(timing) for c in self.cases],
        }

    def to_json(self, timing: bool = False) -> str:
        """Fixed key order; identical inputs give identical bytes unless ``timing`` is set."""
        return json.dumps(self.as_dict(timing), indent=2, ensure_ascii=True) + "\n"

    def summary_lines(self) -> list[str]:
        c = self.counts()
        head = (f"{self.suite}: {'PASS' if self.passed else 'FAIL'} "
                f"({c['pass']} pass, {c['fail']} fail, {c['flagged-discrepancy']} flagged, "
                f"{c['skipped']} skipped)")
        lines = [head]
        for case in self.cases:
            if case.status in ("fail", "flagged-discrepancy"):
                res = "" if case.residual is None else f" residual={case.residual:.3g}"
                msg = f" {case.message}" if case.message else ""
                lines.append(f"  [{case.status}] {case.case_id}{res}{msg}")
        return lines


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def spectrum_csv(table) -> str:
    """Columns ``k, lambda, eigenvalue`` from :func:`sphere_spectrum_table` rows."""
    return _csv(("k", "lambda", "eigenvalue"), ((int(k), float(lam), float(ev)) for k, lam, ev in table))


def cone_csv(rows) -> str:
    """Columns ``alpha, beta, E, V, SV`` with membership flags written as 0/1."""
    return _csv(("alpha", "beta", "E", "V", "SV"),
                ((float(a), float(b), int(bool(e)), int(bool(v)), int(bool(s))) for a, b, e, v, s in rows))
