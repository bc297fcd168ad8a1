"""Pass/fail ledger for the a priori estimate checks."""

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class BoundsEntry:
    """One verified inequality: margins, fitted constants, verdict.

    margins are (bound - measured) per output time, so nonnegative means the
    inequality holds; advisory entries never fail a run (recorded only).
    """

    name: str
    statement: str
    passed: bool = True
    advisory: bool = False
    times: list = field(default_factory=list)
    margins: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    violation: dict | None = None
    details: dict = field(default_factory=dict)

    def margin_min(self):
        return float(np.min(self.margins)) if len(self.margins) else float("nan")

    def to_dict(self):
        return {
            "name": self.name,
            "statement": self.statement,
            "passed": bool(self.passed),
            "advisory": bool(self.advisory),
            "times": [float(t) for t in self.times],
            "margins": [float(m) for m in self.margins],
            "fitted": {k: float(v) for k, v in sorted(self.fitted.items())},
            "violation": self.violation,
            "details": _plain(self.details),
        }


@dataclass
class BoundsReport:
    scenario: str
    entries: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, entry):
        self.entries.append(entry)
        return entry

    def extend(self, entries):
        self.entries.extend(entries)

    def all_passed(self):
        return all(e.passed or e.advisory for e in self.entries)

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "passed": self.all_passed(),
            "meta": _plain(self.meta),
            "entries": [e.to_dict() for e in self.entries],
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (str, bool)) or obj is None:
        return obj
    return str(obj)


def emit_report(report, fmt="json"):
    """Render a BoundsReport as a deterministic JSON or markdown document."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "markdown":
        lines = [
            f"# Bounds report: {report.scenario}",
            "",
            "| bound | check | fitted | margin min | status |",
            "| --- | --- | --- | --- | --- |",
        ]
        for e in report.entries:
            fitted = "; ".join(f"{k}={v:.6g}" for k, v in sorted(e.fitted.items())) or "-"
            mm = e.margin_min()
            mm_s = f"{mm:.3e}" if np.isfinite(mm) else "-"
            status = "advisory" if e.advisory else ("pass" if e.passed else "FAIL")
            if not e.passed and e.violation is not None:
                status += f" at x={e.violation.get('x')}, t={e.violation.get('t')}"
            lines.append(f"| {e.name} | {e.statement} | {fitted} | {mm_s} | {status} |")
        lines.append("")
        if not report.all_passed():
            lines.append("Overall: FAIL")
        else:
            lines.append("Overall: pass")
        lines.append("")
        return "\n".join(lines)
    raise ValueError(f"unknown report format {fmt!r}")
