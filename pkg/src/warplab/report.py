"""Versioned JSON report and CSV dumps written by every suite."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = "1.0.0"

# top-level report keys and per-check keys; any change here bumps SCHEMA_VERSION
REPORT_KEYS = ("schema_version", "tool", "tool_version", "suite", "seed", "generated_at", "config", "checks",
               "results", "artifacts", "notes", "passed")
CHECK_KEYS = ("name", "value", "tolerance", "comparison", "passed", "detail")


def report_schema_version() -> str:
    return SCHEMA_VERSION


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


_COMPARE = {
    "<=": lambda v, t: v <= t,
    ">=": lambda v, t: v >= t,
    "==": lambda v, t: v == t,
    "abs<=": lambda v, t: abs(v) <= t,
}


@dataclass
class Report:
    suite: str
    config: dict
    seed: int = 0
    checks: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def check(self, name: str, value, tolerance, comparison: str = "<=", detail: str = "") -> bool:
        """Record value (comparison) tolerance; ``comparison`` in <=, >=, ==, abs<=."""
        try:
            ok = bool(_COMPARE[comparison](value, tolerance))
        except TypeError:
            ok = False
        if isinstance(value, float) and math.isnan(value):
            ok = False
        self.checks.append({"name": name, "value": value, "tolerance": tolerance, "comparison": comparison,
                            "passed": ok, "detail": detail})
        return ok

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def merge(self, other: "Report", prefix: str):
        for c in other.checks:
            self.checks.append({**c, "name": f"{prefix}/{c['name']}"})
        self.results[prefix] = other.results
        self.artifacts += other.artifacts
        self.notes += [f"{prefix}: {n}" for n in other.notes]

    def to_dict(self, timestamp: bool = True) -> dict:
        return jsonable({
            "schema_version": SCHEMA_VERSION,
            "tool": "warplab",
            "tool_version": __version__,
            "suite": self.suite,
            "seed": self.seed,
            "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat() if timestamp else None,
            "config": self.config,
            "checks": self.checks,
            "results": self.results,
            "artifacts": sorted(set(self.artifacts)),
            "notes": self.notes,
            "passed": self.passed,
        })

    def write(self, outdir) -> Path:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        path = outdir / "report.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n")
        return path


def write_rows(path, rows: list) -> Path:
    """Dump a list of flat dicts as CSV (header from the first row)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if not rows:
            return path
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return path


def skeleton(report: dict) -> dict:
    """Key structure of a report, the thing golden files pin down."""
    return {
        "report": sorted(report.keys()),
        "check": sorted(report["checks"][0].keys()) if report.get("checks") else [],
    }
