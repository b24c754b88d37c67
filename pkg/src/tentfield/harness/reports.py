"""Suite reports and their JSON/CSV serialization.

Reports hold no timestamps or durations, so a fixed seed and
configuration give byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PASS, FAIL, EMPTY = "pass", "fail", "no samples"


@dataclass
class Check:
    name: str
    status: str
    constants: dict = field(default_factory=dict)
    detail: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def line(self) -> str:
        consts = ", ".join(f"{k}={_short(v)}" for k, v in sorted(self.constants.items()))
        return f"{self.status.upper():10s} {self.name}" + (f"  [{consts}]" if consts else "")


def check(name: str, ok: bool, samples: int | None = None, **constants) -> Check:
    if samples == 0:
        return Check(name, EMPTY, constants)
    return Check(name, PASS if ok else FAIL, constants)


@dataclass
class SuiteReport:
    suite: str
    seed: int
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if any(c.failed for c in self.checks) else 0

    def add(self, c: Check) -> Check:
        self.checks.append(c)
        return c

    def to_json(self) -> dict:
        return {"suite": self.suite, "seed": self.seed, "exit_code": self.exit_code,
                "meta": self.meta,
                "checks": [{"name": c.name, "status": c.status, "constants": c.constants,
                            "detail": c.detail} for c in self.checks],
                "tables": sorted(self.tables)}

    def summary(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return v


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays become Python values, non-finite floats strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return {"re": _plain(obj.real), "im": _plain(obj.imag)}
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def table_csv(rows: list) -> str:
    """CSV text with the union of row keys as columns, in first-seen order."""
    cols = []
    for r in rows:
        for key in r:
            if key not in cols:
                cols.append(key)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({key: _cell(r.get(key, "")) for key in cols})
    return buf.getvalue()


def _cell(v):
    v = _plain(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def write_report(report: SuiteReport, out_dir) -> list:
    """Writes ``<suite>.json`` and one ``<suite>_<table>.csv`` per table; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    p = out / f"{report.suite}.json"
    p.write_text(dumps(report.to_json()), encoding="utf-8")
    paths.append(p)
    for name in sorted(report.tables):
        p = out / f"{report.suite}_{name}.csv"
        p.write_text(table_csv(report.tables[name]), encoding="utf-8")
        paths.append(p)
    return paths
