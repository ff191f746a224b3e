"""Per-trial experiment reports with reproducible CSV and JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

__all__ = ["ExperimentReport", "summarize", "format_value", "parse_value", "refinement_block"]


def format_value(v) -> str:
    """Locale-free text for a CSV cell; floats round-trip through ``repr``."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def parse_value(s: str):
    if s == "true":
        return True
    if s == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def summarize(rows: Sequence[dict], ratio_key: str = "ratio", pass_key: str = "passed") -> dict:
    """Max and median of ``ratio_key`` plus pass/fail counts over ``rows``."""
    vals = [float(r[ratio_key]) for r in rows if ratio_key in r]
    passes = [bool(r[pass_key]) for r in rows if pass_key in r]
    return {
        "trials": len(rows),
        "max_ratio": float(max(vals)) if vals else 0.0,
        "median_ratio": float(np.median(vals)) if vals else 0.0,
        "pass_count": int(sum(passes)),
        "fail_count": int(len(passes) - sum(passes)),
    }


def refinement_block(rows: Sequence[dict], ratio_key: str = "ratio", limit: float = 2.0) -> Optional[dict]:
    """Compare the max ratio between the coarsest and finest ``N`` present in ``rows``."""
    ns = sorted({int(r["N"]) for r in rows if "N" in r})
    if len(ns) < 2:
        return None
    per = {}
    for n in ns:
        vals = [float(r[ratio_key]) for r in rows if int(r.get("N", -1)) == n]
        per[n] = max(vals) if vals else 0.0
    lo, hi = per[ns[0]], per[ns[-1]]
    big, small = max(lo, hi), min(lo, hi)
    factor = big / small if small > 0 else (1.0 if big == 0 else math.inf)
    return {"N_coarse": ns[0], "N_fine": ns[-1], "max_coarse": lo, "max_fine": hi,
            "factor": factor, "limit": limit, "stable": bool(factor < limit),
            "max_by_N": {str(n): per[n] for n in ns}}


@dataclass
class ExperimentReport:
    """Rows of one check, a summary recomputable from them, and free-form details.

    ``columns`` fixes the CSV column order.  ``passed`` is the overall verdict
    of the check (``None`` when a check only records data).
    """

    check: str
    columns: List[str]
    rows: List[dict] = field(default_factory=list)
    ratio_key: str = "ratio"
    details: dict = field(default_factory=dict)
    passed: Optional[bool] = None
    refinement: Optional[dict] = None
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.summary:
            self.summary = summarize(self.rows, self.ratio_key)
        if self.refinement is None:
            self.refinement = refinement_block(self.rows, self.ratio_key)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_value(r.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def json_text(self) -> str:
        doc = {
            "check": self.check,
            "columns": self.columns,
            "ratio_key": self.ratio_key,
            "summary": self.summary,
            "refinement": self.refinement,
            "passed": self.passed,
            "details": self.details,
        }
        return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"

    def write(self, outdir, stem: Optional[str] = None):
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.check
        csv_path = out / f"{stem}.csv"
        json_path = out / f"{stem}.json"
        csv_path.write_text(self.csv_text())
        json_path.write_text(self.json_text())
        return csv_path, json_path

    @classmethod
    def load(cls, csv_path, json_path) -> "ExperimentReport":
        """Read a written report and check that its summary matches its rows."""
        doc = json.loads(Path(json_path).read_text())
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [{k: parse_value(v) for k, v in zip(header, line) if v != ""} for line in reader]
        rep = cls(doc["check"], header, rows, doc.get("ratio_key", "ratio"), doc.get("details", {}),
                  doc.get("passed"), doc.get("refinement"), dict(doc["summary"]))
        again = summarize(rows, rep.ratio_key)
        for k, v in again.items():
            if not math.isclose(float(rep.summary.get(k, math.nan)), float(v), rel_tol=0, abs_tol=0):
                raise ValueError(f"summary field {k!r} does not match the rows")
        return rep
