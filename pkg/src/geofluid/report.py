"""Residual reports and deterministic CSV / JSON export."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__


@dataclass
class ResidualReport:
    """Named residual sup-norms with optional tolerances.

    A residual without a tolerance is informational and has no verdict.
    """

    residuals: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add(self, name, value, tol: Optional[float] = None):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"residual '{name}' is not finite")
        self.residuals[name] = value
        if tol is not None:
            self.tolerances[name] = float(tol)
        return self

    def verdicts(self):
        return {k: self.residuals[k] <= t for k, t in self.tolerances.items()}

    @property
    def passed(self):
        return all(self.verdicts().values())

    def merge(self, other: "ResidualReport", prefix=""):
        for k, v in other.residuals.items():
            self.add(prefix + k, v, other.tolerances.get(k))
        return self

    def to_dict(self):
        return {
            "residuals": dict(sorted(self.residuals.items())),
            "tolerances": dict(sorted(self.tolerances.items())),
            "verdicts": {k: ("PASS" if v else "FAIL") for k, v in sorted(self.verdicts().items())},
            "grid": self.grid,
            "provenance": self.provenance,
        }

    def table(self):
        lines = [f"{'residual':40s} {'value':>12s} {'tol':>10s}  verdict"]
        for k in sorted(self.residuals):
            tol = self.tolerances.get(k)
            verdict = "" if tol is None else ("PASS" if self.residuals[k] <= tol else "FAIL")
            tol_s = "" if tol is None else f"{tol:.1e}"
            lines.append(f"{k:40s} {self.residuals[k]:12.3e} {tol_s:>10s}  {verdict}")
        return "\n".join(lines)


def sup(a):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a)))


def format_float(x):
    """Shortest round-trip decimal; non-finite values become empty cells."""
    if isinstance(x, str):
        return x
    x = float(x)
    if not math.isfinite(x):
        return ""
    return repr(x)


def to_csv(columns: dict) -> str:
    """CSV text from an ordered mapping ``name -> 1-D sequence`` (LF endings)."""
    names = list(columns)
    cols = [list(np.asarray(columns[k]).ravel()) if not _is_str_seq(columns[k]) else list(columns[k]) for k in names]
    nrows = len(cols[0]) if cols else 0
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for r in range(nrows):
        buf.write(",".join(format_float(c[r]) for c in cols) + "\n")
    return buf.getvalue()


def _is_str_seq(v):
    return isinstance(v, (list, tuple)) and v and isinstance(v[0], str)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json(payload: dict, config: Optional[dict] = None) -> str:
    doc = {"version": __version__}
    if config is not None:
        doc["config"] = config
    doc.update(payload)
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
