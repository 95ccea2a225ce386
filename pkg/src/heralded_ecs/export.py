"""Series and summary export.

A series file is tab-separated text.  It opens with ``#``-prefixed metadata
lines (``# key: value``), then one ``#`` header line with the column names
and units, then one row per sample.  Floats are written with 17 significant
digits so they round-trip exactly and identical inputs give identical bytes.
The summary is JSON with sorted keys and a schema tag.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

SERIES_SCHEMA = "heralded-ecs-series/1"
SUMMARY_SCHEMA = "heralded-ecs-summary/1"


@dataclass(frozen=True)
class Column:
    name: str
    unit: str
    values: np.ndarray

    @property
    def label(self) -> str:
        return f"{self.name}[{self.unit}]"


def column(name: str, unit: str, values) -> Column:
    return Column(name, unit, np.asarray(values, dtype=float))


def write_series(path, columns: Sequence[Column], meta: Optional[Mapping[str, str]] = None) -> Path:
    if not columns:
        raise ValueError("a series needs at least one column")
    n = len(columns[0].values)
    if n == 0 or any(len(c.values) != n for c in columns):
        raise ValueError("columns must be non-empty and of equal length")
    path = Path(path)
    lines = [f"schema: {SERIES_SCHEMA}"]
    lines += [f"{k}: {v}" for k, v in sorted((meta or {}).items())]
    lines.append("\t".join(c.label for c in columns))
    data = np.column_stack([c.values for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter="\t", header="\n".join(lines), comments="# ")
    return path


def read_series(path) -> tuple[dict, dict]:
    """Return ``(meta, {label: array})``."""
    path = Path(path)
    header = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            header.append(line[2:].rstrip("\n"))
    labels = header[-1].split("\t")
    meta = dict(h.split(": ", 1) for h in header[:-1])
    data = np.loadtxt(path, delimiter="\t", comments="#", ndmin=2)
    return meta, {lab: data[:, i] for i, lab in enumerate(labels)}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if not math.isfinite(x) else x
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_summary(path, summary: Mapping) -> Path:
    """JSON summary; non-finite floats become ``null``."""
    path = Path(path)
    doc = dict(_clean(dict(summary)))
    doc["schema"] = SUMMARY_SCHEMA
    path.write_text(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def read_summary(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
