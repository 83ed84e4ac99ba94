"""CSV input and JSON result files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FitResult

FORMAT_VERSION = 1


class DataFormatError(ValueError):
    pass


def _parse_rows(rows, has_header: bool, source: str) -> np.ndarray:
    out = []
    width = None
    first = 2 if has_header else 1
    body = rows[1:] if has_header else rows
    for i, row in enumerate(body, start=first):
        if not row or all(not c.strip() for c in row):
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(f"{source}: row {i} has {len(row)} columns, expected {width}")
        vals = []
        for j, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{source}: row {i} column {j}: not a number: {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise DataFormatError(f"{source}: row {i} column {j}: non-finite value {cell.strip()!r}")
            vals.append(v)
        out.append(vals)
    if not out:
        raise DataFormatError(f"{source}: no data rows")
    return np.array(out, dtype=np.float64)


def load_csv(path, has_header: bool = False) -> np.ndarray:
    """Read a comma-separated numeric table into an ``(N, d)`` array.

    Row numbers in error messages count file lines from 1, header included.
    Blank lines are skipped.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    return _parse_rows(rows, has_header, str(path))


def fmt(x) -> str:
    # repr of a Python float is the shortest string that round-trips
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return repr(x)


def write_csv(path, rows, header=None) -> None:
    """Write rows of numbers (or strings) with shortest round-trip formatting."""
    lines = []
    if header:
        lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(c if isinstance(c, str) else fmt(c) if isinstance(c, float)
                              else str(c) for c in row))
    text = "\n".join(lines) + "\n"
    if path is None or str(path) == "-":
        import sys
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


@dataclass
class Standardizer:
    """Per-feature z-score ``(x - mean) / scale``; constant features keep scale 1."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, data) -> "Standardizer":
        mean = data.mean(axis=0)
        scale = data.std(axis=0)
        scale = np.where(scale > 0.0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, data):
        return (data - self.mean) / self.scale

    def inverse(self, data):
        return data * self.scale + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}


def _floats(x):
    """Nested lists with infinities spelled as strings, for strict JSON."""
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, (list, tuple)):
        return [_floats(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return fmt(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, dict):
        return {k: _floats(v) for k, v in x.items()}
    return x


def result_document(result: FitResult, config: dict | None = None, soft: bool = False,
                    worst_case: bool = False, transform: Standardizer | None = None) -> dict:
    from . import __version__

    doc = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "method": result.method,
        "centroids": result.centroids,
        "hard_labels": result.labels,
        "gamma_final": result.gamma_final,
        "objective_trace": result.objective_trace,
        "gamma_trace": result.gamma_trace,
        "iterations": result.iterations,
        "converged": result.converged,
        "config": config or {},
    }
    if soft:
        doc["soft_assignment"] = result.assignment
    if worst_case:
        doc["worst_case_points"] = result.worst_case_points
    if transform is not None:
        doc["standardization"] = transform.to_dict()
    return _floats(doc)


def save_result(result: FitResult, path, config: dict | None = None, soft: bool = False,
                worst_case: bool = False, transform: Standardizer | None = None) -> None:
    """Write a fit as JSON.

    Non-finite numbers (an infinite ``gamma_final`` for Lloyd) are stored
    as the strings ``"Infinity"``/``"-Infinity"`` so the file stays strict
    JSON. Soft assignments and worst-case points are opt-in because they
    scale with N.
    """
    doc = result_document(result, config, soft, worst_case, transform)
    text = json.dumps(doc, indent=2, allow_nan=False, sort_keys=False) + "\n"
    Path(path).write_text(text)


def _arr(x, ndmin=1):
    def conv(v):
        if isinstance(v, list):
            return [conv(u) for u in v]
        if isinstance(v, str):
            return float(v.replace("Infinity", "inf"))
        return v
    return np.array(conv(x), dtype=np.float64, ndmin=ndmin)


def load_result(path) -> FitResult:
    """Read a JSON result back; without soft weights the assignment is one-hot."""
    doc = json.loads(Path(path).read_text())
    centroids = _arr(doc["centroids"], 2)
    labels = np.asarray(doc["hard_labels"], dtype=np.int64)
    k, n = centroids.shape[0], labels.shape[0]
    if "soft_assignment" in doc:
        assignment = _arr(doc["soft_assignment"], 2)
    else:
        assignment = np.zeros((k, n))
        assignment[labels, np.arange(n)] = 1.0
    wc = _arr(doc["worst_case_points"], 2) if "worst_case_points" in doc else np.empty((0, centroids.shape[1]))
    gamma = doc["gamma_final"]
    info = {"config": doc.get("config", {})}
    if "standardization" in doc:
        info["standardization"] = doc["standardization"]
    return FitResult(
        centroids=centroids,
        assignment=assignment,
        gamma_final=float(gamma.replace("Infinity", "inf")) if isinstance(gamma, str) else float(gamma),
        objective_trace=_arr(doc["objective_trace"]),
        gamma_trace=_arr(doc["gamma_trace"]),
        worst_case_points=wc,
        iterations=int(doc["iterations"]),
        converged=bool(doc["converged"]),
        method=doc.get("method", ""),
        info=info,
    )


def load_centroids(path) -> np.ndarray:
    """Centroids from either a result JSON or a headerless CSV."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        return load_result(path).centroids
    return load_csv(path)
