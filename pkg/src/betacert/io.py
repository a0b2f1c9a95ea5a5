"""Reading and writing samples, reports, tables and meshes.

Floats are written with 17 significant digits so that files round-trip
exactly and byte comparisons of reports are meaningful.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .geometry import PointCloud, nearest_neighbor_resolution

Array = NDArray[np.float64]


class InputError(ValueError):
    """Malformed input sample; the message names the offending line."""


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj, out: list[str]) -> None:
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj, key=str)):
            if i:
                out.append(", ")
            out.append(json.dumps(str(key)) + ": ")
            _encode(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, item in enumerate(obj.tolist() if isinstance(obj, np.ndarray) else obj):
            if i:
                out.append(", ")
            _encode(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def to_json(obj) -> str:
    """Deterministic JSON: sorted keys, 17 significant digits."""
    out: list[str] = []
    _encode(obj, out)
    return "".join(out) + "\n"


def _row_lines(text: str) -> list[int]:
    """Line number of every depth-one '[' in a JSON array of arrays."""
    lines, depth, line, in_str, esc = [], 0, 1, False, False
    for ch in text:
        if ch == "\n":
            line += 1
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "[":
            depth += 1
            if depth == 2:
                lines.append(line)
        elif ch == "]":
            depth -= 1
    return lines


def read_points(path: str | Path, fmt_name: str | None = None) -> Array:
    """CSV (one point per row) or JSON array of arrays; rows must be finite and equal width."""
    path = Path(path)
    fmt_name = fmt_name or ("json" if path.suffix.lower() == ".json" else "csv")
    text = path.read_text()
    rows: list[tuple[int, list]] = []
    if fmt_name == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise InputError(f"{path}:{err.lineno}: invalid JSON ({err.msg})") from None
        if not isinstance(data, list):
            raise InputError(f"{path}:1: expected an array of arrays")
        where = _row_lines(text)
        for i, row in enumerate(data):
            line = where[i] if i < len(where) else 1
            if not isinstance(row, list):
                raise InputError(f"{path}:{line}: row {i + 1} is not an array")
            rows.append((line, row))
    elif fmt_name == "csv":
        for line, row in enumerate(csv.reader(text.splitlines()), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            rows.append((line, row))
    else:
        raise InputError(f"unknown format {fmt_name!r}")
    if not rows:
        raise InputError(f"{path}: no points")
    width = len(rows[0][1])
    pts = np.empty((len(rows), width))
    for i, (line, row) in enumerate(rows):
        if len(row) != width:
            raise InputError(f"{path}:{line}: expected {width} coordinates, found {len(row)}")
        try:
            vals = [float(c) for c in row]
        except (TypeError, ValueError):
            raise InputError(f"{path}:{line}: non-numeric coordinate") from None
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"{path}:{line}: non-finite coordinate")
        pts[i] = vals
    return pts


def ingest(path: str | Path, d: int, resolution: float | None = None, fmt_name: str | None = None) -> PointCloud:
    pts = read_points(path, fmt_name)
    res = nearest_neighbor_resolution(pts) if resolution is None else resolution
    return PointCloud(pts, d, res, meta={"source": Path(path).name})


def write_points(path: str | Path, points: Array, fmt_name: str | None = None) -> None:
    path = Path(path)
    fmt_name = fmt_name or ("json" if path.suffix.lower() == ".json" else "csv")
    pts = np.atleast_2d(points)
    if fmt_name == "json":
        path.write_text(to_json(pts))
    else:
        path.write_text("".join(",".join(fmt(c) for c in row) + "\n" for row in pts))


def write_tsv(path: str | Path, rows: list[dict], columns: list[str]) -> None:
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(fmt(row[c]) if isinstance(row[c], (float, np.floating)) else str(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text)
