"""Report serialization, CSV series and node-array text dumps.

Node-array layout (one file per field)::

    # platelab-nodes v1 n1=<int> n2=<int> components=<int> bounds=<x1min>,<x1max>,<x2min>,<x2max>
    <c0> <c1> ...      one line per node, i slowest (x1 index), j fastest

Values use ``%.17g`` so a round trip reproduces every double exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import Grid2D

__all__ = ["to_jsonable", "dumps_report", "write_report", "write_csv", "write_node_array", "read_node_array"]


def to_jsonable(obj):
    """Plain JSON types; numpy scalars and arrays are unpacked, non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, (str, int)):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return str(obj)


def dumps_report(report: dict) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(path, report: dict) -> Path:
    path = Path(path)
    path.write_text(dumps_report(report))
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([("%.17g" % x) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def write_node_array(path, grid: Grid2D, values) -> Path:
    values = np.asarray(values, dtype=float)
    if values.shape[:2] != grid.shape:
        raise ValueError("values do not match the grid")
    comps = 1 if values.ndim == 2 else int(np.prod(values.shape[2:]))
    flat = values.reshape(grid.size, comps)
    b = ",".join("%.17g" % x for x in grid.bounds)
    lines = [f"# platelab-nodes v1 n1={grid.n1} n2={grid.n2} components={comps} bounds={b}"]
    lines += [" ".join("%.17g" % x for x in row) for row in flat]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_node_array(path):
    """Inverse of :func:`write_node_array`; returns ``(grid, values)``."""
    path = Path(path)
    try:
        text = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read node array {path}: {exc}") from None
    if not text or not text[0].startswith("# platelab-nodes v1"):
        raise ConfigError(f"{path}:1: missing 'platelab-nodes v1' header")
    meta = dict(tok.split("=", 1) for tok in text[0].split()[3:])
    try:
        n1, n2, comps = int(meta["n1"]), int(meta["n2"]), int(meta["components"])
        bounds = tuple(float(x) for x in meta["bounds"].split(","))
    except (KeyError, ValueError):
        raise ConfigError(f"{path}:1: malformed header") from None
    rows = [ln for ln in text[1:] if ln.strip()]
    if len(rows) != n1 * n2:
        raise ConfigError(f"{path}: expected {n1 * n2} node lines, found {len(rows)}")
    data = np.empty((n1 * n2, comps))
    for k, ln in enumerate(rows):
        parts = ln.split()
        if len(parts) != comps:
            raise ConfigError(f"{path}:{k + 2}: expected {comps} values")
        try:
            data[k] = [float(x) for x in parts]
        except ValueError:
            raise ConfigError(f"{path}:{k + 2}: non-numeric value") from None
    grid = Grid2D(bounds, n1, n2)
    shape = grid.shape if comps == 1 else grid.shape + (comps,)
    return grid, data.reshape(shape)
