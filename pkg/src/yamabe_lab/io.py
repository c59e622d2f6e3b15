"""CSV and JSON artifacts: fields with sidecar manifests, tables, run manifests.

Floats are written with ``repr`` so values round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .geometry import GridSpec, MetricField, ScalarField


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return repr(x)
        return x
    if hasattr(obj, "as_dict"):
        return to_jsonable(obj.as_dict())
    return obj


def write_json(path: str | Path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return str(v)


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_fields(path: str | Path, fields: dict[str, ScalarField]) -> tuple[Path, Path]:
    """Flat CSV (node, coordinates, one column per field) plus ``<path>.json`` with the grid."""
    if not fields:
        raise ValueError("no fields to write")
    grids = {f.grid for f in fields.values()}
    if len(grids) != 1:
        raise ValueError("all fields must share a grid")
    grid = grids.pop()
    names = list(fields)
    x = grid.coords()
    coords = x.reshape(grid.size, -1)
    cnames = ["s"] if not grid.periodic else [f"x{i}" for i in range(grid.n)]
    rows = ([k, *coords[k], *(fields[nm].values[k] for nm in names)] for k in range(grid.size))
    csv_path = write_table(path, ["node", *cnames, *names], rows)
    side = write_json(Path(str(path) + ".json"), {"grid": grid.to_dict(), "fields": names,
                                                  "coordinates": cnames})
    return csv_path, side


def read_fields(path: str | Path) -> dict[str, ScalarField]:
    meta = read_json(Path(str(path) + ".json"))
    grid = GridSpec.from_dict(meta["grid"])
    header, rows = read_table(path)
    if len(rows) != grid.size:
        raise ValueError(f"expected {grid.size} rows, found {len(rows)}")
    data = np.array([[float(v) for v in r] for r in rows])
    out = {}
    for nm in meta["fields"]:
        out[nm] = ScalarField(grid, data[:, header.index(nm)].copy())
    return out


def write_metric(path: str | Path, metric: MetricField) -> tuple[Path, Path]:
    """Scalar curvature and volume density; the inverse metric is not written."""
    return write_fields(path, {"scalar_curv": metric.scalar_field(), "vol_density":
                               ScalarField(metric.grid, metric.vol_density)})
