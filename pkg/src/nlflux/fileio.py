"""Plain-text output writers.

All writers are deterministic: no timestamps, no machine names, sorted
JSON keys, and floats printed with repr (shortest round-trip), so a rerun
of the same config with the same seed produces byte-identical files.

Series file:
    # nlflux series v1
    # columns: time mass supnorm flux_integral [...]
    <one row per snapshot, space separated>

Field file (one value per interior or collar cell):
    # nlflux field v1
    # shape: <JSON shape spec>
    # h_grid: <h>
    # columns: cell i0 [i1] x0 [x1] value
    <one row per cell, space separated; cell is the global lattice index>
"""

import dataclasses
import json
import os

import numpy as np


def _fmt(x):
    return repr(float(x))


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def write_series(path, columns):
    """columns: ordered dict-like of name -> 1d array, equal lengths."""
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    n = len(arrays[0])
    for name, arr in zip(names, arrays):
        if arr.shape != (n,):
            raise ValueError(f"series column {name!r} has shape {arr.shape}, expected ({n},)")
    lines = ["# nlflux series v1", "# columns: " + " ".join(names)]
    for i in range(n):
        lines.append(" ".join(_fmt(arr[i]) for arr in arrays))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series(path):
    """Inverse of write_series; returns dict name -> array."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = [ln for ln in lines if ln.startswith("# columns:")]
    if not header:
        raise ValueError(f"{path}: missing columns header")
    names = header[0].split(":", 1)[1].split()
    rows = [ln.split() for ln in lines if ln and not ln.startswith("#")]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(names)))
    return {name: data[:, j] for j, name in enumerate(names)}


def write_field(path, grid, cells, values, shape_spec=None):
    """Write one value per cell with lattice and coordinate headers."""
    cells = np.asarray(cells, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if cells.shape != values.shape:
        raise ValueError("cells and values length mismatch")
    dim = grid.dim
    idx_names = " ".join(f"i{a}" for a in range(dim))
    crd_names = " ".join(f"x{a}" for a in range(dim))
    lines = ["# nlflux field v1"]
    if shape_spec is not None:
        lines.append("# shape: " + json.dumps(shape_spec, sort_keys=True))
    lines.append(f"# h_grid: {_fmt(grid.h)}")
    lines.append(f"# columns: cell {idx_names} {crd_names} value")
    lattice = np.stack(grid.lattice_index(cells), axis=-1).reshape(len(cells), dim)
    centers = grid.centers[cells]
    for k in range(len(cells)):
        row = [str(int(cells[k]))]
        row += [str(int(v)) for v in lattice[k]]
        row += [_fmt(v) for v in np.atleast_1d(centers[k])]
        row.append(_fmt(values[k]))
        lines.append(" ".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field(path):
    """Returns (cells, values); coordinate columns are redundant on read."""
    with open(path) as fh:
        rows = [ln.split() for ln in fh.read().splitlines()
                if ln and not ln.startswith("#")]
    if not rows:
        return np.empty(0, dtype=np.int64), np.empty(0)
    data = np.array(rows, dtype=float)
    return data[:, 0].astype(np.int64), data[:, -1]


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_report(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_report(path):
    with open(path) as fh:
        return json.load(fh)
