"""Plain-text artifacts: field CSVs, boundary CSVs, histories, PGM rasters, JSON reports.

Numbers are written with ``%.17g`` so files round-trip exactly and re-runs
are byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .fem import BoundarySource
from .mesh import Mesh, ScalarField, VectorField

FMT = "%.17g"


def _write_table(path, header, columns):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt=FMT, delimiter=",")
    return path


def write_nodal_csv(path, field: ScalarField):
    """``x,y,value`` per node."""
    x, y = field.mesh.nodes.T
    return _write_table(path, ("x", "y", "value"), (x, y, field.values))


def write_element_csv(path, field):
    """``cx,cy,vx,vy`` per element for vector fields, ``cx,cy,value`` for scalars."""
    cx, cy = field.mesh.centroids.T
    vals = np.asarray(field.values)
    if vals.ndim == 2:
        return _write_table(path, ("cx", "cy", "vx", "vy"), (cx, cy, vals[:, 0], vals[:, 1]))
    return _write_table(path, ("cx", "cy", "value"), (cx, cy, vals))


def write_boundary_csv(path, g: BoundarySource):
    """Boundary data clockwise from the bottom-left corner.

    Columns ``s,x,y,side,value`` with ``s`` the arclength along the walk;
    corners appear once per adjacent side.
    """
    mesh = g.mesh
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    s = mesh.slot_arclength()
    xy = mesh.nodes[mesh.slot_nodes]
    with open(path, "w", newline="") as fh:
        fh.write("s,x,y,side,value\n")
        for k in range(mesh.n_slots):
            fh.write(f"{FMT % s[k]},{FMT % xy[k, 0]},{FMT % xy[k, 1]},"
                     f"{mesh.slot_sides[k]},{FMT % g.values[k]}\n")
    return path


def read_boundary_csv(path, mesh: Mesh, sides=None) -> BoundarySource:
    """Read a file written by :func:`write_boundary_csv` for the same mesh.

    Rows are matched to slots by side and position, so row order does not
    matter.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = {"x", "y", "side", "value"} - set(rows[0] if rows else {})
    if missing:
        raise ConfigError(f"{path}: boundary CSV lacks column(s) {sorted(missing)}")
    xy = mesh.nodes[mesh.slot_nodes]
    vals = np.zeros(mesh.n_slots)
    seen = np.zeros(mesh.n_slots, dtype=bool)
    tol = 1e-9 * max(mesh.bounds[1] - mesh.bounds[0], mesh.bounds[3] - mesh.bounds[2])
    for line, row in enumerate(rows, start=2):
        side = row["side"].strip()
        cand = np.flatnonzero((mesh.slot_sides == side)
                              & (np.abs(xy[:, 0] - float(row["x"])) <= tol)
                              & (np.abs(xy[:, 1] - float(row["y"])) <= tol))
        if len(cand) != 1:
            raise ConfigError(f"{path}:{line}: no boundary slot on side {side!r} at "
                              f"({row['x']}, {row['y']}) for {mesh}")
        vals[cand[0]] = float(row["value"])
        seen[cand[0]] = True
    if not seen.all():
        raise ConfigError(f"{path}: {int((~seen).sum())} boundary slot(s) missing for {mesh}")
    return BoundarySource(mesh, vals, sides)


def write_history_csv(path, history, columns=("iter", "half", "objective", "max_cosine", "min_det")):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in history:
            fh.write(f"{int(row[0])},{int(row[1])},"
                     + ",".join(FMT % float(v) for v in row[2:]) + "\n")
    return path


def raster(field) -> np.ndarray:
    """Image array (top row = largest ``y``) of a nodal field or element scalar.

    Element values are averaged over the two triangles of each cell;
    vector fields are shown by magnitude.
    """
    mesh = field.mesh
    nx, ny = mesh.resolution
    if isinstance(field, ScalarField):
        img = field.values.reshape(ny + 1, nx + 1)
    else:
        vals = np.asarray(field.values, dtype=float)
        if vals.ndim == 2:
            vals = np.hypot(vals[:, 0], vals[:, 1])
        img = vals.reshape(ny, nx, 2).mean(axis=2)
    return img[::-1]


def write_pgm(path, field, vmin=None, vmax=None):
    """8-bit binary PGM of :func:`raster`, linearly scaled to ``[vmin, vmax]``."""
    img = raster(field)
    lo = img.min() if vmin is None else vmin
    hi = img.max() if vmax is None else vmax
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pix = np.clip(np.rint((img - lo) * scale), 0, 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ConfigError(f"{path}: not a binary PGM file")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path
