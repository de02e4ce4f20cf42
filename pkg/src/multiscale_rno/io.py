"""CSV and legacy-VTK writers shared by the cell and geological solvers."""
from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .types import OUTPUT_NAMES, PropsSeries

PROPS_HEADER = ("t",) + OUTPUT_NAMES


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode())


def write_props_csv(path, series: PropsSeries):
    lines = [",".join(PROPS_HEADER)]
    for t, row in zip(series.times, series.values):
        lines.append(",".join(repr(float(x)) for x in (t, *row)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_props_csv(path) -> PropsSeries:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        missing = [c for c in PROPS_HEADER if c not in header]
        if missing:
            raise SchemaError(f"property CSV missing column(s): {', '.join(missing)}")
        rows = np.array([[float(x) for x in r] for r in reader if r])
    cols = [header.index(c) for c in PROPS_HEADER]
    rows = rows[:, cols]
    return PropsSeries(rows[:, 0], rows[:, 1:])


def write_table_csv(path, header, rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(repr(float(x)) if not isinstance(x, str) else x for x in r))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_vtk_structured_points(path, fields: dict, spacing, origin=(0.0, 0.0), title="data"):
    """Cell-centred 2D fields as a legacy ASCII STRUCTURED_POINTS file.

    Each field is an (nx, ny) array indexed [i, j] with i along x; it is
    written as POINT_DATA on the grid of cell centres.
    """
    arrays = {k: np.asarray(v, dtype=float) for k, v in fields.items()}
    shapes = {a.shape for a in arrays.values()}
    if len(shapes) != 1:
        raise ValueError("all VTK fields must share a shape")
    nx, ny = shapes.pop()
    dx, dy = spacing
    ox, oy = origin[0] + 0.5 * dx, origin[1] + 0.5 * dy
    out = [
        "# vtk DataFile Version 3.0",
        title[:250],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} 1",
        f"ORIGIN {ox!r} {oy!r} 0.0",
        f"SPACING {dx!r} {dy!r} 1.0",
        f"POINT_DATA {nx * ny}",
    ]
    for name, a in arrays.items():
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        # VTK orders x fastest
        out.extend(" ".join(repr(float(x)) for x in row) for row in a.T)
    atomic_write_text(path, "\n".join(out) + "\n")


def read_vtk_structured_points(path):
    """Minimal reader for files written by write_vtk_structured_points."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    dims = spacing = None
    fields = {}
    i = 0
    while i < len(lines):
        ln = lines[i]
        if ln.startswith("DIMENSIONS"):
            dims = tuple(int(x) for x in ln.split()[1:3])
        elif ln.startswith("SPACING"):
            spacing = tuple(float(x) for x in ln.split()[1:3])
        elif ln.startswith("SCALARS"):
            name = ln.split()[1]
            nx, ny = dims
            vals = np.array(" ".join(lines[i + 2:i + 2 + ny]).split(), dtype=float)
            fields[name] = vals.reshape(ny, nx).T
            i += 1 + ny
        i += 1
    return fields, spacing
