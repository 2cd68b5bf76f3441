"""FIELD v1 text files and CSV tables.

Format:
  line 1: "FIELD v1"
  line 2: "nx ny x0 y0 h"
  then ny rows of nx space-separated values, row-major from y-min.
Values are printed with 17 significant digits, so read(emit(f)) reproduces
the doubles bit-exactly; masks are written as 0/1.
"""

from __future__ import annotations

import numpy as np

from .geometry import CompactMask, Grid, ScalarField

HEADER = "FIELD v1"


class FieldFormatError(ValueError):
    """Version or shape mismatch in a FIELD file."""


def emit_field(path, fld):
    """Write a ScalarField's values (or a CompactMask as 0/1)."""
    if isinstance(fld, CompactMask):
        grid = fld.grid
        values = fld.member.astype(float)
    else:
        grid = fld.grid
        values = fld.values
    lines = [HEADER,
             "%d %d %.17g %.17g %.17g" % (grid.nx, grid.ny, grid.x0,
                                          grid.y0, grid.h)]
    for j in range(grid.ny):
        lines.append(" ".join("%.17g" % v for v in values[j]))
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return text


def read_field(path, quantity=""):
    """Read a FIELD v1 file into a ScalarField (inside = all nodes)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != HEADER:
        raise FieldFormatError(f"expected '{HEADER}' header, got "
                               f"{lines[0]!r}" if lines else "empty file")
    parts = lines[1].split()
    if len(parts) != 5:
        raise FieldFormatError("malformed size line")
    nx, ny = int(parts[0]), int(parts[1])
    x0, y0, h = float(parts[2]), float(parts[3]), float(parts[4])
    rows = lines[2:]
    if len(rows) != ny:
        raise FieldFormatError(f"expected {ny} rows, found {len(rows)}")
    values = np.empty((ny, nx))
    for j, row in enumerate(rows):
        vals = row.split()
        if len(vals) != nx:
            raise FieldFormatError(f"row {j}: expected {nx} values, found "
                                   f"{len(vals)}")
        values[j] = [float(v) for v in vals]
    grid = Grid(x0, y0, h, nx, ny)
    return ScalarField(grid, values, np.ones((ny, nx), bool), quantity=quantity)


def read_mask(path, grid=None, level=None):
    """Read a 0/1 FIELD file as a CompactMask."""
    fld = read_field(path, quantity="mask")
    if grid is not None and fld.grid != grid:
        raise FieldFormatError("mask grid does not match the expected grid")
    return CompactMask(fld.grid, fld.values != 0.0, level=level)


def emit_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("%.17g" % v if isinstance(v, float) else str(v)
                              for v in row))
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return text
