"""Cartesian cell grids and their file formats.

Cells are indexed ``[j, i]`` with ``j`` along y and ``i`` along x; cell
``(j, i)`` covers ``[x0 + i*h, x0 + (i+1)*h] x [y0 + j*h, y0 + (j+1)*h]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    h: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.nx <= 0 or self.ny <= 0:
            raise InvalidInput("grid must have at least one cell")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InvalidInput("grid spacing must be positive")

    @classmethod
    def covering(cls, domain, n=None, h=None):
        """Grid over the domain's bounding box.

        Exactly one of ``n`` (cells along the longer side) or ``h`` is
        given.  With ``h`` the cell counts are rounded up and the grid is
        centered on the box.
        """
        x0, x1, y0, y1 = domain.bbox()
        w, hgt = x1 - x0, y1 - y0
        if (n is None) == (h is None):
            raise InvalidInput("give exactly one of n or h")
        if n is not None:
            if n <= 0:
                raise InvalidInput("grid n must be positive")
            h = max(w, hgt) / n
        elif h <= 0:
            raise InvalidInput("grid spacing must be positive")
        nx = max(1, int(math.ceil(w / h - 1e-9)))
        ny = max(1, int(math.ceil(hgt / h - 1e-9)))
        ox = 0.5 * (x0 + x1) - 0.5 * nx * h
        oy = 0.5 * (y0 + y1) - 0.5 * ny * h
        return cls(nx, ny, float(h), (float(ox), float(oy)))

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def xc(self):
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.h

    @property
    def yc(self):
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.h

    def centers(self):
        """Cell centers as an array of shape (ny, nx, 2)."""
        X, Y = np.meshgrid(self.xc, self.yc)
        return np.stack([X, Y], axis=-1)

    def extent(self):
        ox, oy = self.origin
        return (ox, ox + self.nx * self.h, oy, oy + self.ny * self.h)

    def cell_of(self, pts, tol=1e-9):
        """Cell indices (j, i) of points; points on the outer edge are clamped.

        Raises InvalidInput for points farther than ``tol*h`` outside.
        """
        pts = np.asarray(pts, dtype=float)
        gx = (pts[..., 0] - self.origin[0]) / self.h
        gy = (pts[..., 1] - self.origin[1]) / self.h
        if (np.any(gx < -tol) or np.any(gy < -tol) or np.any(gx > self.nx + tol)
                or np.any(gy > self.ny + tol)):
            raise InvalidInput("point outside grid")
        i = np.clip(np.floor(gx).astype(np.int64), 0, self.nx - 1)
        j = np.clip(np.floor(gy).astype(np.int64), 0, self.ny - 1)
        return j, i

    def mask(self, domain):
        """Boolean mask of cells whose centers lie inside the domain."""
        return domain.level(self.centers()) < 0

    def to_dict(self):
        return {"nx": self.nx, "ny": self.ny, "h": self.h, "origin": list(self.origin)}


@dataclass
class ScalarGrid:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape:
            raise InvalidInput("values do not match grid shape")

    @property
    def h(self):
        return self.spec.h

    def integral(self):
        return float(np.nansum(self.values) * self.spec.h ** 2)

    def sample(self, pts):
        """Bilinear interpolation between cell centers (clamped at edges)."""
        return bilinear(self.values, self.spec, pts)


@dataclass
class VectorGrid:
    spec: GridSpec
    values: np.ndarray  # shape (ny, nx, 2)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape + (2,):
            raise InvalidInput("values do not match grid shape")

    def magnitude(self):
        return ScalarGrid(self.spec, np.hypot(self.values[..., 0], self.values[..., 1]))


def bilinear(values, spec, pts):
    pts = np.asarray(pts, dtype=float)
    gx = (pts[..., 0] - spec.origin[0]) / spec.h - 0.5
    gy = (pts[..., 1] - spec.origin[1]) / spec.h - 0.5
    gx = np.clip(gx, 0.0, spec.nx - 1.0)
    gy = np.clip(gy, 0.0, spec.ny - 1.0)
    i0 = np.minimum(np.floor(gx).astype(np.int64), max(spec.nx - 2, 0))
    j0 = np.minimum(np.floor(gy).astype(np.int64), max(spec.ny - 2, 0))
    i1 = np.minimum(i0 + 1, spec.nx - 1)
    j1 = np.minimum(j0 + 1, spec.ny - 1)
    fx = gx - i0
    fy = gy - j0
    v = values
    return ((1 - fx) * (1 - fy) * v[j0, i0] + fx * (1 - fy) * v[j0, i1]
            + (1 - fx) * fy * v[j1, i0] + fx * fy * v[j1, i1])


# -- file formats ---------------------------------------------------------

def write_csv(grid: ScalarGrid, path):
    """Write ``x,y,value`` rows (cell centers, row-major from the origin)."""
    spec = grid.spec
    X, Y = np.meshgrid(spec.xc, spec.yc)
    data = np.column_stack([X.ravel(), Y.ravel(), grid.values.ravel()])
    with open(path, "w", newline="\n") as fh:
        fh.write("x,y,value\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",", newline="\n")


def read_csv(path, spec: GridSpec):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ScalarGrid(spec, data[:, 2].reshape(spec.shape))


def write_pgm(grid: ScalarGrid, path, sidecar=True):
    """16-bit binary PGM, linear scale, normalized by the max finite value.

    Rows are written from the grid origin upward (row 0 = lowest y).  The
    scale is recorded in ``<path>.json`` so values can be recovered.
    """
    v = np.array(grid.values, dtype=float)
    finite = np.isfinite(v)
    lo = float(v[finite].min()) if finite.any() else 0.0
    hi = float(v[finite].max()) if finite.any() else 0.0
    span = hi - lo
    scaled = np.zeros(v.shape)
    if span > 0:
        scaled[finite] = (v[finite] - lo) / span
    img = np.round(scaled * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.spec.nx} {grid.spec.ny}\n65535\n".encode("ascii"))
        fh.write(img.tobytes())
    if sidecar:
        meta = {"min": lo, "max": hi, "grid": grid.spec.to_dict(), "row_order": "origin-first"}
        with open(str(path) + ".json", "w", newline="\n") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise InvalidInput("not a binary PGM")
    nx, ny = (int(t) for t in parts[1].split())
    maxval = int(parts[2])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(parts[3], dtype=dtype).reshape(ny, nx)
