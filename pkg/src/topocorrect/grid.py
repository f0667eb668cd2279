"""Regular-grid scalar fields and their simplicial edge neighborhood.

The grid is read as a Freudenthal/Kuhn triangulation of the voxel lattice:
besides the axis edges it carries the (1,1) diagonal in-plane and the
(0,1,1), (1,0,1), (1,1,1) diagonals in 3D.  A 2D field is a 3D field with
a single z-slab; clipping the 3D stencil to the slab leaves exactly the
six-neighbor 2D stencil.

Vertices are identified by their flat index with x fastest:
``v = x + nx * (y + ny * z)``.  All value comparisons in this package go
through the (value, vertex id) lexicographic key so that plateaus still
yield a strict total order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Freudenthal stencil offsets (dx, dy, dz) in the package-wide canonical
# order: axis edges, face diagonals, body diagonal, each followed by its
# negation.  Everything that enumerates neighbors uses this tuple.
STENCIL: tuple[tuple[int, int, int], ...] = (
    (1, 0, 0), (-1, 0, 0),
    (0, 1, 0), (0, -1, 0),
    (0, 0, 1), (0, 0, -1),
    (1, 1, 0), (-1, -1, 0),
    (0, 1, 1), (0, -1, -1),
    (1, 0, 1), (-1, 0, -1),
    (1, 1, 1), (-1, -1, -1),
)


@dataclass(frozen=True)
class ScalarField:
    """An immutable 2D/3D scalar field on a regular grid.

    Parameters
    ----------
    dims : (nx, ny, nz) grid extents; a 2-tuple is promoted to nz = 1.
    values : flat float64 array of length nx*ny*nz, x fastest.  Any
        array-like is copied to float64 and frozen.
    """

    dims: tuple[int, int, int]
    values: np.ndarray

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 2:
            dims = (dims[0], dims[1], 1)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError(f"dims must be positive (nx, ny, nz), got {self.dims!r}")
        if sum(d >= 2 for d in dims) < 2:
            raise ValueError(f"need at least two extents >= 2, got {dims}")
        values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1).copy()
        n = dims[0] * dims[1] * dims[2]
        if values.size != n:
            raise ValueError(f"expected {n} values for dims {dims}, got {values.size}")
        if not np.isfinite(values).all():
            raise ValueError("field values must all be finite")
        values.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @property
    def vertex_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def is_2d(self) -> bool:
        return self.dims[2] == 1

    def as_zyx(self) -> np.ndarray:
        """Read-only (nz, ny, nx) view of the values."""
        nx, ny, nz = self.dims
        return self.values.reshape(nz, ny, nx)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.dims, values)


def linear_index(dims: tuple[int, int, int], x: int, y: int, z: int = 0) -> int:
    nx, ny, nz = dims
    if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
        raise IndexError(f"({x}, {y}, {z}) outside grid {dims}")
    return x + nx * (y + ny * z)


def vertex_coords(dims: tuple[int, int, int], v: int) -> tuple[int, int, int]:
    nx, ny, nz = dims
    if not (0 <= v < nx * ny * nz):
        raise IndexError(f"vertex {v} outside grid {dims}")
    return v % nx, (v // nx) % ny, v // (nx * ny)


def neighbors(dims: tuple[int, int, int], v: int) -> list[int]:
    """Stencil neighbors of v inside the grid, in canonical stencil order."""
    nx, ny, nz = dims
    x, y, z = vertex_coords(dims, v)
    out = []
    for dx, dy, dz in STENCIL:
        px, py, pz = x + dx, y + dy, z + dz
        if 0 <= px < nx and 0 <= py < ny and 0 <= pz < nz:
            out.append(px + nx * (py + ny * pz))
    return out


def precedes(field: ScalarField, i: int, j: int) -> bool:
    """Strict total order on vertices: (value, id) lexicographic.

    True iff vertex i sorts strictly below vertex j.  Ties in value are
    broken by the vertex id, so no two vertices ever compare equal.
    """
    fi, fj = field.values[i], field.values[j]
    return fi < fj or (fi == fj and i < j)
