"""Uniform tensor grids on rectangles, nodal fields, and trapezoid quadrature.

Grids store boundary nodes explicitly; Dirichlet data lives in the field
values at those nodes. Node ordering is lexicographic with x fastest, so a
2D field of shape ``(ny + 2, nx + 2)`` flattens C-style.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConformabilityError
from .ioutil import atomic_write_text

__all__ = [
    "Grid",
    "Field",
    "sample_function",
    "inner_product",
    "norm_l2",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid on an interval or a rectangle, boundary nodes included.

    Parameters
    ----------
    lo, hi : tuple of float
        Domain corners, one entry per axis. ``lo[k] < hi[k]``.
    n_interior : tuple of int
        Interior node count per axis (>= 1). Each axis has
        ``n_interior + 2`` nodes at spacing ``(hi - lo) / (n_interior + 1)``.
    """

    lo: tuple
    hi: tuple
    n_interior: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n_interior))
        if not (len(lo) == len(hi) == len(n)):
            raise ConformabilityError("lo, hi, n_interior must have equal length")
        if len(lo) not in (1, 2):
            raise ValueError(f"only 1D and 2D grids are supported, got dim={len(lo)}")
        for a, b in zip(lo, hi):
            if not b > a:
                raise ValueError(f"need lo < hi per axis, got [{a}, {b}]")
        for m in n:
            if m < 1:
                raise ValueError("n_interior must be >= 1 on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n_interior", n)

    @classmethod
    def interval(cls, n_interior: int, lo: float = 0.0, hi: float = 1.0) -> "Grid":
        return cls((lo,), (hi,), (n_interior,))

    @classmethod
    def box(cls, nx: int, ny: int, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> "Grid":
        return cls(tuple(lo), tuple(hi), (nx, ny))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def spacing(self) -> tuple:
        return tuple(
            (b - a) / (m + 1) for a, b, m in zip(self.lo, self.hi, self.n_interior)
        )

    @property
    def shape(self) -> tuple:
        """Nodes per axis, boundary included."""
        return tuple(m + 2 for m in self.n_interior)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_interior_nodes(self) -> int:
        return int(np.prod(self.n_interior))

    @cached_property
    def axis_coords(self) -> tuple:
        return tuple(
            np.linspace(a, b, m + 2)
            for a, b, m in zip(self.lo, self.hi, self.n_interior)
        )

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n_nodes, dim)``, lexicographic x fastest."""
        if self.dim == 1:
            out = self.axis_coords[0][:, None].copy()
        else:
            x, y = self.axis_coords
            X, Y = np.meshgrid(x, y, indexing="xy")  # rows over y, cols over x
            out = np.column_stack([X.ravel(), Y.ravel()])
        out.setflags(write=False)
        return out

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Composite trapezoid weights per node (tensor product over axes)."""
        axes = []
        for h, m in zip(self.spacing, self.n_interior):
            w = np.full(m + 2, h)
            w[0] = w[-1] = h / 2.0
            axes.append(w)
        if self.dim == 1:
            w = axes[0].copy()
        else:
            w = (axes[1][:, None] * axes[0][None, :]).ravel()
        w.setflags(write=False)
        return w

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape[::-1], dtype=bool)  # (ny, nx) layout in 2D
        if self.dim == 1:
            mask[1:-1] = True
        else:
            mask[1:-1, 1:-1] = True
        flat = mask.ravel()
        flat.setflags(write=False)
        return flat

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = ~self.interior_mask
        m.setflags(write=False)
        return m

    @cached_property
    def interior_indices(self) -> np.ndarray:
        idx = np.flatnonzero(self.interior_mask)
        idx.setflags(write=False)
        return idx

    @cached_property
    def boundary_indices(self) -> np.ndarray:
        idx = np.flatnonzero(self.boundary_mask)
        idx.setflags(write=False)
        return idx

    @property
    def volume(self) -> float:
        v = 1.0
        for a, b in zip(self.lo, self.hi):
            v *= b - a
        return v


@dataclass(frozen=True)
class Field:
    """Nodal scalar field over a :class:`Grid`.

    Values are float64, one per node in lexicographic order, and the stored
    array is marked read-only: fields behave as immutable values and every
    operation returns a new one.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape == tuple(reversed(self.grid.shape)) and self.grid.dim == 2:
            v = v.ravel()
        if v.ndim != 1 or v.size != self.grid.n_nodes:
            raise ConformabilityError(
                f"field needs {self.grid.n_nodes} values, got shape {np.shape(self.values)}"
            )
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.n_nodes))

    @classmethod
    def from_interior(cls, grid: Grid, interior: np.ndarray, boundary: "Field | None" = None) -> "Field":
        """Build a field from interior values; boundary taken from ``boundary`` or zero."""
        interior = np.asarray(interior, dtype=np.float64).ravel()
        if interior.size != grid.n_interior_nodes:
            raise ConformabilityError(
                f"expected {grid.n_interior_nodes} interior values, got {interior.size}"
            )
        vals = np.zeros(grid.n_nodes)
        if boundary is not None:
            _check_same_grid(grid, boundary.grid)
            vals[grid.boundary_indices] = boundary.values[grid.boundary_indices]
        vals[grid.interior_indices] = interior
        return cls(grid, vals)

    def interior(self) -> np.ndarray:
        return self.values[self.grid.interior_indices]

    def as_2d(self) -> np.ndarray:
        """Read-only ``(ny+2, nx+2)`` view of a 2D field."""
        if self.grid.dim != 2:
            raise ValueError("as_2d is only defined for 2D fields")
        return self.values.reshape(self.grid.shape[::-1])

    def is_homogeneous_dirichlet(self, tol: float = 0.0) -> bool:
        b = self.values[self.grid.boundary_indices]
        return bool(np.all(np.abs(b) <= tol))

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


def _check_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise ConformabilityError("fields live on different grids")


def sample_function(grid: Grid, fn) -> Field:
    """Sample a pointwise function of the coordinates onto grid nodes.

    ``fn`` takes one scalar per axis (``fn(x)`` in 1D, ``fn(x, y)`` in 2D)
    and returns a real number. Vectorized callables are also fine.
    """
    cols = [grid.coords[:, k] for k in range(grid.dim)]
    try:
        vals = np.asarray(fn(*cols), dtype=np.float64)
        if vals.shape != (grid.n_nodes,):
            raise ValueError
    except (ValueError, TypeError):
        vals = np.array([float(fn(*pt)) for pt in grid.coords], dtype=np.float64)
    return Field(grid, vals)


def inner_product(f: Field, g: Field) -> float:
    """L2 inner product by composite trapezoid quadrature.

    Weights are the tensor product of per-axis trapezoid weights (half
    weight on boundary nodes), so they are positive and sum to the domain
    volume.
    """
    _check_same_grid(f.grid, g.grid)
    w = f.grid.quad_weights
    return float(np.dot(w * f.values, g.values))


def norm_l2(f: Field) -> float:
    """Quadrature L2 norm, ``sqrt(inner_product(f, f))``."""
    w = f.grid.quad_weights
    return float(np.sqrt(np.dot(w * f.values, f.values)))


# --- CSV serialization -----------------------------------------------------

_FMT = "%.17g"


def write_field_csv(field: Field, path: str | Path) -> Path:
    """Write a field as CSV (``x[,y],value``), lexicographic rows, 17 digits."""
    g = field.grid
    header = "x,value" if g.dim == 1 else "x,y,value"
    lines = [header]
    for pt, v in zip(g.coords, field.values):
        coords = ",".join(_FMT % c for c in pt)
        lines.append(f"{coords},{_FMT % v}")
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_field_csv(path: str | Path) -> Field:
    """Read a field written by :func:`write_field_csv`, rebuilding its grid."""
    raw = np.genfromtxt(path, delimiter=",", names=True)
    names = raw.dtype.names
    if names is None or names[-1] != "value":
        raise ValueError(f"not a field CSV: {path}")
    dim = len(names) - 1
    cols = [np.atleast_1d(raw[n]) for n in names]
    axes = [np.unique(c) for c in cols[:-1]]
    n_int = tuple(len(a) - 2 for a in axes)
    grid = Grid(
        tuple(a[0] for a in axes), tuple(a[-1] for a in axes), n_int
    )
    for k, a in enumerate(axes):
        if not np.allclose(a, grid.axis_coords[k], rtol=0, atol=1e-12):
            raise ValueError("field CSV nodes are not a uniform grid")
    expected = grid.coords
    got = np.column_stack(cols[:-1])
    if got.shape != expected.shape or not np.allclose(got, expected, rtol=0, atol=1e-12):
        raise ValueError("field CSV rows are not in lexicographic node order")
    return Field(grid, cols[-1])
