"""Uniform grids, the ball Omega = B(0, R), its discrete boundary and vector fields.

Node coordinates are ``x_i = -L + i*h`` along every axis with
``h = 2L / (n - 1)``.  Arrays holding a vector field have shape
``(dim, n, ..., n)`` (component first, then axes in C order).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import SphericalVoronoi

FIELD_MAGIC = b"ETATFLD\0"
FIELD_VERSION = 1
_FIELD_HEADER = struct.Struct("<8sIIIdI")

MIN_NODES = 8


class GridError(ValueError):
    """Invalid grid, region or field geometry."""


@dataclass(frozen=True)
class Grid:
    dim: int
    half_width: float
    n_per_axis: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        if not self.half_width > 0:
            raise GridError(f"half_width must be positive, got {self.half_width}")
        if self.n_per_axis < MIN_NODES:
            raise GridError(f"n_per_axis must be >= {MIN_NODES}, got {self.n_per_axis}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_per_axis - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """1D node coordinates, identical on every axis."""
        x = -self.half_width + np.arange(self.n_per_axis) * self.spacing
        x.flags.writeable = False
        return x

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def radius_sq(self) -> np.ndarray:
        r2 = sum(c * c for c in self.coords)
        r2.flags.writeable = False
        return r2

    def points(self) -> np.ndarray:
        """All node coordinates as an ``(n**dim, dim)`` array in C order."""
        return np.stack([c.ravel() for c in self.coords], axis=1)

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        w1 = np.full(self.n_per_axis, self.spacing)
        w1[0] = w1[-1] = 0.5 * self.spacing
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        w.flags.writeable = False
        return w

    def zeros(self) -> np.ndarray:
        return np.zeros((self.dim, *self.shape))


def make_grid(dim: int, half_width: float, n_per_axis: int) -> Grid:
    return Grid(int(dim), float(half_width), int(n_per_axis))


@dataclass(frozen=True)
class BallRegion:
    """Omega = B(0, radius), centred at the origin."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GridError(f"ball radius must be positive, got {self.radius}")

    def mask(self, grid: Grid) -> np.ndarray:
        """Nodes strictly inside the ball (|x| < R)."""
        return grid.radius_sq < self.radius**2

    def check_inside(self, grid: Grid) -> None:
        # ring nodes sit at most one cell outside the sphere; they must not
        # land on the outermost grid layer
        if self.radius + 2.0 * grid.spacing > grid.half_width:
            raise GridError(
                f"ball of radius {self.radius} needs half_width >= R + 2h = "
                f"{self.radius + 2 * grid.spacing:.6g}, grid has {grid.half_width}"
            )


def dirichlet_masks(grid: Grid, ball: BallRegion) -> tuple[np.ndarray, np.ndarray]:
    """Interior nodes (|x| < R) and the one-cell ring of nodes around them.

    The ring holds every node outside the ball that shares a grid cell with an
    interior node; the stencil of an interior node touches only interior and
    ring nodes.
    """
    inner = ball.mask(grid)
    grown = ndimage.binary_dilation(inner, structure=np.ones((3,) * grid.dim, bool))
    return inner, grown & ~inner


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.shape != (self.grid.dim, *self.grid.shape):
            raise GridError(
                f"field shape {data.shape} does not match grid "
                f"{(self.grid.dim, *self.grid.shape)}"
            )
        if not np.all(np.isfinite(data)):
            raise GridError("field contains non-finite samples")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, grid.zeros())

    def _check(self, other: "VectorField") -> None:
        if other.grid != self.grid:
            raise GridError("fields live on different grids")

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(self.grid, self.data + other.data)

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(self.grid, self.data - other.data)

    def __mul__(self, alpha: float) -> "VectorField":
        return VectorField(self.grid, float(alpha) * self.data)

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return VectorField(self.grid, -self.data)

    def dot(self, other: "VectorField") -> float:
        """Trapezoidal L2 inner product over the whole grid."""
        self._check(other)
        return float(np.sum(np.sum(self.data * other.data, axis=0) * self.grid.trapezoid_weights))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data)))


def restrict(field: VectorField, ball: BallRegion) -> VectorField:
    """Zero every sample outside the open ball."""
    return VectorField(field.grid, np.where(ball.mask(field.grid), field.data, 0.0))


def restrict_closure(field: VectorField, ball: BallRegion) -> VectorField:
    """Zero every sample outside the discrete closure (interior plus ring)."""
    inner, ring = dirichlet_masks(field.grid, ball)
    return VectorField(field.grid, np.where(inner | ring, field.data, 0.0))


def extend_by_zero(field: VectorField, ball: BallRegion) -> VectorField:
    """Zero extension of the part of ``field`` living on the closed ball.

    Identity on fields already supported in the discrete closure of the ball.
    """
    return restrict_closure(field, ball)


@dataclass(frozen=True, eq=False)
class BoundarySet:
    """Discretisation of the sphere |x| = R.

    ``indices`` are flat (C order) indices of the ring nodes of the grid,
    ``points`` their radial projections onto the sphere, ``weights`` the
    spherical-Voronoi area of each projected point.
    """

    grid: Grid
    radius: float
    indices: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    def gather(self, data: np.ndarray) -> np.ndarray:
        """Values of a ``(dim, *shape)`` array at the boundary nodes, ``(nb, dim)``."""
        return data.reshape(data.shape[0], -1)[:, self.indices].T

    def same_as(self, other: "BoundarySet") -> bool:
        return (
            self.grid == other.grid
            and self.radius == other.radius
            and np.array_equal(self.indices, other.indices)
        )


def boundary_set(grid: Grid, ball: BallRegion) -> BoundarySet:
    ball.check_inside(grid)
    _, ring = dirichlet_masks(grid, ball)
    indices = np.flatnonzero(ring.ravel())
    x = grid.points()[indices]
    normals = x / np.linalg.norm(x, axis=1, keepdims=True)
    points = ball.radius * normals

    key = np.round(points / grid.spacing, 9)
    if len(np.unique(key, axis=0)) != len(key):
        raise GridError("boundary nodes project onto coincident sphere points")

    if grid.dim == 2:
        weights = _arc_weights(points, ball.radius)
    else:
        sv = SphericalVoronoi(points, radius=ball.radius, center=np.zeros(3))
        weights = sv.calculate_areas()
    if np.any(weights <= 0):
        raise GridError("non-positive boundary quadrature weight")
    for a in (indices, points, normals, weights):
        a.flags.writeable = False
    return BoundarySet(grid, ball.radius, indices, points, normals, weights)


def _arc_weights(points: np.ndarray, radius: float) -> np.ndarray:
    theta = np.arctan2(points[:, 1], points[:, 0])
    order = np.argsort(theta, kind="stable")
    ts = theta[order]
    gaps = np.diff(np.concatenate([ts, [ts[0] + 2 * np.pi]]))
    w_sorted = 0.5 * radius * (gaps + np.roll(gaps, 1))
    weights = np.empty_like(w_sorted)
    weights[order] = w_sorted
    return weights


# -- field files -------------------------------------------------------------


def samples_to_bytes(grid: Grid, data: np.ndarray) -> bytes:
    """Serialise a ``(ncomp, *grid.shape)`` sample array with its grid header."""
    data = np.asarray(data, dtype=np.float64)
    if data.shape[1:] != grid.shape:
        raise GridError(f"sample shape {data.shape} does not match grid {grid.shape}")
    header = _FIELD_HEADER.pack(
        FIELD_MAGIC, FIELD_VERSION, grid.dim, grid.n_per_axis, grid.half_width, data.shape[0]
    )
    return header + np.ascontiguousarray(data, dtype="<f8").tobytes()


def samples_from_bytes(buf: bytes) -> tuple[Grid, np.ndarray]:
    if len(buf) < _FIELD_HEADER.size:
        raise GridError("truncated field file")
    magic, version, dim, n, half_width, ncomp = _FIELD_HEADER.unpack_from(buf)
    if magic != FIELD_MAGIC:
        raise GridError("not a field file (bad magic)")
    if version != FIELD_VERSION:
        raise GridError(f"unsupported field file version {version}")
    grid = Grid(dim, half_width, n)
    count = ncomp * n**dim
    body = buf[_FIELD_HEADER.size :]
    if len(body) != 8 * count:
        raise GridError(f"field body has {len(body)} bytes, expected {8 * count}")
    return grid, np.frombuffer(body, dtype="<f8").reshape((ncomp, *grid.shape))


def field_to_bytes(field: VectorField) -> bytes:
    return samples_to_bytes(field.grid, field.data)


def field_from_bytes(buf: bytes) -> VectorField:
    grid, data = samples_from_bytes(buf)
    return VectorField(grid, data)


def write_field(field: VectorField, path: str | Path) -> None:
    Path(path).write_bytes(field_to_bytes(field))


def read_field(path: str | Path) -> VectorField:
    return field_from_bytes(Path(path).read_bytes())


def write_scalar(grid: Grid, values: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(samples_to_bytes(grid, np.asarray(values)[None]))


def read_scalar(path: str | Path) -> tuple[Grid, np.ndarray]:
    grid, data = samples_from_bytes(Path(path).read_bytes())
    if data.shape[0] != 1:
        raise GridError(f"expected a scalar field file, found {data.shape[0]} components")
    return grid, data[0]
