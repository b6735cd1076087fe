"""Leapfrog time stepping: the free-space forward problem and Dirichlet problems in Omega.

Free space is emulated by a box padded far enough that reflections from its
walls cannot return to the sphere before time T.  Measurements are the
displacements at the ring nodes of the original grid (the nodes that carry
the Dirichlet data of the interior problem), which keeps the forward map and
the time-reversed interior problem on exactly the same stencil.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import BallRegion, BoundarySet, Grid, GridError, VectorField, boundary_set, dirichlet_masks
from .medium import Medium, _zero_outer_layer

log = logging.getLogger(__name__)

TRACE_MAGIC = b"ETATTRC\0"
TRACE_VERSION = 1
_TRACE_HEADER = struct.Struct("<8sIIIIdIdd")

SUPPORT_TOL = 1e-12
PAD_CELLS = 4


class SolverError(RuntimeError):
    pass


class CFLError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.5
    snapshot_stride: int | None = None

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.snapshot_stride is not None and self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")


@dataclass(frozen=True)
class WaveState:
    t: float
    u: VectorField
    u_t: VectorField


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Displacement history on the boundary nodes; ``samples[k]`` is time ``k*dt``."""

    boundary: BoundarySet
    dt: float
    n_steps: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        expect = (self.n_steps + 1, len(self.boundary), self.boundary.grid.dim)
        if samples.shape != expect:
            raise SolverError(f"trace samples have shape {samples.shape}, expected {expect}")
        if not np.all(np.isfinite(samples)):
            raise SolverError("trace contains non-finite samples")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def like(self, samples: np.ndarray) -> "BoundaryTrace":
        return BoundaryTrace(self.boundary, self.dt, self.n_steps, samples)

    def norm(self) -> float:
        """Space-time L2 norm: trapezoid in time, surface weights in space."""
        wt = np.full(self.n_steps + 1, self.dt)
        if self.n_steps == 0:
            wt[:] = 1.0
        else:
            wt[0] = wt[-1] = 0.5 * self.dt
        sq = np.sum(self.samples**2, axis=2) * self.boundary.weights
        return float(np.sqrt(np.sum(np.sum(sq, axis=1) * wt)))


@dataclass(eq=False)
class ForwardResult:
    trace: BoundaryTrace
    final: WaveState
    padded_grid: Grid
    offset: int
    snapshots: list[tuple[float, VectorField]] = field(default_factory=list)

    def crop(self, field: VectorField, grid: Grid) -> VectorField:
        """Restrict a padded-grid field back to ``grid``."""
        o = self.offset
        sl = (slice(None),) + (slice(o, o + grid.n_per_axis),) * grid.dim
        return VectorField(grid, field.data[sl])


# -- time grid, stability and padding -----------------------------------------


def time_step(grid: Grid, c_plus: float, T: float, cfl: float) -> tuple[float, int]:
    """Largest dt <= cfl*h/c_plus that divides T; returns ``(dt, n_steps)``."""
    dt_max = cfl * grid.spacing / c_plus
    if T < 0:
        raise SolverError("T must be non-negative")
    if T == 0:
        return dt_max, 0
    n = math.ceil(T / dt_max - 1e-9)
    return T / n, n


def check_cfl(medium: Medium, dt: float) -> float:
    """Raise CFLError unless leapfrog is stable for ``dt``; returns the dt limit."""
    rho = 1.02 * medium.spectral_radius
    limit = 2.0 / math.sqrt(rho) if rho > 0 else math.inf
    if dt > limit:
        raise CFLError(f"dt = {dt:.6g} exceeds the leapfrog stability limit {limit:.6g}")
    return limit


def pad_for_free_space(grid: Grid, ball: BallRegion, T: float, c_plus: float) -> Grid:
    """Concentric grid with half_width >= R + c_plus*T/2 + 4h and the same spacing."""
    h = grid.spacing
    need = ball.radius + 0.5 * c_plus * T + PAD_CELLS * h
    extra = max(0, math.ceil((need - grid.half_width) / h - 1e-9))
    return Grid(grid.dim, grid.half_width + extra * h, grid.n_per_axis + 2 * extra)


def _offset(base: Grid, padded: Grid) -> int:
    return (padded.n_per_axis - base.n_per_axis) // 2


def _embed(base: Grid, padded: Grid, data: np.ndarray) -> np.ndarray:
    o = _offset(base, padded)
    out = np.zeros((data.shape[0], *padded.shape))
    out[(slice(None),) + (slice(o, o + base.n_per_axis),) * base.dim] = data
    return out


def _padded_indices(boundary: BoundarySet, padded: Grid) -> np.ndarray:
    o = _offset(boundary.grid, padded)
    multi = np.unravel_index(boundary.indices, boundary.grid.shape)
    return np.ravel_multi_index(tuple(m + o for m in multi), padded.shape)


def check_support(f: VectorField, ball: BallRegion) -> None:
    inner, ring = dirichlet_masks(f.grid, ball)
    peak = f.max_abs()
    outside = np.max(np.abs(f.data[:, ~(inner | ring)]), initial=0.0)
    if outside > SUPPORT_TOL * peak:
        raise SolverError(
            f"initial data not supported in the closed ball: {outside:.3g} outside vs peak {peak:.3g}"
        )


# -- forward problem -------------------------------------------------------------


def forward_solve(
    medium: Medium, ball: BallRegion, f: VectorField, T: float,
    config: SolverConfig = SolverConfig(), boundary: BoundarySet | None = None,
) -> ForwardResult:
    """Solve u_tt + P u = 0, u(0) = f, u_t(0) = 0 and record u on the boundary nodes."""
    base = medium.grid
    if f.grid != base:
        raise GridError("initial data and medium live on different grids")
    check_support(f, ball)
    boundary = boundary or boundary_set(base, ball)
    dt, n_steps = time_step(base, medium.c_plus, T, config.cfl)
    check_cfl(medium, dt)

    padded = pad_for_free_space(base, ball, T, medium.c_plus)
    offset = _offset(base, padded)
    pmed = medium.padded(padded, offset)
    idx = _padded_indices(boundary, padded)
    inv_mass = 1.0 / padded.cell_volume
    dt2 = dt * dt

    def gather(a):
        return a.reshape(padded.dim, -1)[:, idx].T

    def accel(a):
        out = pmed.stiffness(a)
        out *= -inv_mass
        _zero_outer_layer(out)
        return out

    u_prev = _embed(base, padded, f.data)
    samples = np.empty((n_steps + 1, len(boundary), padded.dim))
    samples[0] = gather(u_prev)
    snapshots = []
    stride = config.snapshot_stride
    if stride:
        snapshots.append((0.0, VectorField(padded, u_prev)))
    if n_steps == 0:
        u = u_prev
        velocity = np.zeros_like(u)
    else:
        u = u_prev + 0.5 * dt2 * accel(u_prev)
        samples[1] = gather(u)
        if stride and 1 % stride == 0:
            snapshots.append((dt, VectorField(padded, u)))
        for n in range(1, n_steps):
            u_next = 2.0 * u - u_prev + dt2 * accel(u)
            u_prev, u = u, u_next
            samples[n + 1] = gather(u)
            if stride and (n + 1) % stride == 0:
                snapshots.append(((n + 1) * dt, VectorField(padded, u)))
        # one extra step gives the centred velocity at T
        u_next = 2.0 * u - u_prev + dt2 * accel(u)
        velocity = (u_next - u_prev) / (2.0 * dt)
    final = WaveState(n_steps * dt, VectorField(padded, u), VectorField(padded, velocity))
    trace = BoundaryTrace(boundary, dt, n_steps, samples)
    log.debug("forward solve: %d steps of %.4g on %s", n_steps, dt, padded.shape)
    return ForwardResult(trace, final, padded, offset, snapshots)


def apply_lambda(
    medium: Medium, ball: BallRegion, f: VectorField, T: float,
    config: SolverConfig = SolverConfig(), boundary: BoundarySet | None = None,
) -> BoundaryTrace:
    return forward_solve(medium, ball, f, T, config, boundary).trace


# -- interior Dirichlet problem -------------------------------------------------


@dataclass(eq=False)
class DirichletResult:
    final: VectorField
    penultimate: VectorField
    levels: dict[int, VectorField]
    energies: np.ndarray | None


def dirichlet_solve(
    medium: Medium, ball: BallRegion, u_start: VectorField, boundary_values: np.ndarray,
    dt: float, *, direction: str = "forward", u_start_t: VectorField | None = None,
    u_second: VectorField | None = None, keep: tuple[int, ...] = (),
    track_energy: bool = False, boundary: BoundarySet | None = None,
) -> DirichletResult:
    """Leapfrog for u_tt + P u = 0 on the interior nodes, u prescribed on the ring.

    ``boundary_values[k]`` holds the ring values at time level k; a forward run
    starts at level 0 and ends at level N, a backward run goes from N to 0.
    The second starting level is ``u_second`` when given, otherwise the Taylor
    step ``u -+ dt u_t - dt^2/2 P u``.  ``track_energy`` records the conserved
    leapfrog energy ``|du/dt|^2_M + (u^{k+1}, u^k)_HD`` between consecutive levels.
    """
    grid = medium.grid
    if u_start.grid != grid:
        raise GridError("initial data and medium live on different grids")
    boundary = boundary or boundary_set(grid, ball)
    g = np.asarray(boundary_values, dtype=np.float64)
    if g.ndim != 3 or g.shape[1:] != (len(boundary), grid.dim):
        raise SolverError(f"boundary data shape {g.shape} does not match {len(boundary)} nodes")
    n_steps = g.shape[0] - 1
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    check_cfl(medium, dt)

    inner, _ = dirichlet_masks(grid, ball)
    flat = grid.dim, -1
    inv_mass = 1.0 / grid.cell_volume
    dt2 = dt * dt
    levels = range(n_steps + 1) if direction == "forward" else range(n_steps, -1, -1)
    levels = list(levels)
    sign = 1.0 if direction == "forward" else -1.0

    def impose(a, level):
        a[:, ~inner] = 0.0
        a.reshape(flat)[:, boundary.indices] = g[level].T
        return a

    u_prev = impose(np.array(u_start.data), levels[0])
    kept = {}
    if levels[0] in keep:
        kept[levels[0]] = VectorField(grid, u_prev)
    energies = []
    if n_steps == 0:
        return DirichletResult(VectorField(grid, u_prev), VectorField(grid, u_prev), kept, None)

    if u_second is not None:
        u = np.array(u_second.data)
    else:
        u = u_prev - (0.5 * dt2 * inv_mass) * medium.stiffness(u_prev)
        if u_start_t is not None:
            u += sign * dt * u_start_t.data
    u = impose(u, levels[1])
    if levels[1] in keep:
        kept[levels[1]] = VectorField(grid, u)
    weights = grid.trapezoid_weights

    def staggered_energy(a, b, Kb):
        # (a, b)_HD = a . K b, reusing the stiffness product of the step
        kin = float(np.sum(np.sum((b - a) ** 2, axis=0) * weights)) / dt2
        return kin + float(np.sum(a * Kb))

    Ku = medium.stiffness(u)
    for level in levels[2:]:
        if track_energy:
            energies.append(staggered_energy(u_prev, u, Ku))
        u_next = impose(2.0 * u - u_prev - (dt2 * inv_mass) * Ku, level)
        u_prev, u = u, u_next
        if level in keep:
            kept[level] = VectorField(grid, u)
        Ku = medium.stiffness(u) if (track_energy or level != levels[-1]) else None
    if track_energy:
        energies.append(staggered_energy(u_prev, u, Ku))
    return DirichletResult(
        VectorField(grid, u), VectorField(grid, u_prev), kept,
        np.array(energies) if track_energy else None,
    )


# -- trace files -------------------------------------------------------------------


def _node_dtype(dim: int) -> np.dtype:
    return np.dtype([("index", "<u8"), ("x", "<f8", (dim,)), ("normal", "<f8", (dim,)), ("weight", "<f8")])


def trace_to_bytes(trace: BoundaryTrace) -> bytes:
    b = trace.boundary
    g = b.grid
    header = _TRACE_HEADER.pack(
        TRACE_MAGIC, TRACE_VERSION, g.dim, g.n_per_axis, len(b), g.half_width,
        trace.n_steps, trace.dt, b.radius,
    )
    table = np.zeros(len(b), dtype=_node_dtype(g.dim))
    table["index"] = b.indices
    table["x"] = b.points
    table["normal"] = b.normals
    table["weight"] = b.weights
    return header + table.tobytes() + np.ascontiguousarray(trace.samples, dtype="<f8").tobytes()


def trace_from_bytes(buf: bytes) -> BoundaryTrace:
    if len(buf) < _TRACE_HEADER.size:
        raise SolverError("truncated trace file")
    magic, version, dim, n, nb, half_width, n_steps, dt, radius = _TRACE_HEADER.unpack_from(buf)
    if magic != TRACE_MAGIC:
        raise SolverError("not a trace file (bad magic)")
    if version != TRACE_VERSION:
        raise SolverError(f"unsupported trace version {version}")
    grid = Grid(dim, half_width, n)
    dtype = _node_dtype(dim)
    pos = _TRACE_HEADER.size
    table = np.frombuffer(buf, dtype=dtype, count=nb, offset=pos)
    pos += table.nbytes
    count = (n_steps + 1) * nb * dim
    if len(buf) - pos != 8 * count:
        raise SolverError("trace sample block has the wrong size")
    samples = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(n_steps + 1, nb, dim)
    boundary = BoundarySet(
        grid, radius, table["index"].astype(np.int64), table["x"].copy(),
        table["normal"].copy(), table["weight"].copy(),
    )
    return BoundaryTrace(boundary, dt, n_steps, samples)


def write_trace(trace: BoundaryTrace, path: str | Path) -> None:
    Path(path).write_bytes(trace_to_bytes(trace))


def read_trace(path: str | Path) -> BoundaryTrace:
    return trace_from_bytes(Path(path).read_bytes())
