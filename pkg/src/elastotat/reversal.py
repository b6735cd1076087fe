"""Harmonic extension and the time-reversal pseudo-inverse A."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import BallRegion, BoundarySet, GridError, VectorField, boundary_set, dirichlet_masks
from .medium import Medium
from .solver import BoundaryTrace, SolverError, dirichlet_solve


class ConvergenceError(SolverError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass(eq=False)
class HarmonicExtension:
    phi: VectorField
    residual: float
    iterations: int
    history: list[float] = field(default_factory=list)


def conjugate_gradient(apply, b: np.ndarray, tol: float, max_iter: int):
    """Plain CG for an SPD operator; stops on ||r|| <= tol * ||b||.

    Returns ``(x, history)`` where history holds relative residuals per iteration.
    """
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(np.sum(r * r))
    bnorm = np.sqrt(rr)
    history = [1.0]
    if bnorm == 0.0:
        return x, history
    for _ in range(max_iter):
        Ap = apply(p)
        alpha = rr / float(np.sum(p * Ap))
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(np.sum(r * r))
        history.append(np.sqrt(rr_new) / bnorm)
        if history[-1] <= tol:
            return x, history
        p *= rr_new / rr
        p += r
        rr = rr_new
    raise ConvergenceError(
        f"CG did not reach {tol:g} in {max_iter} iterations (last {history[-1]:.3g})", history
    )


def harmonic_extension(
    medium: Medium, ball: BallRegion, boundary_values: np.ndarray, tol: float = 1e-10,
    max_iter: int | None = None, boundary: BoundarySet | None = None,
) -> HarmonicExtension:
    """Solve P_h phi = 0 on the interior nodes with phi = boundary_values on the ring.

    ``boundary_values`` has shape ``(n_boundary, dim)``.  The interior block of
    the stiffness is SPD, so CG on the interior unknowns converges.
    """
    grid = medium.grid
    boundary = boundary or boundary_set(grid, ball)
    vals = np.asarray(boundary_values, dtype=np.float64)
    if vals.shape != (len(boundary), grid.dim):
        raise GridError(f"boundary values shape {vals.shape}, expected {(len(boundary), grid.dim)}")
    inner, _ = dirichlet_masks(grid, ball)
    max_iter = 50 * grid.n_per_axis if max_iter is None else max_iter

    lift = grid.zeros()
    lift.reshape(grid.dim, -1)[:, boundary.indices] = vals.T

    def apply(x):
        full = grid.zeros()
        full[:, inner] = x
        return medium.stiffness(full)[:, inner]

    rhs = -medium.stiffness(lift)[:, inner]
    scale = float(np.sqrt(np.sum(rhs**2)))
    x, history = conjugate_gradient(apply, rhs, tol, max_iter)
    phi = lift
    phi[:, inner] = x
    res = medium.stiffness(phi)[:, inner]
    residual = float(np.sqrt(np.sum(res**2))) / scale if scale > 0 else 0.0
    return HarmonicExtension(VectorField(grid, phi), residual, len(history) - 1, history)


@dataclass(eq=False)
class TimeReversal:
    """Result of A h: the reconstruction and the extension used as terminal data."""

    field: VectorField
    extension: HarmonicExtension


def pseudo_inverse_A(
    medium: Medium, ball: BallRegion, trace: BoundaryTrace, tol: float = 1e-10
) -> TimeReversal:
    """A h = v(0) where v solves the interior problem backward from (phi, 0) at T."""
    boundary = trace.boundary
    if not boundary.same_as(boundary_set(medium.grid, ball)):
        raise GridError("trace boundary does not match the medium grid and ball")
    h = trace.samples
    ext = harmonic_extension(medium, ball, h[-1], tol, boundary=boundary)
    if trace.n_steps == 0:
        v0 = ext.phi
    else:
        result = dirichlet_solve(
            medium, ball, ext.phi, h, trace.dt, direction="backward", boundary=boundary
        )
        v0 = result.final
    inner, ring = dirichlet_masks(medium.grid, ball)
    out = np.where(inner | ring, v0.data, 0.0)
    return TimeReversal(VectorField(medium.grid, out), ext)
