"""Neumann series f = sum K^m A h with K = I - A Lambda, and contraction diagnostics."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import BallRegion, BoundarySet, VectorField, boundary_set
from .medium import Medium, _json_safe
from .operator import energy, hd_norm
from .reversal import pseudo_inverse_A
from .solver import BoundaryTrace, SolverConfig, SolverError, apply_lambda, forward_solve, time_step

log = logging.getLogger(__name__)


class ReconstructionError(SolverError):
    pass


@dataclass(eq=False)
class ReconstructionResult:
    """Iterates f_k and their diagnostics.

    ``residual_norms[k]`` is the trace-space norm of Lambda f_k - h and
    ``error_norms[k]`` (truth supplied) the H_D norm of f_k - f_true.
    ``update_norms[k]`` is |f_{k+1} - f_k| relative to |f_0|, and
    ``k_norm_estimates`` the ratios of consecutive updates.
    """

    final: VectorField
    iterates: list[VectorField]
    residual_norms: list[float]
    error_norms: list[float]
    update_norms: list[float]
    k_norm_estimates: list[float]
    converged: bool
    iterations_run: int
    data_norm: float
    stop_tol: float

    def to_dict(self) -> dict:
        return _json_safe({
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "stop_tol": self.stop_tol,
            "data_norm": self.data_norm,
            "residual_norms": self.residual_norms,
            "error_norms": self.error_norms,
            "update_norms": self.update_norms,
            "k_norm_estimates": self.k_norm_estimates,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class ContractionDiagnostic:
    energy_ratio: float
    bound: float
    T_used: float
    energy_initial: float
    energy_final: float

    def to_dict(self) -> dict:
        return _json_safe(self.__dict__)


def _check_trace_grid(medium: Medium, trace: BoundaryTrace, config: SolverConfig) -> None:
    dt, n = time_step(medium.grid, medium.c_plus, trace.T, config.cfl)
    if n != trace.n_steps or not math.isclose(dt, trace.dt, rel_tol=1e-12):
        raise ReconstructionError(
            f"trace time grid (dt={trace.dt:.6g}, {trace.n_steps} steps) does not match "
            f"the solver's (dt={dt:.6g}, {n} steps) for this medium and cfl"
        )


def apply_K(
    medium: Medium, ball: BallRegion, f: VectorField, T: float,
    config: SolverConfig = SolverConfig(), tol: float = 1e-10,
) -> VectorField:
    """K f = f - A Lambda f."""
    trace = apply_lambda(medium, ball, f, T, config)
    return f - pseudo_inverse_A(medium, ball, trace, tol).field


def reconstruct(
    medium: Medium, ball: BallRegion, trace: BoundaryTrace, max_iters: int = 10,
    stop_tol: float = 1e-6, f_true: VectorField | None = None,
    config: SolverConfig = SolverConfig(), keep_iterates: bool = False, tol: float = 1e-10,
) -> ReconstructionResult:
    """Fixed-point iteration f_0 = A h, f_{k+1} = f_k + A(h - Lambda f_k).

    Stops once the update norm relative to |f_0| drops below ``stop_tol`` or
    after ``max_iters`` iterates.  Residuals come free with each update; the
    last one costs a single extra forward solve.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    _check_trace_grid(medium, trace, config)
    boundary: BoundarySet = trace.boundary
    T = trace.T

    def A(samples):
        return pseudo_inverse_A(medium, ball, trace.like(samples), tol).field

    def lam(f):
        return apply_lambda(medium, ball, f, T, config, boundary).samples

    def checked(f, k):
        if not np.all(np.isfinite(f.data)):
            raise ReconstructionError(f"non-finite iterate at k={k}")
        return f

    h = trace.samples
    f = checked(A(h), 0)
    norm0 = hd_norm(medium, f)
    iterates = [f] if keep_iterates else []
    residuals, errors, updates, ratios = [], [], [], []
    if f_true is not None:
        errors.append(hd_norm(medium, f - f_true))
    converged = False
    k = 1
    if norm0 == 0.0:
        converged = True
    while not converged and k < max_iters:
        r = h - lam(f)
        residuals.append(trace.like(r).norm())
        f_next = checked(f + A(r), k)
        updates.append(hd_norm(medium, f_next - f) / norm0)
        if len(updates) > 1 and updates[-2] > 0:
            ratios.append(updates[-1] / updates[-2])
        f = f_next
        k += 1
        if keep_iterates:
            iterates.append(f)
        if f_true is not None:
            errors.append(hd_norm(medium, f - f_true))
        log.info("iterate %d: update %.3e", k - 1, updates[-1])
        converged = updates[-1] < stop_tol
    residuals.append(trace.like(h - lam(f)).norm())
    if not keep_iterates:
        iterates = [f]
    return ReconstructionResult(
        final=f, iterates=iterates, residual_norms=residuals, error_norms=errors,
        update_norms=updates, k_norm_estimates=ratios, converged=converged,
        iterations_run=k, data_norm=trace.norm(), stop_tol=stop_tol,
    )


def contraction_estimate(
    medium: Medium, ball: BallRegion, f: VectorField, T: float,
    config: SolverConfig = SolverConfig(),
) -> ContractionDiagnostic:
    """Local energy ratio E_Omega(u, T) / E_Omega(u, 0) of the forward solution."""
    e0 = energy(medium, f, VectorField.zeros(medium.grid), ball).total
    if e0 == 0.0:
        raise ReconstructionError("zero initial energy in Omega; the ratio is undefined")
    result = forward_solve(medium, ball, f, T, config)
    g = medium.grid
    eT = energy(medium, result.crop(result.final.u, g), result.crop(result.final.u_t, g), ball).total
    ratio = eT / e0
    return ContractionDiagnostic(ratio, math.sqrt(ratio), result.trace.T, e0, eT)
