"""Elastic-wave thermoacoustic tomography: forward simulation, time reversal and
Neumann series reconstruction, with checks of the sufficient conditions on the
Lame parameters and a bicharacteristic ray tracer."""

from .grid import BallRegion, BoundarySet, Grid, VectorField, boundary_set, make_grid, read_field, write_field
from .medium import ConditionReport, Medium, build_medium, check_conditions
from .neumann import ContractionDiagnostic, ReconstructionResult, apply_K, contraction_estimate, reconstruct
from .operator import apply_P, energy, hd_inner, hd_norm
from .phantoms import phantom_library
from .rays import Ray, SpeedField, TrappingReport, estimate_T_Omega, integrate_ray
from .reversal import HarmonicExtension, harmonic_extension, pseudo_inverse_A
from .solver import (
    BoundaryTrace, SolverConfig, apply_lambda, dirichlet_solve, forward_solve, read_trace, write_trace,
)

__version__ = "0.1.0"
