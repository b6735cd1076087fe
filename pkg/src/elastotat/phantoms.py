"""Analytic test media and initial displacements."""

from __future__ import annotations

import math

import numpy as np

from .grid import Grid, VectorField

# relative Gaussian level at the nominal support radius
GAUSSIAN_TAIL = 1e-14


def _bump(s: np.ndarray) -> np.ndarray:
    """C-infinity bump, 1 at s = 0 and identically 0 for s >= 1."""
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def constant(grid: Grid, R: float = 1.0, lam: float = 1.0, mu: float = 1.0):
    return np.full(grid.shape, float(lam)), np.full(grid.shape, float(mu))


def radial_bump(
    grid: Grid, R: float = 1.0, lam: float = 1.0, mu: float = 1.0,
    amplitude: float = 0.2, width: float | None = None,
):
    """Both parameters raised by ``amplitude`` at the origin, constant beyond ``width``."""
    width = 0.5 * R if width is None else width
    b = _bump(np.sqrt(grid.radius_sq) / width)
    return lam * (1.0 + amplitude * b), mu * (1.0 + amplitude * b)


def smooth_gradient(
    grid: Grid, R: float = 1.0, lam: float = 1.0, mu: float = 1.0,
    slope: float = 0.1, width: float | None = None,
):
    """Log-parameters ramp along x1 with the given slope, saturating past ``width``."""
    width = R if width is None else width
    ramp = np.exp(slope * width * np.tanh(grid.coords[0] / width))
    return lam * ramp, mu * ramp


def gaussian_source(
    grid: Grid, R: float = 1.0, support_radius: float | None = None,
    component: int = 0, amplitude: float = 1.0, center=None,
) -> VectorField:
    """Single-component Gaussian whose level drops to 1e-14 at ``support_radius``."""
    support_radius = 0.5 * R if support_radius is None else support_radius
    sigma = gaussian_sigma(support_radius)
    center = np.zeros(grid.dim) if center is None else np.asarray(center, float)
    r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.coords, center))
    data = grid.zeros()
    data[component] = amplitude * np.exp(-r2 / (2.0 * sigma**2))
    return VectorField(grid, data)


def gaussian_sigma(support_radius: float) -> float:
    return support_radius / math.sqrt(2.0 * math.log(1.0 / GAUSSIAN_TAIL))


def annulus_speed(grid: Grid, R: float = 1.0) -> np.ndarray:
    """Scalar speed c(x) = |x| (trapping example)."""
    return np.sqrt(grid.radius_sq)


MEDIA = {"constant": constant, "radial_bump": radial_bump, "smooth_gradient": smooth_gradient}
SOURCES = {"gaussian_source": gaussian_source}
SPEEDS = {"annulus_speed": annulus_speed}
NAMES = tuple(MEDIA) + tuple(SOURCES) + tuple(SPEEDS)


def phantom_library(name: str, grid: Grid, R: float = 1.0, **params):
    """Dispatch by name: media give ``(lam, mu)``, sources a field, speeds an array."""
    for table in (MEDIA, SOURCES, SPEEDS):
        if name in table:
            return table[name](grid, R, **params)
    raise KeyError(f"unknown phantom {name!r}; choose from {', '.join(NAMES)}")
