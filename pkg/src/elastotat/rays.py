"""Bicharacteristic ray tracing for H(x, xi) = c(x)^2 |xi|^2 / 2 and T(Omega) estimates."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import NdBSpline, make_interp_spline
from scipy.stats import qmc

from .grid import Grid, GridError
from .medium import Medium, _json_safe

log = logging.getLogger(__name__)

DRIFT_FLAG = 1e-6
DRIFT_ABORT = 1e-4
SAFETY_FACTOR = 1.25
# c^2 below this fraction of max c^2 counts as a vanishing speed
STALL = 1e-12


class RayError(RuntimeError):
    pass


class SpeedField:
    """Cubic tensor spline of c^2 built from grid samples of c."""

    def __init__(self, grid: Grid, c: np.ndarray):
        c = np.asarray(c, dtype=np.float64)
        if c.shape != grid.shape:
            raise GridError(f"speed samples have shape {c.shape}, expected {grid.shape}")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("speed must be finite and non-negative")
        self.grid = grid
        self.c_min = float(np.min(c))
        self.c_max = float(np.max(c))
        coef = c**2
        knots = []
        for ax in range(grid.dim):
            s = make_interp_spline(grid.axis, coef, k=3, axis=ax)
            coef = np.moveaxis(s.c, 0, ax)
            knots.append(s.t)
        self._spline = NdBSpline(tuple(knots), coef, 3)
        self._nu = [tuple(int(i == j) for i in range(grid.dim)) for j in range(grid.dim)]

    def c2(self, x: np.ndarray) -> float:
        return float(self._spline(x[None])[0])

    def grad_c2(self, x: np.ndarray) -> np.ndarray:
        p = x[None]
        return np.array([self._spline(p, nu=nu)[0] for nu in self._nu])


@dataclass(eq=False)
class Ray:
    speed_label: str
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    exit_time: float | None
    t_max: float
    hamiltonian_drift: float

    @property
    def trapped(self) -> bool:
        return self.exit_time is None

    @property
    def flagged(self) -> bool:
        return self.hamiltonian_drift > DRIFT_FLAG

    @property
    def accepted(self) -> bool:
        return not self.flagged

    def summary(self) -> dict:
        return {
            "speed": self.speed_label,
            "x0": self.x[0].tolist(),
            "xi0": self.xi[0].tolist(),
            "exit_time": self.exit_time,
            "trapped": self.trapped,
            "t_max": self.t_max,
            "hamiltonian_drift": self.hamiltonian_drift,
            "flagged": self.flagged,
        }


def integrate_ray(
    speed: SpeedField, x0, xi0, t_max: float, radius: float,
    step_tol: float = 1e-11, label: str = "P",
) -> Ray:
    """Trace x' = c^2 xi, xi' = -grad(c^2)|xi|^2/2 until |x| = radius or t_max.

    ``xi0`` is rescaled so that c(x0)|xi0| = 1 (unit physical speed).  A seed
    where c vanishes never moves and is reported as trapped.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    xi0 = np.asarray(xi0, dtype=np.float64)
    d = speed.grid.dim
    if x0.shape != (d,) or xi0.shape != (d,):
        raise ValueError(f"x0 and xi0 must have length {d}")
    if np.dot(x0, x0) >= radius**2:
        raise ValueError("ray must start inside the ball")
    if not np.any(xi0):
        raise ValueError("xi0 must be non-zero")
    c0sq = speed.c2(x0)
    if c0sq <= STALL * speed.c_max**2:
        return Ray(label, np.array([0.0, t_max]), np.stack([x0, x0]), np.stack([xi0, xi0]),
                   None, t_max, 0.0)
    xi0 = xi0 / (math.sqrt(c0sq) * np.linalg.norm(xi0))

    def rhs(_t, y):
        x, xi = y[:d], y[d:]
        return np.concatenate([speed.c2(x) * xi, -0.5 * np.dot(xi, xi) * speed.grad_c2(x)])

    def leave(_t, y):
        return float(np.dot(y[:d], y[:d])) - radius**2

    leave.terminal = True
    leave.direction = 1.0
    sol = solve_ivp(rhs, (0.0, t_max), np.concatenate([x0, xi0]), method="DOP853",
                    rtol=step_tol, atol=step_tol * 1e-2, events=leave)
    if sol.status < 0:
        raise RayError(f"ray integration failed: {sol.message}")
    x, xi = sol.y[:d].T, sol.y[d:].T
    H = np.array([0.5 * speed.c2(p) * np.dot(q, q) for p, q in zip(x, xi)])
    drift = float(np.max(np.abs(H - 0.5)) / 0.5)
    if drift > DRIFT_ABORT:
        raise RayError(
            f"Hamiltonian drift {drift:.3g} from x0={x0.tolist()}; the speed samples are too rough"
        )
    exit_time = float(sol.t_events[0][0]) if sol.status == 1 else None
    return Ray(label, sol.t, x, xi, exit_time, t_max, drift)


# -- T(Omega) estimate --------------------------------------------------------


def seeds(dim: int, radius: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``n`` unscrambled Halton points mapped to (ball, sphere); nested in n.

    The first seed is the origin with xi along the first axis.
    """
    u = qmc.Halton(d=2 * dim - 1, scramble=False).random(n)
    r = radius * u[:, 0] ** (1.0 / dim)
    pos = _sphere(u[:, 1:dim])
    dirs = _sphere(u[:, dim:])
    return r[:, None] * pos, dirs


def _sphere(u: np.ndarray) -> np.ndarray:
    if u.shape[1] == 1:
        a = 2.0 * np.pi * u[:, 0]
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    z = 1.0 - 2.0 * u[:, 0]
    a = 2.0 * np.pi * u[:, 1]
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([z, s * np.cos(a), s * np.sin(a)], axis=1)


@dataclass
class TrappingReport:
    samples: int
    radius: float
    t_max: float
    max_exit_time: float | None
    trapped_count: int
    flagged_count: int
    per_speed: dict
    verdict: str
    suggested_T: float | None
    safety_factor: float = SAFETY_FACTOR
    note: str = "both scalar Hamiltonians (P: c1, S: c2) are traced; T(Omega) is the max over both"
    rays: list[Ray] = field(default_factory=list, repr=False)

    def to_dict(self, include_rays: bool = True) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "rays"}
        if include_rays:
            d["rays"] = [r.summary() for r in self.rays]
        return _json_safe(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def speed_fields(source) -> dict[str, SpeedField]:
    """``Medium`` -> {P: c1, S: c2}; a SpeedField or a (grid, c) pair -> {c: ...}."""
    if isinstance(source, Medium):
        return {"P": SpeedField(source.grid, source.c1), "S": SpeedField(source.grid, source.c2)}
    if isinstance(source, SpeedField):
        return {"c": source}
    if isinstance(source, dict):
        return dict(source)
    grid, c = source
    return {"c": SpeedField(grid, c)}


def _workers() -> int:
    env = os.environ.get("ETAT_THREADS")
    return max(1, int(env)) if env else 1


def estimate_T_Omega(
    source, R: float, n_seeds: int, t_max: float | None = None, step_tol: float = 1e-11,
    safety_factor: float = SAFETY_FACTOR,
) -> TrappingReport:
    """Trace every seed for every speed field and reduce to a T(Omega) estimate.

    Sampling only bounds T(Omega) from below; ``suggested_T`` applies the
    safety factor.  ``t_max`` defaults to ten diameters at the slowest speed
    (floored at 5% of the fastest).
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    speeds = speed_fields(source)
    dim = next(iter(speeds.values())).grid.dim
    if t_max is None:
        slowest = min(max(s.c_min, 0.05 * s.c_max) for s in speeds.values())
        t_max = 20.0 * R / slowest
    x0s, dirs = seeds(dim, R, n_seeds)
    jobs = [(label, s, x0, d) for label, s in speeds.items() for x0, d in zip(x0s, dirs)]

    def run(job):
        label, s, x0, d = job
        return integrate_ray(s, x0, d, t_max, R, step_tol, label)

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        rays = list(pool.map(run, jobs))

    per_speed = {}
    for label in speeds:
        rs = [r for r in rays if r.speed_label == label]
        exits = [r.exit_time for r in rs if r.accepted and not r.trapped]
        per_speed[label] = {
            "max_exit_time": max(exits) if exits else None,
            "trapped": sum(r.trapped for r in rs),
            "flagged": sum(r.flagged for r in rs),
        }
    exits = [r.exit_time for r in rays if r.accepted and not r.trapped]
    trapped = sum(r.trapped for r in rays)
    flagged = sum(r.flagged for r in rays)
    max_exit = max(exits) if exits else None
    verdict = "trapping" if trapped else "non-trapping"
    suggested = safety_factor * max_exit if (max_exit is not None and not trapped) else None
    log.info("traced %d rays: max exit %s, %d trapped, %d flagged", len(rays), max_exit, trapped, flagged)
    return TrappingReport(
        samples=n_seeds, radius=R, t_max=t_max, max_exit_time=max_exit, trapped_count=trapped,
        flagged_count=flagged, per_speed=per_speed, verdict=verdict, suggested_T=suggested,
        safety_factor=safety_factor, rays=rays,
    )
