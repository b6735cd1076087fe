"""Lame parameter fields, derived wave speeds and the sufficient-condition checker."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .grid import Grid, GridError
from .operator import ElasticForm, nodal_gradient

THETA_LATTICE = 64


class MediumError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Medium:
    grid: Grid
    lam: np.ndarray
    mu: np.ndarray
    alpha0: float = 1e-8

    @cached_property
    def c1(self) -> np.ndarray:
        """P-wave speed sqrt(lam + 2 mu)."""
        return np.sqrt(self.lam + 2.0 * self.mu)

    @cached_property
    def c2(self) -> np.ndarray:
        """S-wave speed sqrt(mu)."""
        return np.sqrt(self.mu)

    @cached_property
    def a1(self) -> np.ndarray:
        return 1.0 / (self.lam + 2.0 * self.mu)

    @cached_property
    def a2(self) -> np.ndarray:
        return 1.0 / self.mu

    @property
    def c_plus(self) -> float:
        return float(np.max(self.c1))

    @property
    def c_minus(self) -> float:
        return float(np.min(self.c2))

    @cached_property
    def form(self) -> ElasticForm:
        return ElasticForm(self.grid, self.lam, self.mu)

    @cached_property
    def spectral_radius(self) -> float:
        """Power-iteration estimate of the largest eigenvalue of P_h."""
        grid = self.grid
        idx = np.indices(grid.shape).sum(axis=0)
        u = np.stack([(-1.0) ** idx * (1.0 + 0.1 * k) for k in range(grid.dim)])
        u[0] += 0.01 * np.cos(np.arange(u[0].size)).reshape(grid.shape)
        _zero_outer_layer(u)
        rho = 0.0
        for _ in range(60):
            v = self.apply_P_array(u)
            nv = float(np.sqrt(np.sum(v * v)))
            if nv == 0.0:
                return 0.0
            rho = nv / float(np.sqrt(np.sum(u * u)))
            u = v / nv
        return rho

    def stiffness(self, u: np.ndarray) -> np.ndarray:
        """K u via the compiled kernel; ``self.form.apply`` is the array reference."""
        return kernels.stiffness(np.ascontiguousarray(u), self.lam, self.mu, self.grid.spacing)

    def apply_P_array(self, u: np.ndarray) -> np.ndarray:
        out = self.stiffness(u) / self.grid.cell_volume
        _zero_outer_layer(out)
        return out

    def padded(self, grid: Grid, offset: int) -> "Medium":
        """Continue the medium onto a larger concentric grid by edge replication."""
        if not math.isclose(grid.spacing, self.grid.spacing, rel_tol=1e-12):
            raise GridError("padded grid must keep the node spacing")
        if grid.n_per_axis != self.grid.n_per_axis + 2 * offset:
            raise GridError("padded grid size inconsistent with offset")
        if offset == 0:
            return Medium(grid, self.lam, self.mu, self.alpha0)
        lam = np.pad(self.lam, offset, mode="edge")
        mu = np.pad(self.mu, offset, mode="edge")
        return build_medium(grid, lam, mu, self.alpha0)


def _zero_outer_layer(a: np.ndarray) -> None:
    for ax in range(1, a.ndim):
        idx = [slice(None)] * a.ndim
        idx[ax] = 0
        a[tuple(idx)] = 0.0
        idx[ax] = -1
        a[tuple(idx)] = 0.0


def build_medium(grid: Grid, lambda_field, mu_field, alpha0: float = 1e-8) -> Medium:
    lam = np.array(np.broadcast_to(lambda_field, grid.shape), dtype=np.float64)
    mu = np.array(np.broadcast_to(mu_field, grid.shape), dtype=np.float64)
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(mu))):
        raise MediumError("Lame parameters must be finite")
    for name, arr in (("lambda", lam), ("mu", mu)):
        bad = arr <= alpha0
        if np.any(bad):
            idx = np.unravel_index(np.argmax(bad), grid.shape)
            x = [float(grid.axis[i]) for i in idx]
            raise MediumError(
                f"{name} = {arr[idx]:.6g} <= alpha0 = {alpha0:g} at x = {x}"
            )
    lam.flags.writeable = False
    mu.flags.writeable = False
    return Medium(grid, lam, mu, float(alpha0))


# -- sufficient conditions -----------------------------------------------------


@dataclass
class ConditionReport:
    c_plus: float
    c_minus: float
    radius: float
    T: float
    epsilon_used: float
    speed_ratio_ok: bool
    theta_window: list[float] | None
    theta_used: float | None
    theta_auto: bool
    T_min: float | None
    T_ok: bool
    check_radius: float
    grid_covers_check_ball: bool
    gradient_condition_ok: bool
    gradient_margin: float | None
    condition2_ok: bool
    noncharacteristic_ok: bool
    overall: bool
    witnesses: dict = field(default_factory=dict)
    theta_scan: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return _json_safe(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _gradient_margin(a, grad_a, x, t_abs, theta):
    """RHS - LHS of theta^2 a (a + a^{-1/2} |t grad a|) < a + 1/2 x.grad a."""
    lhs = theta**2 * a * (a + a ** (-0.5) * t_abs * np.linalg.norm(grad_a, axis=0))
    rhs = a + 0.5 * np.sum(x * grad_a, axis=0)
    return rhs - lhs


def _point(grid: Grid, mask: np.ndarray, flat_arg: int) -> list[float]:
    idx = np.unravel_index(np.flatnonzero(mask.ravel())[flat_arg], grid.shape)
    return [float(grid.axis[i]) for i in idx]


def check_conditions(
    medium: Medium, R: float, T: float, epsilon: float, theta: float | None = None
) -> ConditionReport:
    """Evaluate every hypothesis of the uniqueness theorem for ``medium``.

    Both reciprocal squared speeds ``1/(lam + 2 mu)`` and ``1/mu`` are tested
    under every pointwise condition.  The gradient condition uses |t| = 3T/2,
    its worst case for time-independent coefficients.
    """
    if not (R > 0 and T > 0 and epsilon > 0):
        raise MediumError("R, T and epsilon must be positive")
    grid = medium.grid
    c_plus, c_minus = medium.c_plus, medium.c_minus
    witnesses: dict = {}

    speed_ratio_ok = c_plus < 3.0 * c_minus
    lo, hi = c_plus / 3.0, c_minus
    window = [lo, hi] if lo < hi else None
    if not speed_ratio_ok:
        witnesses["speed_ratio"] = {
            "c_plus_at": _point(grid, np.ones(grid.shape, bool), int(np.argmax(medium.c1))),
            "c_minus_at": _point(grid, np.ones(grid.shape, bool), int(np.argmin(medium.c2))),
        }

    check_radius = R + 0.5 * T * c_plus + epsilon
    ball = grid.radius_sq <= check_radius**2
    covers = check_radius <= grid.half_width
    x = np.stack([c[ball] for c in grid.coords])
    t_abs = 1.5 * T
    a_list, grad_list = [], []
    for a in (medium.a1, medium.a2):
        g = nodal_gradient(a, grid)
        if not np.all(np.isfinite(g)):
            raise MediumError("non-finite gradient of reciprocal squared speed")
        a_list.append(a[ball])
        grad_list.append(g[:, ball])

    def worst_margin(th):
        m = [_gradient_margin(a, ga, x, t_abs, th) for a, ga in zip(a_list, grad_list)]
        per = [float(np.min(mj)) for mj in m]
        return min(per), m

    near_origin = grid.radius_sq[ball] <= grid.spacing**2
    a_max = max(float(np.max(a)) for a in a_list)
    a_max_off = max(float(np.max(a[~near_origin])) for a in a_list) if np.any(~near_origin) else 0.0

    def t_min(th):
        den = 3.0 * th - c_plus
        return 2.0 * (R + epsilon) / den if den > 0 else math.inf

    def pointwise_ok(th):
        margin, _ = worst_margin(th)
        return margin > 0 and th**2 * a_max <= 1.0 and th**2 * a_max_off < 1.0

    scan = []
    theta_auto = theta is None
    if theta_auto:
        if window is not None:
            lattice = [lo + (k + 1) * (hi - lo) / (THETA_LATTICE + 1) for k in range(THETA_LATTICE)]
            for th in lattice:
                margin, _ = worst_margin(th)
                scan.append({"theta": th, "gradient_margin": margin, "T_min": t_min(th)})
            feasible = [s for s in scan if pointwise_ok(s["theta"]) and T > s["T_min"]]
            pool = feasible or scan
            theta = max(pool, key=lambda s: s["gradient_margin"])["theta"]
    if theta is None:
        # empty window: nothing to evaluate
        report = ConditionReport(
            c_plus, c_minus, R, T, epsilon, speed_ratio_ok, None, None, True, None, False,
            check_radius, covers, False, None, False, False, False,
            witnesses | {"theta_window": "empty: c_plus/3 >= c_minus"}, scan,
        )
        return report

    margin, margins = worst_margin(theta)
    gradient_ok = margin > 0
    if not gradient_ok:
        j = int(np.argmin([np.min(m) for m in margins]))
        k = int(np.argmin(margins[j]))
        witnesses["gradient_condition"] = {
            "field": f"a{j + 1}",
            "margin": float(margins[j][k]),
            "x": _point(grid, ball, k),
        }
    cond2 = [theta**2 * a for a in a_list]
    condition2_ok = all(bool(np.all(c <= 1.0)) for c in cond2)
    if not condition2_ok:
        j = int(np.argmax([np.max(c) for c in cond2]))
        k = int(np.argmax(cond2[j]))
        witnesses["condition2"] = {"field": f"a{j + 1}", "theta2_a": float(cond2[j][k]), "x": _point(grid, ball, k)}
    nonchar_ok = True
    for j, c in enumerate(cond2):
        off = np.where(near_origin, -np.inf, c)
        if np.any(off >= 1.0):
            nonchar_ok = False
            k = int(np.argmax(off))
            witnesses.setdefault(
                "noncharacteristic", {"field": f"a{j + 1}", "theta2_a": float(c[k]), "x": _point(grid, ball, k)}
            )
    tm = t_min(theta)
    T_ok = T > tm
    if not T_ok:
        witnesses["T"] = {"T": T, "T_min": tm}
    in_window = window is not None and lo < theta < hi
    if not in_window:
        witnesses["theta"] = {"theta": theta, "window": window}
    overall = all([speed_ratio_ok, in_window, T_ok, gradient_ok, condition2_ok, nonchar_ok])
    return ConditionReport(
        c_plus=c_plus,
        c_minus=c_minus,
        radius=R,
        T=T,
        epsilon_used=epsilon,
        speed_ratio_ok=speed_ratio_ok,
        theta_window=window,
        theta_used=theta,
        theta_auto=theta_auto,
        T_min=tm,
        T_ok=T_ok,
        check_radius=check_radius,
        grid_covers_check_ball=covers,
        gradient_condition_ok=gradient_ok,
        gradient_margin=margin,
        condition2_ok=condition2_ok,
        noncharacteristic_ok=nonchar_ok,
        overall=overall,
        witnesses=witnesses,
        theta_scan=scan,
    )
