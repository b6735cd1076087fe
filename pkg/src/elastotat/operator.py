"""The discrete elastic operator built from the strain-energy form.

The form

    (f, g)_HD = int lam (div f)(div g) + mu tr((grad f)(grad g) + (grad f)^T (grad g)) dx

is approximated cell by cell with the trapezoidal (vertex) rule.  At a cell
corner the Jacobian is taken from the one-sided differences along the cell
edges meeting at that corner, which makes the quadrature exact on affine
fields and leaves no spurious zero-energy modes besides constants.

Writing the form as ``g^T K f`` defines the stiffness ``K = D^T W D``; the
operator is ``P_h u = K u / h^d`` on interior nodes and zero on the outer
layer, so ``<P_h f, g>_h = (f, g)_HD`` whenever ``g`` vanishes on that layer.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import BallRegion, Grid, GridError, VectorField


class ElasticForm:
    """Per-corner quadrature coefficients of the strain-energy form on one grid.

    ``node_weight`` optionally multiplies the quadrature weight of every
    corner node; a 0/1 mask restricts the integral to a region.
    """

    def __init__(self, grid: Grid, lam: np.ndarray, mu: np.ndarray, node_weight=None):
        self.grid = grid
        d, n, h = grid.dim, grid.n_per_axis, grid.spacing
        self.corners = list(itertools.product((0, 1), repeat=d))
        base = h**d / 2**d
        self._lam = []
        self._mu = []
        for s in self.corners:
            sl = tuple(slice(sa, sa + n - 1) for sa in s)
            w = base if node_weight is None else base * node_weight[sl]
            self._lam.append(w * lam[sl])
            self._mu.append(w * mu[sl])

    def _edge_diffs(self, u: np.ndarray) -> list[np.ndarray]:
        h = self.grid.spacing
        return [np.diff(u, axis=1 + j) / h for j in range(self.grid.dim)]

    def _edge_slice(self, j: int, s: tuple[int, ...]) -> tuple[slice, ...]:
        n = self.grid.n_per_axis
        return tuple(
            slice(None) if a == j else slice(sa, sa + n - 1) for a, sa in enumerate(s)
        )

    def _corner_jacobian(self, edges, s):
        """Jacobian entries ``G[i][j] = du_i/dx_j`` at corner ``s`` of every cell."""
        d = self.grid.dim
        cols = [edges[j][(slice(None), *self._edge_slice(j, s))] for j in range(d)]
        return [[cols[j][i] for j in range(d)] for i in range(d)]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Stiffness times ``u`` (the gradient of half the form), shape of ``u``."""
        d = self.grid.dim
        h = self.grid.spacing
        edges = self._edge_diffs(u)
        acc = [np.zeros_like(e) for e in edges]
        for s, lam_s, mu_s in zip(self.corners, self._lam, self._mu):
            G = self._corner_jacobian(edges, s)
            div = G[0][0]
            for i in range(1, d):
                div = div + G[i][i]
            ldiv = lam_s * div
            for j in range(d):
                sl = self._edge_slice(j, s)
                for i in range(d):
                    if i == j:
                        sig = 2.0 * mu_s * G[i][i] + ldiv
                    else:
                        sig = mu_s * (G[i][j] + G[j][i])
                    acc[j][(i, *sl)] += sig
        out = np.zeros_like(u)
        for j in range(d):
            _add_diff_transpose(out, acc[j], axis=1 + j)
        out /= h
        return out

    def form(self, f: np.ndarray, g: np.ndarray) -> float:
        """Quadrature of the form; bitwise symmetric in ``f`` and ``g``."""
        d = self.grid.dim
        ef = self._edge_diffs(f)
        eg = ef if f is g else self._edge_diffs(g)
        total = 0.0
        for s, lam_s, mu_s in zip(self.corners, self._lam, self._mu):
            F = self._corner_jacobian(ef, s)
            G = self._corner_jacobian(eg, s)
            divf = F[0][0]
            divg = G[0][0]
            for i in range(1, d):
                divf = divf + F[i][i]
                divg = divg + G[i][i]
            # mu part: 2 sum_i F_ii G_ii + sum_{i<j} (F_ij + F_ji)(G_ij + G_ji)
            shear = 2.0 * (F[0][0] * G[0][0])
            for i in range(1, d):
                shear = shear + 2.0 * (F[i][i] * G[i][i])
            for i in range(d):
                for j in range(i + 1, d):
                    shear = shear + (F[i][j] + F[j][i]) * (G[i][j] + G[j][i])
            total += float(np.sum(lam_s * (divf * divg) + mu_s * shear))
        return total


def _add_diff_transpose(out: np.ndarray, a: np.ndarray, axis: int) -> None:
    """out += D^T a for the forward difference D along ``axis``."""
    n = out.shape[axis]
    hi = [slice(None)] * out.ndim
    lo = [slice(None)] * out.ndim
    hi[axis] = slice(1, n)
    lo[axis] = slice(0, n - 1)
    out[tuple(hi)] += a
    out[tuple(lo)] -= a


def nodal_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order centred gradient of a scalar, one-sided on the faces."""
    return np.stack(np.gradient(values, grid.spacing, edge_order=2))


def corner_jacobians(grid: Grid, u: np.ndarray) -> np.ndarray:
    """All corner Jacobians, shape ``(2**dim, dim, dim, *cells)``.

    Every entry is linear in ``u`` and exact for affine ``u``; the mean over
    corners is the cell-centre gradient.
    """
    ef = ElasticForm(grid, np.ones(grid.shape), np.ones(grid.shape))
    edges = ef._edge_diffs(u)
    return np.stack([np.array(ef._corner_jacobian(edges, s)) for s in ef.corners])


# -- medium-level entry points ------------------------------------------------


def _region_weight(grid: Grid, region) -> np.ndarray | None:
    if region is None:
        return None
    if isinstance(region, BallRegion):
        return region.mask(grid).astype(np.float64)
    raise TypeError(f"unsupported region {region!r}")


def _form_for(medium, region) -> ElasticForm:
    if region is None:
        return medium.form
    return ElasticForm(medium.grid, medium.lam, medium.mu, _region_weight(medium.grid, region))


def _check_grid(medium, *fields: VectorField) -> None:
    for f in fields:
        if f.grid != medium.grid:
            raise GridError("field grid does not match the medium grid")


def hd_inner(medium, f: VectorField, g: VectorField, region=None) -> float:
    """Strain-energy inner product over ``region`` (None: the whole grid)."""
    _check_grid(medium, f, g)
    return _form_for(medium, region).form(f.data, g.data)


def hd_norm(medium, f: VectorField, region=None) -> float:
    return float(np.sqrt(max(hd_inner(medium, f, f, region), 0.0)))


def l2_inner(f: VectorField, g: VectorField, region=None) -> float:
    w = f.grid.trapezoid_weights
    rw = _region_weight(f.grid, region)
    if rw is not None:
        w = w * rw
    return float(np.sum(np.sum(f.data * g.data, axis=0) * w))


def apply_P(medium, u: VectorField) -> VectorField:
    _check_grid(medium, u)
    return VectorField(medium.grid, medium.apply_P_array(u.data))


@dataclass(frozen=True)
class EnergySnapshot:
    elastic: float
    kinetic: float
    region: str

    @property
    def total(self) -> float:
        return self.elastic + self.kinetic


def energy(medium, u: VectorField, u_t: VectorField, region=None) -> EnergySnapshot:
    """Elastic plus kinetic energy of ``(u, u_t)`` over ``region``."""
    _check_grid(medium, u, u_t)
    elastic = hd_inner(medium, u, u, region)
    kinetic = l2_inner(u_t, u_t, region)
    label = "grid" if region is None else f"ball(R={region.radius})"
    return EnergySnapshot(elastic, kinetic, label)
