"""Compiled stiffness kernels (same arithmetic as ``ElasticForm.apply``).

Cells are swept in two phases over the first axis (even cell rows, then odd
ones).  Rows within a phase write to disjoint node rows, so they may run in
parallel, and every node receives its contributions in the same order for
any thread count.
"""

from __future__ import annotations

import os

import numba
import numpy as np

# the TBB layer shipped here is too old; OpenMP keeps concurrent callers safe
numba.config.THREADING_LAYER = os.environ.get("NUMBA_THREADING_LAYER", "omp")
from numba import njit, prange


def configure_threads() -> int:
    """Apply ETAT_THREADS (if set) to the compiled kernels; returns the count in use."""
    env = os.environ.get("ETAT_THREADS")
    if env:
        numba.set_num_threads(max(1, min(int(env), numba.config.NUMBA_NUM_THREADS)))
    return numba.get_num_threads()


@njit(parallel=True, cache=True)
def _stiffness_2d(u, lam, mu, h, out):
    n0, n1 = lam.shape
    w = h * h / 4.0
    inv_h = 1.0 / h
    for phase in range(2):
        for ii in prange((n0 - 1 - phase + 1) // 2):
            i = 2 * ii + phase
            for j in range(n1 - 1):
                # edge differences of both components
                ex00 = (u[0, i + 1, j] - u[0, i, j]) * inv_h
                ex01 = (u[0, i + 1, j + 1] - u[0, i, j + 1]) * inv_h
                ex10 = (u[1, i + 1, j] - u[1, i, j]) * inv_h
                ex11 = (u[1, i + 1, j + 1] - u[1, i, j + 1]) * inv_h
                ey00 = (u[0, i, j + 1] - u[0, i, j]) * inv_h
                ey01 = (u[0, i + 1, j + 1] - u[0, i + 1, j]) * inv_h
                ey10 = (u[1, i, j + 1] - u[1, i, j]) * inv_h
                ey11 = (u[1, i + 1, j + 1] - u[1, i + 1, j]) * inv_h
                # accumulated edge fluxes: ax[comp, b], ay[comp, a]
                ax0b0 = 0.0
                ax0b1 = 0.0
                ax1b0 = 0.0
                ax1b1 = 0.0
                ay0a0 = 0.0
                ay0a1 = 0.0
                ay1a0 = 0.0
                ay1a1 = 0.0
                for a in range(2):
                    for b in range(2):
                        lw = w * lam[i + a, j + b]
                        mw = w * mu[i + a, j + b]
                        g00 = ex00 if b == 0 else ex01
                        g10 = ex10 if b == 0 else ex11
                        g01 = ey00 if a == 0 else ey01
                        g11 = ey10 if a == 0 else ey11
                        ldiv = lw * (g00 + g11)
                        s00 = 2.0 * mw * g00 + ldiv
                        s11 = 2.0 * mw * g11 + ldiv
                        s01 = mw * (g01 + g10)
                        if b == 0:
                            ax0b0 += s00
                            ax1b0 += s01
                        else:
                            ax0b1 += s00
                            ax1b1 += s01
                        if a == 0:
                            ay0a0 += s01
                            ay1a0 += s11
                        else:
                            ay0a1 += s01
                            ay1a1 += s11
                out[0, i + 1, j] += ax0b0 * inv_h
                out[0, i, j] -= ax0b0 * inv_h
                out[0, i + 1, j + 1] += ax0b1 * inv_h
                out[0, i, j + 1] -= ax0b1 * inv_h
                out[1, i + 1, j] += ax1b0 * inv_h
                out[1, i, j] -= ax1b0 * inv_h
                out[1, i + 1, j + 1] += ax1b1 * inv_h
                out[1, i, j + 1] -= ax1b1 * inv_h
                out[0, i, j + 1] += ay0a0 * inv_h
                out[0, i, j] -= ay0a0 * inv_h
                out[0, i + 1, j + 1] += ay0a1 * inv_h
                out[0, i + 1, j] -= ay0a1 * inv_h
                out[1, i, j + 1] += ay1a0 * inv_h
                out[1, i, j] -= ay1a0 * inv_h
                out[1, i + 1, j + 1] += ay1a1 * inv_h
                out[1, i + 1, j] -= ay1a1 * inv_h


@njit(parallel=True, cache=True)
def _stiffness_3d(u, lam, mu, h, out):
    n0, n1, n2 = lam.shape
    w = h * h * h / 8.0
    inv_h = 1.0 / h
    for phase in range(2):
        for ii in prange((n0 - 1 - phase + 1) // 2):
            i = 2 * ii + phase
            E = np.empty((3, 3, 2, 2))  # comp, axis, the two transverse offsets
            acc = np.empty((3, 3, 2, 2))
            G = np.empty((3, 3))
            for j in range(n1 - 1):
                for k in range(n2 - 1):
                    for p in range(3):
                        for s1 in range(2):
                            for s2 in range(2):
                                E[p, 0, s1, s2] = (u[p, i + 1, j + s1, k + s2] - u[p, i, j + s1, k + s2]) * inv_h
                                E[p, 1, s1, s2] = (u[p, i + s1, j + 1, k + s2] - u[p, i + s1, j, k + s2]) * inv_h
                                E[p, 2, s1, s2] = (u[p, i + s1, j + s2, k + 1] - u[p, i + s1, j + s2, k]) * inv_h
                    acc[:] = 0.0
                    for a in range(2):
                        for b in range(2):
                            for c in range(2):
                                for p in range(3):
                                    G[p, 0] = E[p, 0, b, c]
                                    G[p, 1] = E[p, 1, a, c]
                                    G[p, 2] = E[p, 2, a, b]
                                lw = w * lam[i + a, j + b, k + c]
                                mw = w * mu[i + a, j + b, k + c]
                                ldiv = lw * (G[0, 0] + G[1, 1] + G[2, 2])
                                for p in range(3):
                                    acc[p, 0, b, c] += (2.0 * mw * G[p, p] + ldiv) if p == 0 else mw * (G[p, 0] + G[0, p])
                                    acc[p, 1, a, c] += (2.0 * mw * G[p, p] + ldiv) if p == 1 else mw * (G[p, 1] + G[1, p])
                                    acc[p, 2, a, b] += (2.0 * mw * G[p, p] + ldiv) if p == 2 else mw * (G[p, 2] + G[2, p])
                    for p in range(3):
                        for s1 in range(2):
                            for s2 in range(2):
                                v = acc[p, 0, s1, s2] * inv_h
                                out[p, i + 1, j + s1, k + s2] += v
                                out[p, i, j + s1, k + s2] -= v
                                v = acc[p, 1, s1, s2] * inv_h
                                out[p, i + s1, j + 1, k + s2] += v
                                out[p, i + s1, j, k + s2] -= v
                                v = acc[p, 2, s1, s2] * inv_h
                                out[p, i + s1, j + s2, k + 1] += v
                                out[p, i + s1, j + s2, k] -= v


def stiffness(u: np.ndarray, lam: np.ndarray, mu: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(u)
    if lam.ndim == 2:
        _stiffness_2d(u, lam, mu, h, out)
    else:
        _stiffness_3d(u, lam, mu, h, out)
    return out
