"""PNG figures for pipeline reports (Agg canvas, no pyplot state)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .grid import Grid
from .rays import Ray
from .solver import BoundaryTrace

_SAVE = {"dpi": 110, "metadata": {"Software": None}}


def _save(fig: Figure, path: str | Path) -> Path:
    FigureCanvasAgg(fig)
    fig.savefig(path, format="png", **_SAVE)
    return Path(path)


def _plane(grid: Grid, data: np.ndarray) -> np.ndarray:
    """2D data as is; 3D data as the central x3 slice."""
    return data if grid.dim == 2 else data[..., grid.n_per_axis // 2]


def field_figure(grid: Grid, fields: dict[str, np.ndarray], path: str | Path, radius: float | None = None) -> Path:
    """One panel per (name, component); each field is ``(ncomp, *grid.shape)``."""
    panels = [(f"{name} u{k + 1}", comp) for name, data in fields.items() for k, comp in enumerate(data)]
    ncol = grid.dim
    nrow = -(-len(panels) // ncol)
    fig = Figure(figsize=(3.4 * ncol, 3.0 * nrow))
    L = grid.half_width
    t = np.linspace(0, 2 * np.pi, 200)
    for i, (title, comp) in enumerate(panels):
        ax = fig.add_subplot(nrow, ncol, i + 1)
        img = _plane(grid, comp)
        vmax = float(np.max(np.abs(img))) or 1.0
        im = ax.imshow(img.T, origin="lower", extent=(-L, L, -L, L), cmap="RdBu_r", vmin=-vmax, vmax=vmax)
        if radius is not None:
            ax.plot(radius * np.cos(t), radius * np.sin(t), "k", lw=0.6)
        ax.set_title(title, fontsize=9)
        ax.set_aspect("equal")
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    return _save(fig, path)


def convergence_figure(summary: dict, path: str | Path) -> Path:
    fig = Figure(figsize=(5.5, 4.0))
    ax = fig.add_subplot(1, 1, 1)
    for key, label in (("error_norms", "error (H_D)"), ("residual_norms", "residual"), ("update_norms", "relative update")):
        vals = summary.get(key) or []
        if vals:
            ax.semilogy(range(len(vals)), vals, "o-", ms=3, label=label)
    ax.set_xlabel("iteration k")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def trace_figure(trace: BoundaryTrace, path: str | Path) -> Path:
    """Boundary data of each component, nodes ordered by polar angle."""
    b = trace.boundary
    order = np.argsort(np.arctan2(b.points[:, 1], b.points[:, 0]), kind="stable")
    d = b.grid.dim
    fig = Figure(figsize=(3.6 * d, 3.2))
    for k in range(d):
        ax = fig.add_subplot(1, d, k + 1)
        img = trace.samples[:, order, k]
        vmax = float(np.max(np.abs(img))) or 1.0
        ax.imshow(img, aspect="auto", origin="lower", cmap="RdBu_r", vmin=-vmax, vmax=vmax,
                  extent=(0, len(b), 0, trace.T))
        ax.set_xlabel("boundary node (by angle)")
        ax.set_ylabel("t")
        ax.set_title(f"trace u{k + 1}", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def rays_figure(rays: list[Ray], radius: float, path: str | Path) -> Path:
    """Ray paths projected on the (x1, x2) plane, trapped rays in red."""
    fig = Figure(figsize=(4.5, 4.5))
    ax = fig.add_subplot(1, 1, 1)
    t = np.linspace(0, 2 * np.pi, 200)
    ax.plot(radius * np.cos(t), radius * np.sin(t), "k", lw=0.8)
    for r in rays:
        ax.plot(r.x[:, 0], r.x[:, 1], color="tab:red" if r.trapped else "tab:blue", lw=0.5, alpha=0.7)
    ax.set_aspect("equal")
    ax.set_title(f"{len(rays)} rays", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)
