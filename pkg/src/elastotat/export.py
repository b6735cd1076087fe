"""Flat CSV export of fields, traces and rays (and import of field CSVs).

Numbers are written with ``repr`` so a field survives CSV -> field file
byte for byte.  Rows follow the axis-major sample order of field files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from .grid import Grid, GridError, VectorField, samples_to_bytes
from .rays import Ray
from .solver import BoundaryTrace


def _fmt(a: np.ndarray) -> list[str]:
    return [repr(float(v)) for v in a]


def _write(path: str | Path, header: list[str], rows: Iterable[list[str]]) -> int:
    count = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
            count += 1
    return count


def export_samples_csv(grid: Grid, data: np.ndarray, path: str | Path) -> int:
    """Columns x1..xd then u1..uk (or ``v`` for scalar data)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == grid.dim:
        data = data[None]
    ncomp = data.shape[0]
    pts = grid.points()
    vals = data.reshape(ncomp, -1).T
    names = ["v"] if ncomp == 1 else [f"u{i + 1}" for i in range(ncomp)]
    header = [f"x{i + 1}" for i in range(grid.dim)] + names
    rows = (_fmt(p) + _fmt(v) for p, v in zip(pts, vals))
    return _write(path, header, rows)


def export_field_csv(field: VectorField, path: str | Path) -> int:
    return export_samples_csv(field.grid, field.data, path)


def import_samples_csv(path: str | Path) -> tuple[Grid, np.ndarray]:
    """Inverse of ``export_samples_csv``; the grid is recovered from the coordinates."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        table = np.array([[float(v) for v in row] for row in reader])
    dim = sum(1 for name in header if name.startswith("x"))
    if dim not in (2, 3) or table.ndim != 2 or table.shape[1] != len(header):
        raise GridError(f"{path}: not a field CSV")
    n = round(len(table) ** (1.0 / dim))
    half_width = float(np.max(table[:, 0]))
    grid = Grid(dim, half_width, n)
    if n**dim != len(table) or not np.array_equal(table[:, :dim], grid.points()):
        raise GridError(f"{path}: coordinates do not form a {dim}D grid in axis-major order")
    data = table[:, dim:].T.reshape(-1, *grid.shape)
    return grid, data


def csv_to_field_bytes(path: str | Path) -> bytes:
    grid, data = import_samples_csv(path)
    return samples_to_bytes(grid, data)


def export_trace_csv(trace: BoundaryTrace, path: str | Path) -> int:
    """One row per (step, boundary node): step, t, node, x1..xd, u1..ud."""
    b = trace.boundary
    d = b.grid.dim
    header = ["step", "t", "node"] + [f"x{i + 1}" for i in range(d)] + [f"u{i + 1}" for i in range(d)]

    def rows():
        for k, t in enumerate(trace.times):
            for j in range(len(b)):
                yield [str(k), repr(float(t)), str(j)] + _fmt(b.points[j]) + _fmt(trace.samples[k, j])

    return _write(path, header, rows())


def export_rays_csv(rays: list[Ray], path: str | Path) -> int:
    """Per-ray paths: ray, speed, t, x1..xd."""
    if not rays:
        raise ValueError("no rays to export")
    d = rays[0].x.shape[1]
    header = ["ray", "speed", "t"] + [f"x{i + 1}" for i in range(d)]

    def rows():
        for i, r in enumerate(rays):
            for t, x in zip(r.t, r.x):
                yield [str(i), r.speed_label, repr(float(t))] + _fmt(x)

    return _write(path, header, rows())


def export_ray_summaries_csv(summaries: list[dict], path: str | Path) -> int:
    """Rows from the ``rays`` entries of a rays.json report."""
    if not summaries:
        raise ValueError("no rays to export")
    d = len(summaries[0]["x0"])
    header = (["ray", "speed"] + [f"x0_{i + 1}" for i in range(d)] + [f"xi0_{i + 1}" for i in range(d)]
              + ["exit_time", "trapped", "hamiltonian_drift", "flagged"])

    def rows():
        for i, s in enumerate(summaries):
            exit_time = "" if s["exit_time"] is None else repr(float(s["exit_time"]))
            yield ([str(i), s["speed"]] + _fmt(s["x0"]) + _fmt(s["xi0"])
                   + [exit_time, str(s["trapped"]), repr(float(s["hamiltonian_drift"])), str(s["flagged"])])

    return _write(path, header, rows())
