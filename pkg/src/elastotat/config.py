"""Experiment configuration: strict JSON schema and construction of the model objects.

Units: lengths (half_width, radius, support radii, epsilon) share one unit,
time is length over speed, Lame parameters are dimensionless with unit
density, so wave speeds are sqrt(lam + 2 mu) and sqrt(mu).
"""

from __future__ import annotations

import hashlib
import inspect
import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import phantoms
from .grid import BallRegion, Grid, VectorField, read_field, read_scalar
from .medium import Medium, build_medium


class ConfigError(ValueError):
    pass


def _check_params(func, params: dict) -> None:
    try:
        inspect.signature(func).bind(None, 1.0, **params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {func.__name__}: {exc}") from None


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(_Strict):
    dim: Literal[2, 3] = 2
    n: int = Field(129, ge=8)
    half_width: float = Field(1.25, gt=0)


class MediumSpec(_Strict):
    phantom: str | None = "constant"
    params: dict[str, float] = Field(default_factory=dict)
    lambda_file: str | None = None
    mu_file: str | None = None
    alpha0: float = Field(1e-8, gt=0)

    @model_validator(mode="after")
    def _one_source(self):
        files = (self.lambda_file is not None, self.mu_file is not None)
        if any(files) and not all(files):
            raise ValueError("give both lambda_file and mu_file")
        if all(files) and self.params:
            raise ValueError("params apply to phantoms only")
        if not all(files) and self.phantom not in phantoms.MEDIA:
            raise ValueError(f"unknown medium phantom {self.phantom!r}; choose from {sorted(phantoms.MEDIA)}")
        if not all(files):
            _check_params(phantoms.MEDIA[self.phantom], self.params)
        return self


class SourceSpec(_Strict):
    phantom: str | None = "gaussian_source"
    params: dict[str, Any] = Field(default_factory=dict)
    file: str | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.file is None and self.phantom not in phantoms.SOURCES:
            raise ValueError(f"unknown source phantom {self.phantom!r}; choose from {sorted(phantoms.SOURCES)}")
        if self.file is None:
            _check_params(phantoms.SOURCES[self.phantom], self.params)
        return self


class ReconstructionSpec(_Strict):
    iters: int = Field(10, ge=1)
    tol: float = Field(1e-6, ge=0)
    cg_tol: float = Field(1e-10, gt=0)


class ConditionSpec(_Strict):
    epsilon: float = Field(0.05, gt=0)
    theta: float | None = Field(None, gt=0)


class RaySpec(_Strict):
    seeds: int = Field(64, ge=1)
    t_max: float | None = Field(None, gt=0)
    safety_factor: float = Field(1.25, ge=1)


class ExperimentConfig(_Strict):
    grid: GridSpec = GridSpec()
    radius: float = Field(1.0, gt=0)
    medium: MediumSpec = MediumSpec()
    source: SourceSpec = SourceSpec()
    T: float | Literal["auto"] = "auto"
    cfl: float = Field(0.5, gt=0, le=1)
    reconstruction: ReconstructionSpec = ReconstructionSpec()
    conditions: ConditionSpec = ConditionSpec()
    rays: RaySpec = RaySpec()

    @model_validator(mode="after")
    def _geometry(self):
        h = 2.0 * self.grid.half_width / (self.grid.n - 1)
        if self.radius + 2.0 * h > self.grid.half_width:
            raise ValueError("ball radius plus two cells must fit inside the grid half width")
        if self.T != "auto" and self.T < 0:
            raise ValueError("T must be non-negative or 'auto'")
        if self.source.file is None and not 0 <= self.source.params.get("component", 0) < self.grid.dim:
            raise ValueError("source component out of range for the grid dimension")
        return self

    # -- construction ---------------------------------------------------------

    def make_grid(self) -> Grid:
        return Grid(self.grid.dim, self.grid.half_width, self.grid.n)

    def make_ball(self) -> BallRegion:
        return BallRegion(self.radius)

    def make_medium(self, base: Path | None = None) -> Medium:
        grid = self.make_grid()
        spec = self.medium
        if spec.lambda_file is not None:
            fields = []
            for name in (spec.lambda_file, spec.mu_file):
                g, values = read_scalar(_resolve(name, base))
                if g != grid:
                    raise ConfigError(f"{name}: grid {g} does not match the configured grid")
                fields.append(values)
            return build_medium(grid, *fields, alpha0=spec.alpha0)
        lam, mu = phantoms.phantom_library(spec.phantom, grid, self.radius, **spec.params)
        return build_medium(grid, lam, mu, alpha0=spec.alpha0)

    def make_source(self, base: Path | None = None) -> VectorField:
        grid = self.make_grid()
        if self.source.file is not None:
            f = read_field(_resolve(self.source.file, base))
            if f.grid != grid:
                raise ConfigError("source field grid does not match the configured grid")
            return f
        return phantoms.phantom_library(self.source.phantom, grid, self.radius, **self.source.params)

    def input_files(self, base: Path | None = None) -> list[Path]:
        names = [self.medium.lambda_file, self.medium.mu_file, self.source.file]
        return [_resolve(n, base) for n in names if n is not None]

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def content_hash(self, base: Path | None = None, extra: list[Path] = ()) -> str:
        """sha256 over the canonical config and the bytes of every input file."""
        digest = hashlib.sha256(self.canonical_json().encode())
        for path in [*self.input_files(base), *extra]:
            digest.update(Path(path).read_bytes())
        return digest.hexdigest()


def _resolve(name: str, base: Path | None) -> Path:
    p = Path(name)
    return p if p.is_absolute() or base is None else base / p


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
