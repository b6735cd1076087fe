"""``elastotat`` command line front end.

Exit status: 0 success, 1 a module or input error (a JSON diagnostic goes to
stderr), 2 usage errors, 3 the sufficient conditions failed where required.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .config import ConfigError, ExperimentConfig, load_config
from .export import (
    csv_to_field_bytes, export_ray_summaries_csv, export_rays_csv,
    export_samples_csv, export_trace_csv,
)
from .grid import GridError, read_field, samples_from_bytes, write_field
from .medium import Medium, MediumError, check_conditions
from .neumann import reconstruct
from .rays import RayError, TrappingReport, estimate_T_Omega
from .reversal import pseudo_inverse_A
from .solver import SolverConfig, SolverError, forward_solve, read_trace, write_trace

log = logging.getLogger("elastotat")

EXIT_ERROR = 1
EXIT_CONDITIONS = 3
STAGES = ("check", "rays", "simulate", "reconstruct")


class ConditionsFailed(Exception):
    pass


# -- shared helpers -------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(obj, path: Path | None) -> str:
    text = json.dumps(obj, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _trace_rays(cfg: ExperimentConfig, medium: Medium, seeds: int | None = None,
                t_max: float | None = None) -> TrappingReport:
    return estimate_T_Omega(
        medium, cfg.radius, seeds or cfg.rays.seeds, t_max if t_max is not None else cfg.rays.t_max,
        safety_factor=cfg.rays.safety_factor,
    )


def resolve_T(cfg: ExperimentConfig, medium: Medium, rays: TrappingReport | None = None):
    """Configured T, or the ray-traced suggestion when T is 'auto'."""
    if cfg.T != "auto":
        return float(cfg.T), rays
    rays = rays or _trace_rays(cfg, medium)
    if rays.suggested_T is None:
        raise RayError("T = 'auto' needs a non-trapping medium; set T explicitly")
    return float(rays.suggested_T), rays


def _config_block(cfg: ExperimentConfig, base: Path, extra: list[Path] = ()) -> dict:
    return {"config": cfg.model_dump(mode="json"), "input_hash": cfg.content_hash(base, list(extra))}


def _reconstruct_report(result, T, trace_hash, truth_hash) -> dict:
    return {
        "T": T,
        "trace_sha256": trace_hash,
        "truth_sha256": truth_hash,
        "result": result.to_dict(),
    }


# -- subcommands -----------------------------------------------------------------


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    medium = cfg.make_medium(Path(args.config).parent)
    T = args.T if args.T is not None else resolve_T(cfg, medium)[0]
    theta = args.theta if args.theta is not None else cfg.conditions.theta
    report = check_conditions(medium, cfg.radius, T, cfg.conditions.epsilon, theta)
    sys.stdout.write(_dump(report.to_dict(), args.out))
    return 0 if report.overall else EXIT_CONDITIONS


def cmd_rays(args) -> int:
    cfg = load_config(args.config)
    medium = cfg.make_medium(Path(args.config).parent)
    report = _trace_rays(cfg, medium, args.seeds, args.tmax)
    _dump(report.to_dict(), args.out)
    if args.paths:
        export_rays_csv(report.rays, args.paths)
    print(f"max exit time {report.max_exit_time}, trapped {report.trapped_count}, "
          f"suggested T {report.suggested_T}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    base = Path(args.config).parent
    medium = cfg.make_medium(base)
    f = cfg.make_source(base)
    T = args.T if args.T is not None else resolve_T(cfg, medium)[0]
    stride = args.stride if args.snapshots else None
    result = forward_solve(medium, cfg.make_ball(), f, T, SolverConfig(cfg.cfl, stride))
    write_trace(result.trace, args.out)
    if args.truth_out:
        write_field(f, args.truth_out)
    if args.snapshots:
        out = Path(args.snapshots)
        out.mkdir(parents=True, exist_ok=True)
        for t, snap in result.snapshots:
            step = round(t / result.trace.dt)
            write_field(result.crop(snap, medium.grid), out / f"snap_{step:06d}.fld")
    print(f"{result.trace.n_steps} steps of dt={result.trace.dt:.6g} to T={result.trace.T:.6g}, "
          f"{len(result.trace.boundary)} boundary nodes")
    return 0


def _medium_for_trace(cfg: ExperimentConfig, base: Path, trace) -> Medium:
    medium = cfg.make_medium(base)
    if trace.boundary.grid != medium.grid:
        raise GridError("trace grid does not match the configured grid")
    return medium


def cmd_timereverse(args) -> int:
    cfg = load_config(args.config)
    trace = read_trace(args.trace)
    medium = _medium_for_trace(cfg, Path(args.config).parent, trace)
    out = pseudo_inverse_A(medium, cfg.make_ball(), trace, cfg.reconstruction.cg_tol)
    write_field(out.field, args.out)
    print(f"harmonic extension: {out.extension.iterations} CG iterations, residual {out.extension.residual:.3g}")
    return 0


def _run_reconstruct(cfg, medium, trace, iters, tol, truth, keep_iterates):
    return reconstruct(
        medium, cfg.make_ball(), trace, max_iters=iters, stop_tol=tol, f_true=truth,
        config=SolverConfig(cfg.cfl), keep_iterates=keep_iterates, tol=cfg.reconstruction.cg_tol,
    )


def _write_iterates(result, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for k, f in enumerate(result.iterates):
        write_field(f, directory / f"iterate_{k:03d}.fld")


def cmd_reconstruct(args) -> int:
    cfg = load_config(args.config)
    base = Path(args.config).parent
    trace = read_trace(args.trace)
    medium = _medium_for_trace(cfg, base, trace)
    truth = read_field(args.truth) if args.truth else None
    iters = args.iters if args.iters is not None else cfg.reconstruction.iters
    tol = args.tol if args.tol is not None else cfg.reconstruction.tol
    result = _run_reconstruct(cfg, medium, trace, iters, tol, truth, bool(args.keep_iterates))
    write_field(result.final, args.out)
    if args.keep_iterates:
        _write_iterates(result, Path(args.keep_iterates))
    if args.report:
        extra = [Path(args.trace)] + ([Path(args.truth)] if args.truth else [])
        report = _config_block(cfg, base, extra)
        report["reconstruct"] = _reconstruct_report(
            result, trace.T, _sha256(args.trace), _sha256(args.truth) if args.truth else None
        )
        _dump(report, args.report)
    print(f"{result.iterations_run} iterates, converged={result.converged}")
    return 0


def run_pipeline(cfg: ExperimentConfig, out_dir: Path, base: Path, stages=STAGES,
                 require_conditions: bool = False, figures: bool = False,
                 keep_iterates: bool = False) -> dict:
    """check -> rays -> simulate -> reconstruct, writing artifacts and report.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    medium = cfg.make_medium(base)
    ball = cfg.make_ball()
    report = _config_block(cfg, base)
    report["stages"] = {}
    artifacts = {}
    rays = None
    if "rays" in stages or cfg.T == "auto":
        rays = _trace_rays(cfg, medium)
    if "rays" in stages:
        report["stages"]["rays"] = rays.to_dict(include_rays=False)
    T, rays = resolve_T(cfg, medium, rays)
    report["T"] = T

    def finish():
        report["artifacts"] = {name: _sha256(out_dir / name) for name in sorted(artifacts)}
        _dump(report, out_dir / "report.json")
        return report

    if "check" in stages:
        cond = check_conditions(medium, cfg.radius, T, cfg.conditions.epsilon, cfg.conditions.theta)
        report["stages"]["check"] = cond.to_dict()
        if require_conditions and not cond.overall:
            report["status"] = "conditions failed"
            finish()
            raise ConditionsFailed("sufficient conditions not satisfied")

    trace = truth = result = None
    if "simulate" in stages or "reconstruct" in stages:
        truth = cfg.make_source(base)
        fwd = forward_solve(medium, ball, truth, T, SolverConfig(cfg.cfl))
        trace = fwd.trace
        write_trace(trace, out_dir / "trace.etat")
        write_field(truth, out_dir / "truth.fld")
        artifacts.update({"trace.etat": 1, "truth.fld": 1})
        report["stages"]["simulate"] = {
            "dt": trace.dt, "n_steps": trace.n_steps, "boundary_nodes": len(trace.boundary),
            "padded_n": fwd.padded_grid.n_per_axis, "trace_norm": trace.norm(),
        }
    if "reconstruct" in stages:
        rc = cfg.reconstruction
        result = _run_reconstruct(cfg, medium, trace, rc.iters, rc.tol, truth, keep_iterates)
        write_field(result.final, out_dir / "recon.fld")
        artifacts["recon.fld"] = 1
        if keep_iterates:
            _write_iterates(result, out_dir / "iterates")
        report["stages"]["reconstruct"] = _reconstruct_report(
            result, T, _sha256(out_dir / "trace.etat"), _sha256(out_dir / "truth.fld")
        )
    if figures:
        report["figures"] = _render_figures(out_dir, cfg, medium, truth, trace, result, rays)
        artifacts.update({name: 1 for name in report["figures"]})
    report["status"] = "ok"
    return finish()


def _render_figures(out_dir, cfg, medium, truth, trace, result, rays) -> list[str]:
    from . import plotting

    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    names = []
    grid = medium.grid
    if truth is not None and result is not None:
        err = (result.final - truth).data
        plotting.field_figure(grid, {"truth": truth.data, "recon": result.final.data, "error": err},
                              fig_dir / "fields.png", cfg.radius)
        plotting.convergence_figure(result.to_dict(), fig_dir / "convergence.png")
        names += ["figures/fields.png", "figures/convergence.png"]
    if trace is not None:
        plotting.trace_figure(trace, fig_dir / "trace.png")
        names.append("figures/trace.png")
    if rays is not None and rays.rays:
        plotting.rays_figure(rays.rays, cfg.radius, fig_dir / "rays.png")
        names.append("figures/rays.png")
    return names


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    stages = tuple(s.strip() for s in args.stages.split(",")) if args.stages else STAGES
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stages {sorted(unknown)}; choose from {', '.join(STAGES)}")
    try:
        report = run_pipeline(cfg, Path(args.out_dir), Path(args.config).parent, stages,
                              args.require_conditions, args.figures, args.keep_iterates)
    except ConditionsFailed as exc:
        print(f"stopped at check: {exc}", file=sys.stderr)
        return EXIT_CONDITIONS
    print(f"report written to {Path(args.out_dir) / 'report.json'} (T={report['T']:.6g})")
    return 0


def cmd_export(args) -> int:
    if args.field:
        grid, data = samples_from_bytes(Path(args.field).read_bytes())
        rows = export_samples_csv(grid, data, args.out)
    elif args.trace:
        rows = export_trace_csv(read_trace(args.trace), args.out)
    elif args.rays:
        rows = export_ray_summaries_csv(json.loads(Path(args.rays).read_text())["rays"], args.out)
    else:
        Path(args.out).write_bytes(csv_to_field_bytes(args.from_csv))
        rows = None
    if rows is not None:
        print(f"{rows} rows written to {args.out}")
    return 0


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastotat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check", help="evaluate the sufficient conditions on the Lame parameters")
    s.add_argument("--config", required=True)
    s.add_argument("--T", type=float, help="observation time (default: config or ray estimate)")
    s.add_argument("--theta", type=float, help="fix theta instead of searching the window")
    s.add_argument("--out", help="also write the report here")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("rays", help="trace bicharacteristics and estimate T(Omega)")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", type=int)
    s.add_argument("--tmax", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--paths", help="CSV dump of every ray path")
    s.set_defaults(func=cmd_rays)

    s = sub.add_parser("simulate", help="forward solve and record the boundary trace")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--T", type=float)
    s.add_argument("--truth-out", help="write the initial displacement field")
    s.add_argument("--snapshots", help="directory for displacement snapshots")
    s.add_argument("--stride", type=int, default=10)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("timereverse", help="apply the time-reversal operator A to a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_timereverse)

    s = sub.add_parser("reconstruct", help="Neumann series reconstruction from a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--iters", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--truth")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.add_argument("--keep-iterates", metavar="DIR", help="store every iterate in DIR")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("pipeline", help="check, rays, simulate and reconstruct in one run")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--stages", help=f"comma list from {','.join(STAGES)} (default: all)")
    s.add_argument("--require-conditions", action="store_true", help="stop with status 3 if the check fails")
    s.add_argument("--figures", action="store_true", help="render PNG figures next to the report")
    s.add_argument("--keep-iterates", action="store_true")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("export", help="CSV export of field, trace or ray files")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--field")
    src.add_argument("--trace")
    src.add_argument("--rays", help="rays.json from the rays command")
    src.add_argument("--from-csv", help="turn a field CSV back into a field file")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    kernels.configure_threads()
    try:
        return args.func(args)
    except (ConfigError, GridError, MediumError, SolverError, RayError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "command": args.command, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
