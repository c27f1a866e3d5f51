"""Command-line interface for the flow topology-optimization toolkit."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import analysis, optimizer, report
from .mesh import build_unit_square_mesh, tag_boundary
from .optimizer import RunConfig
from .sensitivity import objective
from .smoothing import VelocitySmoother
from .stokes import (SingularSystemError, SolverBreakdownError, StokesSolver,
                     alpha_from_levelset)

EXIT_OK = 0
EXIT_STAGNATION = 2
EXIT_MAX_ITER = 3
EXIT_INPUT_ERROR = 4
EXIT_SOLVER_FAILURE = 5

_REASON_CODES = {"converged": EXIT_OK, "degenerate": EXIT_OK,
                 "stagnation": EXIT_STAGNATION, "max_iter": EXIT_MAX_ITER}


def _load_config(args) -> RunConfig:
    config = analysis.parse_config(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "dt", None) is not None and args.command != "sweep":
        overrides["dt"] = args.dt
    if getattr(args, "n_div", None) is not None:
        overrides["n_div"] = args.n_div
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = args.out
    return config.replace(**overrides) if overrides else config.validate()


def _write_run_outputs(outdir, mesh, result, config):
    os.makedirs(outdir, exist_ok=True)
    result.record.write_csv(os.path.join(outdir, "convergence.csv"))
    analysis.export_fields(mesh, result.psi, result.flow, result.u_s, outdir)
    report.save_field_figures(mesh, result.psi, result.flow.u,
                              result.u_s.u_s, outdir)
    report.save_convergence_figure(result.record, outdir)


def _run_optimize(config: RunConfig, outdir):
    mesh = tag_boundary(build_unit_square_mesh(config.n_div))

    snapshot_cb = None
    if config.snapshot_every > 0:
        def snapshot_cb(iteration, psi, state):
            if iteration % config.snapshot_every == 0:
                snap = os.path.join(outdir, "snapshots", f"iter_{iteration:04d}")
                analysis.export_fields(mesh, psi, state.flow, state.u_s, snap)

    result = optimizer.optimize(config, mesh=mesh, callback=snapshot_cb)
    _write_run_outputs(outdir, mesh, result, config)
    row = result.record.rows[-1]
    print(f"terminated: {result.reason} after {result.iterations} iterations, "
          f"J = {result.objective:.6e}, coverage_D = {row[5]:.4f}, "
          f"coverage_Omega = {row[6]:.4f}")
    return result


def cmd_optimize(args) -> int:
    config = _load_config(args)
    result = _run_optimize(config, config.output_dir)
    return _REASON_CODES[result.reason]


def _read_levelset(path, n_vertices) -> np.ndarray:
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.lower() == "psi":
                continue
            values.append(float(line.split(",")[-1]))
    psi = np.asarray(values)
    if psi.size != n_vertices:
        raise ValueError(
            f"{path}: expected {n_vertices} vertex values, got {psi.size}")
    return psi


def cmd_solve(args) -> int:
    config = _load_config(args)
    mesh = tag_boundary(build_unit_square_mesh(config.n_div))
    psi = _read_levelset(args.levelset, mesh.n_vertices)

    solver = StokesSolver(mesh)
    alpha = alpha_from_levelset(psi, mesh, solver.quad,
                                config.alpha_L, config.alpha_U)
    flow = solver.solve(solver.assemble(alpha), rtol=config.solver_rtol)
    u_s = VelocitySmoother(mesh, rtol=config.solver_rtol).smooth(
        flow.u, config.dt)
    value = objective(mesh, u_s.u_s, config.u_t, solver.quad)
    cov = analysis.coverage_report(mesh, flow.u, u_s.u_s, psi, config.u_t,
                                  solver.quad)
    outdir = config.output_dir
    analysis.export_fields(mesh, psi, flow, u_s, outdir)
    report.save_field_figures(mesh, psi, flow.u, u_s.u_s, outdir)
    print(f"J = {value:.6e}, coverage_D = {cov.coverage_D:.4f}, "
          f"coverage_Omega = {cov.coverage_Omega:.4f}, "
          f"volume = {optimizer.fluid_volume(psi, mesh):.4f}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    data = analysis.import_fields(os.path.join(args.fields, "fields.csv"))
    config = analysis.parse_config(args.config) if args.config else RunConfig()
    u_t = args.u_t if args.u_t is not None else config.u_t
    mesh = tag_boundary(build_unit_square_mesh(data["n_div"]))
    cov = analysis.coverage_report(mesh, data["u"], data["u_s"], data["psi"],
                                  u_t)
    print(f"coverage_D = {cov.coverage_D:.4f}, "
          f"coverage_Omega = {cov.coverage_Omega:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_config(args)
    dts = [float(v) for v in args.dt.split(",") if v.strip()]
    if not dts:
        raise ValueError("sweep requires at least one dt value")
    base = config.output_dir
    summary = []
    worst = EXIT_OK
    for dt in dts:
        sub = os.path.join(base, f"dt_{dt:g}")
        run_config = config.replace(dt=dt, output_dir=sub)
        result = _run_optimize(run_config, sub)
        row = result.record.rows[-1]
        summary.append((dt, result.iterations, result.objective,
                        row[5], row[6], result.reason))
        worst = max(worst, _REASON_CODES[result.reason])
    os.makedirs(base, exist_ok=True)
    with open(os.path.join(base, "sweep.csv"), "w") as fh:
        fh.write("dt,iterations,J,coverage_D,coverage_Omega,reason\n")
        for row in summary:
            fh.write(f"{row[0]:g},{row[1]},{row[2]:.8e},"
                     f"{row[3]:.6f},{row[4]:.6f},{row[5]}\n")
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowtopo",
        description="Topology optimization for uniform flow distribution "
                    "in a bipolar-plate domain.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="run the full optimization loop")
    p_opt.add_argument("--config", help="flat key=value configuration file")
    p_opt.add_argument("--dt", type=float, help="smoothing step length")
    p_opt.add_argument("--n-div", type=int, dest="n_div",
                       help="mesh subdivisions per side")
    p_opt.add_argument("--out", help="output directory")
    p_opt.set_defaults(func=cmd_optimize)

    p_solve = sub.add_parser("solve",
                             help="single forward solve for a given level set")
    p_solve.add_argument("--config", help="flat key=value configuration file")
    p_solve.add_argument("--levelset", required=True,
                         help="CSV with one psi value per mesh vertex")
    p_solve.add_argument("--dt", type=float)
    p_solve.add_argument("--n-div", type=int, dest="n_div")
    p_solve.add_argument("--out", help="output directory")
    p_solve.set_defaults(func=cmd_solve)

    p_metrics = sub.add_parser("metrics",
                               help="recompute coverage from exported fields")
    p_metrics.add_argument("--fields", required=True,
                           help="directory containing fields.csv")
    p_metrics.add_argument("--config", help="configuration file (for u_t)")
    p_metrics.add_argument("--u-t", type=float, dest="u_t",
                           help="velocity threshold override")
    p_metrics.set_defaults(func=cmd_metrics)

    p_sweep = sub.add_parser("sweep",
                             help="run optimize once per smoothing step length")
    p_sweep.add_argument("--config", help="flat key=value configuration file")
    p_sweep.add_argument("--dt", required=True,
                         help="comma-separated list of step lengths")
    p_sweep.add_argument("--n-div", type=int, dest="n_div")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (SingularSystemError, SolverBreakdownError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
