"""Command-line interface: ``flatgen generate|check|heatmap|sweep|simulate|export``.

Exit status is 0 on success (or a feasible verdict), 1 when the result is
infeasible or the simulation diverged, and 2 for usage or configuration
errors. Output files contain no timestamps, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import export
from .errors import FlatgenError, InfeasibleError, SimulationDiverged
from .feasibility import (CIRCLE_MODES, DEFAULT_DT, SCAN_FACTOR, SCAN_HI, SCAN_LO,
                          base_durations, check_trajectory, circle_max_speed,
                          hover_to_hover_heatmap, knife_edge_speed_bound, min_feasible_scale,
                          parallel_map)
from .maneuvers import MANEUVER_NAMES, CircleRecipe, ManeuverRecipe, build_recipe
from .minsnap import MinSnapProblem
from .simulator import SimConfig, tracking_metrics, windowed_round_trip
from .vehicle import load_params, nominal_params

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("flatgen")


class UsageError(Exception):
    pass


def _params(args):
    if args.params is None:
        return nominal_params()
    path = Path(args.params)
    if not path.is_file():
        raise UsageError(f"parameter file not found: {path}")
    return load_params(path)


def _out_dir(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


def _read_file(path, what):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def _recipe(args):
    if args.recipe:
        path = _read_file(args.recipe, "recipe file")
        return ManeuverRecipe.from_json(path.read_text())
    if not args.maneuver:
        raise UsageError("give --maneuver or --recipe")
    kwargs = {}
    if args.maneuver == "hover_to_hover":
        kwargs = {"distance": args.dist, "psi_start": args.psi_start, "psi_end": args.psi_end}
    elif args.maneuver == "circle":
        kwargs = {"r": args.radius, "v": args.speed, "mode": args.circle_mode}
    return build_recipe(args.maneuver, **kwargs)


def _scan_kwargs(args):
    return {"lo": args.scan_lo, "hi": args.scan_hi, "factor": args.scan_factor}


def _emit(msg):
    print(msg)


def cmd_generate(args):
    p = _params(args)
    recipe = _recipe(args)
    out = _out_dir(args)

    if isinstance(recipe, CircleRecipe):
        report = recipe.check(p)
        extra = {"maneuver": "circle", "radius": recipe.r, "speed": recipe.v, "mode": recipe.mode}
        export.write_text(out / "circle_report.json", export.report_json(report, extra))
        _emit(f"circle r={recipe.r:g} v={recipe.v:g} {recipe.mode}: "
              f"{'feasible' if report.feasible else 'infeasible'}")
        return EXIT_OK if report.feasible else EXIT_INFEASIBLE

    stem = recipe.name
    if recipe.minimize:
        try:
            result = min_feasible_scale(recipe, p, dt=args.dt, **_scan_kwargs(args))
        except InfeasibleError as exc:
            body = {"feasible": False, "error": str(exc),
                    "scan_profile": [[c, f] for c, f in exc.profile]}
            export.write_text(out / f"{stem}_report.json",
                              json.dumps(body, indent=2, sort_keys=True) + "\n")
            _emit(f"{stem}: infeasible at every scanned scale")
            return EXIT_INFEASIBLE
        traj, report = result.trajectory, result.report
        log.info("%s: %d scan points, scale %.6g", stem, len(result.profile), result.scale)
        extra = {"scale": result.scale, "at_lower_bound": result.at_lower_bound,
                 "infeasible_bands": [list(b) for b in result.infeasible_bands()],
                 "scan_profile": [[c, f] for c, f in result.profile]}
    else:
        traj = MinSnapProblem(recipe.waypoints, recipe.mu_psi).trajectory(base_durations(recipe))
        report = check_trajectory(traj, p, args.dt)
        extra = {"scale": 1.0}
    extra.update({"maneuver": stem, "duration": traj.duration})

    export.write_text(out / f"{stem}_trajectory.csv", export.trajectory_csv(traj, args.dt))
    export.write_text(out / f"{stem}_trajectory.json", export.trajectory_json(traj))
    export.write_text(out / f"{stem}_report.json", export.report_json(report, extra))
    _emit(f"{stem}: T={traj.duration:.4f} s scale={extra['scale']:.6g} "
          f"{'feasible' if report.feasible else 'infeasible'}")
    _emit(report.table_row(stem))
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_check(args):
    p = _params(args)
    traj = export.load_trajectory(_read_file(args.trajectory, "trajectory file"))
    report = check_trajectory(traj, p, args.dt)
    text = export.report_json(report, {"duration": traj.duration})
    if args.out:
        export.write_text(_out_dir(args) / "check_report.json", text)
    else:
        sys.stdout.write(text)
    if report.feasible:
        _emit("feasible")
        return EXIT_OK
    _emit(f"infeasible: first violation at t={report.first_violation_time:.4f} s")
    return EXIT_INFEASIBLE


def cmd_heatmap(args):
    p = _params(args)
    if args.grid < 1:
        raise UsageError("--grid must be at least 1")
    out = _out_dir(args)
    axis = (np.linspace(-math.pi, math.pi, args.grid) if args.grid > 1
            else np.array([args.psi_start]))
    axis_end = axis if args.grid > 1 else np.array([args.psi_end])
    values = hover_to_hover_heatmap(axis, axis_end, p, args.dist, args.dt, **_scan_kwargs(args))
    export.write_text(out / "heatmap.csv", export.heatmap_csv(axis, axis_end, values))
    if np.all(np.isnan(values)):
        _emit("heatmap: no feasible cell")
        return EXIT_INFEASIBLE
    i, j = np.unravel_index(np.nanargmin(values), values.shape)
    _emit(f"heatmap {args.grid}x{args.grid}: min {values[i, j]:.4f} s at "
          f"psi_start={axis[i]:.4f} psi_end={axis_end[j]:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    """Largest feasible circle speed per flight mode, one row per radius."""
    p = _params(args)
    if any(r <= 0 for r in args.radius):
        raise UsageError("--radius values must be positive")
    out = _out_dir(args)
    jobs = [(r, mode) for r in args.radius for mode in CIRCLE_MODES]
    speeds = parallel_map(lambda job: circle_max_speed(job[0], job[1], p), jobs)
    rows = []
    for k, r in enumerate(args.radius):
        row = speeds[k * len(CIRCLE_MODES):(k + 1) * len(CIRCLE_MODES)]
        rows.append([r, *row, knife_edge_speed_bound(r, p)])
        _emit(f"r={r:g} m: " + " ".join(f"{m}={v:.2f}" for m, v in zip(CIRCLE_MODES, row))
              + f" bound={rows[-1][-1]:.2f} m/s")
    export.write_text(out / "circle_sweep.csv", export.circle_sweep_csv(rows))
    return EXIT_OK


def cmd_export(args):
    traj = export.load_trajectory(_read_file(args.trajectory, "trajectory file"))
    out = _out_dir(args)
    target = out / (Path(args.trajectory).stem + ".csv")
    export.write_text(target, export.trajectory_csv(traj, args.dt))
    _emit(f"wrote {target}")
    return EXIT_OK


def cmd_simulate(args):
    p = _params(args)
    traj = export.load_trajectory(_read_file(args.trajectory, "trajectory file"))
    out = _out_dir(args)
    cfg = SimConfig(step=args.step, mode=args.mode, window=args.window)
    try:
        result = windowed_round_trip(traj, p, cfg)
    except SimulationDiverged as exc:
        if exc.trace is not None:
            export.write_text(out / "trace.csv", export.trace_csv(exc.trace))
        _emit(f"simulation diverged: {exc}")
        return EXIT_INFEASIBLE
    trace = result.trace
    metrics = tracking_metrics(trace, traj, p).to_dict()
    metrics.update({
        "mode": cfg.mode, "step": cfg.step, "window": cfg.window,
        "windowed": result.to_dict(),
        "max_residual_trans": float(trace.res_trans.max()),
        "max_residual_rot": float(trace.res_rot.max()),
        "quat_drift": trace.quat_drift,
    })
    export.write_text(out / "trace.csv", export.trace_csv(trace))
    export.write_text(out / "metrics.json", json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    _emit(f"simulated {traj.duration:.4f} s ({cfg.mode}): max windowed position error "
          f"{result.max_position_error:.3e} m")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="vehicle parameter file (default: bundled nominal set)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--dt", type=float, default=DEFAULT_DT, help="check sample spacing [s]")
    common.add_argument("-v", "--verbose", action="store_true")

    scan = argparse.ArgumentParser(add_help=False)
    scan.add_argument("--scan-lo", type=float, default=SCAN_LO)
    scan.add_argument("--scan-hi", type=float, default=SCAN_HI)
    scan.add_argument("--scan-factor", type=float, default=SCAN_FACTOR)

    hover = argparse.ArgumentParser(add_help=False)
    hover.add_argument("--dist", type=float, default=6.0, help="hover-to-hover distance [m]")
    hover.add_argument("--psi-start", type=float, default=0.0, help="start yaw [rad]")
    hover.add_argument("--psi-end", type=float, default=0.0, help="end yaw [rad]")

    parser = argparse.ArgumentParser(
        prog="flatgen", description="Minimum-snap trajectories and feasibility checks for tailsitters.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common, scan, hover],
                         help="build a maneuver and find its minimum feasible time")
    src = gen.add_mutually_exclusive_group(required=True)
    src.add_argument("--maneuver", choices=MANEUVER_NAMES)
    src.add_argument("--recipe", help="recipe JSON file")
    gen.add_argument("--radius", type=float, default=3.0, help="circle radius [m]")
    gen.add_argument("--speed", type=float, default=5.0, help="circle speed [m/s]")
    gen.add_argument("--circle-mode", choices=CIRCLE_MODES, default="coordinated")
    gen.set_defaults(func=cmd_generate)

    chk = sub.add_parser("check", parents=[common], help="check a trajectory JSON against the input limits")
    chk.add_argument("trajectory", help="trajectory JSON file")
    chk.set_defaults(func=cmd_check, out=None)

    heat = sub.add_parser("heatmap", parents=[common, scan, hover],
                          help="minimum hover-to-hover time over start/end yaw")
    heat.add_argument("--grid", type=int, default=9, help="cells per axis over [-pi, pi]")
    heat.set_defaults(func=cmd_heatmap)

    swp = sub.add_parser("sweep", parents=[common], help="maximum circle speed per flight mode")
    swp.add_argument("--radius", type=float, nargs="+", default=[3.0], help="circle radii [m]")
    swp.set_defaults(func=cmd_sweep)

    exp = sub.add_parser("export", parents=[common], help="sample a trajectory JSON to CSV")
    exp.add_argument("trajectory", help="trajectory JSON file")
    exp.set_defaults(func=cmd_export)

    sim = sub.add_parser("simulate", parents=[common], help="windowed open-loop simulation")
    sim.add_argument("trajectory", help="trajectory JSON file")
    sim.add_argument("--step", type=float, default=1e-4, help="integration step [s]")
    sim.add_argument("--mode", choices=("consistent", "full"), default="consistent")
    sim.add_argument("--window", type=float, default=0.5, help="reset window [s]")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, FlatgenError, OSError) as exc:
        print(f"flatgen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
