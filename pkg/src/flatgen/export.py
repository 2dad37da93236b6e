"""File formats: trajectory CSV/JSON, report JSON, heatmap and sweep CSV, trace CSV.

All positions are world frame with z pointing down. Floats in JSON are
written with ``repr`` precision so trajectories reload bit-exactly; CSV
values use a fixed ``%.10g`` format so reruns produce identical bytes.
"""
from __future__ import annotations

import csv
import io
import json

import numpy as np

from .errors import DomainError
from .minsnap import PiecewisePolynomialTrajectory, sample_flat_batch, sample_times

FRAME_NOTE = "world frame x north, y east, z down; SI units"

TRAJECTORY_COLUMNS = ("t", "x", "y", "z", "psi", "vx", "vy", "vz", "psi_d",
                      "ax", "ay", "az", "jx", "jy", "jz", "sx", "sy", "sz", "psi_dd")
TRACE_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
                 "wx", "wy", "wz", "omega1", "omega2", "delta1", "delta2",
                 "res_trans", "res_rot")
FMT = "%.10g"


def _rows_to_csv(header, rows, comments=()):
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([FMT % v for v in row])
    return buf.getvalue()


def trajectory_csv(traj, dt=0.005):
    t = sample_times(traj.duration, dt)
    s = sample_flat_batch(traj, t)
    cols = np.column_stack([t, s.x, s.psi, s.v, s.dpsi, s.a, s.j, s.s, s.ddpsi])
    return _rows_to_csv(TRAJECTORY_COLUMNS, cols, [FRAME_NOTE])


def trajectory_to_dict(traj):
    return {
        "frame": FRAME_NOTE,
        "time_basis": "normalized tau = (t - t_start) / duration, powers ascending",
        "channels": ["x", "y", "z", "psi"],
        "durations": [float(d) for d in traj.durations],
        "boundaries": [float(b) for b in traj.boundaries],
        "coefficients": traj.coeffs.tolist(),
    }


def trajectory_json(traj):
    return json.dumps(trajectory_to_dict(traj), indent=2) + "\n"


def trajectory_from_dict(d):
    if not isinstance(d, dict):
        raise DomainError("trajectory JSON must be an object")
    try:
        return PiecewisePolynomialTrajectory(d["durations"], d["coefficients"])
    except KeyError as exc:
        raise DomainError(f"trajectory JSON is missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise DomainError(f"malformed trajectory JSON ({exc})") from None


def load_trajectory(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON ({exc})") from None
    return trajectory_from_dict(data)


def report_json(report, extra=None):
    d = report.to_dict()
    if extra:
        d.update(extra)
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def heatmap_csv(psi_start, psi_end, values):
    """Matrix rows are start yaw, columns end yaw; empty cells are infeasible."""
    buf = io.StringIO()
    buf.write(f"# minimum feasible time [s]; rows psi_start, columns psi_end [rad]; {FRAME_NOTE}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["psi_start\\psi_end"] + [FMT % v for v in psi_end])
    for ps, row in zip(psi_start, values):
        w.writerow([FMT % ps] + ["" if np.isnan(v) else FMT % v for v in row])
    return buf.getvalue()


def read_heatmap_csv(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    psi_end = np.array([float(v) for v in rows[0][1:]])
    psi_start = np.array([float(r[0]) for r in rows[1:]])
    values = np.array([[float(v) if v else np.nan for v in r[1:]] for r in rows[1:]])
    return psi_start, psi_end, values


def circle_sweep_csv(rows):
    header = ("radius", "coordinated", "knife_edge", "rolling", "knife_edge_bound")
    return _rows_to_csv(header, rows, ["maximum feasible circle speed [m/s]"])


def trace_csv(trace):
    cols = np.column_stack([trace.t, trace.states, trace.inputs,
                            trace.res_trans, trace.res_rot])
    return _rows_to_csv(TRACE_COLUMNS, cols,
                        [FRAME_NOTE, f"mode={trace.mode} quat_drift={trace.quat_drift:.3e}"])


def write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)
