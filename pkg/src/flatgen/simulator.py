"""Open-loop rigid-body simulation driven by flatness-derived inputs.

The simulator integrates the vehicle model with a fixed-step classical
Runge-Kutta scheme. Inputs are taken from the flatness transform of the
reference trajectory at every stage time, so in the flatness-consistent
mode the simulated state should reproduce the reference up to integration
error. Attitude dynamics are open-loop unstable, so comparisons over long
horizons are done in short windows that restart from the reference.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SimulationDiverged
from .flatness import flat_to_full_batch
from .minsnap import sample_flat_batch, sample_times
from .vehicle import ControlInput, VehicleState, derivative_vector

log = logging.getLogger(__name__)

DIVERGENCE_RADIUS = 1e3  # [m]
_MODES = {"consistent": "consistent", "flatness_consistent": "consistent",
          "full": "full", "full_model": "full"}


@dataclass(frozen=True)
class SimConfig:
    step: float = 1e-4
    mode: str = "consistent"
    window: float = 0.5

    def __post_init__(self):
        if self.mode not in _MODES:
            raise DomainError(f"unknown simulation mode {self.mode!r}")
        object.__setattr__(self, "mode", _MODES[self.mode])
        if not self.step > 0:
            raise DomainError("step must be positive")
        if not self.window >= self.step:
            raise DomainError("window must be at least one step")

    @property
    def consistent(self):
        return self.mode == "consistent"


@dataclass
class SimTrace:
    """Uniform-grid record of a simulation.

    ``states`` rows are ``[x, v, q, Omega]``; ``inputs`` rows are
    ``[omega1, omega2, delta1, delta2]``. Residuals are the pointwise model
    mismatch of the reference at each time (translational [m/s^2],
    rotational [rad/s^2]).
    """
    t: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    res_trans: np.ndarray
    res_rot: np.ndarray
    mode: str
    quat_drift: float = 0.0

    def __len__(self):
        return len(self.t)

    def state(self, i):
        return VehicleState.from_vector(self.states[i])

    def control(self, i):
        return ControlInput(*map(float, self.inputs[i]))

    def truncated(self, n):
        return SimTrace(self.t[:n], self.states[:n], self.inputs[:n],
                        self.res_trans[:n], self.res_rot[:n], self.mode, self.quat_drift)


def _input_rows(full):
    u = full.control
    return np.stack([u.omega1, u.omega2, u.delta1, u.delta2], axis=-1)


def reference(traj, p, times):
    """Flat samples and the full transform at the given times."""
    samples = sample_flat_batch(traj, times)
    return samples, flat_to_full_batch(samples, p)


def reference_states(samples, full):
    return np.concatenate([samples.x, samples.v, full.q, full.omega], axis=-1)


def eom_residuals(samples, full, p, consistent=True):
    """Model mismatch of the reference: |vdot - a| and |Omegadot_model - Omegadot|."""
    return _residuals(reference_states(samples, full), _input_rows(full),
                      samples.a, full.omega_dot, p, consistent)


def _residuals(y, u, accel, omega_dot, p, consistent):
    n = len(y)
    rt = np.empty(n)
    rr = np.empty(n)
    for i in range(n):
        d = derivative_vector(y[i], u[i], p, consistent)
        rt[i] = np.linalg.norm(d[3:6] - accel[i])
        rr[i] = np.linalg.norm(d[10:13] - omega_dot[i])
    return rt, rr


def _integrate(y0, u_half, h, p, consistent, t0, on_diverge):
    """RK4 over len(u_half)//2 steps; u_half holds inputs on the half-step grid."""
    n = (len(u_half) - 1) // 2
    Y = np.empty((n + 1, 13))
    Y[0] = y0
    y = y0.copy()
    drift = 0.0
    for k in range(n):
        u0, um, u1 = u_half[2 * k], u_half[2 * k + 1], u_half[2 * k + 2]
        k1 = derivative_vector(y, u0, p, consistent)
        k2 = derivative_vector(y + 0.5 * h * k1, um, p, consistent)
        k3 = derivative_vector(y + 0.5 * h * k2, um, p, consistent)
        k4 = derivative_vector(y + h * k3, u1, p, consistent)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        qn = math.sqrt(y[6:10] @ y[6:10])
        drift = max(drift, abs(qn - 1.0))
        y[6:10] /= qn
        Y[k + 1] = y
        if not np.all(np.isfinite(y)) or np.linalg.norm(y[0:3]) > DIVERGENCE_RADIUS:
            on_diverge(Y[:k + 2], t0 + (k + 1) * h, drift)
    return Y, drift


def integrate_open_loop(traj, p, cfg=None, t_start=0.0, t_end=None, y0=None):
    """Integrate the model from the reference state at ``t_start``.

    Inputs at every Runge-Kutta stage come from the flatness transform of
    ``traj``. Raises ``SimulationDiverged`` (with the partial trace) if the
    position leaves a 1 km ball or the state stops being finite.
    """
    cfg = cfg or SimConfig()
    t_end = traj.duration if t_end is None else t_end
    h = cfg.step
    n = int(math.floor((t_end - t_start) / h + 1e-9))
    if n < 1:
        raise DomainError("integration interval shorter than one step")
    t_half = np.minimum(t_start + 0.5 * h * np.arange(2 * n + 1), traj.duration)
    samples, full = reference(traj, p, t_half)
    u_half = _input_rows(full)
    y_ref = reference_states(samples, full)
    if y0 is None:
        y0 = y_ref[0]

    grid = slice(0, 2 * n + 1, 2)
    t = np.minimum(t_start + h * np.arange(n + 1), traj.duration)
    rt, rr = _residuals(y_ref[grid], u_half[grid], samples.a[grid],
                        full.omega_dot[grid], p, cfg.consistent)

    def diverge(Y, when, drift):
        k = len(Y)
        trace = SimTrace(t[:k], Y, u_half[grid][:k], rt[:k], rr[:k], cfg.mode, drift)
        raise SimulationDiverged(f"state diverged at t={when:.4f} s", trace)

    Y, drift = _integrate(np.asarray(y0, float), u_half, h, p, cfg.consistent, t_start, diverge)
    if drift > 1e-10:
        log.info("quaternion norm drift before renormalization: %.3e", drift)
    return SimTrace(t, Y, u_half[grid], rt, rr, cfg.mode, drift)


def attitude_error(q_a, q_b):
    """Rotation angle [rad] between unit quaternions, row-wise."""
    dot = np.abs(np.sum(q_a * q_b, axis=-1))
    return 2.0 * np.arccos(np.clip(dot, -1.0, 1.0))


@dataclass
class WindowError:
    t_start: float
    position: float  # max |x_sim - x_ref| [m]
    attitude: float  # max rotation angle between attitudes [rad]


@dataclass
class RoundTripResult:
    windows: list
    trace: SimTrace

    @property
    def max_position_error(self):
        return max(w.position for w in self.windows)

    @property
    def max_attitude_error(self):
        return max(w.attitude for w in self.windows)

    def to_dict(self):
        return {"max_position_error": self.max_position_error,
                "max_attitude_error": self.max_attitude_error,
                "windows": [{"t_start": w.t_start, "position": w.position,
                             "attitude": w.attitude} for w in self.windows]}


def windowed_round_trip(traj, p, cfg=None):
    """Restart from the reference at each window start and integrate open loop.

    Windows span a whole number of steps so the stitched trace stays on one
    uniform grid. Reports the largest position and attitude deviation from
    the reference inside every window.
    """
    cfg = cfg or SimConfig()
    h = cfg.step
    per_window = max(int(round(cfg.window / h)), 1)
    n_total = int(math.floor(traj.duration / h + 1e-9))
    if n_total < 1:
        raise DomainError("trajectory shorter than one step")
    windows, pieces = [], []
    for k0 in range(0, n_total, per_window):
        k1 = min(k0 + per_window, n_total)
        trace = integrate_open_loop(traj, p, cfg, k0 * h, k1 * h)
        samples, full = reference(traj, p, trace.t)
        pos = np.linalg.norm(trace.states[:, 0:3] - samples.x, axis=-1).max()
        att = attitude_error(trace.states[:, 6:10], full.q).max()
        windows.append(WindowError(float(k0 * h), float(pos), float(att)))
        pieces.append(trace if k1 == n_total else trace.truncated(len(trace) - 1))
    stitched = SimTrace(
        np.concatenate([tr.t for tr in pieces]),
        np.concatenate([tr.states for tr in pieces]),
        np.concatenate([tr.inputs for tr in pieces]),
        np.concatenate([tr.res_trans for tr in pieces]),
        np.concatenate([tr.res_rot for tr in pieces]),
        cfg.mode, max(tr.quat_drift for tr in pieces))
    return RoundTripResult(windows, stitched)


@dataclass
class TrackingMetrics:
    max_error: float   # [m]
    rms_error: float   # [m]
    max_speed: float   # [m/s]
    max_load: float    # [g]
    max_rate: float    # [rad/s]

    def to_dict(self):
        return {"max_position_error": self.max_error,
                "rms_position_error": self.rms_error,
                "max_speed": self.max_speed,
                "max_load": self.max_load,
                "max_angular_rate": self.max_rate,
                "max_angular_rate_deg": math.degrees(self.max_rate)}

    def table_row(self, name):
        return (f"{name}: {self.max_speed:.1f} / {self.max_load:.1f} / "
                f"{math.degrees(self.max_rate):.0f} / {self.max_error:.3f} / {self.rms_error:.3f}")


def tracking_metrics(trace, traj, p):
    """Reference maxima and position tracking error along the trace grid."""
    t = np.asarray(trace.t, dtype=float)
    if len(t) < 1:
        raise DomainError("empty trace")
    if len(t) > 2:
        # a shorter closing step that lands on the final time is allowed
        dt = np.diff(t)
        eps = 1e-9 * max(1.0, t[-1])
        if np.max(np.abs(dt[:-1] - dt[0])) > eps or dt[-1] > dt[0] + eps or dt[-1] <= 0:
            raise DomainError("trace time grid is not uniform")
    tol = 1e-9 * max(1.0, traj.duration)
    if t[0] < -tol or t[-1] > traj.duration + tol:
        raise DomainError("trace times fall outside the reference trajectory")
    samples, full = reference(traj, p, np.clip(t, 0.0, traj.duration))
    err = np.linalg.norm(trace.states[:, 0:3] - samples.x, axis=-1)
    load = np.linalg.norm(samples.a - np.array([0.0, 0.0, p.g]), axis=-1) / p.g
    return TrackingMetrics(
        max_error=float(err.max()),
        rms_error=float(np.sqrt(np.mean(err ** 2))),
        max_speed=float(np.linalg.norm(samples.v, axis=-1).max()),
        max_load=float(load.max()),
        max_rate=float(np.linalg.norm(full.omega, axis=-1).max()),
    )


def reference_trace(traj, p, dt=0.005, consistent=True):
    """Trace whose states are the flat-derived reference itself."""
    t = sample_times(traj.duration, dt)
    samples, full = reference(traj, p, t)
    rt, rr = eom_residuals(samples, full, p, consistent)
    return SimTrace(t, reference_states(samples, full), _input_rows(full), rt, rr,
                    "consistent" if consistent else "full")
