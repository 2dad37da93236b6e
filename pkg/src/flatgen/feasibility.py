"""Actuator-envelope certification of flat-output trajectories.

A trajectory is feasible when every sample maps through the flatness
transform to motor speeds inside ``[omega_min, omega_max]`` and flap
deflections inside ``[-delta_max, delta_max]``, with no degenerate
attitude and no negative motor thrust.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfeasibleError
from .flatness import OK, STATUS_TEXT, FlatSample, flat_to_full_batch
from .minsnap import MinSnapProblem, sample_flat_batch, sample_times

DEFAULT_DT = 0.005
NEAR_LIMIT = 0.05
SCAN_LO = 0.1
SCAN_HI = 10.0
SCAN_FACTOR = 1.05
BISECT_TOL = 1e-4
CIRCLE_MODES = ("coordinated", "knife_edge", "rolling")


def thread_count():
    """Worker count for independent evaluations (``FLATGEN_THREADS``, default 1)."""
    raw = os.environ.get("FLATGEN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"FLATGEN_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def parallel_map(fn, items):
    """Apply a pure function to every item; results keep the input order."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class FeasibilityReport:
    times: np.ndarray
    sample_ok: np.ndarray
    omega_low_margin: float    # min(omega_i) - omega_min [rad/s]
    omega_high_margin: float   # omega_max - max(omega_i) [rad/s]
    delta_margin: float        # delta_max - max|delta_i| [rad]
    negative_thrust_events: int
    degenerate_events: int
    first_violation_time: float | None
    feasible: bool
    near_limit: bool
    peak_speed: float
    peak_load: float
    peak_rate: float
    reasons: list = field(default_factory=list)

    @property
    def n_samples(self):
        return len(self.times)

    def table_row(self, name):
        """Maxima in the layout ``name: speed [m/s] / load [g] / rate [deg/s]``."""
        return (f"{name}: {self.peak_speed:.1f} / {self.peak_load:.1f} / "
                f"{math.degrees(self.peak_rate):.0f}")

    def to_dict(self):
        return {
            "feasible": bool(self.feasible),
            "n_samples": int(self.n_samples),
            "first_violation_time": self.first_violation_time,
            "omega_low_margin": float(self.omega_low_margin),
            "omega_high_margin": float(self.omega_high_margin),
            "delta_margin": float(self.delta_margin),
            "negative_thrust_events": int(self.negative_thrust_events),
            "degenerate_events": int(self.degenerate_events),
            "near_limit": bool(self.near_limit),
            "peak_speed": float(self.peak_speed),
            "peak_load": float(self.peak_load),
            "peak_rate": float(self.peak_rate),
            "reasons": list(self.reasons),
            "violating_samples": np.flatnonzero(~self.sample_ok).tolist(),
        }


def _finite_max(x, default):
    x = x[np.isfinite(x)]
    return float(x.max()) if x.size else default


def _finite_min(x, default):
    x = x[np.isfinite(x)]
    return float(x.min()) if x.size else default


def check_samples(samples, times, p):
    """Envelope check over a batch of flat samples taken at ``times``."""
    samples = samples.batched()
    times = np.asarray(times, dtype=float).reshape(-1)
    full = flat_to_full_batch(samples, p)
    u = full.control
    w = np.stack([u.omega1, u.omega2], axis=-1)
    d = np.abs(np.stack([u.delta1, u.delta2], axis=-1))

    degenerate = full.status != OK
    neg = full.negative_thrust & ~degenerate
    low = np.any(w < p.omega_min, axis=-1) & ~degenerate
    high = np.any(w > p.omega_max, axis=-1) & ~degenerate
    flap = np.any(d > p.delta_max, axis=-1) & ~degenerate
    bad = degenerate | neg | low | high | flap
    ok = ~bad

    reasons = []
    for code in np.unique(full.status[degenerate]):
        reasons.append(STATUS_TEXT[int(code)])
    for mask, text in ((neg, "negative motor thrust"),
                       (low, "motor speed below omega_min"),
                       (high, "motor speed above omega_max"),
                       (flap, "flap deflection beyond delta_max")):
        if np.any(mask):
            idx = int(np.argmax(mask))
            reasons.append(f"{text} (first at t={times[idx]:.4f} s)")

    valid = ~degenerate
    low_margin = _finite_min(w[valid].min(axis=-1) - p.omega_min, -np.inf) if valid.any() else -np.inf
    high_margin = _finite_min(p.omega_max - w[valid].max(axis=-1), -np.inf) if valid.any() else -np.inf
    delta_margin = _finite_min(p.delta_max - d[valid].max(axis=-1), -np.inf) if valid.any() else -np.inf
    feasible = bool(np.all(ok))
    near = feasible and (
        low_margin < NEAR_LIMIT * p.omega_max
        or high_margin < NEAR_LIMIT * p.omega_max
        or delta_margin < NEAR_LIMIT * p.delta_max
    )

    load = np.linalg.norm(samples.a - np.array([0.0, 0.0, p.g]), axis=-1) / p.g
    rate = np.linalg.norm(full.omega, axis=-1)
    return FeasibilityReport(
        times=times,
        sample_ok=ok,
        omega_low_margin=low_margin,
        omega_high_margin=high_margin,
        delta_margin=delta_margin,
        negative_thrust_events=int(np.count_nonzero(neg)),
        degenerate_events=int(np.count_nonzero(degenerate)),
        first_violation_time=None if feasible else float(times[np.argmax(bad)]),
        feasible=feasible,
        near_limit=bool(near),
        peak_speed=float(np.linalg.norm(samples.v, axis=-1).max()),
        peak_load=float(load.max()),
        peak_rate=_finite_max(rate, float("nan")),
        reasons=reasons,
    )


def check_trajectory(traj, p, dt=DEFAULT_DT):
    """Sample a trajectory every ``dt`` seconds and certify the inputs."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    times = sample_times(traj.duration, dt)
    return check_samples(sample_flat_batch(traj, times), times, p)


@dataclass
class ScanResult:
    """Outcome of the time-scale search.

    ``profile`` lists ``(c, feasible)`` for every scanned scale in ascending
    order; bisection probes are appended in ``refinements``.
    """
    scale: float
    trajectory: object
    report: FeasibilityReport
    profile: list
    refinements: list
    at_lower_bound: bool = False

    @property
    def duration(self):
        return self.trajectory.duration

    def infeasible_bands(self):
        """Scale intervals [c_a, c_b] of infeasible scans enclosed by feasible ones."""
        flags = [f for _, f in self.profile]
        bands, i = [], 0
        while i < len(flags):
            if not flags[i]:
                j = i
                while j + 1 < len(flags) and not flags[j + 1]:
                    j += 1
                if i > 0 and j + 1 < len(flags) and flags[i - 1] and flags[j + 1]:
                    bands.append((self.profile[i][0], self.profile[j][0]))
                i = j + 1
            else:
                i += 1
        return bands


def scan_grid(lo=SCAN_LO, hi=SCAN_HI, factor=SCAN_FACTOR):
    n = int(math.floor(math.log(hi / lo) / math.log(factor) + 1e-9))
    grid = lo * factor ** np.arange(n + 1)
    if grid[-1] < hi * (1 - 1e-12):
        grid = np.append(grid, hi)
    return grid


def base_durations(recipe):
    if recipe.durations is not None:
        return np.asarray(recipe.durations, dtype=float)
    from .minsnap import initial_time_estimate, optimize_segment_times
    total = recipe.total_time or initial_time_estimate(recipe.waypoints)
    return optimize_segment_times(recipe.waypoints, total, recipe.mu_psi).t


def min_feasible_scale(recipe, p, dt=DEFAULT_DT, lo=SCAN_LO, hi=SCAN_HI,
                       factor=SCAN_FACTOR, tol=BISECT_TOL, durations=None):
    """Smallest feasible multiplier c on the recipe's base time allocation.

    Every scanned scale is re-solved, so fixed velocity constraints keep
    their magnitudes. The scan is geometric; the boundary below the
    smallest feasible grid point is then refined by bisection to relative
    tolerance ``tol``.
    """
    problem = MinSnapProblem(recipe.waypoints, recipe.mu_psi)
    base = np.asarray(durations if durations is not None else base_durations(recipe), float)

    def evaluate(c):
        traj = problem.trajectory(c * base)
        return traj, check_trajectory(traj, p, dt)

    grid = scan_grid(lo, hi, factor)
    results = parallel_map(evaluate, grid)
    profile = [(float(c), bool(r.feasible)) for c, (_, r) in zip(grid, results)]
    feasible_idx = [i for i, (_, f) in enumerate(profile) if f]
    if not feasible_idx:
        raise InfeasibleError("no feasible time scale in the scan range", profile)

    i = feasible_idx[0]
    traj, rep = results[i]
    if i == 0:
        return ScanResult(float(grid[0]), traj, rep, profile, [], at_lower_bound=True)

    a, b = float(grid[i - 1]), float(grid[i])  # infeasible, feasible
    refinements = []
    while (b - a) > tol * b:
        mid = 0.5 * (a + b)
        t_mid, r_mid = evaluate(mid)
        refinements.append((mid, bool(r_mid.feasible)))
        if r_mid.feasible:
            b, traj, rep = mid, t_mid, r_mid
        else:
            a = mid
    return ScanResult(b, traj, rep, profile, refinements)


def minimal_yaw_end(psi_start, psi_end):
    """Unwrapped end yaw reached from psi_start by the rotation in (-pi, pi]."""
    delta = math.remainder(psi_end - psi_start, 2 * math.pi)
    if delta <= -math.pi + 1e-12:
        delta = math.pi
    return psi_start + delta


def hover_to_hover_heatmap(psi_start, psi_end, p, distance=6.0, dt=DEFAULT_DT, **scan):
    """Minimum feasible total time [s] for each (psi_start, psi_end) pair.

    Rows follow ``psi_start`` and columns ``psi_end``; cells without any
    feasible scale hold NaN.
    """
    from .maneuvers import hover_to_hover

    psi_start = np.asarray(psi_start, dtype=float)
    psi_end = np.asarray(psi_end, dtype=float)
    cells = [(a, b) for a in psi_start for b in psi_end]

    def cell(pair):
        recipe = hover_to_hover(distance, pair[0], pair[1])
        try:
            return min_feasible_scale(recipe, p, dt=dt, **scan).duration
        except InfeasibleError:
            return float("nan")

    values = parallel_map(cell, cells)
    return np.array(values).reshape(len(psi_start), len(psi_end))


def circle_samples(r, v, mode, n=721):
    """Analytic flat samples over one revolution of a horizontal circle.

    The circle is centred at (0, -r, 0) and entered at the origin heading
    along +x, turning toward -y.
    """
    if not r > 0:
        raise DomainError("radius must be positive")
    if not v >= 0:
        raise DomainError("speed must be non-negative")
    if mode not in CIRCLE_MODES:
        raise DomainError(f"unknown circle mode {mode!r}")
    w = v / r
    period = 2 * math.pi / w if w > 0 else 1.0
    t = np.linspace(0.0, period, n)
    ang = -w * t
    c, s = np.cos(ang), np.sin(ang)

    def world(vec):
        # rotate a rotating-frame vector by the heading angle about z
        return np.stack([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1],
                         np.zeros_like(t) + vec[2]], axis=-1)

    x = np.stack([r * np.sin(w * t), -r + r * np.cos(w * t), np.zeros_like(t)], axis=-1)
    vel = world((v, 0.0, 0.0))
    acc = world((0.0, -w * v, 0.0))
    jerk = world((-w * w * v, 0.0, 0.0))
    snap = world((0.0, w ** 3 * v, 0.0))
    if mode == "coordinated":
        psi, dpsi = -w * t, -w
    elif mode == "knife_edge":
        psi, dpsi = math.pi / 2 - w * t, -w
    else:
        psi, dpsi = w * t, w
    return t, FlatSample(x, vel, acc, jerk, snap, psi,
                         np.full_like(t, dpsi), np.zeros_like(t))


def circle_check(r, v, mode, p, n=721):
    """Input-envelope report for a constant-speed horizontal circle."""
    t, samples = circle_samples(r, v, mode, n)
    return check_samples(samples, t, p)


def circle_max_speed(r, mode, p, v_hi=40.0, step=0.25, tol=1e-3, n=721):
    """Largest speed of the feasible band starting at hover, by scan and bisection.

    Returns 0 when hover itself is infeasible.
    """
    if not circle_check(r, 0.0, mode, p, n).feasible:
        return 0.0
    a = 0.0
    b = None
    v = step
    while v <= v_hi:
        if circle_check(r, v, mode, p, n).feasible:
            a = v
        else:
            b = v
            break
        v += step
    if b is None:
        return a
    while b - a > tol:
        mid = 0.5 * (a + b)
        if circle_check(r, mid, mode, p, n).feasible:
            a = mid
        else:
            b = mid
    return a


def knife_edge_speed_bound(r, p, omega_bar=None):
    """Knife-edge circle speed if both motors at ``omega_bar`` supply only
    the centripetal force (aerodynamics and gravity ignored)."""
    if not r > 0:
        raise DomainError("radius must be positive")
    w = p.omega_max if omega_bar is None else omega_bar
    return math.sqrt(2 * p.cT * w ** 2 * r / p.m)
