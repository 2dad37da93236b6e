"""Closed-form minimum-snap piecewise polynomials over position and yaw.

Every segment carries a degree-9 polynomial per channel (x, y, z, yaw) in
normalized local time ``tau = (t - t_start) / duration``. Segments are
parameterized by their endpoint derivatives, shared between neighbours up
to order 4 for position and order 2 for yaw, so position is C4 and yaw C2
at every junction. Free derivatives are eliminated in closed form; the
constrained ones come from the waypoints.

Position channels minimize the integral of squared snap, yaw the integral
of squared yaw acceleration weighted by ``mu_psi``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

from .errors import DomainError, SingularConstraintError
from .flatness import FlatSample

log = logging.getLogger(__name__)

DEGREE = 9
N_COEF = DEGREE + 1
N_DER = 5          # endpoint derivative orders 0..4 per segment
POS_ORDER = 4      # snap
YAW_ORDER = 2      # yaw acceleration
V_NOMINAL = 4.0    # [m/s] for the initial total-time estimate
ZERO_CHORD_FLOOR = 0.5  # [s] per segment joining coinciding waypoints
MU_PSI = 1.0


def _endpoint_matrix():
    A = np.zeros((2 * N_DER, N_COEF))
    for k in range(N_DER):
        A[k, k] = math.factorial(k)
        for i in range(k, N_COEF):
            A[N_DER + k, i] = math.factorial(i) / math.factorial(i - k)
    return A


def _cost_hessian(r):
    H = np.zeros((N_COEF, N_COEF))
    for i in range(r, N_COEF):
        for k in range(r, N_COEF):
            ci = math.factorial(i) / math.factorial(i - r)
            ck = math.factorial(k) / math.factorial(k - r)
            H[i, k] = ci * ck / (i + k - 2 * r + 1)
    return H


def _exact_inverse(A):
    """Gauss-Jordan inverse of an integer matrix in rational arithmetic.

    A floating-point inverse of the endpoint matrix is off by ~1e-10.
    """
    n = len(A)
    M = [[Fraction(int(v)) for v in row] + [Fraction(int(i == j)) for j in range(n)]
         for i, row in enumerate(A)]
    for c in range(n):
        piv = next(r for r in range(c, n) if M[r][c] != 0)
        M[c], M[piv] = M[piv], M[c]
        M[c] = [v / M[c][c] for v in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    return [row[n:] for row in M]


_A_INV_EXACT = _exact_inverse(_endpoint_matrix())
_A_INV = np.array([[float(v) for v in row] for row in _A_INV_EXACT])
# extended precision where the platform has it: the endpoint-to-coefficient
# map cancels heavily and float64 loses ~1e-9 on fixed endpoint snaps
_A_INV_LD = np.array([[np.longdouble(v.numerator) / np.longdouble(v.denominator) for v in row]
                      for row in _A_INV_EXACT])
# cost of a unit-duration segment as a quadratic form in endpoint derivatives
_G = {r: _A_INV.T @ _cost_hessian(r) @ _A_INV for r in (POS_ORDER, YAW_ORDER)}


def _vec3(v, name):
    if v is None:
        return None
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise DomainError(f"waypoint {name} must have three components")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"non-finite waypoint {name}")
    return v


@dataclass
class Waypoint:
    """Position/yaw waypoint with optional derivative constraints.

    ``velocity_direction`` constrains the velocity to a unit direction with
    free magnitude; it excludes ``velocity``.
    """
    position: np.ndarray
    yaw: float = 0.0
    velocity: np.ndarray | None = None
    velocity_direction: np.ndarray | None = None
    acceleration: np.ndarray | None = None
    jerk: np.ndarray | None = None
    snap: np.ndarray | None = None
    yaw_rate: float | None = None
    yaw_acceleration: float | None = None

    def __post_init__(self):
        self.position = _vec3(self.position, "position")
        for name in ("velocity", "velocity_direction", "acceleration", "jerk", "snap"):
            setattr(self, name, _vec3(getattr(self, name), name))
        self.yaw = float(self.yaw)
        if self.velocity is not None and self.velocity_direction is not None:
            raise DomainError("velocity and velocity_direction are exclusive")
        if self.velocity_direction is not None:
            if abs(np.linalg.norm(self.velocity_direction) - 1.0) > 1e-9:
                raise DomainError("velocity_direction must be a unit vector")

    @classmethod
    def rest(cls, position, yaw=0.0, fix_snap=True):
        """Static hover: zero velocity through jerk (and snap unless
        ``fix_snap`` is False), zero yaw rate and acceleration."""
        z = np.zeros(3)
        return cls(position, yaw, velocity=z, acceleration=z, jerk=z,
                   snap=z if fix_snap else None,
                   yaw_rate=0.0, yaw_acceleration=0.0)

    def to_dict(self):
        d = {"position": self.position.tolist(), "yaw": self.yaw}
        for name in ("velocity", "velocity_direction", "acceleration", "jerk", "snap"):
            val = getattr(self, name)
            if val is not None:
                d[name] = val.tolist()
        for name in ("yaw_rate", "yaw_acceleration"):
            val = getattr(self, name)
            if val is not None:
                d[name] = float(val)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {"position", "yaw", "velocity", "velocity_direction",
                 "acceleration", "jerk", "snap", "yaw_rate", "yaw_acceleration"}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown waypoint field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class TimeAllocation:
    t: np.ndarray
    converged: bool = True

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        if not np.all(self.t > 0):
            raise DomainError("segment durations must be strictly positive")

    @property
    def total(self):
        return float(self.t.sum())

    def scaled(self, c):
        return TimeAllocation(self.t * c, self.converged)


@dataclass
class PiecewisePolynomialTrajectory:
    """Coefficients ``coeffs[segment, channel, power]`` in normalized time.

    Channels are (x, y, z, yaw); powers ascend from tau^0 to tau^9.
    """
    durations: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.durations = np.asarray(self.durations, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (len(self.durations), 4, N_COEF):
            raise DomainError("coefficient array must have shape (segments, 4, 10)")
        if not np.all(self.durations > 0):
            raise DomainError("segment durations must be strictly positive")

    @property
    def boundaries(self):
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def duration(self):
        return float(self.boundaries[-1])

    @property
    def n_segments(self):
        return len(self.durations)

    def segment_index(self, times):
        idx = np.searchsorted(self.boundaries, times, side="right") - 1
        return np.clip(idx, 0, self.n_segments - 1)

    def evaluate_segment(self, seg, tau, order):
        """Order-th time derivative of all channels in segment(s) ``seg`` at tau.

        ``seg`` and ``tau`` broadcast; the result has shape (..., 4).
        """
        seg = np.asarray(seg)
        tau = np.asarray(tau, dtype=float)
        c = self.coeffs[seg]  # (..., 4, 10)
        # Horner on the order-th derivative polynomial
        val = np.zeros(c.shape[:-1])
        for i in range(N_COEF - 1, order - 1, -1):
            fac = math.factorial(i) / math.factorial(i - order)
            val = val * tau[..., None] + fac * c[..., i]
        return val / self.durations[seg][..., None] ** order

    def evaluate(self, times, order=0):
        times = np.asarray(times, dtype=float)
        seg = self.segment_index(times)
        tau = (times - self.boundaries[seg]) / self.durations[seg]
        return self.evaluate_segment(seg, tau, order)

    def snap_cost(self, mu_psi=MU_PSI):
        """Position snap integral plus mu_psi times yaw acceleration integral."""
        return self.position_cost() + mu_psi * self.yaw_cost()

    def position_cost(self):
        H = _cost_hessian(POS_ORDER)
        c = self.coeffs[:, :3, :]
        per = np.einsum("sci,ik,sck->s", c, H, c)
        return float(np.sum(per * self.durations ** (1 - 2 * POS_ORDER)))

    def yaw_cost(self):
        H = _cost_hessian(YAW_ORDER)
        c = self.coeffs[:, 3, :]
        per = np.einsum("si,ik,sk->s", c, H, c)
        return float(np.sum(per * self.durations ** (1 - 2 * YAW_ORDER)))


class MinSnapProblem:
    """Waypoint problem with the derivative parameterization precomputed.

    The unknowns are endpoint derivatives: orders 0..4 of the position
    channels and orders 0..2 of yaw are shared by the two segments meeting
    at a waypoint; yaw orders 3 and 4 belong to each segment end on its own.
    Stacked, they form a vector ``P = E z + P0`` with z the free unknowns.
    """

    YAW_SHARED = 3

    def __init__(self, waypoints, mu_psi=MU_PSI):
        if len(waypoints) < 2:
            raise DomainError("need at least two waypoints")
        self.waypoints = list(waypoints)
        self.mu_psi = float(mu_psi)
        if self.mu_psi <= 0:
            raise DomainError("mu_psi must be positive")
        self.n_wp = len(self.waypoints)
        m = self.n_wp - 1
        n_shared = (3 * N_DER + self.YAW_SHARED) * self.n_wp
        n_local = 2 * (N_DER - self.YAW_SHARED)
        self.n_var = n_shared + m * n_local

        # slots[j, ch] lists the variable indices of segment j's endpoint
        # derivatives (start orders 0..4, then end orders 0..4)
        self.slots = np.zeros((m, 4, 2 * N_DER), dtype=int)
        for j in range(m):
            for ch in range(4):
                for e in range(2):
                    for k in range(N_DER):
                        if ch == 3 and k >= self.YAW_SHARED:
                            idx = (n_shared + j * n_local
                                   + e * (N_DER - self.YAW_SHARED) + k - self.YAW_SHARED)
                        else:
                            idx = self.index(ch, j + e, k)
                        self.slots[j, ch, e * N_DER + k] = idx

        P0 = np.zeros(self.n_var)
        cols = []  # one dict {variable index: coefficient} per free unknown
        for w, wp in enumerate(self.waypoints):
            for ch in range(3):
                P0[self.index(ch, w, 0)] = wp.position[ch]
            P0[self.index(3, w, 0)] = wp.yaw
            if wp.velocity is not None:
                for ch in range(3):
                    P0[self.index(ch, w, 1)] = wp.velocity[ch]
            elif wp.velocity_direction is not None:
                cols.append({self.index(ch, w, 1): wp.velocity_direction[ch]
                             for ch in range(3)})
            else:
                cols.extend({self.index(ch, w, 1): 1.0} for ch in range(3))
            for k, val in ((2, wp.acceleration), (3, wp.jerk), (4, wp.snap)):
                if val is not None:
                    for ch in range(3):
                        P0[self.index(ch, w, k)] = val[ch]
                else:
                    cols.extend({self.index(ch, w, k): 1.0} for ch in range(3))
            for k, val in ((1, wp.yaw_rate), (2, wp.yaw_acceleration)):
                if val is not None:
                    P0[self.index(3, w, k)] = val
                else:
                    cols.append({self.index(3, w, k): 1.0})
        cols.extend({i: 1.0} for i in range(n_shared, self.n_var))

        E = np.zeros((self.n_var, len(cols)))
        for j, col in enumerate(cols):
            for i, val in col.items():
                E[i, j] = val
        self.E = E
        self.P0 = P0

    def index(self, ch, w, k):
        """Variable index of a shared derivative at waypoint w."""
        if ch < 3:
            return (ch * self.n_wp + w) * N_DER + k
        if k >= self.YAW_SHARED:
            raise DomainError("yaw derivatives above order 2 are per segment")
        return 3 * self.n_wp * N_DER + w * self.YAW_SHARED + k

    def _scaling(self, t):
        powers = np.arange(N_DER)
        return np.concatenate([t ** powers, t ** powers])

    def hessian(self, durations):
        """Quadratic cost matrix Q with cost = P^T Q P for the given durations."""
        durations = np.asarray(durations, dtype=float)
        if durations.shape != (self.n_wp - 1,):
            raise DomainError(f"expected {self.n_wp - 1} segment durations")
        if not np.all(durations > 0):
            raise SingularConstraintError("zero or negative segment duration")
        Q = np.zeros((self.n_var, self.n_var))
        for j, t in enumerate(durations):
            S = self._scaling(t)
            for ch in range(4):
                r, weight = (POS_ORDER, 1.0) if ch < 3 else (YAW_ORDER, self.mu_psi)
                block = weight * t ** (1 - 2 * r) * (S[:, None] * _G[r] * S[None, :])
                idx = self.slots[j, ch]
                Q[np.ix_(idx, idx)] += block
        return Q

    def solve_vector(self, durations):
        """Optimal stacked derivative vector P and cost for the durations."""
        Q = self.hessian(durations)
        if self.E.shape[1] == 0:
            P = self.P0.copy()
            return P, float(P @ Q @ P)
        QE = Q @ self.E
        A = self.E.T @ QE
        b = -(QE.T @ self.P0)
        d = np.sqrt(np.abs(np.diag(A)))
        if np.any(d == 0):
            raise SingularConstraintError("free derivative does not enter the cost")
        As = A / d[:, None] / d[None, :]
        try:
            cf = scipy.linalg.cho_factor(As)
        except np.linalg.LinAlgError:
            raise SingularConstraintError("constraint system has no unique minimizer") from None
        diag = np.abs(np.diag(cf[0]))
        if (diag.min() / diag.max()) ** 2 < 1e-15:
            raise SingularConstraintError("constraint system is numerically singular")
        z = scipy.linalg.cho_solve(cf, b / d) / d
        P = self.E @ z + self.P0
        return P, float(P @ Q @ P)

    def cost(self, durations):
        return self.solve_vector(durations)[1]

    def trajectory(self, durations, P=None):
        durations = np.asarray(durations, dtype=float)
        if P is None:
            P, _ = self.solve_vector(durations)
        m = self.n_wp - 1
        coeffs = np.zeros((m, 4, N_COEF))
        P_ld = np.asarray(P, dtype=np.longdouble)
        for j, t in enumerate(durations):
            S = self._scaling(np.longdouble(t))
            for ch in range(4):
                coeffs[j, ch] = (_A_INV_LD @ (S * P_ld[self.slots[j, ch]])).astype(float)
        return PiecewisePolynomialTrajectory(durations.copy(), coeffs)


def solve_min_snap(waypoints, allocation, mu_psi=MU_PSI):
    """Minimum-snap trajectory through ``waypoints`` for a time allocation."""
    t = allocation.t if isinstance(allocation, TimeAllocation) else np.asarray(allocation, float)
    return MinSnapProblem(waypoints, mu_psi).trajectory(t)


def _chords(waypoints):
    pos = np.array([wp.position for wp in waypoints])
    return np.linalg.norm(np.diff(pos, axis=0), axis=1)


def proportional_allocation(waypoints, v_nominal=V_NOMINAL, floor=ZERO_CHORD_FLOOR):
    """Chord length over nominal speed per segment; zero chords get ``floor``."""
    if len(waypoints) < 2:
        raise DomainError("need at least two waypoints")
    chords = _chords(waypoints)
    t = np.where(chords > 1e-9, chords / v_nominal, floor)
    return TimeAllocation(t)


def initial_time_estimate(waypoints, v_nominal=V_NOMINAL, floor=ZERO_CHORD_FLOOR):
    """Rough total trajectory time from the waypoint chord lengths."""
    return proportional_allocation(waypoints, v_nominal, floor).total


@dataclass
class DescentConfig:
    max_iter: int = 200
    initial_step: float = 0.5    # largest relative change of any duration
    shrink: float = 0.5
    grow: float = 2.0
    armijo: float = 1e-4
    fd_rel_step: float = 1e-6
    min_share: float = 1e-3      # floor per segment, fraction of the total
    stationarity: float = 1e-7   # relative scaled-gradient norm to stop at
    min_decrease: float = 1e-12  # relative cost decrease to stop at


def _cost_gradient(problem, t, rel_step):
    g = np.empty(len(t))
    for i in range(len(t)):
        h = rel_step * t[i]
        e = np.zeros(len(t))
        e[i] = h
        g[i] = (problem.cost(t + e) - problem.cost(t - e)) / (2 * h)
    return g


def optimize_segment_times(waypoints, total_time, mu_psi=MU_PSI, config=None):
    """Segment durations minimizing the cost with their sum fixed to total_time.

    Projected gradient descent on central-difference gradients, with each
    component scaled by its duration and a backtracking line search. Starts
    from the chord-proportional allocation and only accepts decreasing
    steps. ``converged`` is False if the iteration cap was hit.
    """
    cfg = config or DescentConfig()
    if not total_time > 0:
        raise DomainError("total time must be positive")
    problem = MinSnapProblem(waypoints, mu_psi)
    t = proportional_allocation(waypoints).t
    t = t * (total_time / t.sum())
    if len(t) == 1:
        return TimeAllocation(t)
    f = problem.cost(t)
    t_min = cfg.min_share * total_time
    step = cfg.initial_step
    converged = False
    for _ in range(cfg.max_iter):
        g = _cost_gradient(problem, t, cfg.fd_rel_step)
        # scaled gradient projected onto the fixed-sum plane
        lam = np.dot(t, g) / t.sum()
        d = -t * (g - lam)
        slope = np.dot(g, d)
        if f <= 0 or -slope <= cfg.stationarity * f:
            converged = True
            break
        rel = np.max(np.abs(d) / t)
        d = d / rel  # unit step changes the most-moved duration by 100 %
        slope /= rel
        neg = d < 0
        cap = np.min((t[neg] - t_min) / -d[neg]) if np.any(neg) else np.inf
        alpha = min(step, cap)
        while alpha > 1e-12:
            t_new = t + alpha * d
            t_new *= total_time / t_new.sum()
            f_new = problem.cost(t_new)
            if f_new <= f + cfg.armijo * alpha * slope:
                break
            alpha *= cfg.shrink
        else:
            converged = True
            break
        decrease = (f - f_new) / f
        t, f = t_new, f_new
        step = min(alpha * cfg.grow, cfg.initial_step)
        if decrease < cfg.min_decrease:
            converged = True
            break
    if not converged:
        log.warning("segment-time optimization hit the iteration cap")
    return TimeAllocation(t, converged=converged)


def scale_time(traj, c):
    """Same path traversed with durations multiplied by c."""
    if not c > 0:
        raise DomainError("time scale must be positive")
    return PiecewisePolynomialTrajectory(traj.durations * c, traj.coeffs.copy())


def sample_flat_batch(traj, times):
    """Flat output and derivatives at an array of times within [0, T]."""
    times = np.asarray(times, dtype=float)
    T = traj.duration
    tol = 1e-12 * max(T, 1.0)
    if np.any(times < -tol) or np.any(times > T + tol):
        raise DomainError(f"sample time outside [0, {T}]")
    times = np.clip(times, 0.0, T)
    d = [traj.evaluate(times, k) for k in range(5)]
    return FlatSample(d[0][..., :3], d[1][..., :3], d[2][..., :3], d[3][..., :3],
                      d[4][..., :3], d[0][..., 3], d[1][..., 3], d[2][..., 3])


def sample_flat(traj, time):
    """Flat output and derivatives up to snap / yaw acceleration at one time."""
    return sample_flat_batch(traj, np.float64(time))


def sample_times(duration, dt):
    """Uniform grid 0, dt, 2dt, ... including the final time."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    n = int(math.floor(duration / dt + 1e-9))
    t = np.arange(n + 1) * dt
    if duration - t[-1] > 1e-9 * max(duration, 1.0):
        t = np.append(t, duration)
    return t
