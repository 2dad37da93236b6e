"""Differential-flatness transform: flat output derivatives to states and inputs.

The flat output is position plus yaw. Attitude uses ZXY Euler angles
(yaw psi, roll phi, pitch theta); ``theta_bar = theta - alpha0`` is the pitch
of the zero-lift frame. All array functions accept a leading sample axis.

Two terms of the force/moment model are neglected by the transform: the
direct flap force and the z component of the flap moment. The forward model
reproduces the transform exactly when evaluated with ``consistent=True``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateAttitudeError, DegenerateForceError,
                     SingularEffectivenessError)
from .rotations import matrix_to_quat, rot_with_rates, rot_x, rot_y, rot_z
from .vehicle import ControlInput, thrust_moment

SPEED_EPS = 1e-6
DEGENERATE_ARG = 1e-12
EULER_COS_MIN = 1e-8
FLAP_COND_MAX = 1e8

OK = 0
DEGENERATE_ROLL = 1
DEGENERATE_PITCH = 2
DEGENERATE_EULER = 3
SINGULAR_FLAPS = 4

STATUS_TEXT = {
    OK: "ok",
    DEGENERATE_ROLL: "degenerate force: roll undefined",
    DEGENERATE_PITCH: "degenerate force: pitch undefined",
    DEGENERATE_EULER: "Euler angles degenerate (body y-axis vertical)",
    SINGULAR_FLAPS: "flap effectiveness matrix singular",
}


@dataclass
class FlatSample:
    """Flat output and its derivatives, optionally with a leading sample axis."""
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    j: np.ndarray
    s: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    ddpsi: np.ndarray

    def __post_init__(self):
        for name in ("x", "v", "a", "j", "s", "psi", "dpsi", "ddpsi"):
            val = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(val)):
                raise ValueError(f"non-finite flat output component '{name}'")
            setattr(self, name, val)

    @classmethod
    def hover(cls, x=(0.0, 0.0, 0.0), psi=0.0):
        z = np.zeros(3)
        return cls(np.asarray(x, float), z, z, z, z, psi, 0.0, 0.0)

    def batched(self):
        return FlatSample(*(np.atleast_2d(getattr(self, k)) for k in ("x", "v", "a", "j", "s")),
                          *(np.atleast_1d(getattr(self, k)) for k in ("psi", "dpsi", "ddpsi")))

    def __len__(self):
        return 1 if self.psi.ndim == 0 else len(self.psi)

    def take(self, idx):
        return FlatSample(self.x[idx], self.v[idx], self.a[idx], self.j[idx],
                          self.s[idx], self.psi[idx], self.dpsi[idx],
                          self.ddpsi[idx])


@dataclass
class BranchState:
    """Continuity state for the kpi ambiguity of roll and pitch."""
    k_roll: int = 0
    k_pitch: int = 0
    prev_phi: float | None = None
    prev_theta_bar: float | None = None

    def copy(self):
        return BranchState(self.k_roll, self.k_pitch, self.prev_phi,
                           self.prev_theta_bar)


@dataclass
class FlatnessIntermediates:
    f_i: np.ndarray
    df_i: np.ndarray
    ddf_i: np.ndarray
    beta: np.ndarray       # (beta_x, beta_z) and derivatives stacked [...,3,2]
    phi: np.ndarray
    dphi: np.ndarray
    ddphi: np.ndarray
    f_phi: np.ndarray
    df_phi: np.ndarray
    ddf_phi: np.ndarray
    v_phi: np.ndarray
    dv_phi: np.ndarray
    ddv_phi: np.ndarray
    speed: np.ndarray
    dspeed: np.ndarray
    ddspeed: np.ndarray
    tau: np.ndarray
    dtau: np.ndarray
    sigma: np.ndarray      # (sigma_x, sigma_z) and derivatives stacked [...,3,2]
    eta: float
    theta_bar: np.ndarray
    dtheta: np.ndarray
    ddtheta: np.ndarray
    T: np.ndarray
    status: np.ndarray = field(default=None)


@dataclass
class FullStateInput:
    """Recovered states and inputs; arrays carry a leading sample axis in batch use."""
    psi: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    theta_bar: np.ndarray
    R: np.ndarray          # body to world
    q: np.ndarray          # scalar-first quaternion
    omega: np.ndarray      # body angular velocity
    omega_dot: np.ndarray  # body angular acceleration
    moment: np.ndarray
    T: np.ndarray
    dT: np.ndarray
    T1: np.ndarray
    T2: np.ndarray
    control: ControlInput
    v_alpha: np.ndarray
    speed: np.ndarray
    negative_thrust: np.ndarray
    status: np.ndarray

    @property
    def euler(self):
        return self.psi, self.phi, self.theta


# -- elementary pieces -----------------------------------------------------

def desired_force_world(a, p):
    """Force the vehicle must produce (world frame) to follow acceleration a."""
    a = np.asarray(a, dtype=float)
    f = p.m * a
    f[..., 2] -= p.m * p.g
    return f


def _atan2_rates(bx, bz, dbx, dbz, ddbx, ddbz):
    """First and second time derivative of atan2(bx, bz)."""
    B = bx * bx + bz * bz
    N = dbx * bz - bx * dbz
    dB = 2.0 * bx * dbx + 2.0 * bz * dbz
    dN = ddbx * bz - bx * ddbz
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = N / B
        acc = (dN * B - N * dB) / (B * B)
    return rate, acc


def resolve_branch(base, prev=None, start=None):
    """Pick base + k*pi (k integer) continuously along a sample sequence.

    The first sample is placed closest to ``prev`` if given, else closest to
    ``start``, else at k=0. Returns the unwrapped angles and the parity k mod 2.
    """
    base = np.atleast_1d(np.asarray(base, dtype=float))
    ref = prev if prev is not None else start
    n0 = 0.0 if ref is None else np.round((ref - base[0]) / np.pi)
    unwrapped = np.unwrap(base, period=np.pi)
    out = unwrapped + (base[0] + n0 * np.pi - unwrapped[0])
    k = np.mod(np.round((out - base) / np.pi), 2).astype(int)
    return out, k


def roll_angle(f_i, psi, k=0):
    """Roll from the literal atan2 expression with branch index k."""
    f_i = np.asarray(f_i, dtype=float)
    bx = -np.sin(psi) * f_i[..., 0] + np.cos(psi) * f_i[..., 1]
    bz = f_i[..., 2]
    return -np.arctan2(bx, bz) + k * np.pi


def roll_from_force(f_i, psi, branch):
    """Roll angle satisfying the zero-lateral-force constraint, continuity-resolved.

    Without a previous sample the upright solution (closest to zero roll) is
    selected. ``branch`` is updated in place.
    """
    f_i = np.asarray(f_i, dtype=float)
    bx = -math.sin(psi) * f_i[0] + math.cos(psi) * f_i[1]
    bz = f_i[2]
    if abs(bx) < DEGENERATE_ARG and abs(bz) < DEGENERATE_ARG:
        raise DegenerateForceError("roll undefined: lateral and vertical force vanish")
    base = -math.atan2(bx, bz)
    phi, k = resolve_branch(base, branch.prev_phi, start=0.0)
    branch.prev_phi = float(phi[0])
    branch.k_roll = int(k[0])
    return float(phi[0])


def _pitch_args(f_phi, w, p):
    """atan2 arguments (sigma_x, sigma_z) of the zero-lift pitch solution.

    ``w`` is the speed-weighted velocity ||v|| * v_phi (or a derivative of
    it together with the matching force derivative).
    """
    eta = p.eta
    sx = eta * (f_phi[..., 0] + p.cDV * w[..., 0]) - p.cLV * w[..., 2] - f_phi[..., 2]
    sz = eta * (f_phi[..., 2] + p.cDV * w[..., 2]) + p.cLV * w[..., 0] + f_phi[..., 0]
    return sx, sz


def _collective_thrust(theta_bar, f_phi, w, p):
    c, s = np.cos(theta_bar), np.sin(theta_bar)
    return (c * (f_phi[..., 0] + p.cDV * w[..., 0])
            - s * (f_phi[..., 2] + p.cDV * w[..., 2])) / p.thrust_forward


def pitch_thrust_from_force(f_phi, v_phi, speed, p, branch):
    """Zero-lift pitch, collective thrust and body pitch for one sample.

    ``speed`` is the (regularized) velocity norm. Thrust may come out
    negative; feasibility checks report that. ``branch`` is updated in place.
    """
    f_phi = np.asarray(f_phi, dtype=float)
    w = speed * np.asarray(v_phi, dtype=float)
    sx, sz = _pitch_args(f_phi, w, p)
    if abs(sx) < DEGENERATE_ARG and abs(sz) < DEGENERATE_ARG:
        raise DegenerateForceError("pitch undefined: atan2 arguments vanish")
    base = math.atan2(sx, sz)
    tb, k = resolve_branch(base, branch.prev_theta_bar)
    theta_bar = float(tb[0])
    branch.prev_theta_bar = theta_bar
    branch.k_pitch = int(k[0])
    T = float(_collective_thrust(theta_bar, f_phi, w, p))
    return theta_bar, T, theta_bar + p.alpha0


def body_rates(phi, theta, dphi, dtheta, dpsi):
    """Body angular velocity from ZXY Euler angles and their rates."""
    cph, sph = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    return np.stack([cth * dphi - sth * cph * dpsi,
                     dtheta + sph * dpsi,
                     sth * dphi + cth * cph * dpsi], axis=-1)


def body_accelerations(phi, theta, dphi, dtheta, dpsi, ddphi, ddtheta, ddpsi):
    """Time derivative of :func:`body_rates`."""
    cph, sph = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    wx = (-sth * dtheta * dphi + cth * ddphi - cth * dtheta * cph * dpsi
          + sth * sph * dphi * dpsi - sth * cph * ddpsi)
    wy = ddtheta + cph * dphi * dpsi + sph * ddpsi
    wz = (cth * dtheta * dphi + sth * ddphi - sth * dtheta * cph * dpsi
          - cth * sph * dphi * dpsi + cth * cph * ddpsi)
    return np.stack([wx, wy, wz], axis=-1)


def angular_velocity_from_flat(q, inter, p):
    """Body angular velocity for samples whose attitude is resolved in ``inter``."""
    theta = inter.theta_bar + p.alpha0
    return body_rates(inter.phi, theta, inter.dphi, inter.dtheta, q.dpsi)


def angular_acceleration_from_flat(q, inter, p):
    theta = inter.theta_bar + p.alpha0
    return body_accelerations(inter.phi, theta, inter.dphi, inter.dtheta,
                              q.dpsi, inter.ddphi, inter.ddtheta, q.ddpsi)


def moment_from_rates(omega, omega_dot, p):
    """Body moment required for the given angular velocity and acceleration."""
    omega = np.asarray(omega, dtype=float)
    omega_dot = np.asarray(omega_dot, dtype=float)
    Jw = omega @ p.J.T
    return omega_dot @ p.J.T + np.cross(omega, Jw)


def differential_thrust(mz, p):
    """Differential thrust T1 - T2 producing the body z moment mz.

    The flap contribution to the z moment is neglected.
    """
    ca, sa = math.cos(p.alpha0), math.sin(p.alpha0)
    denom = (-math.sin(p.alphaT) * p.cmu / p.cT
             + p.lTy * (ca * p.thrust_forward - sa * p.thrust_normal))
    return np.asarray(mz) / denom


def _solve_flaps(moment, T1, T2, v_alpha_x, speed, p):
    """Flap deflections from the x/y flap moment. Returns (d1, d2, cond)."""
    m_d = moment - thrust_moment(T1, T2, p)
    ca = math.cos(p.alpha0)
    cab = math.cos(p.alpha_bar)
    nu1 = -p.cdLT * cab * T1 - p.cdLV * speed * v_alpha_x
    nu2 = -p.cdLT * cab * T2 - p.cdLV * speed * v_alpha_x
    a11, a12 = -p.ldy * ca * nu1, p.ldy * ca * nu2
    a21, a22 = p.ldx * nu1, p.ldx * nu2
    det = a11 * a22 - a12 * a21
    b1, b2 = m_d[..., 0], m_d[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (a22 * b1 - a12 * b2) / det
        d2 = (-a21 * b1 + a11 * b2) / det
    # closed-form 2x2 condition number
    fro2 = a11**2 + a12**2 + a21**2 + a22**2
    disc = np.sqrt(np.maximum(fro2**2 - 4.0 * det**2, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.sqrt((fro2 + disc) / np.maximum(fro2 - disc, 0.0))
    cond = np.where(np.abs(det) > 0, cond, np.inf)
    return d1, d2, cond


def motor_speed(T_i, p):
    """Motor speed for thrust T_i; negative thrust maps to zero speed."""
    return np.sqrt(np.maximum(T_i, 0.0) / p.cT)


def inputs_from_moment(m_b, T, v_alpha, speed, p):
    """Motor speeds and flap deflections realizing moment m_b at thrust T.

    Returns ``(ControlInput, T1, T2)``. Individual thrusts may be negative
    (then the motor speed is reported as 0 and the caller flags the sample).
    """
    m_b = np.asarray(m_b, dtype=float)
    v_alpha = np.asarray(v_alpha, dtype=float)
    dT = differential_thrust(m_b[2], p)
    T1, T2 = 0.5 * (T + dT), 0.5 * (T - dT)
    d1, d2, cond = _solve_flaps(m_b, T1, T2, v_alpha[0], speed, p)
    if not cond <= FLAP_COND_MAX:
        raise SingularEffectivenessError(f"flap matrix condition number {cond:.3g}")
    u = ControlInput(float(motor_speed(T1, p)), float(motor_speed(T2, p)),
                     float(d1), float(d2))
    return u, float(T1), float(T2)


# -- full pipeline -----------------------------------------------------------

def compute_intermediates(q, p, branch=None):
    """Attitude, thrust and Euler-angle derivatives for a batch of samples.

    ``branch`` (if given) seeds and receives the continuity state.
    """
    q = q.batched()
    psi, dpsi, ddpsi = q.psi, q.dpsi, q.ddpsi
    status = np.zeros(len(psi), dtype=int)

    f = desired_force_world(q.a, p)
    df = p.m * q.j
    ddf = p.m * q.s

    # roll from the lateral-force constraint
    c, s = np.cos(psi), np.sin(psi)
    bx = -s * f[:, 0] + c * f[:, 1]
    bz = f[:, 2]
    dbx = -c * dpsi * f[:, 0] - s * df[:, 0] - s * dpsi * f[:, 1] + c * df[:, 1]
    dbz = df[:, 2]
    ddbx = ((s * dpsi**2 - c * ddpsi) * f[:, 0] - 2 * c * dpsi * df[:, 0] - s * ddf[:, 0]
            - (c * dpsi**2 + s * ddpsi) * f[:, 1] - 2 * s * dpsi * df[:, 1] + c * ddf[:, 1])
    ddbz = ddf[:, 2]
    status[(np.abs(bx) < DEGENERATE_ARG) & (np.abs(bz) < DEGENERATE_ARG)] = DEGENERATE_ROLL
    rate, acc = _atan2_rates(bx, bz, dbx, dbz, ddbx, ddbz)
    dphi, ddphi = -rate, -acc
    prev_phi = branch.prev_phi if branch is not None else None
    phi, k_roll = resolve_branch(-np.arctan2(bx, bz), prev_phi, start=0.0)

    # rotation world -> intermediate phi frame and its derivatives
    Rz0, Rz1, Rz2 = rot_with_rates(rot_z, psi, dpsi, ddpsi)
    Rx0, Rx1, Rx2 = rot_with_rates(rot_x, phi, dphi, ddphi)
    A0, A1, A2 = (np.swapaxes(r, -1, -2) for r in (Rx0, Rx1, Rx2))
    B0, B1, B2 = (np.swapaxes(r, -1, -2) for r in (Rz0, Rz1, Rz2))
    R0 = A0 @ B0
    R1 = A1 @ B0 + A0 @ B1
    R2 = A2 @ B0 + 2 * A1 @ B1 + A0 @ B2

    def mv(M, x):
        return np.einsum("nij,nj->ni", M, x)

    f_phi = mv(R0, f)
    df_phi = mv(R1, f) + mv(R0, df)
    ddf_phi = mv(R2, f) + 2 * mv(R1, df) + mv(R0, ddf)
    v_phi = mv(R0, q.v)
    dv_phi = mv(R1, q.v) + mv(R0, q.a)
    ddv_phi = mv(R2, q.v) + 2 * mv(R1, q.a) + mv(R0, q.j)

    # regularized speed and its derivatives
    va = np.einsum("ni,ni->n", q.v, q.a)
    n = np.sqrt(np.einsum("ni,ni->n", q.v, q.v) + SPEED_EPS**2)
    dn = va / n
    ddn = (np.einsum("ni,ni->n", q.a, q.a) + np.einsum("ni,ni->n", q.v, q.j)) / n - va * dn / n**2
    w = n[:, None] * v_phi
    tau = dn[:, None] * v_phi + n[:, None] * dv_phi
    dtau = ddn[:, None] * v_phi + 2 * dn[:, None] * dv_phi + n[:, None] * ddv_phi

    sx, sz = _pitch_args(f_phi, w, p)
    dsx, dsz = _pitch_args(df_phi, tau, p)
    ddsx, ddsz = _pitch_args(ddf_phi, dtau, p)
    status[(status == OK) & (np.abs(sx) < DEGENERATE_ARG)
           & (np.abs(sz) < DEGENERATE_ARG)] = DEGENERATE_PITCH
    dth, ddth = _atan2_rates(sx, sz, dsx, dsz, ddsx, ddsz)
    prev_tb = branch.prev_theta_bar if branch is not None else None
    theta_bar, k_pitch = resolve_branch(np.arctan2(sx, sz), prev_tb)
    T = _collective_thrust(theta_bar, f_phi, w, p)

    status[(status == OK) & (np.abs(np.cos(phi)) < EULER_COS_MIN)] = DEGENERATE_EULER

    if branch is not None:
        branch.prev_phi = float(phi[-1])
        branch.prev_theta_bar = float(theta_bar[-1])
        branch.k_roll = int(k_roll[-1])
        branch.k_pitch = int(k_pitch[-1])

    return FlatnessIntermediates(
        f_i=f, df_i=df, ddf_i=ddf,
        beta=np.stack([np.stack([bx, bz], -1), np.stack([dbx, dbz], -1),
                       np.stack([ddbx, ddbz], -1)], axis=-2),
        phi=phi, dphi=dphi, ddphi=ddphi,
        f_phi=f_phi, df_phi=df_phi, ddf_phi=ddf_phi,
        v_phi=v_phi, dv_phi=dv_phi, ddv_phi=ddv_phi,
        speed=n, dspeed=dn, ddspeed=ddn, tau=tau, dtau=dtau,
        sigma=np.stack([np.stack([sx, sz], -1), np.stack([dsx, dsz], -1),
                        np.stack([ddsx, ddsz], -1)], axis=-2),
        eta=p.eta, theta_bar=theta_bar, dtheta=dth, ddtheta=ddth, T=T,
        status=status,
    )


def flat_to_full_batch(q, p, branch=None):
    """Full flatness transform over a batch of samples.

    Never raises for per-sample problems: those are encoded in ``status``
    (see ``STATUS_TEXT``) and ``negative_thrust``.
    """
    q = q.batched()
    inter = compute_intermediates(q, p, branch)
    status = inter.status.copy()
    theta = inter.theta_bar + p.alpha0
    omega = angular_velocity_from_flat(q, inter, p)
    omega_dot = angular_acceleration_from_flat(q, inter, p)
    moment = moment_from_rates(omega, omega_dot, p)

    R = rot_z(q.psi) @ rot_x(inter.phi) @ rot_y(theta)
    R_ia = rot_z(q.psi) @ rot_x(inter.phi) @ rot_y(inter.theta_bar)
    v_alpha = np.einsum("nji,nj->ni", R_ia, q.v)

    T = inter.T
    dT = differential_thrust(moment[:, 2], p)
    T1, T2 = 0.5 * (T + dT), 0.5 * (T - dT)
    d1, d2, cond = _solve_flaps(moment, T1, T2, v_alpha[:, 0], inter.speed, p)
    status[(status == OK) & ~(cond <= FLAP_COND_MAX)] = SINGULAR_FLAPS
    control = ControlInput(motor_speed(T1, p), motor_speed(T2, p), d1, d2)

    return FullStateInput(
        psi=q.psi, phi=inter.phi, theta=theta, theta_bar=inter.theta_bar,
        R=R, q=matrix_to_quat(R), omega=omega, omega_dot=omega_dot,
        moment=moment, T=T, dT=dT, T1=T1, T2=T2, control=control,
        v_alpha=v_alpha, speed=inter.speed,
        negative_thrust=(T1 < 0) | (T2 < 0), status=status,
    )


_STATUS_ERRORS = {
    DEGENERATE_ROLL: DegenerateForceError,
    DEGENERATE_PITCH: DegenerateForceError,
    DEGENERATE_EULER: DegenerateAttitudeError,
    SINGULAR_FLAPS: SingularEffectivenessError,
}


def raise_for_status(status):
    bad = np.flatnonzero(np.asarray(status) != OK)
    if bad.size:
        i = int(bad[0])
        code = int(status[i])
        raise _STATUS_ERRORS[code](f"sample {i}: {STATUS_TEXT[code]}", index=i)


def flat_to_full(q, p, branch=None):
    """Full transform for a single sample; raises on degenerate cases.

    ``branch`` carries continuity between consecutive calls and is updated.
    """
    if branch is None:
        branch = BranchState()
    out = flat_to_full_batch(q, p, branch)
    raise_for_status(out.status)
    c = out.control
    return FullStateInput(
        psi=float(out.psi[0]), phi=float(out.phi[0]), theta=float(out.theta[0]),
        theta_bar=float(out.theta_bar[0]), R=out.R[0], q=out.q[0],
        omega=out.omega[0], omega_dot=out.omega_dot[0], moment=out.moment[0],
        T=float(out.T[0]), dT=float(out.dT[0]), T1=float(out.T1[0]),
        T2=float(out.T2[0]),
        control=ControlInput(float(c.omega1[0]), float(c.omega2[0]),
                             float(c.delta1[0]), float(c.delta2[0])),
        v_alpha=out.v_alpha[0], speed=float(out.speed[0]),
        negative_thrust=bool(out.negative_thrust[0]), status=int(out.status[0]),
    )
