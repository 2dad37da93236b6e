"""Tailsitter flying-wing force/moment model and rigid-body equations of motion.

Frame conventions used throughout the package:

* World frame: x north, y east, z **down**. Gravity acts along +z.
* Body frame: x along the thrust line (nose), y along the right wing,
  z completing the right-handed triad (belly side). In hover the nose points
  up, i.e. pitch is close to +pi/2.
* Zero-lift frame: body frame rotated by -alpha0 about body y. Vectors map
  as ``v_body = Ry(alpha0)^T v_zl`` and the zero-lift-to-world rotation is
  ``Rz(psi) Rx(phi) Ry(theta - alpha0)``.
* Flap deflection: positive deflection is trailing edge down (increases
  lift, produces a nose-down pitch moment for the flaps aft of the CG).
* Motor 1 spins so that its reaction torque is +c_mu*omega1^2 about the
  thrust axis, motor 2 the opposite.

All functions broadcast over leading array dimensions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DomainError
from .rotations import rot_y

_SCALAR_KEYS = (
    "m", "g", "alpha0", "alphaT", "cT", "cmu", "cDT", "cLT", "cDV", "cLV",
    "cdLT", "cdLV", "lTy", "ldx", "ldy", "cmuT", "omega_min", "omega_max",
    "delta_max",
)
_INERTIA_KEYS = ("Jxx", "Jxy", "Jxz", "Jyy", "Jyz", "Jzz")


@dataclass(frozen=True, eq=False)
class VehicleParams:
    m: float
    g: float
    J: np.ndarray
    alpha0: float
    alphaT: float
    cT: float
    cmu: float
    cDT: float
    cLT: float
    cDV: float
    cLV: float
    cdLT: float
    cdLV: float
    lTy: float
    ldx: float
    ldy: float
    cmuT: float
    omega_min: float
    omega_max: float
    delta_max: float
    # derived, filled in __post_init__
    J_inv: np.ndarray = field(init=False, repr=False, compare=False)
    _consts: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        J = np.array(self.J, dtype=float).reshape(3, 3)
        J.setflags(write=False)
        object.__setattr__(self, "J", J)
        if not self.m > 0:
            raise DomainError("mass must be positive")
        if not np.allclose(J, J.T):
            raise DomainError("inertia tensor must be symmetric")
        if np.min(np.linalg.eigvalsh(J)) <= 0:
            raise DomainError("inertia tensor must be positive definite")
        if not self.cT > 0:
            raise DomainError("cT must be positive")
        if not (self.omega_max > self.omega_min >= 0):
            raise DomainError("need omega_max > omega_min >= 0")
        if not self.delta_max > 0:
            raise DomainError("delta_max must be positive")
        if not (0 <= self.cDT < 1):
            raise DomainError("cDT must lie in [0, 1)")
        if abs(self.thrust_forward) < 1e-12:
            raise DomainError("cos(alpha_bar)*(1 - cDT) must be nonzero")
        J_inv = np.linalg.inv(J)
        J_inv.setflags(write=False)
        object.__setattr__(self, "J_inv", J_inv)
        object.__setattr__(self, "_consts", self._scalar_constants())

    def _scalar_constants(self):
        """Plain-float constants for the per-step derivative evaluation."""
        ca, sa = math.cos(self.alpha0), math.sin(self.alpha0)
        K, L = self.thrust_forward, self.thrust_normal
        mu_ratio = self.cmu / self.cT
        return (
            ca, sa, K, L,
            -self.lTy * (sa * K + ca * L), math.cos(self.alphaT) * mu_ratio,
            self.lTy * (ca * K - sa * L), -math.sin(self.alphaT) * mu_ratio,
            self.cdLT * math.cos(self.alpha_bar),
            tuple(map(tuple, self.J.tolist())), tuple(map(tuple, self.J_inv.tolist())),
        )

    @property
    def alpha_bar(self):
        return self.alpha0 + self.alphaT

    @property
    def thrust_forward(self):
        """Zero-lift x force per unit thrust."""
        return math.cos(self.alpha_bar) * (1.0 - self.cDT)

    @property
    def thrust_normal(self):
        """Zero-lift z force per unit thrust."""
        return math.sin(self.alpha_bar) * (self.cLT - 1.0)

    @property
    def eta(self):
        return self.thrust_normal / self.thrust_forward

    @property
    def max_collective_thrust(self):
        return 2.0 * self.cT * self.omega_max**2

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = {k: float(getattr(self, k)) for k in _SCALAR_KEYS}
        J = self.J
        d.update(Jxx=J[0, 0], Jxy=J[0, 1], Jxz=J[0, 2], Jyy=J[1, 1],
                 Jyz=J[1, 2], Jzz=J[2, 2])
        return {k: float(v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in _SCALAR_KEYS + _INERTIA_KEYS if k not in d]
        if missing:
            raise DomainError(f"missing parameter(s): {', '.join(missing)}")
        Jxx, Jxy, Jxz, Jyy, Jyz, Jzz = (float(d[k]) for k in _INERTIA_KEYS)
        J = [[Jxx, Jxy, Jxz], [Jxy, Jyy, Jyz], [Jxz, Jyz, Jzz]]
        return cls(J=J, **{k: float(d[k]) for k in _SCALAR_KEYS})


def parse_params(text, source="<string>"):
    """Parse the ``name = value`` parameter file format."""
    values = {}
    known = set(_SCALAR_KEYS) | set(_INERTIA_KEYS)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"{source}:{lineno}: expected 'name = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "alpha_bar":
            continue  # derived; accepted for readability, recomputed
        if key not in known:
            raise DomainError(f"{source}:{lineno}: unknown parameter '{key}'")
        try:
            values[key] = float(val)
        except ValueError:
            raise DomainError(f"{source}:{lineno}: bad number '{val}'") from None
    return VehicleParams.from_dict(values)


def load_params(path):
    path = Path(path)
    return parse_params(path.read_text(), source=str(path))


def format_params(p, header=""):
    lines = [f"# {h}".rstrip() for h in header.splitlines()] if header else []
    for k, v in p.to_dict().items():
        lines.append(f"{k} = {v!r}")
    return "\n".join(lines) + "\n"


def nominal_params_path():
    return Path(__file__).with_name("data") / "nominal.params"


def nominal_params():
    return load_params(nominal_params_path())


@dataclass
class VehicleState:
    x: np.ndarray
    v: np.ndarray
    q: np.ndarray  # scalar-first unit quaternion, body to world
    omega: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        if abs(np.linalg.norm(self.q) - 1.0) > 1e-9:
            raise DomainError("attitude quaternion must have unit norm")

    def as_vector(self):
        return np.concatenate([self.x, self.v, self.q, self.omega])

    @classmethod
    def from_vector(cls, y):
        q = y[6:10] / np.linalg.norm(y[6:10])
        return cls(y[0:3].copy(), y[3:6].copy(), q, y[10:13].copy())


@dataclass
class ControlInput:
    omega1: float
    omega2: float
    delta1: float
    delta2: float

    def in_envelope(self, p):
        return (p.omega_min <= self.omega1 <= p.omega_max
                and p.omega_min <= self.omega2 <= p.omega_max
                and abs(self.delta1) <= p.delta_max
                and abs(self.delta2) <= p.delta_max)


@dataclass
class BodyWrench:
    force: np.ndarray  # zero-lift frame [N]
    moment: np.ndarray  # body frame [N m]


def motor_forces(omega1, omega2, p):
    """Thrusts (T1, T2) and reaction torques (mu1, mu2) of both motors."""
    omega1 = np.asarray(omega1, dtype=float)
    omega2 = np.asarray(omega2, dtype=float)
    if np.any(omega1 < 0) or np.any(omega2 < 0):
        raise DomainError("motor speeds must be non-negative")
    T1 = p.cT * omega1**2
    T2 = p.cT * omega2**2
    mu1 = p.cmu * omega1**2
    mu2 = -p.cmu * omega2**2
    return T1, T2, mu1, mu2


def flap_effectiveness(T_i, v_alpha_x, speed, p):
    """Zero-lift z force per radian of flap deflection for one flap."""
    return -p.cdLT * math.cos(p.alpha_bar) * T_i - p.cdLV * speed * v_alpha_x


def aero_force(v_alpha, speed, T1, T2, delta1, delta2, p, flap_force=True):
    """Total thrust, flap and wing force in the zero-lift frame.

    ``flap_force=False`` drops the direct flap force, which the flatness
    transform neglects.
    """
    v_alpha = np.asarray(v_alpha, dtype=float)
    vx, vz = v_alpha[..., 0], v_alpha[..., 2]
    T = np.asarray(T1) + np.asarray(T2)
    fx = p.thrust_forward * T - p.cDV * vx * speed
    fz = p.thrust_normal * T - p.cLV * vz * speed
    if flap_force:
        fz = fz + (flap_effectiveness(T1, vx, speed, p) * delta1
                   + flap_effectiveness(T2, vx, speed, p) * delta2)
    return np.stack([fx, np.zeros_like(fx), fz], axis=-1)


def thrust_moment(T1, T2, p):
    """Moment of motor thrust plus motor reaction torque (body frame)."""
    ca, sa = math.cos(p.alpha0), math.sin(p.alpha0)
    K, L = p.thrust_forward, p.thrust_normal
    dT = np.asarray(T1) - np.asarray(T2)
    mu_sum = p.cmu / p.cT * dT  # mu1 + mu2
    mx = -p.lTy * (sa * K + ca * L) * dT + math.cos(p.alphaT) * mu_sum
    my = p.cmuT * (np.asarray(T1) + np.asarray(T2))
    mz = p.lTy * (ca * K - sa * L) * dT - math.sin(p.alphaT) * mu_sum
    return np.stack(np.broadcast_arrays(mx, my, mz), axis=-1)


def flap_moment(v_alpha, speed, T1, T2, delta1, delta2, p, yaw_term=True):
    v_alpha = np.asarray(v_alpha, dtype=float)
    vx = v_alpha[..., 0]
    f1 = flap_effectiveness(T1, vx, speed, p) * delta1
    f2 = flap_effectiveness(T2, vx, speed, p) * delta2
    mx = p.ldy * math.cos(p.alpha0) * (f2 - f1)
    my = p.ldx * (f1 + f2)
    mz = p.ldy * math.sin(p.alpha0) * (f2 - f1)
    if not yaw_term:
        mz = np.zeros_like(mz)
    return np.stack(np.broadcast_arrays(mx, my, mz), axis=-1)


def aero_moment(v_alpha, speed, T1, T2, delta1, delta2, p, flap_yaw=True):
    """Body-frame moment from thrust, motor torque and flaps.

    ``flap_yaw=False`` drops the z component of the flap moment, which the
    flatness transform neglects.
    """
    return (thrust_moment(T1, T2, p)
            + flap_moment(v_alpha, speed, T1, T2, delta1, delta2, p, flap_yaw))


def body_wrench(v_alpha, speed, u, p, consistent=False):
    T1, T2, _, _ = motor_forces(u.omega1, u.omega2, p)
    f = aero_force(v_alpha, speed, T1, T2, u.delta1, u.delta2, p,
                   flap_force=not consistent)
    m = aero_moment(v_alpha, speed, T1, T2, u.delta1, u.delta2, p,
                    flap_yaw=not consistent)
    return BodyWrench(f, m)


def zero_lift_to_body(p):
    """Rotation mapping zero-lift-frame vectors to the body frame."""
    return rot_y(p.alpha0).T


def derivative_vector(y, u, p, consistent=False):
    """Time derivative of the stacked state [x, v, q, Omega] (no checks).

    Scalar-arithmetic version of the model in :func:`body_wrench`, kept
    separate because the integrator calls it four times per step.
    """
    (ca, sa, K, L, kx_dT, kx_mu, kz_dT, kz_mu, nu_T, J, Ji) = p._consts
    _, _, _, vx, vy, vz, qw, qx, qy, qz, wx, wy, wz = (float(c) for c in y)
    n = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    a, b, c, d = qw / n, qx / n, qy / n, qz / n
    # first and last columns of the body-to-world matrix
    r00, r02 = 1 - 2 * (c * c + d * d), 2 * (b * d + a * c)
    r10, r12 = 2 * (b * c + a * d), 2 * (c * d - a * b)
    r20, r22 = 2 * (b * d - a * c), 1 - 2 * (b * b + c * c)
    # zero-lift x and z axes in the world frame: R_ib @ Ry(alpha0)^T columns
    ex = (r00 * ca + r02 * sa, r10 * ca + r12 * sa, r20 * ca + r22 * sa)
    ez = (-r00 * sa + r02 * ca, -r10 * sa + r12 * ca, -r20 * sa + r22 * ca)
    vax = ex[0] * vx + ex[1] * vy + ex[2] * vz
    vaz = ez[0] * vx + ez[1] * vy + ez[2] * vz
    speed = math.sqrt(vx * vx + vy * vy + vz * vz)

    w1 = max(float(u[0]), 0.0)
    w2 = max(float(u[1]), 0.0)
    d1, d2 = float(u[2]), float(u[3])
    T1, T2 = p.cT * w1 * w1, p.cT * w2 * w2
    T, dT = T1 + T2, T1 - T2
    f1 = (-nu_T * T1 - p.cdLV * speed * vax) * d1
    f2 = (-nu_T * T2 - p.cdLV * speed * vax) * d2

    fx = K * T - p.cDV * vax * speed
    fz = L * T - p.cLV * vaz * speed
    if not consistent:
        fz += f1 + f2
    mx = kx_dT * dT + kx_mu * dT + p.ldy * ca * (f2 - f1)
    my = p.cmuT * T + p.ldx * (f1 + f2)
    mz = kz_dT * dT + kz_mu * dT
    if not consistent:
        mz += p.ldy * sa * (f2 - f1)

    inv_m = 1.0 / p.m
    ax = (ex[0] * fx + ez[0] * fz) * inv_m
    ay = (ex[1] * fx + ez[1] * fz) * inv_m
    az = (ex[2] * fx + ez[2] * fz) * inv_m + p.g

    dqw = 0.5 * (-qx * wx - qy * wy - qz * wz)
    dqx = 0.5 * (qw * wx + qy * wz - qz * wy)
    dqy = 0.5 * (qw * wy - qx * wz + qz * wx)
    dqz = 0.5 * (qw * wz + qx * wy - qy * wx)

    hx = J[0][0] * wx + J[0][1] * wy + J[0][2] * wz
    hy = J[1][0] * wx + J[1][1] * wy + J[1][2] * wz
    hz = J[2][0] * wx + J[2][1] * wy + J[2][2] * wz
    tx = mx - (wy * hz - wz * hy)
    ty = my - (wz * hx - wx * hz)
    tz = mz - (wx * hy - wy * hx)
    return np.array([
        vx, vy, vz, ax, ay, az, dqw, dqx, dqy, dqz,
        Ji[0][0] * tx + Ji[0][1] * ty + Ji[0][2] * tz,
        Ji[1][0] * tx + Ji[1][1] * ty + Ji[1][2] * tz,
        Ji[2][0] * tx + Ji[2][1] * ty + Ji[2][2] * tz,
    ])


def state_derivative(s, u, p, consistent=False):
    """Derivatives (xdot, vdot, qdot, Omegadot) of the rigid-body EOM.

    ``consistent=True`` evaluates the model without the direct flap force
    and the flap yaw moment, matching the flatness transform exactly.
    """
    q = np.asarray(s.q, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise DomainError("attitude quaternion is not unit norm")
    y = np.concatenate([s.x, s.v, q, s.omega])
    uu = (u.omega1, u.omega2, u.delta1, u.delta2)
    if u.omega1 < 0 or u.omega2 < 0:
        raise DomainError("motor speeds must be non-negative")
    d = derivative_vector(y, uu, p, consistent)
    return d[0:3], d[3:6], d[6:10], d[10:13]
