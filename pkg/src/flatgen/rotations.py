"""Elementary rotations, their angle derivatives and quaternion helpers.

Rotation matrices map frame-local coordinates to the parent frame
(``v_parent = R @ v_local``). Quaternions are scalar-first ``(w, x, y, z)``
Hamilton quaternions describing body-to-world rotations.
"""
import numpy as np
from scipy.spatial.transform import Rotation


def _stack(rows):
    return np.moveaxis(np.array(rows, dtype=float), (0, 1), (-2, -1))


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(c), np.zeros_like(c)
    return _stack([[o, z, z], [z, c, -s], [z, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(c), np.zeros_like(c)
    return _stack([[c, z, s], [z, o, z], [-s, z, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(c), np.zeros_like(c)
    return _stack([[c, -s, z], [s, c, z], [z, z, o]])


def _d_rot(rot, a, order):
    # d^n/da^n of an elementary rotation equals the rotation at a + n*pi/2
    # restricted to the two rotating axes; the fixed axis entry vanishes.
    r = rot(np.asarray(a, dtype=float) + order * np.pi / 2)
    fixed = {rot_x: 0, rot_y: 1, rot_z: 2}[rot]
    r[..., fixed, fixed] = 0.0
    return r


def rot_with_rates(rot, a, da, dda):
    """Return R, dR/dt, d2R/dt2 for an elementary rotation with angle a(t)."""
    da = np.asarray(da, dtype=float)[..., None, None]
    dda = np.asarray(dda, dtype=float)[..., None, None]
    r0 = rot(a)
    r1 = _d_rot(rot, a, 1)
    r2 = _d_rot(rot, a, 2)
    return r0, r1 * da, r2 * da**2 + r1 * dda


def zxy_matrix(psi, phi, theta):
    """Body-to-world rotation for yaw psi, roll phi, pitch theta (ZXY)."""
    return rot_z(psi) @ rot_x(phi) @ rot_y(theta)


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_mul(p, q):
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ])


def matrix_to_quat(R):
    """Scalar-first quaternion(s) for rotation matrix/matrices, w >= 0."""
    xyzw = Rotation.from_matrix(R).as_quat()
    q = np.concatenate([xyzw[..., 3:], xyzw[..., :3]], axis=-1)
    sign = np.where(q[..., :1] < 0, -1.0, 1.0)
    return q * sign


def rotation_angle(Ra, Rb):
    """Angle [rad] of the relative rotation Ra^T Rb."""
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def vee(S):
    return np.array([S[..., 2, 1], S[..., 0, 2], S[..., 1, 0]]).T
