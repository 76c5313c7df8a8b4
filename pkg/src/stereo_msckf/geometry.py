"""Quaternion and rotation kernel.

Quaternions are stored as ``[x, y, z, w]`` (vector part first, scalar last)
and follow the JPL convention used throughout the filter:

* ``C(q_AB)`` maps coordinates expressed in frame B into frame A,
  e.g. ``v_I = C(q_IG) @ v_G``.
* Products compose like the frames they relate, ``q_CG = q_CI (x) q_IG``,
  and ``C(p (x) q) = C(p) @ C(q)``.
* Attitude kinematics read ``q_dot = 0.5 * Omega(omega) @ q`` with ``omega``
  the body rate.
* A small-angle error ``theta`` gives ``C(dq) ~= I - skew(theta)``.

See ``docs/frames.md`` for the full frame convention.
"""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)

#: Deviation from unit norm that is silently tolerated on input.
UNIT_TOL = 1e-6

IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix, ``skew(v) @ u == np.cross(v, u)``."""
    x, y, z = v
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def normalize_quat(q: np.ndarray) -> np.ndarray:
    """Unit quaternion with non-negative scalar part."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError(f"cannot normalize quaternion {q!r}")
    q = q / n
    if q[3] < 0.0:
        q = -q
    return q


def _checked(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.sqrt(q @ q)
    if abs(n - 1.0) > UNIT_TOL:
        logger.debug("non-unit quaternion (norm %.3e) normalized", n)
        q = q / n
    return q


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix ``C(q)``; non-unit input is normalized first."""
    x, y, z, w = _checked(q)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    # (2w^2 - 1) I - 2w [v x] + 2 v v^T, expanded
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy + wz), 2.0 * (xz - wy)],
        [2.0 * (xy - wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz + wx)],
        [2.0 * (xz + wy), 2.0 * (yz - wx), 1.0 - 2.0 * (xx + yy)],
    ])


def rotation_to_quat(C: np.ndarray) -> np.ndarray:
    """Inverse of :func:`quat_to_rotation` (Shepperd's method)."""
    # C is the transpose of the active rotation for the same [v, w].
    R = np.asarray(C, dtype=float).T
    tr = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax(np.r_[diag, tr]))
    if k == 3:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = np.array([
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
            0.25 * s,
        ])
    elif k == 0:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([
            0.25 * s,
            (R[0, 1] + R[1, 0]) / s,
            (R[0, 2] + R[2, 0]) / s,
            (R[2, 1] - R[1, 2]) / s,
        ])
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
        q = np.array([
            (R[0, 1] + R[1, 0]) / s,
            0.25 * s,
            (R[1, 2] + R[2, 1]) / s,
            (R[0, 2] - R[2, 0]) / s,
        ])
    else:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
        q = np.array([
            (R[0, 2] + R[2, 0]) / s,
            (R[1, 2] + R[2, 1]) / s,
            0.25 * s,
            (R[1, 0] - R[0, 1]) / s,
        ])
    return normalize_quat(q)


def quat_multiply(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """JPL product ``p (x) q``, renormalized."""
    px, py, pz, pw = p
    L = np.array([
        [pw, pz, -py, px],
        [-pz, pw, px, py],
        [py, -px, pw, pz],
        [-px, -py, -pz, pw],
    ])
    return normalize_quat(L @ np.asarray(q, dtype=float))


def quat_inverse(q: np.ndarray) -> np.ndarray:
    q = _checked(q)
    return normalize_quat(np.array([-q[0], -q[1], -q[2], q[3]]))


def omega_matrix(w: np.ndarray) -> np.ndarray:
    """``Omega(w)`` such that ``q_dot = 0.5 * Omega(w) @ q``."""
    O = np.zeros((4, 4))
    O[:3, :3] = -skew(w)
    O[:3, 3] = w
    O[3, :3] = -np.asarray(w)
    return O


def small_angle_quat(theta: np.ndarray) -> np.ndarray:
    """Error quaternion for rotation vector ``theta``.

    Built from the exact axis-angle form, so it is valid for any magnitude
    and reduces to ``[theta / 2, 1]`` to first order.
    """
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta)
    if angle < 1e-12:
        q = np.r_[0.5 * theta, 1.0]
        return q / np.linalg.norm(q)
    half = 0.5 * angle
    return normalize_quat(np.r_[np.sin(half) / angle * theta, np.cos(half)])


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Rotation vector ``theta`` with ``small_angle_quat(theta) == q``."""
    q = normalize_quat(q)
    s = np.linalg.norm(q[:3])
    if s < 1e-12:
        return 2.0 * q[:3]
    return 2.0 * np.arctan2(s, q[3]) / s * q[:3]


def rotation_angle(C: np.ndarray) -> float:
    """Angle of the rotation represented by ``C`` (rad)."""
    c = np.clip(0.5 * (np.trace(C) - 1.0), -1.0, 1.0)
    return float(np.arccos(c))
