"""Quaternion and SO(3) helpers, vectorized over leading axes.

Quaternions are scalar-first (w, x, y, z) arrays of shape (..., 4).
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    return q / np.maximum(n, _EPS)


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion(s) q (body -> world for an attitude quat)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_rotate_inv(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_rotate(quat_conj(q), v)


def quat_from_axis_angle(axis: np.ndarray, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    n = np.linalg.norm(axis, axis=-1, keepdims=True)
    u = axis / np.maximum(n, _EPS)
    half = 0.5 * angle[..., None]
    return np.concatenate([np.cos(half), u * np.sin(half)], axis=-1)


def quat_from_yaw(yaw) -> np.ndarray:
    yaw = np.asarray(yaw, dtype=np.float64)
    half = 0.5 * yaw[..., None]
    z = np.zeros_like(half)
    return np.concatenate([np.cos(half), z, z, np.sin(half)], axis=-1)


def quat_from_pitch(pitch) -> np.ndarray:
    pitch = np.asarray(pitch, dtype=np.float64)
    half = 0.5 * pitch[..., None]
    z = np.zeros_like(half)
    return np.concatenate([np.cos(half), z, np.sin(half), z], axis=-1)


def quat_from_roll(roll) -> np.ndarray:
    roll = np.asarray(roll, dtype=np.float64)
    half = 0.5 * roll[..., None]
    z = np.zeros_like(half)
    return np.concatenate([np.cos(half), np.sin(half), z, z], axis=-1)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Rotation vector (log map) of q; shortest path, angle in [0, pi]."""
    q = quat_normalize(q)
    # canonicalize sign so w >= 0 (shortest rotation)
    q = np.where(q[..., :1] < 0.0, -q, q)
    w = q[..., 0]
    u = q[..., 1:]
    n = np.linalg.norm(u, axis=-1)
    angle = 2.0 * np.arctan2(n, w)
    # sin(angle/2) = n; rotvec = angle * u / n, with series fallback near n -> 0
    small = n < 1e-8
    scale = np.where(small, 2.0, angle / np.maximum(n, _EPS))
    return scale[..., None] * u


def quat_diff_rotvec(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """World-frame rotation vector taking qb to qa: log(qa * qb^-1)."""
    return quat_to_rotvec(quat_mul(qa, quat_conj(qb)))


def quat_slerp(q0: np.ndarray, q1: np.ndarray, u) -> np.ndarray:
    """Normalized spherical interpolation, shortest path; u in [0, 1]."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    u = np.asarray(u, dtype=np.float64)
    dot = np.sum(q0 * q1, axis=-1)
    q1 = np.where(dot[..., None] < 0.0, -q1, q1)
    dot = np.abs(dot)
    dot = np.clip(dot, -1.0, 1.0)
    theta = np.arccos(dot)
    sin_theta = np.sin(theta)
    near = sin_theta < 1e-9
    w0 = np.where(near, 1.0 - u, np.sin((1.0 - u) * theta) / np.maximum(sin_theta, _EPS))
    w1 = np.where(near, u, np.sin(u * theta) / np.maximum(sin_theta, _EPS))
    return quat_normalize(w0[..., None] * q0 + w1[..., None] * q1)


def yaw_of(q: np.ndarray) -> np.ndarray:
    """Yaw (rotation about world z) of the quaternion, ZYX convention."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = (q[..., i] for i in range(4))
    return np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def pitch_of(q: np.ndarray) -> np.ndarray:
    """Pitch (rotation about y) of the quaternion, ZYX convention."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = (q[..., i] for i in range(4))
    s = np.clip(2.0 * (w * y - z * x), -1.0, 1.0)
    return np.arcsin(s)


def mirror_quat_xz(q: np.ndarray) -> np.ndarray:
    """Reflect a rotation across the x-z plane (negate y): (w,x,y,z) -> (w,-x,y,-z)."""
    q = np.asarray(q, dtype=np.float64).copy()
    q[..., 1] = -q[..., 1]
    q[..., 3] = -q[..., 3]
    return q


def mirror_vec_xz(v: np.ndarray) -> np.ndarray:
    """Reflect a polar vector across the x-z plane (negate y component)."""
    v = np.asarray(v, dtype=np.float64).copy()
    v[..., 1] = -v[..., 1]
    return v


def mirror_angvec_xz(v: np.ndarray) -> np.ndarray:
    """Reflect an axial vector (angular velocity) across the x-z plane."""
    v = np.asarray(v, dtype=np.float64).copy()
    v[..., 0] = -v[..., 0]
    v[..., 2] = -v[..., 2]
    return v
