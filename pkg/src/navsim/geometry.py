"""Quaternion and rigid-transform helpers.

Quaternions are numpy arrays ``[w, x, y, z]`` with unit norm. Rotations map
body-frame vectors into the inertial frame unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = float(np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize zero/non-finite quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v) -> np.ndarray:
    """Rotate vector v by quaternion q (body -> inertial for attitude quats)."""
    w, x, y, z = q
    vx, vy, vz = v
    # q * (0,v) * q^-1 expanded
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array(
        [
            vx + w * tx + (y * tz - z * ty),
            vy + w * ty + (z * tx - x * tz),
            vz + w * tz + (x * ty - y * tx),
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; R must be a proper rotation."""
    m00, m01, m02 = R[0]
    m10, m11, m12 = R[1]
    m20, m21, m22 = R[2]
    tr = m00 + m11 + m22
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s])
    elif m00 >= m11 and m00 >= m22:
        s = np.sqrt(1.0 + m00 - m11 - m22) * 2.0
        q = np.array([(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s])
    elif m11 >= m22:
        s = np.sqrt(1.0 + m11 - m00 - m22) * 2.0
        q = np.array([(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s])
    else:
        s = np.sqrt(1.0 + m22 - m00 - m11) * 2.0
        q = np.array([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s])
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return quat_identity()
    half = 0.5 * angle
    s = np.sin(half) / n
    return np.array([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_exp(rotvec) -> np.ndarray:
    """Quaternion for a rotation vector (axis * angle)."""
    rx, ry, rz = rotvec
    angle = np.sqrt(rx * rx + ry * ry + rz * rz)
    if angle < 1e-12:
        # first-order expansion, renormalized
        return quat_normalize(np.array([1.0, 0.5 * rx, 0.5 * ry, 0.5 * rz]))
    s = np.sin(0.5 * angle) / angle
    return np.array([np.cos(0.5 * angle), rx * s, ry * s, rz * s])


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([np.cos(0.5 * yaw), 0.0, 0.0, np.sin(0.5 * yaw)])


def yaw_of(q: np.ndarray) -> float:
    w, x, y, z = q
    return float(np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


def wrap_angle(a: float) -> float:
    return float((a + np.pi) % (2.0 * np.pi) - np.pi)


def quat_slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Shortest-arc spherical interpolation, t in [0, 1]."""
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(a + t * (b - a))
    theta = np.arccos(min(dot, 1.0))
    s = np.sin(theta)
    return quat_normalize((np.sin((1.0 - t) * theta) / s) * a + (np.sin(t * theta) / s) * b)


@dataclass(frozen=True)
class Pose:
    """Position + unit-quaternion orientation in the inertial frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        q = np.asarray(self.q, dtype=float)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n} too far from 1")
        if abs(n - 1.0) > QUAT_NORM_TOL:
            q = q / n
        object.__setattr__(self, "q", q)

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def transform_point(self, p) -> np.ndarray:
        return quat_rotate(self.q, p) + self.position

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: other expressed in self's frame, result in world."""
        return Pose(self.transform_point(other.position), quat_normalize(quat_multiply(self.q, other.q)))

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.q)
        return Pose(quat_rotate(qi, -self.position), qi)

    def yaw(self) -> float:
        return yaw_of(self.q)


@dataclass(frozen=True)
class RigidTransform:
    """Fixed extrinsic transform given as rotation matrix + translation."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("R must be 3x3")
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-9:
            raise ValueError("rotation part not orthonormal within 1e-9")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))

    def as_pose(self) -> Pose:
        return Pose(self.t.copy(), matrix_to_quat(self.R))

    def apply(self, p) -> np.ndarray:
        return self.R @ np.asarray(p, dtype=float) + self.t

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))
