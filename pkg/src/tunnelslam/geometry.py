"""SE(3) rigid transforms and point-cloud containers.

Rotations are stored as unit quaternions (scalar-first, ``[w, x, y, z]``);
translations are 3-vectors in meters. Euler angles appear only at the
scan-matching Jacobian boundary, where the cost is parameterized over
``(t_x, t_y, t_z, theta_x, theta_y, theta_z)``.

All values here are immutable; downstream code treats them as shareable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


# ---------------------------------------------------------------------------
# quaternion algebra (scalar-first)
# ---------------------------------------------------------------------------

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n < _EPS:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's method, branch on trace)."""
    R = np.asarray(R, dtype=np.float64)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      0.25 * s,
                      (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s,
                      (R[0, 1] + R[1, 0]) / s,
                      0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s,
                      (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s,
                      0.25 * s])
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < _EPS:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis / n))


def rotvec_to_quat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    angle = np.linalg.norm(v)
    if angle < 1e-10:
        # second-order series keeps exp/log consistent near identity
        q = np.concatenate(([1.0 - angle * angle / 8.0], 0.5 * v))
        return quat_normalize(q)
    return np.concatenate(([math.cos(0.5 * angle)],
                           math.sin(0.5 * angle) * v / angle))


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Logarithm of a unit quaternion: axis * angle, angle in [0, pi]."""
    if q[0] < 0:
        q = -q
    vn = np.linalg.norm(q[1:])
    if vn < 1e-10:
        return 2.0 * q[1:]
    angle = 2.0 * math.atan2(vn, q[0])
    return q[1:] * (angle / vn)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


# ---------------------------------------------------------------------------
# Euler Z-Y-X (yaw applied last as the leftmost factor on column vectors)
# ---------------------------------------------------------------------------

def euler_zyx_to_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """R = Rz(rz) @ Ry(ry) @ Rx(rx)."""
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def matrix_to_euler_zyx(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_zyx_to_matrix`; pitch forced into [-pi/2, pi/2]."""
    ry = math.atan2(-R[2, 0], math.hypot(R[0, 0], R[1, 0]))
    if abs(abs(ry) - 0.5 * math.pi) < 1e-9:
        # gimbal: fold yaw into roll
        rz = 0.0
        rx = math.atan2(-R[1, 2], R[1, 1])
    else:
        rz = math.atan2(R[1, 0], R[0, 0])
        rx = math.atan2(R[2, 1], R[2, 2])
    return rx, ry, rz


# ---------------------------------------------------------------------------
# Pose3
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose3:
    """Rigid transform: ``p_out = R @ p_in + t``.

    Used both as an absolute pose (local frame to world) and as a relative
    motion between two frames.
    """

    q: np.ndarray  # unit quaternion [w, x, y, z]
    t: np.ndarray  # translation, meters

    def __post_init__(self):
        q = quat_normalize(np.asarray(self.q, dtype=np.float64))
        t = np.asarray(self.t, dtype=np.float64).reshape(3).copy()
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite translation")
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    # constructors ----------------------------------------------------------

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @staticmethod
    def from_matrix(R: np.ndarray, t: np.ndarray) -> "Pose3":
        return Pose3(matrix_to_quat(R), t)

    @staticmethod
    def from_yaw(yaw: float, t=(0.0, 0.0, 0.0)) -> "Pose3":
        return Pose3(quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw), np.asarray(t, dtype=np.float64))

    @staticmethod
    def from_euler_zyx(rx: float, ry: float, rz: float, t=(0.0, 0.0, 0.0)) -> "Pose3":
        return Pose3(matrix_to_quat(euler_zyx_to_matrix(rx, ry, rz)), np.asarray(t, dtype=np.float64))

    # algebra ----------------------------------------------------------------

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation()
        T[:3, 3] = self.t
        return T

    def compose(self, other: "Pose3") -> "Pose3":
        q = quat_normalize(quat_multiply(self.q, other.q))
        t = self.apply_one(other.t)
        return Pose3(q, t)

    def inverse(self) -> "Pose3":
        qc = quat_conjugate(self.q)
        R_inv = quat_to_matrix(qc)
        return Pose3(qc, -(R_inv @ self.t))

    def between(self, other: "Pose3") -> "Pose3":
        """Relative transform ``self^-1 o other``."""
        return self.inverse().compose(other)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation().T + self.t

    def apply_one(self, point: np.ndarray) -> np.ndarray:
        return self.rotation() @ np.asarray(point, dtype=np.float64) + self.t

    def rotation_angle(self) -> float:
        """Geodesic distance of the rotation from identity, radians."""
        return float(np.linalg.norm(quat_to_rotvec(self.q)))

    def yaw(self) -> float:
        _, _, rz = matrix_to_euler_zyx(self.rotation())
        return rz

    def __repr__(self) -> str:  # compact, debugger-friendly
        return f"Pose3(q={np.round(self.q, 6).tolist()}, t={np.round(self.t, 6).tolist()})"


def pose_error(a: Pose3, b: Pose3) -> tuple[float, float]:
    """(geodesic rotation angle, Euclidean translation distance) of a^-1 o b."""
    d = a.between(b)
    return d.rotation_angle(), float(np.linalg.norm(d.t))


# ---------------------------------------------------------------------------
# se(3) log / exp / adjoint, tangent ordering [rho(3), phi(3)]
# ---------------------------------------------------------------------------

def _so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(phi)
    W = skew(phi)
    if angle < 1e-8:
        return np.eye(3) - 0.5 * W + W @ W / 12.0
    half = 0.5 * angle
    cot = half / math.tan(half)
    return np.eye(3) - 0.5 * W + (1.0 - cot) / (angle * angle) * (W @ W)


def _so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(phi)
    W = skew(phi)
    if angle < 1e-8:
        return np.eye(3) + 0.5 * W + W @ W / 6.0
    a2 = angle * angle
    return (np.eye(3)
            + (1.0 - math.cos(angle)) / a2 * W
            + (angle - math.sin(angle)) / (a2 * angle) * (W @ W))


def se3_log(p: Pose3) -> np.ndarray:
    """Logarithm map, 6-vector ``[rho, phi]``; zero iff p is the identity."""
    phi = quat_to_rotvec(p.q)
    rho = _so3_left_jacobian_inv(phi) @ p.t
    return np.concatenate([rho, phi])


def se3_exp(xi: np.ndarray) -> Pose3:
    xi = np.asarray(xi, dtype=np.float64)
    rho, phi = xi[:3], xi[3:]
    return Pose3(rotvec_to_quat(phi), _so3_left_jacobian(phi) @ rho)


def se3_adjoint(p: Pose3) -> np.ndarray:
    R = p.rotation()
    A = np.zeros((6, 6))
    A[:3, :3] = R
    A[:3, 3:] = skew(p.t) @ R
    A[3:, 3:] = R
    return A


# ---------------------------------------------------------------------------
# PointCloud
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointCloud:
    """A set of 3D points (meters) tagged with the frame they live in."""

    points: np.ndarray  # (N, 3)
    frame: str = "local"

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("non-finite point coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, pose: Pose3, frame: str | None = None) -> "PointCloud":
        return PointCloud(pose.apply(self.points), frame if frame is not None else self.frame)

    @staticmethod
    def empty(frame: str = "local") -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), frame)
