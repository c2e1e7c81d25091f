"""Camera-space geometry: back-projection, 9-DoF poses and frame changes.

Conventions: column vectors, right-handed frames, rotations act as ``R @ x``.
Point arrays are ``(N, 3)`` so batched application is ``x @ R.T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

FRAMES = ("camera", "world", "noc")
NOC_HALF = 0.5
SO3_TOL = 1e-6


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from SO(3) via a normalized random quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return quat_to_matrix(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to rotation matrix."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def geodesic_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Angle in radians of the relative rotation ``Ra^T Rb``."""
    cos = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def so3_residuals(R: np.ndarray) -> tuple[float, float]:
    """Return (||R^T R - I||_F, |det R - 1|)."""
    return (
        float(np.linalg.norm(R.T @ R - np.eye(3))),
        float(abs(np.linalg.det(R) - 1.0)),
    )


def is_rotation(R: np.ndarray, tol: float = SO3_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    orth, det = so3_residuals(R)
    return orth <= tol and det <= tol


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError("principal point must lie inside the image")

    def project(self, pts: np.ndarray) -> np.ndarray:
        """Camera-frame points to pixel coordinates (no bounds check)."""
        pts = np.atleast_2d(pts)
        u = self.fx * pts[:, 0] / pts[:, 2] + self.cx
        v = self.fy * pts[:, 1] / pts[:, 2] + self.cy
        return np.stack([u, v], axis=1)


@dataclass(frozen=True)
class CameraExtrinsics:
    """Rigid transform taking camera-frame coordinates to world coordinates."""

    R_cam: np.ndarray = field(default_factory=lambda: np.eye(3))
    t_cam: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.R_cam, dtype=float)
        t = np.asarray(self.t_cam, dtype=float).reshape(3)
        if not is_rotation(R):
            raise InputError("R_cam is not a rotation")
        object.__setattr__(self, "R_cam", R)
        object.__setattr__(self, "t_cam", t)


@dataclass(frozen=True)
class Pose9DoF:
    """Translation (m), per-axis scale and rotation of an object.

    Maps canonical coordinates ``q`` to ``R @ (s * q) + t``.
    """

    t: np.ndarray
    s: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(3)
        s = np.asarray(self.s, dtype=float).reshape(3)
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise InputError("pose contains non-finite values")
        if np.any(s <= 0):
            raise InputError("scale must be positive on every axis")
        if not is_rotation(R):
            raise InputError("R is not a rotation matrix")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "R", R)

    @classmethod
    def identity(cls) -> "Pose9DoF":
        return cls(np.zeros(3), np.ones(3), np.eye(3))

    def to_dict(self) -> dict:
        return {
            "t": self.t.tolist(),
            "s": self.s.tolist(),
            "R": self.R.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose9DoF":
        return cls(np.asarray(d["t"]), np.asarray(d["s"]), np.asarray(d["R"]).reshape(3, 3))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    frame: str = "camera"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InputError(f"points must be (N, 3), got {pts.shape}")
        if len(pts) < 1:
            raise InputError("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise InputError("point cloud contains non-finite coordinates")
        if self.frame not in FRAMES:
            raise InputError(f"unknown frame {self.frame!r}")
        if self.frame == "noc" and np.any(np.abs(pts) > NOC_HALF + 1e-9):
            raise InputError("NOC points must lie inside [-0.5, 0.5]^3")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def _as_points(pts) -> np.ndarray:
    if isinstance(pts, PointCloud):
        return pts.points
    return np.asarray(pts, dtype=float)


def backproject(pixels, depths, intr: CameraIntrinsics) -> PointCloud:
    """Lift pixel/depth pairs into camera-frame 3D points."""
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    depths = np.atleast_1d(np.asarray(depths, dtype=float))
    if pixels.shape != (len(depths), 2):
        raise InputError("pixels must be (M, 2) matching depths (M,)")
    if np.any(~np.isfinite(depths)) or np.any(depths <= 0):
        raise InputError("depths must be positive and finite")
    u, v = pixels[:, 0], pixels[:, 1]
    if np.any((u < 0) | (u >= intr.width) | (v < 0) | (v >= intr.height)):
        raise InputError("pixel outside image bounds")
    x = (u - intr.cx) / intr.fx * depths
    y = (v - intr.cy) / intr.fy * depths
    return PointCloud(np.stack([x, y, depths], axis=1), frame="camera")


def apply_pose(pose: Pose9DoF, pts) -> PointCloud:
    """Map canonical (NOC) points into the camera frame."""
    q = _as_points(pts)
    return PointCloud((q * pose.s) @ pose.R.T + pose.t, frame="camera")


def invert_pose(pose: Pose9DoF, pts) -> np.ndarray:
    """Inverse of :func:`apply_pose`; returns raw canonical coordinates."""
    p = _as_points(pts)
    return ((p - pose.t) @ pose.R) / pose.s


def to_world(pose_cam: Pose9DoF, extr: CameraExtrinsics) -> Pose9DoF:
    return Pose9DoF(
        t=extr.R_cam @ pose_cam.t + extr.t_cam,
        s=pose_cam.s,
        R=extr.R_cam @ pose_cam.R,
    )
