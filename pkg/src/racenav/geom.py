"""Polynomials, rigid transforms and the forward-facing camera model.

Frames are right-handed FLU: x forward, y left, z up, for both body and
camera. Quaternions are ``(w, x, y, z)`` and rotate vectors from the local
frame into the parent frame (body -> world, camera -> body).

Normalized image coordinates are angle-linear: the horizontal component is
the azimuth to the point (positive to the right) divided by half the
horizontal field of view, the vertical component the elevation (positive
up) divided by half the vertical field of view. A true pinhole would use
the tangents of those angles instead; angle-linear keeps the image box
exactly equal to the field of view and lets rays reach 90 degrees off-axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from racenav import kernels
from racenav.errors import DegenerateProjectionError, DomainError

# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Polynomial1D:
    """Scalar polynomial on ``[0, duration]`` with ascending-power coefficients."""

    coefficients: np.ndarray
    duration: float

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64).ravel()
        if c.size == 0:
            c = np.zeros(1)
        object.__setattr__(self, "coefficients", c)
        if not self.duration > 0:
            raise DomainError(f"duration must be positive, got {self.duration}")

    def __call__(self, t, order=0):
        return poly_eval(self, t, order)

    def derivative_coefficients(self, order=1):
        c = self.coefficients
        for _ in range(order):
            c = c[1:] * np.arange(1, c.size) if c.size > 1 else np.zeros(1)
        return c


def poly_eval(p: Polynomial1D, t: float, order: int = 0) -> float:
    """Value of the ``order``-th derivative of ``p`` at ``t``.

    Raises DomainError outside ``[0, duration]`` (a relative slack of 1e-12
    absorbs accumulated knot-time round-off).
    """
    if order < 0:
        raise DomainError("derivative order must be >= 0")
    slack = 1e-12 * max(1.0, p.duration)
    if not (-slack <= t <= p.duration + slack):
        raise DomainError(f"t={t} outside [0, {p.duration}]")
    return float(kernels.poly_eval_scalar(p.coefficients, float(t), int(order)))


# ---------------------------------------------------------------------------
# rotations and poses
# ---------------------------------------------------------------------------

def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q)


def quat_to_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return kernels.quat_to_rot(q[0], q[1], q[2], q[3])


def matrix_to_quat(r) -> np.ndarray:
    return kernels.rot_to_quat(np.ascontiguousarray(r, dtype=np.float64))


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)])


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def yaw_of(q) -> float:
    r = quat_to_matrix(q)
    return math.atan2(r[1, 0], r[0, 0])


@dataclass(frozen=True)
class Pose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        q = np.asarray(self.orientation, dtype=np.float64).reshape(4)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-9:
            if n == 0:
                raise ValueError("zero quaternion")
            q = q / n
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def to_parent(self, p_local) -> np.ndarray:
        return self.rotation @ np.asarray(p_local, dtype=np.float64) + self.position

    def to_local(self, p_parent) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p_parent, dtype=np.float64) - self.position)


# ---------------------------------------------------------------------------
# camera
# ---------------------------------------------------------------------------

class Projection(NamedTuple):
    x: np.ndarray
    visible: bool


@dataclass(frozen=True)
class CameraModel:
    """Forward-looking camera. Defaults: 90 deg horizontal, 4:3 aspect."""

    horizontal_fov: float = math.radians(90.0)
    vertical_fov: float = math.radians(67.5)
    body_to_camera: Pose = field(default_factory=Pose)

    def __post_init__(self):
        for name in ("horizontal_fov", "vertical_fov"):
            v = getattr(self, name)
            if not 0.0 < v < math.pi:
                raise ValueError(f"{name} must lie in (0, pi), got {v}")

    def to_camera(self, point_body) -> np.ndarray:
        return self.body_to_camera.to_local(point_body)

    def to_body(self, point_cam) -> np.ndarray:
        return self.body_to_camera.to_parent(point_cam)

    @classmethod
    def uptilted(cls, uptilt: float, **kw) -> "CameraModel":
        """Camera at the body origin pitched up by ``uptilt`` radians."""
        c, s = math.cos(uptilt), math.sin(uptilt)
        r = np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
        return cls(body_to_camera=Pose(np.zeros(3), matrix_to_quat(r)), **kw)


def _angles_to_x(cam, az, el):
    return np.array([az / (cam.horizontal_fov / 2), el / (cam.vertical_fov / 2)])


def project_point(cam: CameraModel, point_body) -> Projection:
    """Normalized image coordinates of a body-frame point.

    ``visible`` is False behind the camera or outside the field of view; the
    returned coordinates are then clamped to the image box.
    """
    pc = cam.to_camera(point_body)
    fwd, left, up = pc
    horiz = math.hypot(fwd, left)
    if horiz == 0.0 and up == 0.0:
        raise DegenerateProjectionError("point coincides with the camera center")
    az = math.atan2(-left, fwd)
    el = math.atan2(up, horiz)
    x = _angles_to_x(cam, az, el)
    visible = bool(fwd > 0.0 and abs(x[0]) <= 1.0 and abs(x[1]) <= 1.0)
    return Projection(np.clip(x, -1.0, 1.0), visible)


def ray_direction(cam: CameraModel, x) -> np.ndarray:
    """Unit ray in the camera frame through normalized coordinates ``x``."""
    az = float(x[0]) * cam.horizontal_fov / 2
    el = float(x[1]) * cam.vertical_fov / 2
    ce = math.cos(el)
    return np.array([ce * math.cos(az), -ce * math.sin(az), math.sin(el)])


def back_project(cam: CameraModel, x, depth: float) -> np.ndarray:
    """Body-frame point on the ray through ``x`` at Euclidean distance ``depth``.

    Distance is measured from the camera origin along the ray (not along the
    optical axis).
    """
    if not depth > 0:
        raise ValueError(f"depth must be positive, got {depth}")
    return cam.to_body(depth * ray_direction(cam, x))


def project_points_batch(cam: CameraModel, pts_cam: np.ndarray) -> np.ndarray:
    """Vectorized angle-linear projection of camera-frame points (no checks)."""
    fwd, left, up = pts_cam[:, 0], pts_cam[:, 1], pts_cam[:, 2]
    az = np.arctan2(-left, fwd)
    el = np.arctan2(up, np.hypot(fwd, left))
    return np.stack([az / (cam.horizontal_fov / 2), el / (cam.vertical_fov / 2)], axis=1)
