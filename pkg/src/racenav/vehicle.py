"""Quadrotor rigid-body simulation and the cascade tracking controller.

The vehicle is commanded in mass-normalized collective thrust and body
rates. Actual body rates follow the command through a first-order lag; there
is no drag and no rotor model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from racenav import kernels
from racenav.errors import SingularThrustError, StateError
from racenav.geom import matrix_to_quat, quat_to_matrix, yaw_of

GRAVITY = kernels.GRAVITY
MAX_SUBSTEP = 0.005
YAW_HOLD_SPEED = 0.2


@dataclass(frozen=True)
class QuadState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    body_rates: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0

    def to_vector(self):
        return np.concatenate([self.position, self.velocity, self.orientation, self.body_rates])

    @classmethod
    def from_vector(cls, vec, time=0.0):
        vec = np.asarray(vec, dtype=np.float64)
        return cls(vec[0:3].copy(), vec[3:6].copy(), vec[6:10].copy(), vec[10:13].copy(), float(time))

    @property
    def rotation(self):
        return quat_to_matrix(self.orientation)

    @property
    def yaw(self):
        return yaw_of(self.orientation)


@dataclass(frozen=True)
class Command:
    collective_thrust: float
    body_rates_cmd: np.ndarray


@dataclass(frozen=True)
class ControllerGains:
    kp: float = 10.0
    kd: float = 6.0
    katt: float = 8.0
    rate_limit: float = 6.0
    thrust_max: float = 40.0
    rate_lag: float = 0.03
    max_tilt: float = 0.0  # radians; 0 disables the tilt limit


def step_dynamics(s: QuadState, u: Command, dt: float, rate_lag: float = 0.03) -> QuadState:
    """Advance the state by ``dt`` with the command held (RK4).

    Steps longer than 5 ms are split into equal sub-steps. ``rate_lag = 0``
    makes the body rates follow the command instantly.
    """
    vec = s.to_vector()
    rates = np.asarray(u.body_rates_cmd, dtype=np.float64)
    if not (np.all(np.isfinite(vec)) and np.all(np.isfinite(rates))
            and math.isfinite(u.collective_thrust) and math.isfinite(dt)):
        raise StateError("non-finite state or command")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = max(1, int(math.ceil(dt / MAX_SUBSTEP - 1e-9)))
    h = dt / n
    for _ in range(n):
        vec = kernels.rk4_step(vec, float(u.collective_thrust), rates[0], rates[1], rates[2],
                               h, float(rate_lag))
    if not np.all(np.isfinite(vec)):
        raise StateError("integration produced non-finite state")
    return QuadState.from_vector(vec, s.time + dt)


def _duration(seg):
    d = getattr(seg, "duration", None)
    return seg.period if d is None else d


def reference(seg, t):
    t = min(max(t, 0.0), _duration(seg))
    return np.stack([np.asarray(seg.eval(t, k), dtype=np.float64) for k in range(4)])


def yaw_policy(s: QuadState, seg, t_seg: float = 0.0, yaw_prev: float | None = None) -> float:
    """Heading along the horizontal reference velocity.

    Below 0.2 m/s of horizontal speed the previous yaw (by default the
    vehicle's current yaw) is kept.
    """
    v = np.asarray(seg.eval(min(max(t_seg, 0.0), _duration(seg)), 1))
    prev = s.yaw if yaw_prev is None else yaw_prev
    return float(kernels.yaw_from_velocity(v[0], v[1], prev, YAW_HOLD_SPEED))


def track_segment(s: QuadState, seg, t_seg: float, gains: ControllerGains = ControllerGains(),
                  yaw_prev: float | None = None) -> Command:
    """Thrust and body-rate command tracking ``seg`` at local time ``t_seg``.

    ``seg`` is anything exposing ``eval(t, order)`` and a duration (a
    MinJerkSegment or a GlobalTrajectory).
    """
    ref = reference(seg, t_seg)
    yaw = float(kernels.yaw_from_velocity(ref[1, 0], ref[1, 1],
                                          s.yaw if yaw_prev is None else yaw_prev,
                                          YAW_HOLD_SPEED))
    thrust, wx, wy, wz, status = kernels.control_law(
        s.to_vector(), ref, yaw, gains.kp, gains.kd, gains.katt, gains.rate_limit,
        gains.thrust_max, gains.max_tilt)
    if status == kernels.STATUS_SINGULAR_THRUST:
        raise SingularThrustError("desired specific force below 0.1 m/s^2")
    return Command(float(thrust), np.array([wx, wy, wz]))


def hover_state(position, yaw=0.0, time=0.0) -> QuadState:
    return QuadState(np.asarray(position, dtype=np.float64),
                     orientation=np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)]),
                     time=time)


def with_time(s: QuadState, t: float) -> QuadState:
    return replace(s, time=t)


def flat_attitude(acc, yaw) -> np.ndarray:
    """Quaternion whose thrust axis produces ``acc`` at heading ``yaw``."""
    z = np.asarray(acc, dtype=np.float64) + np.array([0.0, 0.0, GRAVITY])
    z /= np.linalg.norm(z)
    y = np.cross(z, [math.cos(yaw), math.sin(yaw), 0.0])
    y /= np.linalg.norm(y)
    return matrix_to_quat(np.column_stack([np.cross(y, z), y, z]))


def state_on_trajectory(traj, t, speed_scale=1.0, time=0.0) -> QuadState:
    """In-flight state on ``traj`` at ``t``, optionally re-timed.

    ``speed_scale`` multiplies the velocity (and the acceleration by its
    square, as a uniform time scaling would); the heading follows the
    velocity.
    """
    v = traj.eval(t, 1) * speed_scale
    a = traj.eval(t, 2) * speed_scale ** 2
    yaw = math.atan2(v[1], v[0])
    return QuadState(traj.eval(t).copy(), v, flat_attitude(a, yaw), time=time)
