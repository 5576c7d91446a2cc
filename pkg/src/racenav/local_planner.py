"""Minimum-jerk state-interception segments and their horizon rules.

A segment fixes position, velocity and acceleration at its start and only
the position at its end. Per axis the jerk-optimal path is a quintic whose
third and fourth derivatives vanish at the free end, which gives

    c3 = 10 r / (6 T^3),  c4 = -5 r / (6 T^4),  c5 = r / (6 T^5),
    r  = p_goal - p0 - v0 T - a0 T^2 / 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from racenav import kernels
from racenav.geom import Polynomial1D

V_FLOOR = 0.5
T_MIN = 0.2
T_MAX = 5.0


@dataclass(frozen=True)
class HorizonParams:
    """Test-time planning-length clamp (simulation defaults)."""

    d_min: float = 2.0
    d_max: float = 5.0
    m_d: float = 0.5

    def __post_init__(self):
        if not (0 < self.d_min <= self.d_max):
            raise ValueError("need 0 < d_min <= d_max")
        if not self.m_d > 0:
            raise ValueError("m_d must be positive")


@dataclass(frozen=True)
class MinJerkSegment:
    coeffs: np.ndarray  # (3, 6) ascending powers
    duration: float
    start_p: np.ndarray
    start_v: np.ndarray
    start_a: np.ndarray
    goal: np.ndarray

    @property
    def axes(self):
        return tuple(Polynomial1D(self.coeffs[d], self.duration) for d in range(3))

    def eval(self, t, order=0):
        return np.array([kernels.poly_eval_scalar(self.coeffs[d], float(t), order)
                         for d in range(3)])

    def __call__(self, t, order=0):
        return self.eval(t, order)

    def jerk_cost(self):
        """Exact integral of squared jerk over the segment, summed over axes."""
        T = self.duration
        total = 0.0
        for d in range(3):
            c3, c4, c5 = self.coeffs[d, 3:6]
            # jerk = 6 c3 + 24 c4 t + 60 c5 t^2
            a, b, c = 6 * c3, 24 * c4, 60 * c5
            total += (a * a * T + a * b * T ** 2 + (b * b + 2 * a * c) * T ** 3 / 3
                      + b * c * T ** 4 / 2 + c * c * T ** 5 / 5)
        return total


def min_jerk_segment(p0, v0, a0, goal, T) -> MinJerkSegment:
    """Jerk-optimal quintic from a full start state to a goal position."""
    if not T > 0:
        raise ValueError(f"segment duration must be positive, got {T}")
    p0, v0, a0, goal = (np.asarray(x, dtype=np.float64).reshape(3) for x in (p0, v0, a0, goal))
    r = goal - p0 - v0 * T - 0.5 * a0 * T * T
    coeffs = np.empty((3, 6))
    coeffs[:, 0] = p0
    coeffs[:, 1] = v0
    coeffs[:, 2] = 0.5 * a0
    coeffs[:, 3] = 10.0 * r / (6.0 * T ** 3)
    coeffs[:, 4] = -5.0 * r / (6.0 * T ** 4)
    coeffs[:, 5] = r / (6.0 * T ** 5)
    return MinJerkSegment(coeffs, float(T), p0, v0, a0, goal)


def prediction_horizon_train(s_last: float, s_next: float, d_min: float = 1.5) -> float:
    """Training-time horizon: shortest gate distance, floored at ``d_min``."""
    return max(d_min, min(s_last, s_next))


def planning_length_test(v_des: float, h: HorizonParams = HorizonParams()) -> float:
    """Test-time planning length, linear in desired speed and clamped."""
    return min(h.d_max, max(h.d_min, h.m_d * v_des))


def segment_duration(d: float, v_des: float) -> float:
    if not d > 0:
        raise ValueError("segment length must be positive")
    return min(T_MAX, max(T_MIN, d / max(v_des, V_FLOOR)))
