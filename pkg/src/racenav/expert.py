"""Privileged expert: labels from ground-truth state and the global trajectory."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from racenav.geom import CameraModel, project_point
from racenav.global_planner import GlobalTrajectory, goal_at_distance, nearest_point
from racenav.local_planner import prediction_horizon_train

FLAG_OUT_OF_FOV = 1
FLAG_SATURATED = 2


@dataclass(frozen=True)
class ExpertLabel:
    x_g: np.ndarray
    v_g: float
    p_g: np.ndarray
    d_train: float
    t_star: float
    distance: float  # vehicle to its closest point on the trajectory
    flags: int = 0

    @property
    def out_of_fov(self):
        return bool(self.flags & FLAG_OUT_OF_FOV)


class ExpertAction(NamedTuple):
    p_g: np.ndarray
    v_des: float


def gate_distances(traj: GlobalTrajectory, gate_centers, t_star, position):
    """Euclidean distance to the last passed and next gate along ``traj``.

    The gate sequence is read off the trajectory's knot times, so no race
    bookkeeping is needed. Missing neighbours (open ends) are infinite.
    """
    knot_t = traj.knot_times[traj.gate_knots]
    n = len(knot_t)
    nxt = int(np.searchsorted(knot_t, t_star, side="right"))
    last = nxt - 1
    if traj.closed:
        nxt %= n
        last %= n
    position = np.asarray(position)
    s_next = np.linalg.norm(gate_centers[nxt] - position) if nxt < n else math.inf
    s_last = np.linalg.norm(gate_centers[last] - position) if last >= 0 else math.inf
    return float(s_last), float(s_next)


def expert_label(s, traj: GlobalTrajectory, cam: CameraModel, gate_centers, d_min: float = 1.5,
                 hint_t: float | None = None) -> ExpertLabel:
    """Goal direction and normalized speed the perception should output.

    ``gate_centers`` is an (n_gates, 3) array or a Track; ``s`` a QuadState.
    Goals outside the field of view are clamped onto the image box and
    flagged rather than dropped.
    """
    if hasattr(gate_centers, "waypoints"):
        gate_centers = gate_centers.waypoints()
    gate_centers = np.asarray(gate_centers, dtype=np.float64)
    pos = np.asarray(s.position, dtype=np.float64)
    near = nearest_point(traj, pos, hint_t)
    s_last, s_next = gate_distances(traj, gate_centers, near.t_star, pos)
    d_train = prediction_horizon_train(s_last, s_next, d_min)
    goal = goal_at_distance(traj, near.t_star, d_train)
    p_body = s.rotation.T @ (goal.position - pos)
    proj = project_point(cam, p_body)
    flags = 0 if proj.visible else FLAG_OUT_OF_FOV
    if goal.saturated:
        flags |= FLAG_SATURATED
    speed = float(np.linalg.norm(traj.eval(near.t_star, 1)))
    v_g = min(1.0, max(0.0, speed / traj.v_max_achieved))
    return ExpertLabel(proj.x, v_g, goal.position, d_train, near.t_star, near.distance, flags)


def expert_action(label: ExpertLabel, traj: GlobalTrajectory) -> ExpertAction:
    return ExpertAction(np.asarray(label.p_g, dtype=np.float64), label.v_g * traj.v_max_achieved)
