"""Policies mapping the current flight situation to a goal and speed."""

from __future__ import annotations

import numpy as np

from racenav.expert import expert_label
from racenav.geom import back_project
from racenav.local_planner import planning_length_test
from racenav.perception.render import render_observation


def perception_goal(cam, state, x, v, v_max, horizon):
    """World goal and desired speed from a network output ``(x, v)``.

    The direction is back-projected to the speed-dependent planning length.
    """
    v_des = v_max * float(v)
    d = planning_length_test(v_des, horizon)
    p_body = back_project(cam, x, d)
    return state.position + state.rotation @ p_body, v_des


class ExpertPolicy:
    """Privileged teacher following the global trajectory."""

    name = "expert"

    def __init__(self, traj, gate_centers):
        self.traj = traj
        self.gate_centers = np.asarray(gate_centers, dtype=np.float64)
        self.hint = None
        self.last_label = None

    def reset(self):
        self.hint = None
        self.last_label = None

    def label(self, loop):
        lab = expert_label(loop.state, self.traj, loop.cfg.camera, self.gate_centers,
                           loop.cfg.d_min_train, self.hint)
        self.hint = lab.t_star
        self.last_label = lab
        return lab

    def act(self, loop, v_max):
        lab = self.label(loop)
        return lab.p_g, v_max * lab.v_g


class LearnedPolicy:
    """Image-only policy: render, regress, back-project."""

    name = "learned"

    def __init__(self, net):
        self.net = net
        self.last_obs = None

    def reset(self):
        self.last_obs = None

    def act(self, loop, v_max):
        cfg = loop.cfg
        state = loop.state
        obs = render_observation(cfg.camera, state, loop.track, loop.time, cfg.render)
        self.last_obs = obs
        x, v = self.net.predict(obs)
        return perception_goal(cfg.camera, state, x, v, v_max, cfg.horizon)
