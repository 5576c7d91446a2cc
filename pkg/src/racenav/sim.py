"""Closed-loop flight: perception-rate replanning over a fixed-rate simulation.

Each perception tick a policy supplies a world-frame goal and desired
speed; a fresh minimum-jerk segment replaces the active one and the
controller tracks it at the simulation rate until the next tick. Gate
passes and crashes are detected on every simulation step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from racenav import kernels
from racenav.geom import CameraModel
from racenav.harness.track import CRASH_CLEARANCE, FRAME_WIDTH, Track, crossings, frame_distance
from racenav.local_planner import HorizonParams, min_jerk_segment, segment_duration
from racenav.perception.render import RenderConfig
from racenav.vehicle import YAW_HOLD_SPEED, ControllerGains, QuadState


CAMERA_UPTILT = math.radians(15.0)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.002
    perception_hz: float = 30.0
    gains: ControllerGains = field(default_factory=ControllerGains)
    horizon: HorizonParams = field(default_factory=HorizonParams)
    d_min_train: float = 1.5
    camera: CameraModel = field(default_factory=lambda: CameraModel.uptilted(CAMERA_UPTILT))
    render: RenderConfig = field(default_factory=RenderConfig)
    ground_z: float = 0.05
    clearance: float = CRASH_CLEARANCE
    max_range: float = 150.0


TRACE_HEADER = ["t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
                "wx", "wy", "wz", "thrust", "cmd_wx", "cmd_wy", "cmd_wz",
                "goal_x", "goal_y", "goal_z", "v_des", "gates_passed"]


class FlightLoop:
    def __init__(self, track: Track, state: QuadState, cfg: SimConfig = SimConfig(),
                 trace: bool = False, next_gate: int = 0):
        self.track = track
        self.cfg = cfg
        self.vec = state.to_vector()
        self.step_index = int(round(state.time / cfg.dt))
        self.tick = int(round(state.time * cfg.perception_hz))
        self.yaw = state.yaw
        self.segment = None
        self.seg_t = 0.0
        self.goal = np.full(3, np.nan)
        self.v_des = 0.0
        self.last_cmd = np.zeros(4)
        self.next_gate = int(next_gate) % track.n_gates
        self.gates_passed = 0
        self.lap_times = []
        self._lap_start = self.time
        self.crashed = False
        self.crash_reason = None
        self._origin = track.waypoints().mean(axis=0)
        self._reach = 0.5 * np.hypot(max(g.width for g in track.gates),
                                     max(g.height for g in track.gates)) + FRAME_WIDTH + 1.0
        self.trace_rows = [] if trace else None

    @property
    def time(self):
        return self.step_index * self.cfg.dt

    @property
    def state(self) -> QuadState:
        return QuadState.from_vector(self.vec, self.time)

    def set_goal(self, p_goal, v_des):
        p, v = self.vec[0:3], self.vec[3:6]
        if self.segment is None:
            a0 = np.zeros(3)
        else:
            a0 = self.segment.eval(min(self.seg_t, self.segment.duration), 2)
        p_goal = np.asarray(p_goal, dtype=np.float64)
        d = max(float(np.linalg.norm(p_goal - p)), 1e-3)
        self.segment = min_jerk_segment(p, v, a0, p_goal, segment_duration(d, v_des))
        self.seg_t = 0.0
        self.goal = p_goal
        self.v_des = float(v_des)

    def advance(self):
        """Fly until the next perception tick (or a crash)."""
        cfg, g = self.cfg, self.cfg.gains
        t_next = (self.tick + 1) / cfg.perception_hz
        n = int(round(t_next / cfg.dt)) - self.step_index
        seg = self.segment
        states, cmds, yaw, status, done = kernels.fly_segment(
            self.vec, seg.coeffs, seg.duration, self.seg_t, n, cfg.dt, g.kp, g.kd, g.katt,
            g.rate_limit, g.thrust_max, g.rate_lag, self.yaw, YAW_HOLD_SPEED, g.max_tilt)
        states = states[:done]
        times = (self.step_index + 1 + np.arange(done)) * cfg.dt
        crash_at, reason = self._first_crash(states, times)
        if status != kernels.STATUS_OK and crash_at is None:
            crash_at, reason = done, "controller" if status == kernels.STATUS_SINGULAR_THRUST \
                else "nonfinite"
        limit = done if crash_at is None else crash_at
        prev = np.vstack([self.vec[None, 0:3], states[:-1, 0:3]]) if done else np.zeros((0, 3))
        self._count_passes(prev[:limit], states[:limit, 0:3], times[:limit])

        keep = limit if crash_at is None else min(crash_at + 1, done)
        if keep > 0:
            self.vec = states[keep - 1].copy()
            self.last_cmd = cmds[keep - 1].copy()
        self.step_index += keep
        self.seg_t += keep * cfg.dt
        self.yaw = yaw
        if crash_at is not None:
            self.crashed = True
            self.crash_reason = reason
        else:
            self.tick += 1
        if self.trace_rows is not None:
            self.trace_rows.append(self._trace_row())

    # -- events -----------------------------------------------------------
    def _gate_centers(self, gi, times):
        gate = self.track.gates[gi]
        if gate.motion is None:
            return np.broadcast_to(gate.center, (len(times), 3))
        return gate.center + gate.offset_at(times)

    def _first_crash(self, states, times):
        if len(states) == 0:
            return None, None
        cfg = self.cfg
        pos = states[:, 0:3]
        first = None
        reason = None
        ground = np.nonzero(pos[:, 2] < cfg.ground_z)[0]
        if ground.size:
            first, reason = int(ground[0]), "ground"
        far = np.nonzero(np.linalg.norm(pos - self._origin, axis=1) > cfg.max_range)[0]
        if far.size and (first is None or far[0] < first):
            first, reason = int(far[0]), "out_of_range"
        approx = self.track.centers_at(times[-1])
        near = np.linalg.norm(pos[:, None, :] - approx[None, :, :], axis=2).min(axis=0)
        for gi in np.nonzero(near < self._reach + 2.0)[0]:
            dist = frame_distance(pos, self._gate_centers(gi, times), self.track.gates[gi])
            hit = np.nonzero(dist < cfg.clearance)[0]
            if hit.size and (first is None or hit[0] < first):
                first, reason = int(hit[0]), f"gate_{gi}"
        return first, reason

    def _count_passes(self, prev, cur, times):
        start = 0
        G = self.track.n_gates
        while start < len(cur):
            gi = self.next_gate
            gate = self.track.gates[gi]
            centers = self._gate_centers(gi, times[start:])
            if np.linalg.norm(cur[start:] - centers, axis=1).min() > self._reach:
                return
            hit = np.nonzero(crossings(prev[start:], cur[start:], centers, gate))[0]
            if not hit.size:
                return
            k = start + int(hit[0])
            self.gates_passed += 1
            self.next_gate = (gi + 1) % G
            if self.gates_passed % G == 0:
                self.lap_times.append(float(times[k] - self._lap_start))
                self._lap_start = float(times[k])
            start = k + 1

    def _trace_row(self):
        return [self.time, *self.vec, *self.last_cmd, *self.goal, self.v_des, self.gates_passed]
