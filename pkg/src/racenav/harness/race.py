"""Race execution and the task-completion metric."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from racenav.errors import ConfigError
from racenav.geom import quat_from_yaw, quat_mul
from racenav.global_planner import FeasibilityLimits, GlobalTrajectory, plan_min_snap
from racenav.harness.track import Track, track_to_dict
from racenav.perception.net import RegressorNet
from racenav.policies import ExpertPolicy, LearnedPolicy
from racenav.sim import TRACE_HEADER, FlightLoop, SimConfig
from racenav.vehicle import QuadState, state_on_trajectory

DEFAULT_LAPS = 5
TIMEOUT_FACTOR = 3.0
START_POS_SIGMA = 0.1
START_YAW_SIGMA = 0.05

_PLAN_CACHE: dict = {}


@dataclass
class RaceResult:
    gates_passed: int
    laps_completed: int
    crashed: bool
    completion_rate: float
    lap_times: list
    trace_path: str | None = None
    crash_reason: str | None = None
    sim_time: float = 0.0
    seed: int = 0
    v_max: float = 0.0
    policy: str = ""
    track: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def completion_rate(gates_passed, target_laps, gates_per_lap):
    return min(1.0, gates_passed / float(target_laps * gates_per_lap))


def plan_track(track: Track) -> GlobalTrajectory:
    """Feasible minimum-snap loop through the static gate centers (cached)."""
    key = json.dumps(track_to_dict(track.static()), sort_keys=True)
    traj = _PLAN_CACHE.get(key)
    if traj is None:
        wp = track.waypoints()
        traj = plan_min_snap(wp, FeasibilityLimits(v_max=track.v_max), closed=track.closed,
                             gate_knots=np.arange(len(wp)))
        _PLAN_CACHE[key] = traj
    return traj


def start_state(traj: GlobalTrajectory, v_max: float, rng=None) -> QuadState:
    """Flying start halfway along the segment leading into gate 0.

    The vehicle moves along the trajectory with its speed rescaled to
    ``v_max``. With ``rng`` the position and heading get small Gaussian
    perturbations.
    """
    t0 = traj.period - 0.5 * traj.durations[-1] if traj.closed else 0.0
    s = state_on_trajectory(traj, t0, min(1.0, v_max / traj.v_max_achieved))
    if rng is None:
        return s
    dq = quat_from_yaw(rng.normal(0.0, START_YAW_SIGMA))
    return replace(s, position=s.position + rng.normal(0.0, START_POS_SIGMA, size=3),
                   orientation=quat_mul(dq, s.orientation))


def make_policy(policy, track, traj):
    """Accept "expert", a RegressorNet, a checkpoint path, or a policy object."""
    if isinstance(policy, str) and policy == "expert":
        return ExpertPolicy(traj, track.waypoints())
    if isinstance(policy, RegressorNet):
        return LearnedPolicy(policy)
    if isinstance(policy, (str, Path)):
        p = Path(policy)
        if not p.is_file():
            raise ConfigError(f"checkpoint not found: {p}")
        try:
            return LearnedPolicy(RegressorNet.load(p))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load checkpoint {p}: {exc}") from exc
    if hasattr(policy, "act"):
        return policy
    raise ConfigError(f"unsupported policy {policy!r}")


def write_trace(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in rows:
            w.writerow(["%.9g" % x for x in r])


def run_race(track: Track, policy="expert", v_max: float | None = None,
             target_laps: int = DEFAULT_LAPS, seed: int = 0,
             config: SimConfig = SimConfig(), trace_path=None) -> RaceResult:
    """Fly ``target_laps`` laps (or until crash/timeout) and score the run.

    The race times out after three nominal lap times per target lap; a
    timeout is scored like a crash.
    """
    if track.n_gates < 2:
        raise ConfigError("a race needs at least 2 gates")
    v_max = track.v_max if v_max is None else float(v_max)
    if v_max <= 0:
        raise ConfigError("v_max must be positive")
    traj = plan_track(track)
    pol = make_policy(policy, track, traj)
    if hasattr(pol, "reset"):
        pol.reset()
    rng = np.random.default_rng(seed)
    loop = FlightLoop(track, start_state(traj, v_max, rng), config, trace=trace_path is not None)

    lap_nominal = traj.period * max(1.0, traj.v_max_achieved / v_max)
    timeout = TIMEOUT_FACTOR * lap_nominal * target_laps
    target = target_laps * track.n_gates
    timed_out = False
    while True:
        p_goal, v_des = pol.act(loop, v_max)
        loop.set_goal(p_goal, v_des)
        loop.advance()
        if loop.crashed or loop.gates_passed >= target:
            break
        if loop.time >= timeout:
            timed_out = True
            break

    passed = min(loop.gates_passed, target)
    crashed = loop.crashed or timed_out
    if trace_path is not None:
        write_trace(loop.trace_rows, trace_path)
    return RaceResult(
        gates_passed=passed,
        laps_completed=passed // track.n_gates,
        crashed=crashed,
        completion_rate=completion_rate(passed, target_laps, track.n_gates),
        lap_times=[float(t) for t in loop.lap_times[:target_laps]],
        trace_path=None if trace_path is None else str(trace_path),
        crash_reason="timeout" if timed_out else loop.crash_reason,
        sim_time=float(loop.time),
        seed=int(seed),
        v_max=v_max,
        policy=getattr(pol, "name", type(pol).__name__),
        track=track.name,
    )
