"""Margin-gated DAgger: the learner flies while it stays near the global trajectory."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from racenav.expert import expert_action
from racenav.global_planner import GlobalTrajectory, nearest_point
from racenav.harness.track import Track
from racenav.perception.dataset import Dataset, DatasetBuilder, concat
from racenav.perception.net import DEFAULT_GAMMA, RegressorNet, train
from racenav.perception.render import render_observation
from racenav.policies import ExpertPolicy, perception_goal
from racenav.sim import FlightLoop, SimConfig
from racenav.vehicle import QuadState, state_on_trajectory

EPS_START = 0.5
EPS_INCREMENT = 0.5
INTERVENTION_THRESHOLD = 50
ROUND_DURATION = 40.0


def gate_allows_network(distance, eps):
    """The learner's action is executed only inside the margin."""
    return distance < eps


def dagger_schedule(eps, intervention_count, completed, increment=EPS_INCREMENT,
                    threshold=INTERVENTION_THRESHOLD):
    """Widen the margin once the learner needs little help and finishes laps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if intervention_count < threshold and completed:
        return eps + increment
    return eps


@dataclass
class RoundResult:
    data: Dataset
    expert_action_count: int
    n_ticks: int
    gates_passed: int
    crashed: bool
    completed: bool


def random_start(traj: GlobalTrajectory, rng) -> QuadState:
    """In-flight state on the trajectory at a random time.

    The time is drawn from the middle of a random segment so the vehicle
    never starts inside a gate frame; velocity and attitude match the
    trajectory there.
    """
    k = int(rng.integers(traj.nseg))
    t0 = traj.knot_times[k] + rng.uniform(0.3, 0.7) * traj.durations[k]
    return state_on_trajectory(traj, t0)


def dagger_round(net: RegressorNet | None, traj: GlobalTrajectory, track: Track, eps: float,
                 duration: float = ROUND_DURATION, seed: int = 0,
                 config: SimConfig = SimConfig(), start: QuadState | None = None) -> RoundResult:
    """One data-collection flight; every perception tick yields a labeled sample.

    ``net=None`` lets the expert fly throughout (every tick counts as an
    intervention). A crash ends the round early and keeps the samples.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = np.random.default_rng(seed)
    if start is None:
        start = random_start(traj, rng)
    near = nearest_point(traj, start.position)
    knot_t = traj.knot_times[traj.gate_knots]
    first_gate = int(np.searchsorted(knot_t, near.t_star, side="right"))
    loop = FlightLoop(track, start, config, next_gate=first_gate)
    expert = ExpertPolicy(traj, track.waypoints())
    builder = DatasetBuilder()
    v_max = traj.v_max_achieved
    n_ticks = int(round(duration * config.perception_hz))
    interventions = 0
    for _ in range(n_ticks):
        state = loop.state
        label = expert.label(loop)
        obs = render_observation(config.camera, state, track, loop.time, config.render)
        builder.add(obs, label, np.concatenate([[loop.time], loop.vec]))
        if net is not None and gate_allows_network(label.distance, eps):
            x, v = net.predict(obs)
            p_goal, v_des = perception_goal(config.camera, state, x, v, v_max, config.horizon)
        else:
            p_goal, v_des = expert_action(label, traj)
            interventions += 1
        loop.set_goal(p_goal, v_des)
        loop.advance()
        if loop.crashed:
            break
    completed = (not loop.crashed) and loop.gates_passed >= track.n_gates
    return RoundResult(builder.build(split_seed=seed, height=config.render.height,
                                     width=config.render.width),
                       interventions, len(builder), loop.gates_passed, loop.crashed, completed)


@dataclass(frozen=True)
class DaggerConfig:
    rounds: int = 6
    duration: float = ROUND_DURATION
    epochs: int = 10
    final_epochs: int = 40
    lr: float = 0.01
    gamma: float = DEFAULT_GAMMA
    batch_size: int = 64
    hidden: tuple = (64, 32)
    activation: str = "tanh"
    layouts: int = 1  # >1: each round flies a perturbed static copy of the track
    perturb_scale: float = 1.3
    eps_start: float = EPS_START
    eps_increment: float = EPS_INCREMENT
    intervention_threshold: int = INTERVENTION_THRESHOLD
    seed: int = 0


@dataclass
class DaggerHistory:
    eps: list = field(default_factory=list)
    interventions: list = field(default_factory=list)
    completed: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    losses: list = field(default_factory=list)


def run_dagger(track: Track, cfg: DaggerConfig = DaggerConfig(),
               config: SimConfig = SimConfig(), plan=None, log=None):
    """Expert round, then alternating train / gated-collection rounds.

    Data is aggregated over all rounds. With ``layouts > 1`` round ``k``
    flies layout ``k mod layouts``; layout 0 is the unperturbed track and the
    others are static perturbations. Returns ``(net, dataset, history)``.
    """
    from racenav.harness.race import plan_track
    plan = plan_track if plan is None else plan
    rng = np.random.default_rng(cfg.seed)
    base = track.static()
    layouts = [base]
    for _ in range(max(cfg.layouts, 1) - 1):
        layouts.append(base.perturbed(rng, cfg.perturb_scale))
    trajs = [plan(lay) for lay in layouts]

    sizes = (config.render.n_pixels, *cfg.hidden, 3)
    net = RegressorNet(sizes, cfg.activation, seed=cfg.seed)
    hist = DaggerHistory()
    parts = []
    eps = cfg.eps_start
    for k in range(cfg.rounds):
        li = k % len(layouts)
        use_net = None if k == 0 else net
        res = dagger_round(use_net, trajs[li], layouts[li], eps, cfg.duration,
                           seed=int(rng.integers(2**31)), config=config)
        parts.append(res.data)
        hist.eps.append(eps)
        hist.interventions.append(res.expert_action_count)
        hist.completed.append(res.completed)
        data = concat(parts, split_seed=cfg.seed)
        hist.samples.append(len(data))
        tr = train(net, data, cfg.epochs, cfg.lr, seed=cfg.seed + k, gamma=cfg.gamma,
                   batch_size=cfg.batch_size)
        net = tr.net
        hist.losses.append(tr.losses[-1])
        if k > 0:
            eps = dagger_schedule(eps, res.expert_action_count, res.completed,
                                  cfg.eps_increment, cfg.intervention_threshold)
        if log is not None:
            log(f"round {k}: layout {li} eps {hist.eps[-1]:.1f} interventions "
                f"{res.expert_action_count}/{res.n_ticks} gates {res.gates_passed} "
                f"completed {res.completed} samples {len(data)} loss {tr.losses[-1]:.4f}")
    data = concat(parts, split_seed=cfg.seed)
    if cfg.final_epochs:
        tr = train(net, data, cfg.final_epochs, cfg.lr, seed=cfg.seed + cfg.rounds,
                   gamma=cfg.gamma, batch_size=cfg.batch_size)
        net = tr.net
        hist.losses.append(tr.losses[-1])
    return net, data, hist
