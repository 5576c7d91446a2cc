"""Command-line interface: plan, collect, train, race, sweep, eval.

Exit codes: 0 success, 2 configuration error, 3 race crashed before the
first gate.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from racenav.errors import ConfigError, RacenavError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EARLY_CRASH = 3


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _track(args):
    from racenav.harness.track import load_track
    track = load_track(args.track)
    if getattr(args, "v_max_track", None):
        track = replace(track, v_max=args.v_max_track)
    return track


# -- subcommands -----------------------------------------------------------

def cmd_plan(args, sim, dag):
    from racenav.global_planner import export_csv, feasibility_check
    from racenav.harness.race import plan_track
    track = _track(args)
    traj = plan_track(track)
    rep = feasibility_check(traj)
    export_csv(traj, args.out / "trajectory.csv", args.rate)
    info = {"track": track.name, "period": float(traj.period), "length": float(traj.length),
            "max_thrust": float(rep.max_thrust), "max_body_rate": float(rep.max_body_rate),
            "max_speed": float(rep.max_speed), "v_max": track.v_max}
    _write_json(args.out / "plan.json", info)
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def _load_net(path):
    from racenav.perception.net import RegressorNet
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"checkpoint not found: {p}")
    try:
        return RegressorNet.load(p)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load checkpoint {p}: {exc}") from exc


def cmd_collect(args, sim, dag):
    from racenav.harness.race import plan_track
    from racenav.perception.dagger import dagger_round
    from racenav.perception.dataset import concat
    track = _track(args)
    net = _load_net(args.checkpoint) if args.checkpoint else None
    rng = np.random.default_rng(args.seed)
    parts, interventions = [], []
    for k in range(args.rounds):
        lay = track.static() if k % args.layouts == 0 else track.perturbed(rng)
        res = dagger_round(net, plan_track(lay), lay, args.eps, args.duration,
                           seed=int(rng.integers(2**31)), config=sim)
        parts.append(res.data)
        interventions.append(res.expert_action_count)
        print(f"round {k}: {res.n_ticks} samples, {res.expert_action_count} expert actions, "
              f"{res.gates_passed} gates, crashed={res.crashed}")
    data = concat(parts, split_seed=args.seed)
    data.save(args.out / "dataset.npz")
    _write_json(args.out / "collect.json", {"samples": len(data), "interventions": interventions})
    return EXIT_OK


def cmd_train(args, sim, dag):
    from racenav.perception.dagger import run_dagger
    from racenav.perception.dataset import Dataset
    from racenav.perception.net import RegressorNet, evaluate, train
    overrides = {k: v for k, v in {
        "epochs": args.epochs, "lr": args.lr, "gamma": args.gamma, "rounds": args.rounds,
        "layouts": args.layouts, "final_epochs": args.final_epochs, "eps_start": args.eps_start,
        "eps_increment": args.eps_increment, "batch_size": args.batch_size,
        "intervention_threshold": args.intervention_threshold}.items() if v is not None}
    dag = replace(dag, seed=args.seed, **overrides)
    report = {"gamma": dag.gamma, "lr": dag.lr, "seed": dag.seed}
    if args.data:
        try:
            data = Dataset.load(args.data)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load dataset {args.data}: {exc}") from exc
        train_set, held = data.split(args.held_out)
        net = (_load_net(args.checkpoint) if args.checkpoint else
               RegressorNet((sim.render.n_pixels, *dag.hidden, 3), dag.activation, seed=dag.seed))
        res = train(net, train_set, dag.epochs, dag.lr, seed=dag.seed, gamma=dag.gamma,
                    batch_size=dag.batch_size)
        net = res.net
        report.update(losses=res.losses,
                      held_out_loss=evaluate(net, held, dag.gamma) if len(held) else None)
    else:
        track = _track(args)
        net, data, hist = run_dagger(track, dag, sim, log=print)
        data.save(args.out / "dataset.npz")
        report.update(samples=len(data), eps=hist.eps, interventions=hist.interventions,
                      completed=hist.completed, losses=hist.losses)
    net.save(args.out / "checkpoint.npz")
    _write_json(args.out / "train.json", report)
    print(f"checkpoint written to {args.out / 'checkpoint.npz'}")
    return EXIT_OK


def cmd_race(args, sim, dag):
    from racenav.harness.race import run_race
    track = _track(args)
    if args.amplitude:
        track = track.with_motion(args.amplitude, args.freq, seed=args.seed)
    policy = "expert" if args.policy == "expert" else _load_net(args.policy)
    trace = args.out / "trace.csv" if args.trace else None
    res = run_race(track, policy, args.v_max, args.laps, args.seed, sim, trace)
    if trace is not None:
        res.trace_path = trace.name  # relative, so outputs do not depend on --out
    (args.out / "result.json").write_text(res.to_json())
    print(res.to_json(), end="")
    if res.crashed and res.gates_passed == 0:
        return EXIT_EARLY_CRASH
    return EXIT_OK


def cmd_sweep(args, sim, dag):
    from racenav.harness.sweep import gamma_sweep, sweep, write_sweep_csv
    track = _track(args)
    chosen = [x is not None for x in (args.speeds, args.amplitudes, args.gammas)]
    if sum(chosen) != 1:
        raise ConfigError("give exactly one of --speeds, --amplitudes, --gammas")
    if args.gammas is not None:
        rows, _ = gamma_sweep(track, args.gammas, replace(dag, seed=args.seed),
                              args.v_max or 8.0, args.runs, args.seed, args.laps, sim)
    else:
        policy = "expert" if args.policy == "expert" else _load_net(args.policy)
        rows, _ = sweep(track, policy, speeds=args.speeds, amplitudes=args.amplitudes,
                        v_max=args.v_max, runs=args.runs, seed=args.seed, target_laps=args.laps,
                        freq_hz=args.freq, config=sim, workers=args.workers)
    write_sweep_csv(rows, args.out / "sweep.csv")
    for r in rows:
        print(f"{r['param']}={r['value']:g}: completion {r['mean_completion']:.3f} "
              f"({r['runs']} runs, {r['crashes']} crashes)")
    return EXIT_OK


def cmd_eval(args, sim, dag):
    from racenav.perception.dataset import Dataset
    from racenav.perception.net import evaluate
    net = _load_net(args.checkpoint)
    try:
        data = Dataset.load(args.data)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load dataset {args.data}: {exc}") from exc
    gamma = dag.gamma if args.gamma is None else args.gamma
    xy, v = net.forward_batch(data.obs)
    out = {"samples": len(data), "gamma": gamma, "loss": evaluate(net, data, gamma),
           "x_rmse": float(np.sqrt(np.mean(np.sum((xy - data.x_g) ** 2, axis=1)))),
           "v_rmse": float(np.sqrt(np.mean((v - data.v_g) ** 2)))}
    _write_json(args.out / "eval.json", out)
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    p = argparse.ArgumentParser(prog="racenav", parents=[common],
                                description="Vision-based drone racing at desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    def track_arg(sp):
        sp.add_argument("--track", default="large_8gate", help="shipped track name or JSON path")
        sp.add_argument("--track-v-max", dest="v_max_track", type=float, default=None,
                        help="override the track's nominal v_max")

    sp = add("plan", cmd_plan, "plan the global trajectory and export it as CSV")
    track_arg(sp)
    sp.add_argument("--rate", type=float, default=100.0, help="CSV sample rate [Hz]")

    sp = add("collect", cmd_collect, "fly data-collection rounds and save a dataset")
    track_arg(sp)
    sp.add_argument("--rounds", type=int, default=1)
    sp.add_argument("--duration", type=float, default=40.0)
    sp.add_argument("--eps", type=float, default=0.5, help="DAgger margin [m]")
    sp.add_argument("--checkpoint", default=None, help="learner checkpoint (default: expert only)")
    sp.add_argument("--layouts", type=int, default=1,
                    help="every round not divisible by this uses a perturbed layout")

    sp = add("train", cmd_train, "train on a dataset (--data) or run DAgger on a track")
    track_arg(sp)
    sp.add_argument("--data", default=None)
    sp.add_argument("--checkpoint", default=None, help="warm-start checkpoint for --data")
    sp.add_argument("--held-out", type=float, default=0.2)
    for flag, typ in (("--epochs", int), ("--lr", float), ("--gamma", float),
                      ("--batch-size", int), ("--rounds", int), ("--layouts", int),
                      ("--final-epochs", int), ("--eps-start", float),
                      ("--eps-increment", float), ("--intervention-threshold", int)):
        sp.add_argument(flag, type=typ, default=None)

    sp = add("race", cmd_race, "race a policy and write result JSON (and trace CSV)")
    track_arg(sp)
    sp.add_argument("--policy", default="expert", help="'expert' or a checkpoint path")
    sp.add_argument("--v-max", type=float, default=None)
    sp.add_argument("--laps", type=int, default=5)
    sp.add_argument("--amplitude", type=float, default=0.0, help="gate motion multiplier")
    sp.add_argument("--freq", type=float, default=0.25, help="gate motion frequency [Hz]")
    sp.add_argument("--trace", action="store_true", help="write trace.csv")

    sp = add("sweep", cmd_sweep, "race a grid of speeds, amplitudes or loss weights")
    track_arg(sp)
    sp.add_argument("--policy", default="expert")
    sp.add_argument("--speeds", type=_floats, default=None)
    sp.add_argument("--amplitudes", type=_floats, default=None)
    sp.add_argument("--gammas", type=_floats, default=None)
    sp.add_argument("--v-max", type=float, default=None)
    sp.add_argument("--runs", type=int, default=10)
    sp.add_argument("--laps", type=int, default=5)
    sp.add_argument("--freq", type=float, default=0.25)
    sp.add_argument("--workers", type=int, default=1)

    sp = add("eval", cmd_eval, "loss of a checkpoint on a dataset")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--gamma", type=float, default=None)
    return p


def main(argv=None):
    from racenav.config import load_config
    args = build_parser().parse_args(argv)
    args.seed = getattr(args, "seed", 0)
    args.out = Path(getattr(args, "out", "."))
    try:
        sim, dag = load_config(getattr(args, "config", None))
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args, sim, dag)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RacenavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
