"""Time the hot kernels with numba enabled and with the plain numpy fallback.

    python benchmarks/bench_kernels.py            # compare both modes
    python benchmarks/bench_kernels.py --single   # current mode only

Each mode runs in its own interpreter because the kernel backend is fixed
at import time by RACENAV_DISABLE_NUMBA.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up (includes JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_single(repeat):
    from racenav import _jit, kernels
    from racenav.harness.race import plan_track, run_race, start_state
    from racenav.harness.track import load_track
    from racenav.perception.render import render_observation
    from racenav.sim import SimConfig

    track = load_track("small_4gate")
    traj = plan_track(track)
    cfg, g = SimConfig(), SimConfig().gains
    s = start_state(traj, 8.0).to_vector()
    st = start_state(traj, 8.0)
    seg = np.ascontiguousarray(np.stack([np.r_[s[d], s[3 + d], 0.5, 0.1, -0.02, 0.001]
                                         for d in range(3)]))
    ts = np.linspace(0.0, traj.period, 1000)

    cases = {
        "ppoly_eval_1k": lambda: traj.eval_many(ts, 2),
        "rk4_step": lambda: kernels.rk4_step(s, 12.0, 0.3, -0.2, 0.1, 0.002, 0.03),
        "fly_segment_tick": lambda: kernels.fly_segment(
            s, seg, 0.6, 0.0, 17, cfg.dt, g.kp, g.kd, g.katt, g.rate_limit, g.thrust_max,
            g.rate_lag, 0.0, 0.2, 0.0),
        "render_observation": lambda: render_observation(cfg.camera, st, track, 0.0, cfg.render),
        "expert_race_1lap": lambda: run_race(track, "expert", target_laps=1, seed=0),
    }
    out = {"numba": _jit.USE_NUMBA}
    for name, fn in cases.items():
        reps = 1 if name.endswith("lap") else repeat
        out[name] = _best(fn, reps)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--single", action="store_true", help="benchmark the current mode only")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if args.single:
        print(json.dumps(run_single(args.repeat)))
        return
    res = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, RACENAV_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, __file__, "--single", "--repeat", str(args.repeat)],
                              env=env, capture_output=True, text=True, check=True)
        res[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    print(f"{'kernel':<22}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name in res["numba"]:
        if name == "numba":
            continue
        a, b = res["numba"][name] * 1e3, res["numpy"][name] * 1e3
        print(f"{name:<22}{a:12.3f}{b:12.3f}{b / a:10.1f}x")


if __name__ == "__main__":
    main()
