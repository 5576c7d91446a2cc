"""Parameter sweeps over races: speeds, gate-motion amplitudes, loss weights."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from racenav.harness.race import DEFAULT_LAPS, run_race
from racenav.harness.track import DEFAULT_FREQ_HZ, Track
from racenav.sim import SimConfig

SWEEP_COLUMNS = ["param", "value", "runs", "mean_completion", "std_completion",
                 "crashes", "mean_gates_passed", "mean_lap_time"]


def race_seeds(seed, n):
    """``n`` distinct race seeds derived from one sweep seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)]


def _one(job):
    track, policy, v_max, amp, freq, laps, seed, config = job
    if amp is not None:
        track = track.with_motion(amp, freq, seed=seed)
    return run_race(track, policy, v_max, laps, seed, config)


def _aggregate(param, value, results):
    cr = np.array([r.completion_rate for r in results])
    laps = [t for r in results for t in r.lap_times]
    return {"param": param, "value": float(value), "runs": len(results),
            "mean_completion": float(cr.mean()), "std_completion": float(cr.std()),
            "crashes": int(sum(r.crashed for r in results)),
            "mean_gates_passed": float(np.mean([r.gates_passed for r in results])),
            "mean_lap_time": float(np.mean(laps)) if laps else float("nan")}


def sweep(track: Track, policy="expert", *, speeds=None, amplitudes=None, v_max=None,
          runs: int = 10, seed: int = 0, target_laps: int = DEFAULT_LAPS,
          freq_hz: float = DEFAULT_FREQ_HZ, config: SimConfig = SimConfig(), workers: int = 1):
    """Race a grid of speeds or gate-motion amplitudes; one aggregate row per point.

    Exactly one of ``speeds`` and ``amplitudes`` is given. Amplitude sweeps
    fly at ``v_max`` (default: the track's) and draw the gate phases from the
    race seed. Returns ``(rows, results)`` where ``results[i]`` lists the
    RaceResults behind ``rows[i]``.
    """
    if (speeds is None) == (amplitudes is None):
        raise ValueError("give exactly one of speeds or amplitudes")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if speeds is not None:
        param, values = "v_max", list(speeds)
    else:
        param, values = "amplitude", list(amplitudes)
    seeds = race_seeds(seed, len(values) * runs)
    jobs = []
    for i, val in enumerate(values):
        for k in range(runs):
            s = seeds[i * runs + k]
            if param == "v_max":
                jobs.append((track, policy, float(val), None, freq_hz, target_laps, s, config))
            else:
                jobs.append((track, policy, v_max, float(val), freq_hz, target_laps, s, config))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            flat = list(ex.map(_one, jobs))
    else:
        flat = [_one(j) for j in jobs]
    results = [flat[i * runs:(i + 1) * runs] for i in range(len(values))]
    rows = [_aggregate(param, v, r) for v, r in zip(values, results)]
    return rows, results


def gamma_sweep(track: Track, gammas, dagger_cfg=None, v_max: float = 8.0, runs: int = 10,
                seed: int = 0, target_laps: int = DEFAULT_LAPS, config: SimConfig = SimConfig(),
                log=None):
    """Train one policy per loss weight and race each at ``v_max``."""
    from dataclasses import replace

    from racenav.perception.dagger import DaggerConfig, run_dagger
    dagger_cfg = DaggerConfig() if dagger_cfg is None else dagger_cfg
    rows, results = [], []
    seeds = race_seeds(seed, len(gammas) * runs)
    for i, g in enumerate(gammas):
        net, _, _ = run_dagger(track, replace(dagger_cfg, gamma=float(g)), config, log=log)
        res = [run_race(track, net, v_max, target_laps, s, config)
               for s in seeds[i * runs:(i + 1) * runs]]
        rows.append(_aggregate("gamma", g, res))
        results.append(res)
    return rows, results


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("%.9g" % r[k]) if isinstance(r[k], float) else r[k]
                        for k in SWEEP_COLUMNS})
