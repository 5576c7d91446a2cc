import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from racenav.errors import DivergenceError, ShapeError
from racenav.expert import ExpertLabel
from racenav.geom import CameraModel
from racenav.harness.race import plan_track
from racenav.harness.track import Gate, Track
from racenav.perception.dagger import (DaggerConfig, dagger_round, dagger_schedule,
                                       gate_allows_network, run_dagger)
from racenav.perception.dataset import Dataset, concat
from racenav.perception.net import (DEFAULT_GAMMA, RegressorNet, evaluate, loss, train)
from racenav.perception.render import RenderConfig, render_observation
from racenav.vehicle import QuadState, hover_state

CAM = CameraModel()


def one_gate_track(x=3.0):
    gates = (Gate([x, 0, 2], [1, 0, 0]), Gate([x + 20, 0, 2], [1, 0, 0]))
    return Track("two", gates, closed=False, v_max=5.0)


def random_dataset(n, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(0, 1, (n, 24, 32)), rng.uniform(-0.8, 0.8, (n, 2)),
                   rng.uniform(0.1, 0.9, n), np.zeros(n), np.zeros((n, 14)), seed)


# -- renderer -------------------------------------------------------------

def test_render_empty_scene():
    obs = render_observation(CAM, hover_state([0, 0, 2], yaw=math.pi), one_gate_track())
    assert obs.shape == (24, 32)
    assert not obs.any()


def test_render_centered_gate():
    obs = render_observation(CAM, hover_state([0, 0, 2]), one_gate_track(3.0))
    assert obs.min() >= 0.0 and obs.max() <= 1.0
    mask = obs > 0.2 * obs.max()
    rows, cols = np.nonzero(mask)
    assert abs(rows.mean() - 11.5) < 1.0 and abs(cols.mean() - 15.5) < 1.0
    # outline, not a filled blob: the opening is darker than the frame
    assert obs[12, 16] < 0.7 * obs.max()
    # one connected component (4-neighbourhood flood fill)
    seen = np.zeros_like(mask)
    stack = [(rows[0], cols[0])]
    while stack:
        r, c = stack.pop()
        if 0 <= r < 24 and 0 <= c < 32 and mask[r, c] and not seen[r, c]:
            seen[r, c] = True
            stack += [(r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)]
    assert seen.sum() == mask.sum()


def test_render_deterministic():
    s = QuadState(np.array([0.3, -0.2, 1.9]), orientation=np.array([0.99, 0.05, 0.1, 0.02]))
    a = render_observation(CAM, s, one_gate_track(), 0.4)
    b = render_observation(CAM, s, one_gate_track(), 0.4)
    assert np.array_equal(a, b)


def test_render_dimmer_with_distance():
    near = render_observation(CAM, hover_state([0, 0, 2]), one_gate_track(3.0)).max()
    far = render_observation(CAM, hover_state([0, 0, 2]), one_gate_track(12.0)).max()
    assert far < near


# -- network ----------------------------------------------------------------

@given(st.integers(0, 1000), st.floats(0.1, 50.0))
def test_outputs_bounded_for_any_weights(seed, scale):
    net = RegressorNet(seed=seed)
    for w in net.weights:
        w *= scale
    obs = np.random.default_rng(seed).uniform(-5, 5, (8, 768))
    xy, v = net.forward_batch(obs)
    assert np.all(np.abs(xy) <= 1.0) and np.all((v >= 0.0) & (v <= 1.0))


def test_zero_weights_center_output():
    x, v = RegressorNet().zero_().predict(np.ones((24, 32)))
    np.testing.assert_array_equal(x, [0.0, 0.0])
    assert v == 0.5


def test_forward_deterministic():
    obs = np.random.default_rng(0).uniform(0, 1, (24, 32))
    a, b = RegressorNet(seed=3).predict(obs), RegressorNet(seed=3).predict(obs)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        RegressorNet().predict(np.zeros(10))


def test_loss_examples():
    assert loss(([0, 0], 1.0), ([0.3, 0.4], 0.5), 0.1) == pytest.approx(0.275)
    assert loss(([0.3, 0.4], 0.5), ([0.3, 0.4], 0.5)) == 0.0
    assert loss(([0, 0], 1.0), ([0, 0], 0.0), 0.0) == 0.0
    lab = ExpertLabel(np.array([0.3, 0.4]), 0.5, np.zeros(3), 1.5, 0.0, 0.0, 0)
    assert loss(([0, 0], 1.0), lab, 0.1) == pytest.approx(0.275)
    with pytest.raises(ValueError):
        loss(([0, 0], 1.0), lab, -1.0)


def test_default_gamma():
    assert DEFAULT_GAMMA == 0.1
    assert DaggerConfig().gamma == 0.1


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_gradient_matches_finite_differences(activation):
    rng = np.random.default_rng(7)
    net = RegressorNet((20, 8, 6, 3), activation, seed=2)
    obs = rng.uniform(0, 1, (5, 20))
    xg, vg = rng.uniform(-0.9, 0.9, (5, 2)), rng.uniform(0, 1, 5)
    _, gw, gb = net.loss_and_grad(obs, xg, vg, gamma=0.3)
    h, worst = 1e-6, 0.0
    for _ in range(20):
        li = int(rng.integers(len(net.weights)))
        use_bias = rng.random() < 0.3
        arr, grad = (net.biases[li], gb[li]) if use_bias else (net.weights[li], gw[li])
        idx = tuple(int(rng.integers(n)) for n in arr.shape)
        old = arr[idx]
        arr[idx] = old + h
        lp = net.loss_and_grad(obs, xg, vg, gamma=0.3)[0]
        arr[idx] = old - h
        lm = net.loss_and_grad(obs, xg, vg, gamma=0.3)[0]
        arr[idx] = old
        fd = (lp - lm) / (2 * h)
        worst = max(worst, abs(fd - grad[idx]) / max(abs(fd), abs(grad[idx]), 1e-8))
    assert worst < 1e-4


def test_overfit_ten_samples():
    data = random_dataset(10)
    res = train(RegressorNet(seed=0), data, epochs=500, lr=0.01, seed=0)
    assert res.losses[-1] < 1e-3
    assert evaluate(res.net, data) < 1e-3


def test_zero_epochs_identity():
    net = RegressorNet(seed=1)
    res = train(net, random_dataset(5), epochs=0)
    for a, b in zip(net.weights, res.net.weights):
        assert np.array_equal(a, b)
    assert res.losses == []


def test_divergence_detected():
    with np.errstate(all="ignore"), pytest.raises(DivergenceError):
        train(RegressorNet(activation="relu"), random_dataset(256), epochs=5, lr=1e300)


def test_train_does_not_mutate_input():
    net = RegressorNet(seed=1)
    w0 = net.weights[0].copy()
    train(net, random_dataset(20), epochs=2)
    assert np.array_equal(net.weights[0], w0)


def test_checkpoint_round_trip(tmp_path):
    net = RegressorNet(seed=5)
    net.save(tmp_path / "ck.npz")
    back = RegressorNet.load(tmp_path / "ck.npz")
    obs = np.random.default_rng(0).uniform(0, 1, (24, 32))
    assert back.predict(obs)[1] == net.predict(obs)[1]
    assert back.layer_sizes == (768, 64, 32, 3)


def test_dataset_round_trip(tmp_path):
    d = random_dataset(7, seed=3)
    d.save(tmp_path / "d.npz")
    back = Dataset.load(tmp_path / "d.npz")
    assert len(back) == 7 and back.split_seed == 3
    np.testing.assert_array_equal(back.x_g, d.x_g)
    tr, held = back.split(0.3)
    assert len(tr) + len(held) == 7 and len(held) == 2


def test_dataset_rejects_bad_labels():
    with pytest.raises(ValueError):
        Dataset(np.zeros((1, 24, 32)), [[2.0, 0.0]], [0.5], [0], np.zeros((1, 14)))


# -- DAgger -------------------------------------------------------------------

def test_gate_condition():
    assert gate_allows_network(0.3, 0.5)
    assert not gate_allows_network(0.7, 0.5)


def test_schedule_examples():
    assert dagger_schedule(0.5, 30, True) == 1.0
    assert dagger_schedule(0.5, 80, True) == 0.5
    assert dagger_schedule(1.0, 49, False) == 1.0
    assert dagger_schedule(1.0, 50, True) == 1.0
    with pytest.raises(ValueError):
        dagger_schedule(0.0, 0, True)


def test_expert_round_collects_rate_times_duration(large_track, large_traj):
    res = dagger_round(None, large_traj, large_track, 0.5, duration=40.0, seed=3)
    assert res.n_ticks == 1200 and len(res.data) == 1200
    assert res.expert_action_count == 1200
    assert res.completed and not res.crashed
    assert np.all(np.abs(res.data.x_g) <= 1.0)


def test_network_round_counts_interventions(large_track, large_traj):
    # a random net strays, so the expert takes over part of the time
    res = dagger_round(RegressorNet(seed=0), large_traj, large_track, 0.5, duration=5.0, seed=1)
    assert 0 < res.expert_action_count <= res.n_ticks
    assert len(res.data) == res.n_ticks


def test_crash_ends_round_keeps_samples(large_track, large_traj):
    start = QuadState(np.array([0.0, 0.0, 0.3]), np.array([0.0, 0.0, -8.0]))
    res = dagger_round(None, large_traj, large_track, 0.5, duration=10.0, seed=0, start=start)
    assert res.crashed and not res.completed
    assert 0 < len(res.data) < 300


def test_invalid_eps(large_track, large_traj):
    with pytest.raises(ValueError):
        dagger_round(None, large_traj, large_track, 0.0)


def test_run_dagger_small():
    track = one_gate_track()
    track = Track("tri", (Gate([0, 0, 2], [1, 0, 0]), Gate([8, 4, 2], [0, 1, 0]),
                          Gate([0, 8, 2], [-1, 0, 0])), True, 5.0)
    cfg = DaggerConfig(rounds=2, duration=4.0, epochs=1, final_epochs=1)
    net, data, hist = run_dagger(track, cfg)
    assert len(hist.eps) == 2 and hist.eps[0] == 0.5
    assert hist.interventions[0] == 120
    assert len(data) == hist.samples[-1] == 240


@pytest.mark.slow
def test_imitation_convergence_and_multi_layout(large_track):
    base = large_track.static()
    traj = plan_track(base)
    static = concat([dagger_round(None, traj, base, 0.5, 1000 / 30, seed=s).data
                     for s in range(5)], split_seed=0)
    assert len(static) == 5000
    tr, held = static.split(0.2)
    single = train(RegressorNet(seed=0), tr, epochs=100, lr=0.01, seed=0).net
    assert evaluate(single, held) < 0.05

    # 20k samples: the static set plus three perturbed static layouts
    rng = np.random.default_rng(1)
    parts = [static]
    for k in range(3):
        lay = base.perturbed(rng)
        lt = plan_track(lay)
        parts += [dagger_round(None, lt, lay, 0.5, 1000 / 30, seed=100 + 5 * k + s).data
                  for s in range(5)]
    multi_data = concat(parts, split_seed=0)
    assert len(multi_data) == 20000
    multi = train(RegressorNet(seed=0), multi_data, epochs=100, lr=0.01, seed=0).net
    fresh = concat([dagger_round(None, traj, base, 0.5, 20.0, seed=s).data
                    for s in (50, 51)])
    assert evaluate(multi, fresh) <= 2.0 * evaluate(single, fresh)
