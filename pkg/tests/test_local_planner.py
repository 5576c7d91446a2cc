import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import min_jerk_oracle
from racenav.local_planner import (HorizonParams, min_jerk_segment, planning_length_test,
                                   prediction_horizon_train, segment_duration)


def random_instance(rng):
    p0, v0, a0, goal = (rng.uniform(-3, 3, 3) for _ in range(4))
    return p0, v0, a0, goal, float(rng.uniform(0.3, 2.0))


def test_rest_to_goal_canonical():
    seg = min_jerk_segment(np.zeros(3), np.zeros(3), np.zeros(3), [1.0, 0, 0], 1.0)
    assert seg.eval(1.0)[0] == pytest.approx(1.0, abs=1e-12)
    assert seg.eval(1.0, 1)[0] == pytest.approx(2.5, abs=1e-12)
    np.testing.assert_allclose(seg.coeffs[0, 3:], [5 / 3, -5 / 6, 1 / 6], atol=1e-12)


def test_rest_to_goal_end_velocity_matches_oracle():
    pos, _ = min_jerk_oracle(0.0, 0.0, 0.0, 1.0, 1.0)
    h = 1e-4
    v_end = (pos(1.0)[0] - pos(1.0 - h)[0]) / h
    assert v_end == pytest.approx(2.5, abs=1e-3)


def test_goal_equals_start_is_constant():
    p = np.array([1.0, 2.0, 3.0])
    seg = min_jerk_segment(p, np.zeros(3), np.zeros(3), p, 0.7)
    for t in np.linspace(0, 0.7, 8):
        np.testing.assert_allclose(seg.eval(t), p, atol=1e-15)
    assert seg.jerk_cost() == 0.0


def test_nonpositive_duration():
    with pytest.raises(ValueError):
        min_jerk_segment(np.zeros(3), np.zeros(3), np.zeros(3), np.ones(3), 0.0)


def test_matches_variational_oracle(rng):
    for _ in range(20):
        p0, v0, a0, goal, T = random_instance(rng)
        seg = min_jerk_segment(p0, v0, a0, goal, T)
        ts = np.linspace(0.0, T, 101)
        cost = 0.0
        for d in range(3):
            pos, c = min_jerk_oracle(p0[d], v0[d], a0[d], goal[d], T)
            ours = np.array([seg.eval(t)[d] for t in ts])
            np.testing.assert_allclose(ours, pos(ts), atol=1e-5)
            cost += c
        assert abs(seg.jerk_cost() - cost) <= 1e-4 * cost


@given(st.integers(0, 2**31 - 1))
def test_boundary_conditions(seed):
    p0, v0, a0, goal, T = random_instance(np.random.default_rng(seed))
    seg = min_jerk_segment(p0, v0, a0, goal, T)
    np.testing.assert_allclose(seg.eval(0.0), p0, atol=1e-9)
    np.testing.assert_allclose(seg.eval(0.0, 1), v0, atol=1e-9)
    np.testing.assert_allclose(seg.eval(0.0, 2), a0, atol=1e-9)
    np.testing.assert_allclose(seg.eval(T), goal, atol=1e-9)
    scale = 1.0 + np.abs(seg.coeffs).max()
    np.testing.assert_allclose(seg.eval(T, 3), 0.0, atol=1e-9 * scale)
    np.testing.assert_allclose(seg.eval(T, 4), 0.0, atol=1e-9 * scale)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 0.9))
def test_replanning_reproduces_remainder(seed, frac):
    p0, v0, a0, goal, T = random_instance(np.random.default_rng(seed))
    seg = min_jerk_segment(p0, v0, a0, goal, T)
    tc = frac * T
    rest = min_jerk_segment(seg.eval(tc), seg.eval(tc, 1), seg.eval(tc, 2), goal, T - tc)
    for u in np.linspace(0.0, T - tc, 7):
        np.testing.assert_allclose(rest.eval(u), seg.eval(tc + u), atol=1e-6)


def test_prediction_horizon_train():
    assert prediction_horizon_train(10, 3, 1.5) == 3.0
    assert prediction_horizon_train(0.5, 20, 1.5) == 1.5
    assert prediction_horizon_train(10, 10) == 10  # default floor 1.5


def test_planning_length_test():
    h = HorizonParams(d_min=2.0, d_max=5.0, m_d=0.5)
    assert planning_length_test(8, h) == 4.0
    assert planning_length_test(12, h) == 5.0
    assert planning_length_test(1, h) == 2.0
    assert HorizonParams() == h


@given(st.floats(0, 30), st.floats(0, 30), st.floats(0, 30))
def test_horizons_monotone(a, b, c):
    lo, hi = sorted((b, c))
    assert prediction_horizon_train(a, lo) <= prediction_horizon_train(a, hi)
    assert planning_length_test(lo) <= planning_length_test(hi)


def test_segment_duration():
    assert segment_duration(4, 8) == 0.5
    assert segment_duration(2, 0) == 4.0
    assert segment_duration(5, 0.4) == 5.0
    assert segment_duration(0.01, 10) == 0.2
    with pytest.raises(ValueError):
        segment_duration(0, 1)


def test_horizon_params_validation():
    with pytest.raises(ValueError):
        HorizonParams(d_min=3.0, d_max=2.0)
