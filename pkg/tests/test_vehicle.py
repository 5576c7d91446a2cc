import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from racenav.errors import SingularThrustError, StateError
from racenav.global_planner import GRAVITY
from racenav.local_planner import min_jerk_segment
from racenav.vehicle import (Command, ControllerGains, QuadState, hover_state,
                             state_on_trajectory, step_dynamics, track_segment, yaw_policy)

NO_RATES = np.zeros(3)


def roll_state(angle):
    return QuadState(np.zeros(3), orientation=np.array([math.cos(angle / 2), math.sin(angle / 2),
                                                         0.0, 0.0]))


def pitch_of(s):
    r = s.rotation
    return math.atan2(-r[2, 0], r[0, 0])


def test_hover_equilibrium():
    s = hover_state([0, 0, 1])
    for _ in range(500):
        s = step_dynamics(s, Command(GRAVITY, NO_RATES), 0.002)
    np.testing.assert_allclose(s.velocity, 0.0, atol=1e-9)
    assert s.time == pytest.approx(1.0)


def test_free_fall():
    s = step_dynamics(hover_state([0, 0, 10]), Command(0.0, NO_RATES), 0.1)
    assert s.velocity[2] == pytest.approx(-0.981, abs=1e-12)
    assert s.position[2] == pytest.approx(10 - 0.5 * GRAVITY * 0.01, abs=1e-12)


def test_free_fall_per_step_energy():
    s = hover_state([0, 0, 10])
    for _ in range(50):
        nxt = step_dynamics(s, Command(0.0, NO_RATES), 0.002)
        assert nxt.velocity[2] - s.velocity[2] == pytest.approx(-GRAVITY * 0.002, abs=1e-6)
        s = nxt


def test_pure_pitch_rotation():
    s = hover_state([0, 0, 5])
    u = Command(GRAVITY, np.array([0.0, math.pi / 2, 0.0]))
    for _ in range(500):
        s = step_dynamics(s, u, 0.002, rate_lag=0.0)
    assert pitch_of(s) == pytest.approx(math.pi / 2, abs=1e-6)


def test_rate_lag_first_order():
    # 30 ms lag: after one time constant the rate reaches 1 - 1/e of the command
    s = hover_state([0, 0, 5])
    u = Command(GRAVITY, np.array([0.0, 0.0, 1.0]))
    for _ in range(15):
        s = step_dynamics(s, u, 0.002)
    assert s.body_rates[2] == pytest.approx(1 - math.exp(-1), abs=1e-6)


def test_step_rejects_nonfinite():
    with pytest.raises(StateError):
        step_dynamics(hover_state([0, 0, 1]), Command(float("nan"), NO_RATES), 0.002)


def test_long_step_is_substepped():
    s = hover_state([0, 0, 1])
    u = Command(12.0, np.array([0.1, -0.2, 0.3]))
    a = step_dynamics(s, u, 0.02)
    b = s
    for _ in range(4):
        b = step_dynamics(b, u, 0.005)
    np.testing.assert_allclose(a.to_vector(), b.to_vector(), atol=1e-14)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 30))
def test_quaternion_stays_normalized(wx, wy, wz, thrust):
    s = hover_state([0, 0, 1])
    for _ in range(20):
        s = step_dynamics(s, Command(thrust, np.array([wx, wy, wz])), 0.002)
    assert abs(np.linalg.norm(s.orientation) - 1.0) < 1e-12


def test_on_straight_segment_no_correction():
    v = np.array([3.0, 0.0, 0.0])
    seg = min_jerk_segment(np.zeros(3), v, np.zeros(3), v * 2.0, 2.0)
    s = QuadState(np.zeros(3), v.copy())
    u = track_segment(s, seg, 0.0)
    assert u.collective_thrust == pytest.approx(GRAVITY, abs=1e-9)
    np.testing.assert_allclose(u.body_rates_cmd, 0.0, atol=1e-9)


def test_proportional_position_error():
    # a_des = kp * 1 m = 10 m/s^2 along x; the tilt command encodes it
    gains = ControllerGains(rate_limit=1e6)
    seg = min_jerk_segment(np.ones(3) * [1, 0, 0], np.zeros(3), np.zeros(3), [1, 0, 0], 1.0)
    u = track_segment(hover_state([0, 0, 0]), seg, 0.0, gains)
    assert u.collective_thrust == pytest.approx(GRAVITY, abs=1e-9)
    tilt = u.body_rates_cmd[1] / gains.katt
    assert GRAVITY * math.tan(tilt) == pytest.approx(10.0, abs=1e-9)
    assert abs(u.body_rates_cmd[0]) < 1e-12


@pytest.mark.parametrize("angle", [0.1, -0.1])
def test_roll_offset_restores_level(angle):
    seg = min_jerk_segment(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), 1.0)
    u = track_segment(roll_state(angle), seg, 0.0)
    assert np.sign(u.body_rates_cmd[0]) == -np.sign(angle)


def test_rate_command_saturated():
    seg = min_jerk_segment(np.array([5.0, 0, 0]), np.zeros(3), np.zeros(3), [5, 0, 0], 1.0)
    u = track_segment(hover_state([0, 0, 0]), seg, 0.0)
    assert np.linalg.norm(u.body_rates_cmd) <= 6.0 + 1e-12
    assert u.collective_thrust >= 0.0


def test_singular_thrust():
    # reference accelerating downward at g, no feedback error
    seg = min_jerk_segment(np.zeros(3), np.zeros(3), np.array([0, 0, -GRAVITY]), [0, 0, -1], 0.2)
    s = QuadState(np.zeros(3))
    with pytest.raises(SingularThrustError):
        track_segment(s, seg, 0.0, ControllerGains(kp=0.0, kd=0.0))


def test_yaw_policy():
    mk = lambda v: min_jerk_segment(np.zeros(3), np.asarray(v, float), np.zeros(3),  # noqa: E731
                                    np.asarray(v, float), 1.0)
    s = hover_state([0, 0, 1], yaw=0.7)
    assert yaw_policy(s, mk([1, 0, 0])) == pytest.approx(0.0)
    assert yaw_policy(s, mk([0, 1, 0])) == pytest.approx(math.pi / 2)
    assert yaw_policy(s, mk([0, 0, 0])) == pytest.approx(0.7)


def test_tracks_global_trajectory(large_traj):
    # oracle state, 500 Hz control, reference refreshed at 50 Hz
    dt, s = 0.002, state_on_trajectory(large_traj, 0.0)
    worst = 0.0
    n = int(large_traj.period / dt)
    t_ref, seg = 0.0, None
    for k in range(n):
        if k % 10 == 0:
            t_ref = k * dt
            p, v, a = (large_traj.eval(t_ref, j) for j in range(3))
            t_end = t_ref + 0.5
            seg = min_jerk_segment(p, v, a, large_traj.eval(t_end), 0.5)
        u = track_segment(s, seg, k * dt - t_ref)
        s = step_dynamics(s, u, dt)
        worst = max(worst, float(np.linalg.norm(s.position - large_traj.eval((k + 1) * dt))))
    assert large_traj.v_max_achieved <= 10.0
    assert worst < 0.2
