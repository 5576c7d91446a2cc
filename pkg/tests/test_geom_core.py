import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from racenav.errors import DegenerateProjectionError, DomainError
from racenav.geom import (CameraModel, Polynomial1D, Pose, back_project, poly_eval,
                          project_point, quat_from_yaw, quat_mul, quat_to_matrix)

CAM = CameraModel()
finite = st.floats(-5.0, 5.0, allow_nan=False)


def test_poly_eval_cube():
    p = Polynomial1D([0, 0, 0, 1], 3.0)
    assert poly_eval(p, 2.0) == 8.0
    assert poly_eval(p, 2.0, 3) == 6.0


def test_poly_eval_constant_derivative():
    assert poly_eval(Polynomial1D([5.0], 1.0), 0.3, 1) == 0.0


def test_poly_eval_outside_domain():
    p = Polynomial1D([1.0, 2.0], 1.0)
    with pytest.raises(DomainError):
        poly_eval(p, 1.5)
    with pytest.raises(DomainError):
        poly_eval(p, -0.1)


def test_polynomial_rejects_nonpositive_duration():
    with pytest.raises(ValueError):
        Polynomial1D([1.0], 0.0)


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=8), st.floats(0.05, 0.95),
       st.integers(0, 3))
def test_poly_derivative_consistency(coeffs, t, k):
    # central difference of order k matches order k+1
    p = Polynomial1D(coeffs, 1.0)
    h = 1e-5
    fd = (poly_eval(p, t + h, k) - poly_eval(p, t - h, k)) / (2 * h)
    exact = poly_eval(p, t, k + 1)
    assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact)) + 1e-5


def test_pose_normalizes_quaternion():
    pose = Pose([0, 0, 0], [2.0, 0, 0, 0])
    assert abs(np.linalg.norm(pose.orientation) - 1.0) < 1e-12


def test_quaternion_compose_matches_matrices():
    a, b = quat_from_yaw(0.3), quat_from_yaw(-1.1)
    np.testing.assert_allclose(quat_to_matrix(quat_mul(a, b)),
                               quat_to_matrix(a) @ quat_to_matrix(b), atol=1e-12)


def test_project_optical_axis():
    pr = project_point(CAM, [5.0, 0.0, 0.0])
    assert pr.visible
    np.testing.assert_allclose(pr.x, [0.0, 0.0], atol=1e-15)


def test_project_half_fov_edge():
    half = CAM.horizontal_fov / 2
    # body frame: x forward, y left; positive image x is to the right
    pr = project_point(CAM, [math.cos(half), -math.sin(half), 0.0])
    np.testing.assert_allclose(pr.x, [1.0, 0.0], atol=1e-12)


def test_project_behind_camera():
    assert not project_point(CAM, [-1.0, 0.0, 0.0]).visible


def test_project_outside_fov_is_clamped():
    pr = project_point(CAM, [1.0, -5.0, 0.0])
    assert not pr.visible
    assert np.all(np.abs(pr.x) <= 1.0)


def test_project_degenerate():
    with pytest.raises(DegenerateProjectionError):
        project_point(CAM, [0.0, 0.0, 0.0])


def test_back_project_central_ray():
    np.testing.assert_allclose(back_project(CAM, [0.0, 0.0], 3.0), [3.0, 0.0, 0.0], atol=1e-15)


def test_back_project_rejects_nonpositive_depth():
    with pytest.raises(ValueError):
        back_project(CAM, [0.0, 0.0], 0.0)


def test_back_project_edge_matches_spherical_oracle():
    # spherical coordinates: azimuth -hfov/2 (to the right), elevation 0
    az = -CAM.horizontal_fov / 2
    oracle = np.array([math.cos(az), math.sin(az), 0.0])
    np.testing.assert_allclose(back_project(CAM, [1.0, 0.0], 1.0), oracle, atol=1e-12)
    # general direction, elevation measured from the horizontal plane
    x = np.array([-0.4, 0.7])
    az, el = -x[0] * CAM.horizontal_fov / 2, x[1] * CAM.vertical_fov / 2
    oracle = 2.5 * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az),
                             math.sin(el)])
    np.testing.assert_allclose(back_project(CAM, x, 2.5), oracle, atol=1e-12)


def test_uptilted_camera_axis():
    cam = CameraModel.uptilted(math.radians(15.0))
    axis = back_project(cam, [0.0, 0.0], 1.0)
    np.testing.assert_allclose(axis, [math.cos(math.radians(15)), 0, math.sin(math.radians(15))],
                               atol=1e-12)


@given(st.floats(0.5, 20), st.floats(-0.95, 0.95), st.floats(-0.95, 0.95), st.sampled_from([0.0, 0.26]))
def test_round_trip(r, xh, xv, tilt):
    cam = CameraModel.uptilted(tilt)
    p = back_project(cam, [xh, xv], r)
    pr = project_point(cam, p)
    assert pr.visible
    np.testing.assert_allclose(pr.x, [xh, xv], atol=1e-9)
    p_cam = cam.to_camera(p)
    np.testing.assert_allclose(back_project(cam, pr.x, np.linalg.norm(p_cam)), p, atol=1e-9)


@given(finite, finite, finite, st.floats(0.1, 50))
def test_projection_scale_invariant(x, y, z, lam):
    p = np.array([abs(x) + 0.1, y, z])
    np.testing.assert_allclose(project_point(CAM, p).x, project_point(CAM, lam * p).x, atol=1e-12)


def test_invalid_fov():
    with pytest.raises(ValueError):
        CameraModel(horizontal_fov=math.pi)
