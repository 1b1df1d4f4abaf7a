import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from leapplan.errors import SingularOrientation
from leapplan.srb import (
    ControlInput,
    ModelParams,
    SrbState,
    dynamics,
    dynamics_jacobians,
    euler_from_rotation,
    euler_rate_matrix,
    hat,
    join_control,
    net_wrench,
    right_jacobian_inv,
    rotation_from_euler,
    so3_exp,
    so3_log,
    vee,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)


def test_rotation_identity_and_half_turn():
    assert np.array_equal(rotation_from_euler([0, 0, 0]), np.eye(3))
    np.testing.assert_allclose(rotation_from_euler([0, 0, np.pi]), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)


def test_rotation_orthonormal_for_sample():
    R = rotation_from_euler([0.1, 0.2, 0.3])
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)


@given(vec3)
def test_rotation_is_proper_everywhere(theta):
    R = rotation_from_euler(theta)
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-10
    assert abs(np.linalg.det(R) - 1.0) < 1e-10


def test_zyx_convention_composes_yaw_pitch_roll():
    r, p, y = 0.3, -0.4, 1.1
    Rz = so3_exp([0, 0, y])
    Ry = so3_exp([0, p, 0])
    Rx = so3_exp([r, 0, 0])
    np.testing.assert_allclose(rotation_from_euler([r, p, y]), Rz @ Ry @ Rx, atol=1e-14)


def test_euler_rate_matrix_at_zero_is_identity():
    np.testing.assert_allclose(euler_rate_matrix(np.zeros(3)), np.eye(3))


@pytest.mark.parametrize("pitch", [np.pi / 2, -np.pi / 2, np.pi / 2 - 5e-4])
def test_euler_rate_matrix_gimbal_lock(pitch):
    with pytest.raises(SingularOrientation):
        euler_rate_matrix([0.2, pitch, 0.1])


def test_euler_rate_matrix_matches_finite_difference(rng):
    for _ in range(20):
        theta = rng.uniform([-1, -1.2, -3], [1, 1.2, 3])
        omega = rng.normal(size=3)
        h = 1e-6
        R = rotation_from_euler(theta)
        ahead = euler_from_rotation(R @ so3_exp(omega * h))
        behind = euler_from_rotation(R @ so3_exp(-omega * h))
        fd = (ahead - behind) / (2 * h)
        np.testing.assert_allclose(fd, euler_rate_matrix(theta) @ omega, atol=1e-6)


def test_net_wrench_symmetric_stance():
    feet = np.array([[0.2, 0.1, 0], [0.2, -0.1, 0], [-0.2, 0.1, 0], [-0.2, -0.1, 0]])
    forces = np.tile([0, 0, 20.0], (4, 1))
    w = net_wrench(np.zeros(3), ControlInput(feet, forces))
    np.testing.assert_allclose(w.f, [0, 0, 80.0])
    np.testing.assert_allclose(w.tau, 0, atol=1e-14)


def test_net_wrench_single_foot_moment():
    feet = np.zeros((4, 3))
    feet[0] = [0.1, 0, 0]
    forces = np.zeros((4, 3))
    forces[0] = [0, 0, 10.0]
    w = net_wrench(np.zeros(3), ControlInput(feet, forces))
    np.testing.assert_allclose(w.tau, [0, -1.0, 0], atol=1e-15)


def test_net_wrench_matches_per_foot_sum(rng):
    p_c = rng.normal(size=3)
    feet, forces = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    f, tau = np.zeros(3), np.zeros(3)
    for i in range(4):
        r = feet[i] - p_c
        f += forces[i]
        tau += np.array([r[1] * forces[i][2] - r[2] * forces[i][1], r[2] * forces[i][0] - r[0] * forces[i][2], r[0] * forces[i][1] - r[1] * forces[i][0]])
    w = net_wrench(p_c, join_control(feet, forces))
    np.testing.assert_allclose(w.f, f, atol=1e-12)
    np.testing.assert_allclose(w.tau, tau, atol=1e-12)


@given(arrays(np.float64, (4, 3), elements=finite), arrays(np.float64, (4, 3), elements=finite), st.integers(0, 3), st.floats(-2, 2))
def test_torque_invariant_along_line_of_action(feet, forces, i, lam):
    before = net_wrench(np.zeros(3), join_control(feet, forces)).tau
    moved = feet.copy()
    moved[i] += lam * forces[i]
    after = net_wrench(np.zeros(3), join_control(moved, forces)).tau
    np.testing.assert_allclose(after, before, atol=1e-9)


def test_free_fall(params):
    x = np.zeros(12)
    x[6:9] = [0.3, -0.1, 0.5]
    xd = dynamics(x, np.zeros(24), params)
    np.testing.assert_allclose(xd, np.r_[x[6:9], 0, 0, 0, 0, 0, -9.81, 0, 0, 0])


def test_hover_is_equilibrium(params):
    feet = np.array([[0.19, 0.1, -0.25], [0.19, -0.1, -0.25], [-0.19, 0.1, -0.25], [-0.19, -0.1, -0.25]])
    forces = np.tile([0, 0, params.mass * 9.81 / 4], (4, 1))
    xd = dynamics(SrbState.from_vector(np.zeros(12)), ControlInput(feet, forces), params)
    np.testing.assert_allclose(xd, 0, atol=1e-14)


def test_principal_axis_spin_is_steady(params):
    _, vecs = np.linalg.eigh(params.inertia)
    for k in range(3):
        x = np.zeros(12)
        x[9:12] = 3.0 * vecs[:, k]
        np.testing.assert_allclose(dynamics(x, np.zeros(24), params)[9:12], 0, atol=1e-12)


def test_linear_rows_depend_only_on_force_sum(params, rng):
    x = rng.normal(size=12) * 0.3
    feet, forces = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    perm = rng.permutation(4)
    a = dynamics(x, join_control(feet, forces), params)
    b = dynamics(x, join_control(feet, forces[perm]), params)
    np.testing.assert_allclose(a[6:9], b[6:9], atol=1e-13)


def test_dynamics_jacobians_match_finite_differences(params, rng):
    x = rng.normal(size=12) * 0.4
    u = rng.normal(size=24)
    A, B = dynamics_jacobians(x, u, params)
    h = 1e-6
    for j in range(12):
        e = np.zeros(12)
        e[j] = h
        fd = (dynamics(x + e, u, params) - dynamics(x - e, u, params)) / (2 * h)
        np.testing.assert_allclose(A[:, j], fd, atol=1e-6)
    for j in range(24):
        e = np.zeros(24)
        e[j] = h
        fd = (dynamics(x, u + e, params) - dynamics(x, u - e, params)) / (2 * h)
        np.testing.assert_allclose(B[:, j], fd, atol=1e-6)


def test_so3_exp_basics():
    np.testing.assert_array_equal(so3_exp(np.zeros(3)), np.eye(3))
    np.testing.assert_allclose(so3_exp([0, 0, np.pi / 2]), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_so3_log_round_trip_random(rng):
    for _ in range(1000):
        w = rng.normal(size=3)
        w *= rng.uniform(0, np.pi - 0.01) / np.linalg.norm(w)
        assert np.linalg.norm(so3_log(so3_exp(w)) - w) < 1e-9


def test_so3_log_half_turn_branch():
    for axis in np.eye(3):
        R = so3_exp(np.pi * axis)
        w = so3_log(R)
        assert abs(np.linalg.norm(w) - np.pi) < 1e-9
        np.testing.assert_allclose(so3_exp(w), R, atol=1e-9)


@given(vec3)
def test_exp_of_log_reproduces_rotation(w):
    R = so3_exp(w)
    assert np.linalg.norm(so3_log(R)) <= np.pi + 1e-12
    np.testing.assert_allclose(so3_exp(so3_log(R)), R, atol=1e-8)


def test_hat_vee_inverse(rng):
    w = rng.normal(size=3)
    np.testing.assert_array_equal(vee(hat(w)), w)
    np.testing.assert_allclose(hat(w) @ [1.0, 2.0, 3.0], np.cross(w, [1.0, 2.0, 3.0]))


def test_right_jacobian_inverse_matches_log_derivative(rng):
    # d/dt log(exp(w) exp(v t)) at t=0 equals Jr^-1(w) v
    w = rng.normal(size=3)
    v = rng.normal(size=3)
    h = 1e-6
    fd = (so3_log(so3_exp(w) @ so3_exp(v * h)) - so3_log(so3_exp(w) @ so3_exp(-v * h))) / (2 * h)
    np.testing.assert_allclose(fd, right_jacobian_inv(w) @ v, atol=1e-7)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(mass=-1.0)
    with pytest.raises(ValueError):
        ModelParams(inertia=np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        ModelParams(inertia=np.array([[1, 0.5, 0], [0, 1, 0], [0, 0, 1.0]]))
    with pytest.raises(ValueError):
        ModelParams(mu=0.0)


def test_scaled_params(params):
    s = params.scaled(1.1, 2.0)
    assert s.mass == pytest.approx(9.9)
    np.testing.assert_allclose(s.inertia, 2 * params.inertia)
    assert params.mass == 9.0


def test_state_and_control_round_trip(rng):
    x = rng.normal(size=12)
    u = rng.normal(size=24)
    np.testing.assert_array_equal(SrbState.from_vector(x).as_vector(), x)
    np.testing.assert_array_equal(ControlInput.from_vector(u).as_vector(), u)
    with pytest.raises(ValueError):
        ControlInput(np.zeros((3, 3)), np.zeros((3, 3)))


@settings(max_examples=50)
@given(arrays(np.float64, 3, elements=st.floats(-1.4, 1.4)))
def test_euler_from_rotation_inverts_away_from_gimbal_lock(theta):
    np.testing.assert_allclose(euler_from_rotation(rotation_from_euler(theta)), theta, atol=1e-9)
