import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import fd_jacobians, relative_error
from leapplan.errors import RiccatiBlowup, RotationErrorTooLarge, ScheduleExpired
from leapplan.srb import rotation_from_euler, so3_exp
from leapplan.vbl import (
    S_FEET,
    S_OMG,
    S_POS,
    S_ROT,
    S_VEL,
    ExtendedState,
    RiccatiWeights,
    apply_error,
    error_state,
    halving_delta,
    integrate_riccati,
    linearize,
    resample_plan,
)


def random_extended(rng):
    x = np.r_[rng.normal(0, 0.2, 3), rng.uniform(-1, 1, 3) * [1, 1.2, 3], rng.normal(0, 1, 3), rng.normal(0, 3, 3)]
    return ExtendedState.from_planner(x, x[:3] + rng.normal(0, 0.2, (4, 3)))


# --------------------------------------------------------------------------- error state


def test_error_of_identical_states_is_zero(rng):
    x = random_extended(rng)
    assert np.array_equal(error_state(x, x), np.zeros(24))


def test_small_rotation_error_round_trip(rng):
    xd = random_extended(rng)
    xi0 = rng.normal(size=3) * 1e-3
    x = ExtendedState(xd.p, xd.R @ so3_exp(xi0), xd.v, xd.omega, xd.feet)
    np.testing.assert_allclose(error_state(x, xd)[S_ROT], xi0, atol=1e-12)


def test_rotation_error_is_geodesic_angle(rng):
    for _ in range(50):
        a, b = random_extended(rng), random_extended(rng)
        c = (np.trace(a.R.T @ b.R) - 1) / 2
        angle = np.arccos(np.clip(c, -1, 1))
        if angle > np.pi - 1e-2:
            continue
        assert np.linalg.norm(error_state(b, a)[S_ROT]) == pytest.approx(angle, abs=1e-9)


def test_rotation_error_too_large():
    xd = ExtendedState(np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3), np.zeros((4, 3)))
    x = ExtendedState(np.zeros(3), rotation_from_euler([0, 0, np.pi]), np.zeros(3), np.zeros(3), np.zeros((4, 3)))
    with pytest.raises(RotationErrorTooLarge):
        error_state(x, xd)


@settings(max_examples=50)
@given(arrays(np.float64, 24, elements=st.floats(-1, 1)))
def test_apply_error_inverts_error_state(s):
    xd = ExtendedState.from_vector(np.linspace(-0.5, 0.5, 24))
    np.testing.assert_allclose(error_state(apply_error(xd, s), xd), s, atol=1e-9)


def test_direct_difference_blocks(rng):
    a, b = random_extended(rng), random_extended(rng)
    b.R = a.R
    s = error_state(b, a)
    np.testing.assert_array_equal(s[S_POS], b.p - a.p)
    np.testing.assert_array_equal(s[S_VEL], b.v - a.v)
    np.testing.assert_array_equal(s[S_OMG], b.omega - a.omega)
    np.testing.assert_array_equal(s[S_FEET], (b.feet - a.feet).ravel())


# --------------------------------------------------------------------------- linearization


def test_linearization_matches_finite_differences(params, rng):
    for _ in range(20):
        xd = random_extended(rng)
        fd = rng.normal(0, 30, (4, 3))
        stance = rng.random(4) < 0.7
        A, B = linearize(xd, fd, params, stance)
        Afd, Bfd = fd_jacobians(xd, fd, params, stance)
        assert relative_error(A, Afd) < 1e-5
        assert relative_error(B, Bfd) < 1e-5


def test_hover_height_change_gives_no_torque(params):
    feet = np.array([[0.19, 0.1, 0], [0.19, -0.1, 0], [-0.19, 0.1, 0], [-0.19, -0.1, 0]])
    xd = ExtendedState([0, 0, 0.25], np.eye(3), np.zeros(3), np.zeros(3), feet)
    fd = np.tile([0, 0, params.mass * 9.81 / 4], (4, 1))
    A, _ = linearize(xd, fd, params)
    np.testing.assert_allclose(A[S_OMG, 2], 0, atol=1e-14)


def test_flight_knot_has_no_force_coupling(params, rng):
    xd = random_extended(rng)
    A, B = linearize(xd, np.zeros((4, 3)), params, np.zeros(4, dtype=bool))
    assert np.all(B == 0)
    np.testing.assert_array_equal(A[S_OMG, S_FEET], 0)
    np.testing.assert_array_equal(A[S_OMG, S_POS], 0)
    np.testing.assert_array_equal(A[S_FEET], 0)


def test_swing_columns_are_zero(params, rng):
    xd = random_extended(rng)
    stance = np.array([True, False, False, True])
    _, B = linearize(xd, rng.normal(size=(4, 3)), params, stance)
    assert np.all(B[:, 3:9] == 0)
    assert np.any(B[:, 0:3] != 0)


# --------------------------------------------------------------------------- resampling


def test_resample_counts_and_knots(spin_bundle):
    plan = spin_bundle.plan
    ref = resample_plan(plan)
    assert ref.t.size == 121  # 0.24 s in 2 ms steps, endpoints included
    assert ref.t.size - 1 == 10 * plan.schedule.n_intervals
    np.testing.assert_allclose(ref.x[::10], plan.X, atol=1e-14)
    mid = 0.5 * (plan.X[:-1] + plan.X[1:])
    np.testing.assert_allclose(ref.x[5::10], mid, atol=1e-12)


def test_resampled_forces_hit_interval_midpoints(spin_bundle, trot_bundle):
    for bundle in (spin_bundle, trot_bundle):
        plan = bundle.plan
        ref = resample_plan(plan)
        U = plan.U.reshape(-1, 4, 6)
        assert np.all(ref.forces[~ref.stance] == 0)
        for k in range(plan.schedule.n_intervals):
            mid = (k + 0.5) * plan.dt
            j = int(np.argmin(np.abs(ref.t - mid)))
            if abs(ref.t[j] - mid) > 1e-12:
                continue
            on = plan.schedule.contact[k]
            np.testing.assert_allclose(ref.forces[j][on], U[k, on, 3:], atol=1e-12)


def test_resample_rejects_misaligned_grid(spin_bundle):
    with pytest.raises(ValueError):
        resample_plan(spin_bundle.plan, 0.007)


# --------------------------------------------------------------------------- Riccati


def const(M, N):
    return np.broadcast_to(M, (N,) + M.shape).copy()


def test_stationary_riccati():
    N = 11
    P_f = np.diag([1.0, 2.0])
    P = integrate_riccati(const(np.zeros((2, 2)), N), const(np.zeros((2, 1)), N), np.zeros((2, 2)), np.eye(1), P_f, 0.01)
    np.testing.assert_allclose(P, const(P_f, N), atol=0)


def scalar_riccati(a, b, q, r, p_f, tau):
    k = b * b / r
    s = np.sqrt(a * a + k * q)
    p_hi, p_lo = (a + s) / k, (a - s) / k
    c = (p_f - p_hi) / (p_f - p_lo)
    e = c * np.exp(-2 * s * tau)
    return (p_hi - p_lo * e) / (1 - e)


@pytest.mark.parametrize("a,b,q,r,p_f", [(1.0, 1.0, 1.0, 0.1, 0.0), (-0.5, 2.0, 3.0, 1.0, 5.0), (2.0, 0.5, 0.2, 0.05, 1.0)])
def test_scalar_riccati_closed_form(a, b, q, r, p_f):
    h, T = 0.002, 0.25
    N = round(T / h) + 1
    P = integrate_riccati(const(np.array([[a]]), N), const(np.array([[b]]), N), np.array([[q]]), np.array([[r]]), np.array([[p_f]]), h)
    tau = T - np.arange(N) * h
    np.testing.assert_allclose(P[:, 0, 0], scalar_riccati(a, b, q, r, p_f, tau), atol=1e-6, rtol=0)


def test_long_horizon_approaches_are():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    Q, R = np.diag([1.0, 0.5]), np.array([[0.1]])
    N = 2001
    P = integrate_riccati(const(A, N), const(B, N), Q, R, np.zeros((2, 2)), 0.01)[0]
    res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T) @ P + Q
    assert np.abs(res).max() < 1e-4


def test_blowup_detected():
    N = 200
    A = const(np.array([[40.0]]), N)
    B = const(np.array([[0.0]]), N)
    with pytest.raises(RiccatiBlowup):
        integrate_riccati(A, B, np.eye(1), np.eye(1), np.eye(1), 0.01)


def test_r_must_be_positive_definite():
    with pytest.raises(ValueError):
        integrate_riccati(const(np.eye(1), 3), const(np.eye(1), 3), np.eye(1), np.zeros((1, 1)), np.eye(1), 0.01)


def test_gain_schedule_invariants(spin_gains):
    spin_gains.check()
    for P in spin_gains.P:
        assert np.abs(P - P.T).max() <= 1e-10 * max(1.0, np.abs(P).max())
        assert np.linalg.eigvalsh(P).min() >= -1e-8 * max(1.0, np.abs(P).max())
    np.testing.assert_allclose(spin_gains.P[-1], RiccatiWeights().P_f())
    assert spin_gains.grid_dt == pytest.approx(0.002)


def test_halving_delta_below_threshold(spin_gains, trot_gains):
    assert halving_delta(spin_gains) < 1e-6
    assert halving_delta(trot_gains) < 1e-6


def test_knot_lookup(spin_gains):
    assert spin_gains.knot(0.0) == 0
    assert spin_gains.knot(0.0031) == 2
    assert spin_gains.knot(spin_gains.t_end) == spin_gains.t.size - 1
    with pytest.raises(ScheduleExpired):
        spin_gains.knot(spin_gains.t_end + 0.01)


def test_terminal_cost_only_on_com_blocks():
    Pf = RiccatiWeights(terminal=0.0, terminal_com=10.0).P_f()
    Q = RiccatiWeights().Q()
    d = np.diag(Pf)
    np.testing.assert_allclose(d[S_POS], 10 * np.diag(Q)[S_POS])
    np.testing.assert_allclose(d[S_VEL], 10 * np.diag(Q)[S_VEL])
    assert np.all(d[S_ROT] == 0) and np.all(d[S_OMG] == 0) and np.all(d[S_FEET] == 0)
