import numpy as np
import pytest

from conftest import gains_for, planned
from leapplan.errors import NoTouchdown
from leapplan.pipeline import simulate
from leapplan.sim import (
    DT_SIM,
    TICK,
    LandingRecord,
    Perturbation,
    SimState,
    Trace,
    angular_momentum,
    final_yaw_error,
    landing_metrics,
    run_closed_loop,
    step,
)
from leapplan.srb import rotation_from_euler
from leapplan.vbl import error_state

FEET = np.array([[0.19, 0.1, 0.0], [0.19, -0.1, 0.0], [-0.19, 0.1, 0.0], [-0.19, -0.1, 0.0]])


def rest(h=1.0):
    return SimState(np.array([0.0, 0.0, h]), np.eye(3), np.zeros(3), np.zeros(3), FEET.copy())


def fly(state, params, T, dt=DT_SIM):
    for _ in range(round(T / dt)):
        state = step(state, np.zeros((4, 3)), params, dt)
    return state


def test_free_fall_is_exact(params):
    s0 = rest()
    s0.v = np.array([0.3, -0.2, 1.0])
    s = fly(s0, params, 0.5)
    t = s.t
    np.testing.assert_allclose(s.p, s0.p + s0.v * t - 0.5 * np.array([0, 0, 9.81]) * t * t, atol=1e-8)
    np.testing.assert_allclose(s.v, s0.v - np.array([0, 0, 9.81]) * t, atol=1e-10)
    # linear momentum changes by exactly m g dt
    np.testing.assert_allclose(params.mass * (s.v - s0.v), -params.mass * params.gravity * t, atol=1e-10)


def test_hover_is_an_equilibrium(params):
    s = rest(0.25)
    f = np.tile([0.0, 0.0, params.mass * 9.81 / 4], (4, 1))
    for _ in range(100):
        nxt = step(s, f, params)
        assert np.abs(nxt.p - s.p).max() < 1e-10 and np.abs(nxt.v).max() < 1e-10
        assert np.abs(nxt.omega).max() < 1e-10
        s = nxt


def tumbling(params):
    s = rest()
    s.R = rotation_from_euler([0.3, -0.4, 1.0])
    s.omega = np.array([2.0, 6.0, -1.5])  # near the intermediate axis, far from trivial
    return s


def test_torque_free_angular_momentum_conserved(params):
    s = tumbling(params)
    L0 = angular_momentum(s, params)
    worst = 0.0
    for _ in range(round(1.0 / DT_SIM)):
        s = step(s, np.zeros((4, 3)), params)
        worst = max(worst, np.abs(angular_momentum(s, params) - L0).max())
    assert worst < 1e-8


def test_orthonormality_over_two_seconds(params):
    s = tumbling(params)
    worst = 0.0
    for _ in range(round(2.0 / DT_SIM)):
        s = step(s, np.zeros((4, 3)), params)
        worst = max(worst, np.abs(s.R.T @ s.R - np.eye(3)).max())
    assert worst < 1e-9
    assert np.linalg.det(s.R) == pytest.approx(1.0, abs=1e-9)


def test_trace_grid_and_tick_hold(spin_bundle, spin_gains):
    trace, _ = simulate(spin_bundle, spin_gains, "vboc")
    dt = np.diff(trace.t[:-1])
    np.testing.assert_allclose(dt, DT_SIM, atol=1e-12)
    n_take = (spin_gains.t.size - 1) * TICK
    f = trace.forces[:n_take].reshape(-1, TICK, 12)
    assert np.all(f == f[:, :1])
    assert np.all(trace.forces[n_take:] == 0)


def test_determinism(spin_bundle, spin_gains):
    pert = Perturbation(mass_scale=1.05, foot_noise=0.03, seed=7)
    a = run_closed_loop(spin_gains, spin_bundle.params, "vboc", pert, landing_height=0.25)
    b = run_closed_loop(spin_gains, spin_bundle.params, "vboc", pert, landing_height=0.25)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.forces, b.forces)
    assert a.landing.t == b.landing.t


@pytest.mark.parametrize("name", ["spin", "trot_jump", "platform_forward"])
def test_feedback_reduces_liftoff_com_error(name):
    b, g = planned(name), gains_for(name)
    err = {}
    for mode in ("open_loop", "vboc"):
        tr = run_closed_loop(g, b.params, mode)
        err[mode] = np.linalg.norm(tr.liftoff.p - g.ref.x[-1, :3])
    assert err["vboc"] <= err["open_loop"]


@pytest.mark.parametrize("name", ["spin", "trot_jump", "bound_jump", "platform_forward"])
def test_feedback_reduces_weighted_liftoff_error(name):
    b, g = planned(name), gains_for(name)
    Q = g.weights.Q()
    cost = {}
    for mode in ("open_loop", "vboc"):
        tr = run_closed_loop(g, b.params, mode)
        s = error_state(tr.liftoff.extended(), g.ref.extended(g.t.size - 1))
        cost[mode] = s @ Q @ s
    assert cost["vboc"] < cost["open_loop"]


def test_heavier_spin_yaw_error(spin_bundle, spin_gains):
    pert = Perturbation(mass_scale=1.1)
    yaw = {m: final_yaw_error(simulate(spin_bundle, spin_gains, m, pert)[0], np.pi) for m in ("open_loop", "vboc")}
    assert yaw["vboc"] < yaw["open_loop"]
    assert yaw["vboc"] <= np.deg2rad(15)


def test_foot_noise_changes_vboc_commands(spin_bundle, spin_gains):
    clean = run_closed_loop(spin_gains, spin_bundle.params, "vboc")
    noisy = run_closed_loop(spin_gains, spin_bundle.params, "vboc", Perturbation(foot_noise=0.045, seed=3))
    assert np.abs(noisy.forces - clean.forces).max() > 1.0
    ol_a = run_closed_loop(spin_gains, spin_bundle.params, "open_loop")
    ol_b = run_closed_loop(spin_gains, spin_bundle.params, "open_loop", Perturbation(foot_noise=0.045, seed=3))
    assert np.array_equal(ol_a.forces, ol_b.forces)


def fake_trace(p):
    return Trace("vboc", np.zeros(1), np.zeros((1, 12)), np.zeros((1, 12)), np.zeros(1), LandingRecord(0.3, np.asarray(p, float), np.eye(3), np.zeros(3)))


def test_landing_metric_definitions():
    m = landing_metrics(fake_trace([0.45, 0.0, 0.25]), [0.5, 0.0, 0.25], [0.0, 0.0, 0.25])
    assert m.relative_error == pytest.approx(0.10)
    assert m.along_track == pytest.approx(-0.05)
    np.testing.assert_allclose(m.e_la, [0.05, 0, 0])
    exact = landing_metrics(fake_trace([0.5, 0.0, 0.25]), [0.5, 0.0, 0.25], [0.0, 0.0, 0.25])
    assert exact.relative_error == 0 and np.all(exact.e_la == 0)
    long = landing_metrics(fake_trace([0.0, 0.53, 0.25]), [0.0, 0.5, 0.25], [0.0, 0.0, 0.25])
    assert long.along_track == pytest.approx(0.03)


def test_no_touchdown(spin_bundle, spin_gains):
    with pytest.raises(NoTouchdown):
        run_closed_loop(spin_gains, spin_bundle.params, "open_loop", landing_height=5.0, max_flight=0.5)
    no_landing = Trace("vboc", np.zeros(1), np.zeros((1, 12)), np.zeros((1, 12)), np.zeros(1))
    with pytest.raises(NoTouchdown):
        landing_metrics(no_landing, [0, 0, 0.25], [0, 0, 0.25])


def test_touchdown_lands_on_height(trot_bundle, trot_gains):
    trace, metrics = simulate(trot_bundle, trot_gains, "vboc")
    assert trace.landing.p[2] == pytest.approx(0.25, abs=1e-10)
    assert trace.landing.v[2] < 0
    assert metrics["max_orthonormality_error"] < 1e-9


def test_perturbation_validation():
    with pytest.raises(ValueError):
        Perturbation(mass_scale=0.0)
    with pytest.raises(ValueError):
        Perturbation(foot_noise=-0.01)


def test_trace_csv(tmp_path, spin_bundle, spin_gains):
    trace, _ = simulate(spin_bundle, spin_gains, "open_loop")
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert len(data) == trace.t.size
    assert len(data.dtype.names) == 1 + 12 + 12 + 1
    np.testing.assert_array_equal(data["yaw"], trace.states[:, 5])
