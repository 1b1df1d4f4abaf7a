import dataclasses
import functools

import numpy as np
import pytest

from leapplan import tasks
from leapplan.pipeline import make_gains, plan_task
from leapplan.srb import ModelParams

ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def planned(name):
    """Solve a preset once per session."""
    return plan_task(tasks.preset(name), ModelParams())


@functools.lru_cache(maxsize=None)
def planned_forward(distance):
    return plan_task(tasks.forward_jump(distance), ModelParams())


@functools.lru_cache(maxsize=None)
def gains_for(name):
    return make_gains(planned(name))


@functools.lru_cache(maxsize=None)
def spin_130():
    """Spin on a 14-knot schedule: 0.26 s of takeoff, 130 controller ticks."""
    task = dataclasses.replace(tasks.spin(), n_t=14)
    bundle = plan_task(task, ModelParams())
    return bundle, make_gains(bundle)


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def spin_bundle():
    return planned("spin")


@pytest.fixture(scope="session")
def spin_gains():
    return gains_for("spin")


@pytest.fixture(scope="session")
def trot_bundle():
    return planned("trot_jump")


@pytest.fixture(scope="session")
def trot_gains():
    return gains_for("trot_jump")


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


def fd_jacobians(xd, fd, params, stance, h=1e-6):
    """Central finite differences of the nonlinear error dynamics at zero error."""
    from leapplan.vbl import error_dynamics

    zero_s, zero_f = np.zeros(24), np.zeros((4, 3))
    A = np.zeros((24, 24))
    B = np.zeros((24, 12))
    for j in range(24):
        d = np.zeros(24)
        d[j] = h
        A[:, j] = (error_dynamics(d, xd, fd, zero_f, params, stance) - error_dynamics(-d, xd, fd, zero_f, params, stance)) / (2 * h)
    for j in range(12):
        d = np.zeros(12)
        d[j] = h
        B[:, j] = (error_dynamics(zero_s, xd, fd, d, params, stance) - error_dynamics(zero_s, xd, fd, -d, params, stance)) / (2 * h)
    return A, B


def relative_error(M, ref):
    return float(np.abs(M - ref).max() / max(1.0, np.abs(ref).max()))
