"""Constrained tracking controller built on the Riccati cost-to-go.

Each tick solves

    min  d' H d + 2 s' P B d   over total forces in the friction pyramid,

with ``H = R`` so the unconstrained answer is the LQR law ``-R^-1 B' P s``.
Only stance-foot force variations are decision variables; swing feet get
exactly zero total force.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import QpInfeasible
from .qp import QpSpec, solve_qp
from .srb import N_FEET
from .vbl import FORCE_DIM, GainSchedule, error_state

QP_TOL = 1e-8


@dataclass
class InputConstraintSet:
    """Friction pyramid and force cap on ``reference + variation`` for stance feet."""

    f_ref: np.ndarray  # (4, 3)
    stance: np.ndarray  # (4,) bool
    mu: np.ndarray  # (4,)
    f_max: np.ndarray  # (4,)

    def __post_init__(self):
        self.f_ref = np.asarray(self.f_ref, dtype=float).reshape(N_FEET, 3)
        self.stance = np.asarray(self.stance, dtype=bool).reshape(N_FEET)
        self.mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (N_FEET,)).copy()
        self.f_max = np.broadcast_to(np.asarray(self.f_max, dtype=float), (N_FEET,)).copy()

    @property
    def feet(self) -> np.ndarray:
        return np.flatnonzero(self.stance)

    def columns(self) -> np.ndarray:
        """Indices of the free force components in the 12-vector."""
        return np.concatenate([np.arange(3 * i, 3 * i + 3) for i in self.feet]).astype(int)

    def qp_rows(self):
        """``(A_in, b_in, lb, ub)`` in the stance-only variation variables."""
        feet = self.feet
        n = 3 * feet.size
        A = np.zeros((4 * feet.size, n))
        b = np.zeros(4 * feet.size)
        lb = np.empty(n)
        ub = np.empty(n)
        for j, i in enumerate(feet):
            f, mu = self.f_ref[i], self.mu[i]
            for a in (0, 1):
                for r, sign in enumerate((1.0, -1.0)):
                    row = 4 * j + 2 * a + r
                    A[row, 3 * j + a] = sign
                    A[row, 3 * j + 2] = -mu
                    b[row] = mu * f[2] - sign * f[a]
            lb[3 * j : 3 * j + 2] = -np.inf
            ub[3 * j : 3 * j + 2] = np.inf
            lb[3 * j + 2] = -f[2]
            ub[3 * j + 2] = self.f_max[i] - f[2]
        return A, b, lb, ub

    def contains(self, forces, tol=QP_TOL) -> bool:
        forces = np.asarray(forces, dtype=float).reshape(N_FEET, 3)
        for i in range(N_FEET):
            f = forces[i]
            if not self.stance[i]:
                if np.any(f != 0.0):
                    return False
                continue
            lim = self.mu[i] * f[2]
            if abs(f[0]) > lim + tol or abs(f[1]) > lim + tol or f[2] < -tol or f[2] > self.f_max[i] + tol:
                return False
        return True


@dataclass
class FeedbackCommand:
    forces: np.ndarray  # (4, 3) total force per foot
    delta: np.ndarray  # (4, 3) variation from the reference
    status: str
    active: list = field(default_factory=list)
    knot: int = 0
    objective: float = 0.0
    wall_time: float = 0.0


def _solve(s, j, gains: GainSchedule, params, warm_active=None):
    ref = gains.ref
    cons = InputConstraintSet(ref.forces[j], ref.stance[j], params.mu, params.f_max)
    delta = np.zeros((N_FEET, 3))
    if not cons.stance.any():
        return FeedbackCommand(forces=np.zeros((N_FEET, 3)), delta=delta, status="flight", knot=j), cons
    cols = cons.columns()
    B = gains.B[j][:, cols]
    H = gains.R[np.ix_(cols, cols)]
    g = B.T @ (gains.P[j] @ s)
    A_in, b_in, lb, ub = cons.qp_rows()
    try:
        res = solve_qp(QpSpec(H=H, g=g, A_in=A_in, b_in=b_in, lb=lb, ub=ub), warm_active=warm_active)
    except QpInfeasible as exc:
        raise AssertionError("feedback QP infeasible although the reference force is feasible") from exc
    delta.reshape(-1)[cols] = res.x
    forces = ref.forces[j] + delta
    forces[~cons.stance] = 0.0
    obj = float(res.x @ H @ res.x + 2.0 * g @ res.x)
    return FeedbackCommand(forces, delta, res.status, list(res.active), j, obj), cons


def compute_feedback(s, t: float, gains: GainSchedule, params, warm_active=None) -> FeedbackCommand:
    """Total force command for error ``s`` at time ``t`` (nearest grid knot)."""
    t0 = time.perf_counter()
    cmd, _ = _solve(np.asarray(s, dtype=float), gains.knot(t), gains, params, warm_active)
    cmd.wall_time = time.perf_counter() - t0
    return cmd


class VbocController:
    """Per-loop controller that caches the last active set for warm starts."""

    def __init__(self, gains: GainSchedule, params):
        self.gains = gains
        self.params = params
        self._warm = None
        self._pattern = None

    def reset(self):
        self._warm = None
        self._pattern = None

    def __call__(self, s, t: float) -> FeedbackCommand:
        t0 = time.perf_counter()
        j = self.gains.knot(t)
        pattern = tuple(self.gains.ref.stance[j])
        warm = self._warm if pattern == self._pattern else None
        cmd, _ = _solve(np.asarray(s, dtype=float), j, self.gains, self.params, warm)
        self._warm, self._pattern = cmd.active, pattern
        cmd.wall_time = time.perf_counter() - t0
        return cmd

    def command(self, state, t: float) -> FeedbackCommand:
        """Command for a measured extended state."""
        j = self.gains.knot(t)
        return self(error_state(state, self.gains.ref.extended(j)), t)


@dataclass
class ControllerPass:
    t: np.ndarray
    commands: list
    wall_times: np.ndarray

    @property
    def forces(self) -> np.ndarray:
        return np.array([c.forces.ravel() for c in self.commands]).reshape(-1, FORCE_DIM)


def run_controller_pass(gains: GainSchedule, params, states=None) -> ControllerPass:
    """One command per grid interval, ticks at ``0, dt, ..., t_end - dt``.

    ``states`` is an iterable of measured extended states (or 24-dim error
    vectors); by default the reference itself is replayed.
    """
    ctrl = VbocController(gains, params)
    n = gains.t.size - 1
    if states is None:
        states = [gains.ref.extended(j) for j in range(n)]
    states = list(states)
    if len(states) < n:
        raise ValueError(f"need {n} state samples, got {len(states)}")
    commands, walls = [], []
    for j in range(n):
        t = gains.t[j]
        x = states[j]
        if isinstance(x, np.ndarray) and x.shape == (24,):
            cmd = ctrl(x, t)
        else:
            cmd = ctrl.command(x, t)
        commands.append(cmd)
        walls.append(cmd.wall_time)
    return ControllerPass(gains.t[:n].copy(), commands, np.array(walls))
