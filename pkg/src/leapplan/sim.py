"""Rigid-body simulator on SO(3) for closed-loop takeoff and ballistic flight.

Orientation is a rotation matrix advanced by Runge-Kutta-Munthe-Kaas steps, so
it stays orthonormal and has no Euler singularities. The controller ticks
every ``TICK`` simulator steps and its command is held in between.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoTouchdown, RotationErrorTooLarge
from .srb import N_FEET, ModelParams, euler_from_rotation, right_jacobian_inv, so3_exp
from .vbl import ExtendedState, GainSchedule, error_state
from .vboc import VbocController

log = logging.getLogger(__name__)

DT_SIM = 0.0005
TICK = 4
MODES = ("open_loop", "vboc")


@dataclass
class SimState:
    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    feet: np.ndarray  # (4, 3)
    t: float = 0.0

    def extended(self) -> ExtendedState:
        return ExtendedState(self.p, self.R, self.v, self.omega, self.feet)

    def vector(self) -> np.ndarray:
        """12-state with ZYX Euler angles, for logging."""
        return np.concatenate([self.p, euler_from_rotation(self.R), self.v, self.omega])

    @classmethod
    def from_planner(cls, x, feet, t=0.0) -> "SimState":
        e = ExtendedState.from_planner(x, feet)
        return cls(e.p, e.R, e.v, e.omega, e.feet, t)


@dataclass
class Perturbation:
    """Plant mismatch and disturbances applied in simulation only."""

    mass_scale: float = 1.0
    inertia_scale: float = 1.0
    initial_offset: np.ndarray = field(default_factory=lambda: np.zeros(12))
    foot_noise: float = 0.0  # bound on uniform xy placement error per stance phase, m
    external_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int = 0

    def __post_init__(self):
        if not (self.mass_scale > 0 and self.inertia_scale > 0):
            raise ValueError("mass and inertia scales must be positive")
        if self.foot_noise < 0:
            raise ValueError("foot_noise must be nonnegative")
        self.initial_offset = np.asarray(self.initial_offset, dtype=float).reshape(12)
        self.external_force = np.asarray(self.external_force, dtype=float).reshape(3)

    def to_dict(self):
        return {
            "mass_scale": self.mass_scale,
            "inertia_scale": self.inertia_scale,
            "initial_offset": self.initial_offset.tolist(),
            "foot_noise": self.foot_noise,
            "external_force": self.external_force.tolist(),
            "seed": self.seed,
        }


def _rates(p, R, v, omega, feet, forces, params: ModelParams, f_ext):
    f_tot = forces.sum(axis=0) + f_ext
    tau = np.cross(feet - p, forces).sum(axis=0)
    I = params.inertia
    vdot = f_tot / params.mass - params.gravity
    wdot = params.inertia_inv @ (R.T @ tau - np.cross(omega, I @ omega))
    return v, vdot, wdot


def step(state: SimState, forces, params: ModelParams, dt: float = DT_SIM, f_ext=None) -> SimState:
    """One RKMK4 step with forces held constant at the given feet."""
    forces = np.asarray(forces, dtype=float).reshape(N_FEET, 3)
    f_ext = np.zeros(3) if f_ext is None else np.asarray(f_ext, dtype=float)
    p0, R0, v0, w0, feet = state.p, state.R, state.v, state.omega, state.feet

    def stage(dp, th, dv, dw):
        R = R0 @ so3_exp(th)
        p, v, w = p0 + dp, v0 + dv, w0 + dw
        pd, vd, wd = _rates(p, R, v, w, feet, forces, params, f_ext)
        return pd, right_jacobian_inv(th) @ w, vd, wd

    z3 = np.zeros(3)
    k1 = stage(z3, z3, z3, z3)
    k2 = stage(*(0.5 * dt * k for k in k1))
    k3 = stage(*(0.5 * dt * k for k in k2))
    k4 = stage(*(dt * k for k in k3))
    inc = [dt / 6.0 * (a + 2 * b + 2 * c + d) for a, b, c, d in zip(k1, k2, k3, k4)]
    return SimState(
        p=p0 + inc[0],
        R=R0 @ so3_exp(inc[1]),
        v=v0 + inc[2],
        omega=w0 + inc[3],
        feet=feet.copy(),
        t=state.t + dt,
    )


@dataclass
class LandingRecord:
    t: float
    p: np.ndarray
    R: np.ndarray
    v: np.ndarray

    @property
    def euler(self) -> np.ndarray:
        return euler_from_rotation(self.R)


@dataclass
class Trace:
    mode: str
    t: np.ndarray
    states: np.ndarray  # (N, 12) with Euler angles
    forces: np.ndarray  # (N, 12) commanded forces
    error_norm: np.ndarray  # (N,)
    landing: LandingRecord | None = None
    liftoff: SimState | None = None
    max_orthonormality_error: float = 0.0

    def write_csv(self, path):
        names = ["t", "px", "py", "pz", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz"]
        names += [f"f{i}{c}" for i in range(N_FEET) for c in "xyz"] + ["error_norm"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for k in range(self.t.size):
                row = [self.t[k], *self.states[k], *self.forces[k], self.error_norm[k]]
                w.writerow([repr(float(v)) for v in row])


def _placement_noise(ref, bound, rng):
    """Constant xy offset per foot and stance phase, drawn in phase order."""
    noise = np.zeros(ref.feet.shape)
    if bound <= 0:
        return noise
    for i in range(N_FEET):
        flags = ref.stance[:, i]
        j = 0
        while j < flags.size:
            if not flags[j]:
                j += 1
                continue
            end = j
            while end < flags.size and flags[end]:
                end += 1
            noise[j:end, i, :2] = rng.uniform(-bound, bound, 2)
            j = end
    return noise


def run_closed_loop(
    gains: GainSchedule,
    params: ModelParams,
    mode: str = "vboc",
    perturbation: Perturbation | None = None,
    landing_height: float | None = None,
    max_flight: float = 3.0,
) -> Trace:
    """Simulate takeoff under ``mode`` then ballistic flight until touchdown.

    Touchdown is the first time the COM descends through ``landing_height``
    (the planned landing COM height).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    pert = perturbation or Perturbation()
    plant = params.scaled(pert.mass_scale, pert.inertia_scale)
    ref = gains.ref
    rng = np.random.default_rng(pert.seed)
    noise = _placement_noise(ref, pert.foot_noise, rng)
    dt_tick = gains.grid_dt
    h = dt_tick / TICK

    x0 = ref.x[0] + pert.initial_offset
    state = SimState.from_planner(x0, ref.feet[0] + noise[0])
    ctrl = VbocController(gains, params) if mode == "vboc" else None

    ts, xs, fs, es = [], [], [], []
    worst_orth = 0.0
    n_ticks = ref.t.size - 1
    for j in range(n_ticks):
        state = replace(state, feet=ref.feet[j] + noise[j])
        try:
            s = error_state(state.extended(), ref.extended(j))
            err = float(np.linalg.norm(s))
        except RotationErrorTooLarge:
            s, err = None, float("inf")
        if ctrl is not None:
            if s is None:
                raise RotationErrorTooLarge(f"tracking lost at t={ref.t[j]:.3f} s")
            forces = ctrl(s, ref.t[j]).forces
        else:
            forces = ref.forces[j].copy()
            forces[~ref.stance[j]] = 0.0
        for _ in range(TICK):
            ts.append(state.t)
            xs.append(state.vector())
            fs.append(forces.ravel())
            es.append(err)
            state = step(state, forces, plant, h, pert.external_force)
            worst_orth = max(worst_orth, np.abs(state.R.T @ state.R - np.eye(3)).max())
    state = replace(state, t=float(ref.t[-1]))
    liftoff = state

    landing = None
    zero = np.zeros((N_FEET, 3))
    if landing_height is not None:
        t_stop = state.t + max_flight
        while state.t < t_stop:
            ts.append(state.t)
            xs.append(state.vector())
            fs.append(zero.ravel())
            es.append(np.nan)
            nxt = step(state, zero, plant, h, pert.external_force)
            worst_orth = max(worst_orth, np.abs(nxt.R.T @ nxt.R - np.eye(3)).max())
            if state.p[2] > landing_height >= nxt.p[2] and nxt.v[2] < 0:
                tau = _crossing(state, landing_height, plant, h, pert.external_force)
                hit = step(state, zero, plant, tau, pert.external_force)
                landing = LandingRecord(hit.t, hit.p.copy(), hit.R.copy(), hit.v.copy())
                state = hit
                break
            state = nxt
        else:
            raise NoTouchdown(f"COM did not descend through z={landing_height:.3f} within {max_flight} s")
    ts.append(state.t)
    xs.append(state.vector())
    fs.append(zero.ravel())
    es.append(np.nan)
    return Trace(
        mode=mode,
        t=np.array(ts),
        states=np.array(xs),
        forces=np.array(fs),
        error_norm=np.array(es),
        landing=landing,
        liftoff=liftoff,
        max_orthonormality_error=float(worst_orth),
    )


def _crossing(state, z, params, h, f_ext, iters=30):
    """Sub-step duration at which the COM height reaches ``z`` (bracketed secant)."""
    lo, hi = 0.0, h
    f_lo = state.p[2] - z
    f_hi = step(state, np.zeros((N_FEET, 3)), params, h, f_ext).p[2] - z
    tau = h
    for _ in range(iters):
        tau = lo - f_lo * (hi - lo) / (f_hi - f_lo) if f_hi != f_lo else 0.5 * (lo + hi)
        f_tau = step(state, np.zeros((N_FEET, 3)), params, tau, f_ext).p[2] - z
        if abs(f_tau) < 1e-13:
            break
        if f_tau > 0:
            lo, f_lo = tau, f_tau
        else:
            hi, f_hi = tau, f_tau
    return tau


@dataclass
class LandingMetrics:
    e_la: np.ndarray  # target - achieved landing COM
    relative_error: float  # |horizontal e_la| / horizontal jump distance
    along_track: float  # signed (achieved - target) along the jump direction; negative is short
    distance: float

    def to_dict(self):
        return {
            "e_la": self.e_la.tolist(),
            "relative_error": self.relative_error,
            "along_track": self.along_track,
            "distance": self.distance,
        }


def landing_metrics(trace: Trace, target, start) -> LandingMetrics:
    if trace.landing is None:
        raise NoTouchdown("trace has no touchdown event")
    target = np.asarray(target, dtype=float)
    start = np.asarray(start, dtype=float)
    e = target - trace.landing.p
    span = target[:2] - start[:2]
    dist = float(np.linalg.norm(span))
    if dist > 0:
        rel = float(np.linalg.norm(e[:2]) / dist)
        along = float(-(e[:2] @ span) / dist)
    else:
        rel, along = float("nan"), float("nan")
    return LandingMetrics(e_la=e, relative_error=rel, along_track=along, distance=dist)


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def final_yaw_error(trace: Trace, target_yaw: float) -> float:
    yaw = trace.landing.euler[2] if trace.landing is not None else trace.states[-1, 5]
    return float(abs(wrap_angle(yaw - target_yaw)))


def angular_momentum(state: SimState, params: ModelParams) -> np.ndarray:
    """Inertial-frame angular momentum about the COM."""
    return state.R @ (params.inertia @ state.omega)
