"""Reference trajectories from projectile closed forms.

Vertical acceleration follows a linear-in-time heuristic scaled by the
available normal force; horizontal and angular accelerations are constants
chosen so that the ballistic flight after liftoff ends on the landing target.
All reference states are explicit-Euler integrals on the planner grid, and
the constants are solved against that discrete integral so the liftoff state
lands exactly on target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTiming, InconsistentInput, Unreachable
from .schedule import ContactSchedule
from .srb import (
    CONTROL_DIM,
    EUL,
    N_FEET,
    OMG,
    POS,
    STATE_DIM,
    VEL,
    ModelParams,
    euler_rate_matrix,
    join_control,
    rotation_from_euler,
)
from .terrain import FLAT, TerrainModel

AXES = {"roll": 0, "pitch": 1, "yaw": 2}


@dataclass
class JumpSpec:
    landing_target: np.ndarray
    landing_height: float = 0.0
    rotation_axis: str = "yaw"
    rotation_angle: float = 0.0
    gait: str = "static"
    takeoff_duration: float | None = None
    beta: float = -0.1
    gamma: float = 0.45

    def __post_init__(self):
        self.landing_target = np.asarray(self.landing_target, dtype=float).reshape(3)
        if self.rotation_axis not in AXES:
            raise ValueError(f"rotation_axis must be one of {tuple(AXES)}")
        if self.takeoff_duration is not None and not self.takeoff_duration > 0:
            raise ValueError("takeoff_duration must be positive")


@dataclass
class ReferenceTrajectory:
    x_ref: np.ndarray  # (n_t, 12)
    u_ref: np.ndarray  # (n_t - 1, 24)
    accel: np.ndarray  # (n_t - 1, 3) COM acceleration per interval
    flight_time: float
    alpha: float
    schedule: ContactSchedule
    landing_target: np.ndarray

    @property
    def liftoff_state(self) -> np.ndarray:
        return self.x_ref[-1]

    @property
    def t_lo(self) -> float:
        return self.schedule.t_lo


def vertical_accel(t, t_lo, beta, gamma, mass, contact, f_max) -> float:
    """Heuristic vertical COM acceleration at time ``t`` for the given contact flags."""
    contact = np.asarray(contact, dtype=float)
    available = float(contact @ np.broadcast_to(f_max, contact.shape))
    return (beta + (t / t_lo) * gamma) * available / mass


def vertical_accel_profile(spec: JumpSpec, sched: ContactSchedule, params: ModelParams) -> np.ndarray:
    """Vertical acceleration per control interval, evaluated at interval midpoints."""
    t_lo = sched.t_lo
    if spec.takeoff_duration is not None and abs(spec.takeoff_duration - t_lo) > 1e-9:
        raise InconsistentInput(
            f"takeoff_duration {spec.takeoff_duration} does not match schedule span {t_lo}"
        )
    t_mid = (np.arange(sched.n_intervals) + 0.5) * sched.dt
    return np.array(
        [
            vertical_accel(t, t_lo, spec.beta, spec.gamma, params.mass, sched.contact[k], params.f_max)
            for k, t in enumerate(t_mid)
        ]
    )


def flight_time(z_lo, vz_lo, z_la, g) -> float:
    """Time until a projectile from (z_lo, vz_lo) reaches z_la on its way down."""
    disc = vz_lo**2 - 2.0 * g * (z_la - z_lo)
    if disc < 0:
        raise Unreachable(
            f"landing height {z_la:.3f} m is above the apex {z_lo + vz_lo**2 / (2 * g):.3f} m"
        )
    t = (vz_lo + np.sqrt(disc)) / g
    if t < 0:
        raise Unreachable("landing height is only reached before liftoff")
    return float(max(t, 0.0))


def _position_gain(t_lo, dt):
    # sum_k k*dt^2 over N Euler steps = 1/2 t_lo (t_lo - dt); dt=None is the continuous limit
    return 0.5 * t_lo * (t_lo - (dt or 0.0))


def lateral_accel(p0, v0, target_xy, t_lo, dt_fl, dt=None) -> np.ndarray:
    """Constant horizontal acceleration landing the COM on ``target_xy``.

    Pass the planner step ``dt`` to solve against explicit-Euler integration
    of the takeoff instead of the continuous closed form.
    """
    if not t_lo > 0:
        raise DegenerateTiming("takeoff duration must be positive")
    denom = _position_gain(t_lo, dt) + t_lo * dt_fl
    if abs(denom) < 1e-12:
        raise DegenerateTiming("no time to accelerate before landing")
    p0, v0, target = (np.asarray(a, dtype=float)[:2] for a in (p0, v0, target_xy))
    return (target - p0 - v0 * (t_lo + dt_fl)) / denom


@dataclass
class AngularReference:
    alpha: float
    rate0: float = 0.0

    def omega(self, t):
        return self.rate0 + self.alpha * np.asarray(t)

    def theta(self, t):
        t = np.asarray(t)
        return self.rate0 * t + 0.5 * self.alpha * t**2


def angular_reference(rotation_angle, t_lo, dt_fl, dt=None, rate0=0.0) -> AngularReference:
    """Constant angular acceleration so that liftoff angle plus coasting equals ``rotation_angle``."""
    if not t_lo > 0:
        raise DegenerateTiming("takeoff duration must be positive")
    denom = _position_gain(t_lo, dt) + t_lo * dt_fl
    if abs(denom) < 1e-12:
        raise DegenerateTiming("no time to accelerate before landing")
    return AngularReference((rotation_angle - rate0 * (t_lo + dt_fl)) / denom, rate0)


def feet_under_hips(x, params: ModelParams, terrain: TerrainModel) -> np.ndarray:
    R = rotation_from_euler(x[EUL])
    hips = x[POS] + params.hip_offsets @ R.T
    feet = hips.copy()
    for i in range(N_FEET):
        feet[i, 2] = terrain.height(hips[i, 0], hips[i, 1])
    return feet


def build_reference(
    spec: JumpSpec,
    sched: ContactSchedule,
    x0,
    params: ModelParams,
    terrain: TerrainModel = FLAT,
) -> ReferenceTrajectory:
    x0 = np.asarray(x0, dtype=float).reshape(STATE_DIM)
    if spec.gait == "static" and np.linalg.norm(x0[VEL]) > 1e-3:
        raise InconsistentInput("a static takeoff needs a resting initial state")
    n_int, dt, t_lo = sched.n_intervals, sched.dt, sched.t_lo
    g_vec = params.gravity

    az = vertical_accel_profile(spec, sched, params)
    z, vz = x0[2], x0[8]
    for k in range(n_int):
        z, vz = z + dt * vz, vz + dt * az[k]
    t_fl = flight_time(z, vz, spec.landing_target[2], params.g)
    axy = lateral_accel(x0[0:2], x0[6:8], spec.landing_target[:2], t_lo, t_fl, dt)

    axis = AXES[spec.rotation_axis]
    rate0 = float((euler_rate_matrix(x0[EUL]) @ x0[OMG])[axis])
    ang = angular_reference(spec.rotation_angle, t_lo, t_fl, dt, rate0)

    accel = np.column_stack([np.full(n_int, axy[0]), np.full(n_int, axy[1]), az])
    X = np.zeros((n_int + 1, STATE_DIM))
    X[0] = x0
    rates = np.zeros(3)
    for k in range(n_int + 1):
        rates[axis] = ang.omega(k * dt)
        X[k, OMG] = np.linalg.solve(euler_rate_matrix(X[k, EUL]), rates)
        if k == n_int:
            break
        X[k + 1, POS] = X[k, POS] + dt * X[k, VEL]
        X[k + 1, VEL] = X[k, VEL] + dt * accel[k]
        X[k + 1, EUL] = X[k, EUL] + dt * rates

    U = np.zeros((n_int, CONTROL_DIM))
    counts = sched.stance_count
    for k in range(n_int):
        feet = feet_under_hips(X[k], params, terrain)
        forces = np.zeros((N_FEET, 3))
        if counts[k] > 0:
            share = sched.contact[k].astype(float) / counts[k]
            forces = np.outer(share, params.mass * (accel[k] + g_vec))
        U[k] = join_control(feet, forces)

    return ReferenceTrajectory(
        x_ref=X,
        u_ref=U,
        accel=accel,
        flight_time=t_fl,
        alpha=ang.alpha,
        schedule=sched,
        landing_target=spec.landing_target.copy(),
    )


def ballistic_landing(x_lo, z_la, g) -> tuple[np.ndarray, float]:
    """COM position where a projectile from liftoff state ``x_lo`` crosses ``z_la`` descending."""
    x_lo = np.asarray(x_lo, dtype=float)
    t = flight_time(x_lo[2], x_lo[8], z_la, g)
    p = x_lo[POS] + x_lo[VEL] * t - 0.5 * np.array([0.0, 0.0, g]) * t**2
    return p, t
