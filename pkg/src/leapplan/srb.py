"""Single-rigid-body quadruped model.

State layout (12): COM position, ZYX Euler angles (roll, pitch, yaw), COM
velocity, body-frame angular velocity. Control layout (24): per foot, position
then ground reaction force, feet ordered FL, FR, HL, HR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularOrientation

N_FEET = 4
STATE_DIM = 12
CONTROL_DIM = 6 * N_FEET
FOOT_NAMES = ("FL", "FR", "HL", "HR")
GIMBAL_EPS = 1e-3

# slices into the 12-vector
POS = slice(0, 3)
EUL = slice(3, 6)
VEL = slice(6, 9)
OMG = slice(9, 12)


def _default_hips():
    return np.array(
        [[0.19, 0.049, 0.0], [0.19, -0.049, 0.0], [-0.19, 0.049, 0.0], [-0.19, -0.049, 0.0]]
    )


@dataclass
class ModelParams:
    mass: float = 9.0
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.07, 0.26, 0.242]))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 9.81]))
    hip_offsets: np.ndarray = field(default_factory=_default_hips)
    l_max: np.ndarray = field(default_factory=lambda: np.full(N_FEET, 0.35))
    mu: np.ndarray = field(default_factory=lambda: np.full(N_FEET, 1.5))
    f_max: np.ndarray = field(default_factory=lambda: np.full(N_FEET, 140.0))

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.inertia.shape == (3,):
            self.inertia = np.diag(self.inertia)
        self.gravity = np.asarray(self.gravity, dtype=float)
        self.hip_offsets = np.asarray(self.hip_offsets, dtype=float).reshape(N_FEET, 3)
        self.l_max = np.broadcast_to(np.asarray(self.l_max, dtype=float), (N_FEET,)).copy()
        self.mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (N_FEET,)).copy()
        self.f_max = np.broadcast_to(np.asarray(self.f_max, dtype=float), (N_FEET,)).copy()
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not np.allclose(self.inertia, self.inertia.T):
            raise ValueError("inertia must be symmetric")
        if np.linalg.eigvalsh(self.inertia).min() <= 0:
            raise ValueError("inertia must be positive definite")
        for name in ("l_max", "mu", "f_max"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name} must be positive")
        self.inertia_inv = np.linalg.inv(self.inertia)

    @property
    def g(self) -> float:
        return float(np.linalg.norm(self.gravity))

    def scaled(self, mass_scale=1.0, inertia_scale=1.0) -> "ModelParams":
        return ModelParams(
            mass=self.mass * mass_scale,
            inertia=self.inertia * inertia_scale,
            gravity=self.gravity.copy(),
            hip_offsets=self.hip_offsets.copy(),
            l_max=self.l_max.copy(),
            mu=self.mu.copy(),
            f_max=self.f_max.copy(),
        )


@dataclass
class SrbState:
    p_c: np.ndarray
    theta: np.ndarray
    v_c: np.ndarray
    omega_b: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p_c, self.theta, self.v_c, self.omega_b]).astype(float)

    @classmethod
    def from_vector(cls, x) -> "SrbState":
        x = np.asarray(x, dtype=float)
        return cls(x[POS].copy(), x[EUL].copy(), x[VEL].copy(), x[OMG].copy())


@dataclass
class ControlInput:
    feet: np.ndarray  # (4, 3)
    forces: np.ndarray  # (4, 3)

    def __post_init__(self):
        self.feet = np.asarray(self.feet, dtype=float).reshape(-1, 3)
        self.forces = np.asarray(self.forces, dtype=float).reshape(-1, 3)
        if self.feet.shape != (N_FEET, 3) or self.forces.shape != (N_FEET, 3):
            raise ValueError(f"expected {N_FEET} feet")

    def as_vector(self) -> np.ndarray:
        return np.hstack([self.feet, self.forces]).ravel()

    @classmethod
    def from_vector(cls, u) -> "ControlInput":
        feet, forces = split_control(u)
        return cls(feet.copy(), forces.copy())


@dataclass
class Wrench:
    f: np.ndarray
    tau: np.ndarray


def split_control(u):
    """View a 24-vector as (feet (4,3), forces (4,3))."""
    u = np.asarray(u, dtype=float).reshape(N_FEET, 6)
    return u[:, :3], u[:, 3:]


def join_control(feet, forces) -> np.ndarray:
    return np.hstack([np.asarray(feet, float).reshape(N_FEET, 3), np.asarray(forces, float).reshape(N_FEET, 3)]).ravel()


# --------------------------------------------------------------------------- SO(3)


def hat(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def vee(W) -> np.ndarray:
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    K = hat(w)
    if th < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + (np.sin(th) / th) * K + ((1.0 - np.cos(th)) / th**2) * K @ K


def so3_log(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    c = 0.5 * (np.trace(R) - 1.0)
    th = np.arctan2(0.5 * np.linalg.norm(vee(R - R.T)), c)
    if th < 1e-6:
        # first-order series; error O(th^3)
        return vee(R - R.T) * (0.5 + th**2 / 12.0)
    if np.pi - th < 1e-5:
        # near a half turn the skew part vanishes; recover the axis from the
        # symmetric part using the largest diagonal element
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(B[k, k])
        axis /= np.linalg.norm(axis)
        # pick the sign that agrees with the (small) skew part when present
        s = vee(R - R.T)
        if axis @ s < 0:
            axis = -axis
        return axis * th
    return vee(R - R.T) * (th / (2.0 * np.sin(th)))


def right_jacobian_inv(w) -> np.ndarray:
    """Inverse right Jacobian of SO(3): d/dt exp(w) = exp(w) hat(J_r(w) w_dot)."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    K = hat(w)
    if th < 1e-6:
        return np.eye(3) + 0.5 * K + K @ K / 12.0
    coef = 1.0 / th**2 - (1.0 + np.cos(th)) / (2.0 * th * np.sin(th))
    return np.eye(3) + 0.5 * K + coef * K @ K


# --------------------------------------------------------------------------- Euler


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _dry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _drz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def rotation_from_euler(theta) -> np.ndarray:
    """Body-to-world rotation for ZYX Euler angles ``theta = (roll, pitch, yaw)``."""
    r, p, y = theta
    return _rz(y) @ _ry(p) @ _rx(r)


def rotation_euler_derivatives(theta):
    """Partial derivatives of ``rotation_from_euler`` w.r.t. roll, pitch, yaw."""
    r, p, y = theta
    Rx, Ry, Rz = _rx(r), _ry(p), _rz(y)
    return (Rz @ Ry @ _drx(r), Rz @ _dry(p) @ Rx, _drz(y) @ Ry @ Rx)


def euler_from_rotation(R) -> np.ndarray:
    pitch = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def _check_pitch(pitch):
    if abs(pitch) >= np.pi / 2 - GIMBAL_EPS:
        raise SingularOrientation(f"pitch {pitch:.6f} rad is within {GIMBAL_EPS} of gimbal lock")


def euler_rate_matrix(theta) -> np.ndarray:
    """Matrix mapping body angular velocity to ZYX Euler angle rates."""
    r, p, _ = theta
    _check_pitch(p)
    sr, cr = np.sin(r), np.cos(r)
    tp, cp = np.tan(p), np.cos(p)
    return np.array(
        [[1.0, sr * tp, cr * tp], [0.0, cr, -sr], [0.0, sr / cp, cr / cp]]
    )


def euler_rate_jacobian(theta, omega) -> np.ndarray:
    """d(B(theta) omega)/d theta, a 3x3 matrix (yaw column is zero)."""
    r, p, _ = theta
    _check_pitch(p)
    sr, cr = np.sin(r), np.cos(r)
    sp, cp = np.sin(p), np.cos(p)
    tp = sp / cp
    wy, wz = omega[1], omega[2]
    a = sr * wy + cr * wz
    d_roll = np.array([cr * tp * wy - sr * tp * wz, -sr * wy - cr * wz, (cr * wy - sr * wz) / cp])
    d_pitch = np.array([a / cp**2, 0.0, a * sp / cp**2])
    return np.column_stack([d_roll, d_pitch, np.zeros(3)])


# --------------------------------------------------------------------------- dynamics


def net_wrench(p_c, control) -> Wrench:
    if isinstance(control, ControlInput):
        feet, forces = control.feet, control.forces
    else:
        feet, forces = split_control(control)
    arms = feet - np.asarray(p_c, dtype=float)
    return Wrench(f=forces.sum(axis=0), tau=np.cross(arms, forces).sum(axis=0))


def dynamics(x, u, params: ModelParams) -> np.ndarray:
    """Continuous SRB state derivative for a 12-state and 24-control vector."""
    if isinstance(x, SrbState):
        x = x.as_vector()
    if isinstance(u, ControlInput):
        u = u.as_vector()
    x = np.asarray(x, dtype=float)
    theta, omega = x[EUL], x[OMG]
    w = net_wrench(x[POS], u)
    R = rotation_from_euler(theta)
    I = params.inertia
    xdot = np.empty(STATE_DIM)
    xdot[POS] = x[VEL]
    xdot[EUL] = euler_rate_matrix(theta) @ omega
    xdot[VEL] = w.f / params.mass - params.gravity
    xdot[OMG] = params.inertia_inv @ (R.T @ w.tau - np.cross(omega, I @ omega))
    return xdot


def dynamics_jacobians(x, u, params: ModelParams):
    """Analytic (d xdot/d x, d xdot/d u) of :func:`dynamics`."""
    x = np.asarray(x, dtype=float)
    p_c, theta, omega = x[POS], x[EUL], x[OMG]
    feet, forces = split_control(u)
    I, Iinv = params.inertia, params.inertia_inv
    R = rotation_from_euler(theta)
    dR = rotation_euler_derivatives(theta)
    arms = feet - p_c
    tau = np.cross(arms, forces).sum(axis=0)

    A = np.zeros((STATE_DIM, STATE_DIM))
    Bu = np.zeros((STATE_DIM, CONTROL_DIM))
    A[POS, VEL] = np.eye(3)
    A[EUL, EUL] = euler_rate_jacobian(theta, omega)
    A[EUL, OMG] = euler_rate_matrix(theta)

    A[OMG, POS] = Iinv @ R.T @ sum(hat(f) for f in forces)
    A[OMG, EUL] = Iinv @ np.column_stack([D.T @ tau for D in dR])
    A[OMG, OMG] = -Iinv @ (hat(omega) @ I - hat(I @ omega))

    IRt = Iinv @ R.T
    for i in range(N_FEET):
        c = 6 * i
        Bu[OMG, c : c + 3] = -IRt @ hat(forces[i])
        Bu[VEL, c + 3 : c + 6] = np.eye(3) / params.mass
        Bu[OMG, c + 3 : c + 6] = IRt @ hat(arms[i])
    return A, Bu


def hip_positions(x, params: ModelParams) -> np.ndarray:
    """World-frame hip locations (4, 3) for a 12-state."""
    x = np.asarray(x, dtype=float)
    R = rotation_from_euler(x[EUL])
    return x[POS] + params.hip_offsets @ R.T
