"""Variation-based linearization and finite-horizon Riccati gains.

The extended state appends the four foot positions to the rigid-body state,
and the extended control holds only the twelve reaction-force components.
Rotation errors live in the tangent space of SO(3): ``R = R_d exp(hat(xi))``.

Error layout (24): dp (3), xi (3), dv (3), domega (3), dfeet (12).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RiccatiBlowup, RotationErrorTooLarge, ScheduleExpired
from .srb import (
    N_FEET,
    ModelParams,
    hat,
    right_jacobian_inv,
    rotation_from_euler,
    so3_exp,
    so3_log,
)

GRID_DT = 0.002
RK4_SUBSTEPS = 20  # RK4 steps per grid interval; the closed-loop poles reach ~500 1/s
ERR_DIM = 24
FORCE_DIM = 3 * N_FEET
BLOWUP = 1e12
ROT_LIMIT = np.pi - 1e-3

S_POS = slice(0, 3)
S_ROT = slice(3, 6)
S_VEL = slice(6, 9)
S_OMG = slice(9, 12)
S_FEET = slice(12, 24)


@dataclass
class ExtendedState:
    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    feet: np.ndarray  # (4, 3)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(3)
        self.feet = np.asarray(self.feet, dtype=float).reshape(N_FEET, 3)

    @classmethod
    def from_planner(cls, x, feet) -> "ExtendedState":
        """From a 12-state with Euler angles plus foot positions."""
        x = np.asarray(x, dtype=float)
        return cls(x[0:3], rotation_from_euler(x[3:6]), x[6:9], x[9:12], feet)

    @classmethod
    def from_vector(cls, xhat) -> "ExtendedState":
        """From the 24-vector ``[p, euler, v, omega, feet]``."""
        xhat = np.asarray(xhat, dtype=float).reshape(24)
        return cls.from_planner(xhat[:12], xhat[12:])


def error_state(x: ExtendedState, xd: ExtendedState) -> np.ndarray:
    """Error ``s`` of ``x`` relative to the reference ``xd``."""
    if not isinstance(x, ExtendedState):
        x = ExtendedState.from_vector(x)
    if not isinstance(xd, ExtendedState):
        xd = ExtendedState.from_vector(xd)
    xi = so3_log(xd.R.T @ x.R)
    if np.linalg.norm(xi) >= ROT_LIMIT:
        raise RotationErrorTooLarge(f"rotation error {np.linalg.norm(xi):.4f} rad is outside the log-map domain")
    s = np.empty(ERR_DIM)
    s[S_POS] = x.p - xd.p
    s[S_ROT] = xi
    s[S_VEL] = x.v - xd.v
    s[S_OMG] = x.omega - xd.omega
    s[S_FEET] = (x.feet - xd.feet).ravel()
    return s


def apply_error(xd: ExtendedState, s) -> ExtendedState:
    """Inverse of :func:`error_state`."""
    s = np.asarray(s, dtype=float)
    return ExtendedState(
        xd.p + s[S_POS],
        xd.R @ so3_exp(s[S_ROT]),
        xd.v + s[S_VEL],
        xd.omega + s[S_OMG],
        xd.feet + s[S_FEET].reshape(N_FEET, 3),
    )


def _body_rates(x: ExtendedState, forces, params: ModelParams):
    arms = x.feet - x.p
    tau = np.cross(arms, forces).sum(axis=0)
    I = params.inertia
    return params.inertia_inv @ (x.R.T @ tau - np.cross(x.omega, I @ x.omega))


def error_dynamics(s, xd: ExtendedState, fd, df, params: ModelParams, stance=None) -> np.ndarray:
    """Exact time derivative of ``s`` when both the reference and the perturbed
    state follow the rigid-body dynamics; feet are stationary.

    ``fd`` and ``df`` are (4, 3) reference forces and force variations; swing
    feet receive no variation.
    """
    fd = np.asarray(fd, dtype=float).reshape(N_FEET, 3)
    df = np.asarray(df, dtype=float).reshape(N_FEET, 3)
    if stance is not None:
        df = df * np.asarray(stance, dtype=float)[:, None]
    x = apply_error(xd, s)
    f = fd + df
    s = np.asarray(s, dtype=float)
    ds = np.zeros(ERR_DIM)
    ds[S_POS] = x.v - xd.v
    ds[S_ROT] = right_jacobian_inv(s[S_ROT]) @ (x.omega - so3_exp(s[S_ROT]).T @ xd.omega)
    ds[S_VEL] = df.sum(axis=0) / params.mass
    ds[S_OMG] = _body_rates(x, f, params) - _body_rates(xd, fd, params)
    return ds


def linearize(xd: ExtendedState, fd, params: ModelParams, stance=None):
    """Jacobians ``(A 24x24, B 24x12)`` of :func:`error_dynamics` at zero error."""
    if not isinstance(xd, ExtendedState):
        xd = ExtendedState.from_vector(xd)
    fd = np.asarray(fd, dtype=float).reshape(N_FEET, 3)
    stance = np.ones(N_FEET, dtype=bool) if stance is None else np.asarray(stance, dtype=bool)
    I, Iinv = params.inertia, params.inertia_inv
    Rt = xd.R.T
    w = xd.omega
    arms = xd.feet - xd.p
    tau = np.cross(arms, fd).sum(axis=0)

    A = np.zeros((ERR_DIM, ERR_DIM))
    B = np.zeros((ERR_DIM, FORCE_DIM))
    A[S_POS, S_VEL] = np.eye(3)
    A[S_ROT, S_ROT] = -hat(w)
    A[S_ROT, S_OMG] = np.eye(3)
    A[S_OMG, S_ROT] = Iinv @ hat(Rt @ tau)
    A[S_OMG, S_POS] = Iinv @ Rt @ sum(hat(f) for f in fd)
    A[S_OMG, S_OMG] = -Iinv @ (hat(w) @ I - hat(I @ w))
    for i in range(N_FEET):
        A[S_OMG, 12 + 3 * i : 15 + 3 * i] = -Iinv @ Rt @ hat(fd[i])
        if stance[i]:
            B[S_VEL, 3 * i : 3 * i + 3] = np.eye(3) / params.mass
            B[S_OMG, 3 * i : 3 * i + 3] = Iinv @ Rt @ hat(arms[i])
    return A, B


# --------------------------------------------------------------------------- resampling


@dataclass
class DenseReference:
    """Plan sampled on a uniform grid: states, feet, forces and contact flags."""

    t: np.ndarray  # (N,)
    x: np.ndarray  # (N, 12) planner states
    feet: np.ndarray  # (N, 4, 3)
    forces: np.ndarray  # (N, 4, 3)
    stance: np.ndarray  # (N, 4) bool

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    def extended(self, j) -> ExtendedState:
        return ExtendedState.from_planner(self.x[j], self.feet[j])


def _grid(t_end, grid_dt):
    n = int(round(t_end / grid_dt))
    if n < 1 or abs(n * grid_dt - t_end) > 1e-9:
        raise ValueError(f"plan span {t_end} is not a whole number of {grid_dt} s grid steps")
    return np.arange(n + 1) * grid_dt


def resample_plan(plan, grid_dt: float = GRID_DT) -> DenseReference:
    """Interpolate an optimal plan onto a uniform grid.

    States are linear between knots. Forces are linear between interval
    midpoints within each stance phase, held flat at phase ends and zero in
    swing. Foot positions are the planned (pinned) positions.
    """
    sched = plan.schedule
    dt, n_int = sched.dt, sched.n_intervals
    t = _grid(sched.t_lo, grid_dt)
    knots = np.arange(sched.n_t) * dt
    x = np.column_stack([np.interp(t, knots, plan.X[:, c]) for c in range(plan.X.shape[1])])
    x[[0, -1]] = plan.X[[0, -1]]

    U = plan.U.reshape(n_int, N_FEET, 6)
    k_of = np.array([sched.interval_at(tt) for tt in t])
    stance = sched.contact[k_of, :].copy()
    feet = U[k_of, :, :3].copy()
    forces = np.zeros((t.size, N_FEET, 3))
    mids = (np.arange(n_int) + 0.5) * dt
    for i in range(N_FEET):
        for first, last in sched.stance_phases(i):
            sel = (k_of >= first) & (k_of <= last)
            for c in range(3):
                forces[sel, i, c] = np.interp(t[sel], mids[first : last + 1], U[first : last + 1, i, 3 + c])
    return DenseReference(t=t, x=x, feet=feet, forces=forces, stance=stance)


# --------------------------------------------------------------------------- Riccati


@dataclass
class RiccatiWeights:
    """Diagonal tracking weights.

    ``Q`` penalizes position and rotation errors by ``pose``, velocity errors
    by ``rate`` and foot errors by ``foot``; ``R = effort * I``. The final
    cost is ``terminal * Q`` plus ``terminal_com * Q`` restricted to the COM
    position and velocity blocks, which is what sets the landing point. A
    large final cost on the attitude and foot blocks makes the quadratic term
    ``P B R^-1 B' P`` too stiff for explicit RK4.
    """

    pose: float = 50.0
    rate: float = 5.0
    foot: float = 1.0
    effort: float = 1e-3
    terminal: float = 0.0
    terminal_com: float = 10.0

    def Q(self) -> np.ndarray:
        return np.diag(np.r_[np.full(6, self.pose), np.full(6, self.rate), np.full(12, self.foot)])

    def R(self) -> np.ndarray:
        return self.effort * np.eye(FORCE_DIM)

    def P_f(self) -> np.ndarray:
        Q = self.Q()
        com = np.zeros(ERR_DIM)
        com[S_POS] = com[S_VEL] = 1.0
        return self.terminal * Q + self.terminal_com * Q * com[:, None] * com[None, :]


def _riccati_rhs(P, A, B, Q, Rinv):
    # dP/dtau for tau = t_f - t
    PB = P @ B
    return A.T @ P + P @ A - PB @ Rinv @ PB.T + Q


def integrate_riccati(A, B, Q, R, P_f, h: float, substeps: int = 1) -> np.ndarray:
    """Backward RK4 on the Riccati ODE over knots spaced ``h`` apart.

    ``A`` (N, n, n) and ``B`` (N, n, m) are knot values, linear in between.
    Returns P (N, n, n) with ``P[-1] = P_f``. ``substeps`` splits every knot
    interval for convergence checks.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    N = A.shape[0]
    if np.linalg.eigvalsh(0.5 * (R + R.T)).min() <= 0:
        raise ValueError("R must be positive definite")
    Rinv = np.linalg.inv(R)
    P = np.empty((N,) + Q.shape)
    Pk = 0.5 * (np.asarray(P_f, dtype=float) + np.asarray(P_f, dtype=float).T)
    P[-1] = Pk
    hs = h / substeps
    for j in range(N - 1, 0, -1):
        # integrate from knot j back to knot j-1
        for s in range(substeps):
            a0 = s / substeps
            a1 = (s + 0.5) / substeps
            a2 = (s + 1) / substeps

            def coef(a):
                return (1 - a) * A[j] + a * A[j - 1], (1 - a) * B[j] + a * B[j - 1]

            A0, B0 = coef(a0)
            A1, B1 = coef(a1)
            A2, B2 = coef(a2)
            k1 = _riccati_rhs(Pk, A0, B0, Q, Rinv)
            k2 = _riccati_rhs(Pk + 0.5 * hs * k1, A1, B1, Q, Rinv)
            k3 = _riccati_rhs(Pk + 0.5 * hs * k2, A1, B1, Q, Rinv)
            k4 = _riccati_rhs(Pk + hs * k3, A2, B2, Q, Rinv)
            Pk = Pk + (hs / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            Pk = 0.5 * (Pk + Pk.T)
        if not np.all(np.isfinite(Pk)) or np.abs(Pk).sum(axis=1).max() > BLOWUP:
            raise RiccatiBlowup(f"Riccati solution exceeded {BLOWUP:g} at knot {j - 1}")
        P[j - 1] = Pk
    return P


@dataclass
class GainSchedule:
    """Reference, linearization and cost-to-go on the controller grid."""

    ref: DenseReference
    A: np.ndarray  # (N, 24, 24)
    B: np.ndarray  # (N, 24, 12)
    P: np.ndarray  # (N, 24, 24)
    weights: RiccatiWeights = field(default_factory=RiccatiWeights)
    substeps: int = RK4_SUBSTEPS

    @property
    def t(self) -> np.ndarray:
        return self.ref.t

    @property
    def grid_dt(self) -> float:
        return self.ref.dt

    @property
    def t_end(self) -> float:
        return float(self.ref.t[-1])

    @property
    def R(self) -> np.ndarray:
        return self.weights.R()

    def knot(self, t: float) -> int:
        """Nearest grid knot to ``t``."""
        if t > self.t_end + 1e-9:
            raise ScheduleExpired(f"t={t:.4f} s is past the end of the schedule ({self.t_end:.4f} s)")
        if t < -1e-9:
            raise ValueError("time must be nonnegative")
        return int(min(max(round(t / self.grid_dt), 0), self.t.size - 1))

    def check(self, sym_tol=1e-10, psd_tol=1e-8):
        """Raise ValueError unless every P knot is symmetric and PSD."""
        for j, P in enumerate(self.P):
            if np.abs(P - P.T).max() > sym_tol * max(1.0, np.abs(P).max()):
                raise ValueError(f"P at knot {j} is not symmetric")
            if np.linalg.eigvalsh(P).min() < -psd_tol * max(1.0, np.abs(P).max()):
                raise ValueError(f"P at knot {j} is not positive semidefinite")


def linearize_reference(ref: DenseReference, params: ModelParams):
    N = ref.t.size
    A = np.empty((N, ERR_DIM, ERR_DIM))
    B = np.empty((N, ERR_DIM, FORCE_DIM))
    for j in range(N):
        A[j], B[j] = linearize(ref.extended(j), ref.forces[j], params, ref.stance[j])
    return A, B


def build_gain_schedule(
    plan,
    params: ModelParams,
    weights: RiccatiWeights | None = None,
    grid_dt: float = GRID_DT,
    substeps: int = RK4_SUBSTEPS,
) -> GainSchedule:
    weights = weights or RiccatiWeights()
    ref = resample_plan(plan, grid_dt)
    A, B = linearize_reference(ref, params)
    P = integrate_riccati(A, B, weights.Q(), weights.R(), weights.P_f(), grid_dt, substeps)
    return GainSchedule(ref=ref, A=A, B=B, P=P, weights=weights, substeps=substeps)


def halving_delta(gains: GainSchedule) -> float:
    """Relative change of P(0) when every Riccati step is halved."""
    w = gains.weights
    P_half = integrate_riccati(gains.A, gains.B, w.Q(), w.R(), w.P_f(), gains.grid_dt, 2 * gains.substeps)
    return float(np.abs(P_half[0] - gains.P[0]).max() / max(np.abs(gains.P[0]).max(), 1e-300))
