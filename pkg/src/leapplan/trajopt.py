"""Direct transcription of the takeoff phase.

Decision vector: all states ``X (n_t, 12)`` followed by all controls
``U (n_t - 1, 24)``. Dynamics are enforced as explicit-Euler defects; stance
feet touch the terrain and stay put within a stance phase; every foot stays
within reach of its hip; stance forces live in the friction pyramid and swing
forces are pinned to zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .reference import ReferenceTrajectory
from .schedule import ContactSchedule
from .sqp import NlpResult, NlpSpec, solve_nlp
from .srb import (
    CONTROL_DIM,
    EUL,
    N_FEET,
    POS,
    STATE_DIM,
    ModelParams,
    dynamics,
    dynamics_jacobians,
    hip_positions,
    rotation_euler_derivatives,
    rotation_from_euler,
    split_control,
)
from .terrain import TerrainModel, Patch  # noqa: F401  (re-exported)

FEAS_TOL = 1e-6


@dataclass
class PlannerWeights:
    """Diagonal cost weights; the terminal weight is ``terminal_scale`` times the stage weight."""

    pose: float = 10.0
    rate: float = 1.0
    control: float = 1e-3
    foot: float = 10.0
    terminal_scale: float = 1000.0

    def stage_state(self) -> np.ndarray:
        return np.array([self.pose] * 6 + [self.rate] * 6)

    def stage_control(self) -> np.ndarray:
        return np.tile(np.r_[np.full(3, self.foot), np.full(3, self.control)], N_FEET)

    def terminal_state(self) -> np.ndarray:
        return self.terminal_scale * self.stage_state()


@dataclass
class NlpProblem:
    ref: ReferenceTrajectory
    schedule: ContactSchedule
    terrain: TerrainModel
    params: ModelParams
    weights: PlannerWeights
    x0: np.ndarray
    # filled by build_nlp
    z_ref: np.ndarray = field(default=None, repr=False)
    W: np.ndarray = field(default=None, repr=False)
    lb: np.ndarray = field(default=None, repr=False)
    ub: np.ndarray = field(default=None, repr=False)
    stance_feet: list = field(default_factory=list)
    pin_pairs: list = field(default_factory=list)
    friction_rows: np.ndarray = field(default=None, repr=False)

    @property
    def n_t(self) -> int:
        return self.schedule.n_t

    @property
    def dt(self) -> float:
        return self.schedule.dt

    @property
    def nx_total(self) -> int:
        return STATE_DIM * self.n_t

    @property
    def n_vars(self) -> int:
        return self.nx_total + CONTROL_DIM * (self.n_t - 1)

    def ix(self, k) -> slice:
        return slice(STATE_DIM * k, STATE_DIM * (k + 1))

    def iu(self, k) -> slice:
        s = self.nx_total + CONTROL_DIM * k
        return slice(s, s + CONTROL_DIM)

    def foot_idx(self, k, i) -> int:
        return self.nx_total + CONTROL_DIM * k + 6 * i

    def force_idx(self, k, i) -> int:
        return self.foot_idx(k, i) + 3

    def unpack(self, z):
        X = z[: self.nx_total].reshape(self.n_t, STATE_DIM)
        U = z[self.nx_total :].reshape(self.n_t - 1, CONTROL_DIM)
        return X, U

    def pack(self, X, U) -> np.ndarray:
        return np.concatenate([np.asarray(X, float).ravel(), np.asarray(U, float).ravel()])

    # -- cost ---------------------------------------------------------------
    def objective(self, z):
        e = z - self.z_ref
        return float(e @ (self.W * e))

    def gradient(self, z):
        return 2.0 * self.W * (z - self.z_ref)

    def hessian(self, z):
        return np.diag(2.0 * self.W)

    # -- equalities ---------------------------------------------------------
    def eq(self, z):
        X, U = self.unpack(z)
        out = [X[0] - self.x0]
        for k in range(self.n_t - 1):
            out.append(X[k + 1] - X[k] - self.dt * dynamics(X[k], U[k], self.params))
        h = [self.terrain.height(z[j], z[j + 1]) - z[j + 2] for j in self.stance_feet]
        out.append(np.asarray(h, dtype=float))
        pins = [z[b : b + 2] - z[a : a + 2] for a, b in self.pin_pairs]
        if pins:
            out.append(np.concatenate(pins))
        return np.concatenate(out)

    def eq_jac(self, z):
        X, U = self.unpack(z)
        n_eq = STATE_DIM * self.n_t + len(self.stance_feet) + 2 * len(self.pin_pairs)
        J = np.zeros((n_eq, self.n_vars))
        J[:STATE_DIM, :STATE_DIM] = np.eye(STATE_DIM)
        eye = np.eye(STATE_DIM)
        for k in range(self.n_t - 1):
            r = slice(STATE_DIM * (k + 1), STATE_DIM * (k + 2))
            A, B = dynamics_jacobians(X[k], U[k], self.params)
            J[r, self.ix(k + 1)] = eye
            J[r, self.ix(k)] = -eye - self.dt * A
            J[r, self.iu(k)] = -self.dt * B
        row = STATE_DIM * self.n_t
        for j in self.stance_feet:
            # piecewise-flat terrain: zero slope in x, y
            J[row, j + 2] = -1.0
            row += 1
        for a, b in self.pin_pairs:
            J[row, b], J[row, a] = 1.0, -1.0
            J[row + 1, b + 1], J[row + 1, a + 1] = 1.0, -1.0
            row += 2
        return J

    # -- inequalities -------------------------------------------------------
    def _leg_terms(self, X, U):
        feet = U[:, :].reshape(-1, N_FEET, 6)[:, :, :3]
        hips = np.stack([hip_positions(X[k], self.params) for k in range(self.n_t - 1)])
        return feet - hips

    def ineq(self, z):
        X, U = self.unpack(z)
        d = self._leg_terms(X, U)
        l2 = self.params.l_max**2
        leg = ((d**2).sum(axis=2) - l2) / l2
        return np.concatenate([leg.ravel(), self.friction_rows @ z])

    def ineq_jac(self, z):
        X, U = self.unpack(z)
        d = self._leg_terms(X, U)
        n_leg = (self.n_t - 1) * N_FEET
        J = np.zeros((n_leg + self.friction_rows.shape[0], self.n_vars))
        l2 = self.params.l_max**2
        for k in range(self.n_t - 1):
            dR = rotation_euler_derivatives(X[k, EUL])
            xk = STATE_DIM * k
            for i in range(N_FEET):
                row = k * N_FEET + i
                g = 2.0 * d[k, i] / l2[i]
                fi = self.foot_idx(k, i)
                J[row, fi : fi + 3] = g
                J[row, xk : xk + 3] = -g
                h = self.params.hip_offsets[i]
                J[row, xk + 3 : xk + 6] = [-(g @ (D @ h)) for D in dR]
        J[n_leg:] = self.friction_rows
        return J

    # -- curvature ----------------------------------------------------------
    def _knot_grad(self, v, lam_k, mu_k):
        """Gradient of lam_k'defect_k + mu_k'leg_k over (x_k, u_k), excluding the linear x_{k+1} term."""
        x, u = v[:STATE_DIM], v[STATE_DIM:]
        A, B = dynamics_jacobians(x, u, self.params)
        grad = -self.dt * np.concatenate([lam_k @ A, lam_k @ B])
        if np.any(mu_k):
            R = rotation_from_euler(x[EUL])
            dR = rotation_euler_derivatives(x[EUL])
            feet = u.reshape(N_FEET, 6)[:, :3]
            l2 = self.params.l_max**2
            for i in np.flatnonzero(mu_k):
                h = self.params.hip_offsets[i]
                g = mu_k[i] * 2.0 * (feet[i] - x[POS] - R @ h) / l2[i]
                grad[STATE_DIM + 6 * i : STATE_DIM + 6 * i + 3] += g
                grad[POS] -= g
                grad[EUL] -= [g @ (D @ h) for D in dR]
        return grad

    def lagrangian_hessian(self, z, lam, mu, eps=1e-6):
        """Block-diagonal Lagrangian Hessian (possibly indefinite).

        Knot ``k`` couples only ``x_k`` and ``u_k``, so the curvature is built
        from central differences of the analytic per-knot gradient.
        """
        X, U = self.unpack(z)
        H = np.diag(2.0 * self.W)
        n_leg = N_FEET
        for k in range(self.n_t - 1):
            idx = np.r_[np.arange(self.ix(k).start, self.ix(k).stop), np.arange(self.iu(k).start, self.iu(k).stop)]
            lam_k = lam[STATE_DIM * (k + 1) : STATE_DIM * (k + 2)]
            mu_k = np.maximum(mu[n_leg * k : n_leg * (k + 1)], 0.0)
            v = np.concatenate([X[k], U[k]])
            C = np.zeros((idx.size, idx.size))
            for j in range(idx.size):
                e = np.zeros(idx.size)
                e[j] = eps
                C[:, j] = (self._knot_grad(v + e, lam_k, mu_k) - self._knot_grad(v - e, lam_k, mu_k)) / (2 * eps)
            H[np.ix_(idx, idx)] += 0.5 * (C + C.T)
        return H

    def spec(self, max_iter=200, kkt_tol=1e-4, feas_tol=FEAS_TOL, hessian_mode="auto") -> NlpSpec:
        return NlpSpec(
            n=self.n_vars,
            objective=self.objective,
            gradient=self.gradient,
            hessian=self.hessian,
            eq=self.eq,
            eq_jac=self.eq_jac,
            ineq=self.ineq,
            ineq_jac=self.ineq_jac,
            lb=self.lb,
            ub=self.ub,
            max_iter=max_iter,
            kkt_tol=kkt_tol,
            feas_tol=feas_tol,
            hessian_mode=hessian_mode,
            lagrangian_hessian=self.lagrangian_hessian,
        )


def build_nlp(
    ref: ReferenceTrajectory,
    sched: ContactSchedule,
    terrain: TerrainModel,
    params: ModelParams,
    weights: PlannerWeights | None = None,
    x0=None,
) -> NlpProblem:
    weights = weights or PlannerWeights()
    if ref.x_ref.shape != (sched.n_t, STATE_DIM) or ref.u_ref.shape != (sched.n_t - 1, CONTROL_DIM):
        raise DimensionMismatch(
            f"reference shapes {ref.x_ref.shape}/{ref.u_ref.shape} do not fit n_t={sched.n_t}"
        )
    if abs(ref.schedule.dt - sched.dt) > 1e-12:
        raise DimensionMismatch("reference and schedule disagree on dt")
    x0 = ref.x_ref[0].copy() if x0 is None else np.asarray(x0, dtype=float)
    nlp = NlpProblem(ref=ref, schedule=sched, terrain=terrain, params=params, weights=weights, x0=x0)
    n_int = sched.n_intervals

    nlp.z_ref = nlp.pack(ref.x_ref, ref.u_ref)
    # x_0 is pinned to x0, so its weight only adds a constant; keeping it makes the Hessian definite
    W = np.concatenate(
        [np.tile(weights.stage_state(), n_int), weights.terminal_state(), np.tile(weights.stage_control(), n_int)]
    )
    nlp.W = W

    lb = np.full(nlp.n_vars, -np.inf)
    ub = np.full(nlp.n_vars, np.inf)
    fric = []
    for k in range(n_int):
        for i in range(N_FEET):
            fi = nlp.force_idx(k, i)
            if sched.contact[k, i]:
                lb[fi + 2], ub[fi + 2] = 0.0, params.f_max[i]
                mu = params.mu[i]
                for ax in (0, 1):
                    for sign in (1.0, -1.0):
                        row = np.zeros(nlp.n_vars)
                        row[fi + ax] = sign
                        row[fi + 2] = -mu
                        fric.append(row)
            else:
                lb[fi : fi + 3] = 0.0
                ub[fi : fi + 3] = 0.0
    nlp.lb, nlp.ub = lb, ub
    nlp.friction_rows = np.array(fric) if fric else np.zeros((0, nlp.n_vars))

    for i in range(N_FEET):
        for first, last in sched.stance_phases(i):
            for k in range(first, last + 1):
                nlp.stance_feet.append(nlp.foot_idx(k, i))
                if k < last:
                    nlp.pin_pairs.append((nlp.foot_idx(k, i), nlp.foot_idx(k + 1, i)))
    return nlp


@dataclass
class FeasibilityReport:
    dynamics_defect: float
    initial_state_error: float
    friction_violation: float
    swing_force: float
    leg_violation: float
    pinning_drift: float
    foot_height_error: float
    tol: float = FEAS_TOL

    @property
    def passed(self) -> bool:
        return all(
            v <= self.tol
            for v in (
                self.dynamics_defect,
                self.initial_state_error,
                self.friction_violation,
                self.swing_force,
                self.leg_violation,
                self.pinning_drift,
                self.foot_height_error,
            )
        )

    def to_dict(self):
        d = {k: float(v) for k, v in self.__dict__.items()}
        d["passed"] = self.passed
        return d


@dataclass
class OptimalPlan:
    X: np.ndarray
    U: np.ndarray
    schedule: ContactSchedule
    stats: dict
    report: FeasibilityReport | None = None
    wall_time: float = 0.0

    @property
    def dt(self) -> float:
        return self.schedule.dt

    @property
    def t_lo(self) -> float:
        return self.schedule.t_lo

    @property
    def liftoff_state(self) -> np.ndarray:
        return self.X[-1]


def validate_plan(plan: OptimalPlan, nlp: NlpProblem, tol: float = FEAS_TOL) -> FeasibilityReport:
    """Re-check every constraint directly from the model, not from the NLP callbacks."""
    X, U, sched, params = plan.X, plan.U, plan.schedule, nlp.params
    defect = max(
        np.abs(X[k + 1] - X[k] - sched.dt * dynamics(X[k], U[k], params)).max()
        for k in range(sched.n_intervals)
    )
    fric = swing = leg = drift = height = 0.0
    for k in range(sched.n_intervals):
        feet, forces = split_control(U[k])
        R = rotation_from_euler(X[k, EUL])
        for i in range(N_FEET):
            f = forces[i]
            hip = X[k, POS] + R @ params.hip_offsets[i]
            leg = max(leg, np.linalg.norm(feet[i] - hip) - params.l_max[i])
            if sched.contact[k, i]:
                mu = params.mu[i]
                fric = max(fric, abs(f[0]) - mu * f[2], abs(f[1]) - mu * f[2], -f[2], f[2] - params.f_max[i])
                height = max(height, abs(feet[i, 2] - nlp.terrain.height(feet[i, 0], feet[i, 1])))
                if k + 1 < sched.n_intervals and sched.contact[k + 1, i]:
                    drift = max(drift, np.linalg.norm(split_control(U[k + 1])[0][i] - feet[i]))
            else:
                swing = max(swing, np.abs(f).max())
    return FeasibilityReport(
        dynamics_defect=float(defect),
        initial_state_error=float(np.abs(X[0] - nlp.x0).max()),
        friction_violation=float(max(fric, 0.0)),
        swing_force=float(swing),
        leg_violation=float(max(leg, 0.0)),
        pinning_drift=float(drift),
        foot_height_error=float(height),
        tol=tol,
    )


def solve_trajectory(
    nlp: NlpProblem,
    warm_start: OptimalPlan | None = None,
    max_iter: int = 200,
    kkt_tol: float = 1e-4,
    feas_tol: float = FEAS_TOL,
    hessian_mode: str = "auto",
) -> OptimalPlan:
    """Solve the takeoff NLP, starting from the reference unless a warm start is given."""
    z0 = nlp.z_ref.copy() if warm_start is None else nlp.pack(warm_start.X, warm_start.U)
    t0 = time.perf_counter()
    res: NlpResult = solve_nlp(nlp.spec(max_iter, kkt_tol, feas_tol, hessian_mode), z0)
    wall = time.perf_counter() - t0
    X, U = nlp.unpack(res.x)
    stats = {
        "status": res.status,
        "iterations": res.iterations,
        "kkt_residual": res.kkt_residual,
        "constraint_violation": res.violation,
        "objective": res.objective,
        "qp_iterations": res.qp_iterations,
        "hessian": res.hessian_used,
        "merit_history": res.merit_history,
    }
    plan = OptimalPlan(X=X.copy(), U=U.copy(), schedule=nlp.schedule, stats=stats, wall_time=wall)
    plan.report = validate_plan(plan, nlp, tol=max(feas_tol, FEAS_TOL))
    return plan
