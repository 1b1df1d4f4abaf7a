"""Dense convex QP solver.

Dual active-set method of Goldfarb and Idnani. Starts from the unconstrained
minimizer, adds equality rows first, then repeatedly adds the most violated
inequality (ties resolved toward the lowest row index) while dropping rows
whose multipliers would turn negative. The factorization ``J = L^-T Q`` is
updated with a Householder reflection on add and Givens rotations on drop.

Problem form::

    min 1/2 x'Hx + g'x   s.t.  A_eq x = b_eq,  A_in x <= b_in,  lb <= x <= ub
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, solve_triangular

from .errors import QpInfeasible, QpUnbounded

REG = 1e-9


@dataclass
class QpSpec:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.size
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected {(n, n)}")
        if not np.allclose(self.H, self.H.T, atol=1e-10 * max(1.0, np.abs(self.H).max(initial=0.0))):
            raise ValueError("H must be symmetric")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        self.A_in, self.b_in = _rows(self.A_in, self.b_in, n, "inequality")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound vectors must match the variable count")
        if np.any(self.lb > self.ub):
            raise QpInfeasible("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.g.size


def _rows(A, b, n, what):
    if A is None or np.size(A) == 0:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError(f"{what} rows have inconsistent shapes {A.shape} / {b.shape}")
    return A, b


@dataclass
class QpResult:
    x: np.ndarray
    status: str
    active: list  # indices into the stacked inequality rows [A_in; -I(lb); I(ub)]
    lam_eq: np.ndarray
    mu_in: np.ndarray
    z_bounds: np.ndarray  # net bound multiplier: H x + g + A_eq'lam + A_in'mu - z = 0
    iterations: int = 0
    objective: float = 0.0
    warm_started: bool = False
    kkt: dict = field(default_factory=dict)


class _Problem:
    """Constraints rewritten as ``C x = c`` (equalities) and ``N x >= d``."""

    def __init__(self, spec: QpSpec):
        n = spec.n
        fixed = np.isfinite(spec.lb) & np.isfinite(spec.ub) & (spec.lb == spec.ub)
        fixed_idx = np.flatnonzero(fixed)
        eye = np.eye(n)
        self.C = np.vstack([spec.A_eq, eye[fixed_idx]])
        self.c = np.concatenate([spec.b_eq, spec.lb[fixed_idx]])
        self.n_eq_rows = spec.A_eq.shape[0]
        self.fixed_idx = fixed_idx

        lb_idx = np.flatnonzero(np.isfinite(spec.lb) & ~fixed)
        ub_idx = np.flatnonzero(np.isfinite(spec.ub) & ~fixed)
        self.N = np.vstack([-spec.A_in, eye[lb_idx], -eye[ub_idx]])
        self.d = np.concatenate([-spec.b_in, spec.lb[lb_idx], -spec.ub[ub_idx]])
        self.m_in = spec.A_in.shape[0]
        self.lb_idx = lb_idx
        self.ub_idx = ub_idx
        norms = np.linalg.norm(self.N, axis=1)
        self.N_norm = np.where(norms > 0, norms, 1.0)

    def unpack(self, spec, x, u_eq, u_in):
        """Translate internal multipliers back to the QpSpec sign convention."""
        n = spec.n
        lam_eq = -u_eq[: self.n_eq_rows]
        z = np.zeros(n)
        z[self.fixed_idx] += u_eq[self.n_eq_rows :]
        mu_in = u_in[: self.m_in].copy()
        k = self.m_in
        z[self.lb_idx] += u_in[k : k + self.lb_idx.size]
        k += self.lb_idx.size
        z[self.ub_idx] -= u_in[k : k + self.ub_idx.size]
        return lam_eq, mu_in, z


def _factor(H):
    """Cholesky of H (lower), with a small ridge when H is only PSD."""
    n = H.shape[0]
    try:
        L, _ = cho_factor(H, lower=True, check_finite=False)
        if np.all(np.diag(L) > 1e-12 * max(1.0, np.sqrt(np.abs(np.diag(H)).max()))):
            return np.tril(L), 0.0
    except np.linalg.LinAlgError:
        pass
    reg = REG * max(1.0, np.abs(np.diag(H)).max())
    try:
        L, _ = cho_factor(H + reg * np.eye(n), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError("QP Hessian is not positive semidefinite") from exc
    return np.tril(L), reg


def _kkt_report(spec, x, lam_eq, mu_in, z):
    stat = spec.H @ x + spec.g + spec.A_eq.T @ lam_eq + spec.A_in.T @ mu_in - z
    eq_res = spec.A_eq @ x - spec.b_eq
    in_res = np.maximum(spec.A_in @ x - spec.b_in, 0.0)
    bnd = np.maximum(np.maximum(spec.lb - x, x - spec.ub), 0.0)
    slack = spec.b_in - spec.A_in @ x
    return {
        "stationarity": float(np.abs(stat).max(initial=0.0)),
        "primal": float(max(np.abs(eq_res).max(initial=0.0), in_res.max(initial=0.0), bnd.max(initial=0.0))),
        "complementarity": float(np.abs(mu_in * slack).max(initial=0.0)),
    }


def _try_warm(spec, prob, H, active):
    """Solve the equality QP on a guessed working set; accept it if it is optimal."""
    active = sorted(set(int(a) for a in active))
    n = spec.n
    C = np.vstack([prob.C, prob.N[active]])
    c = np.concatenate([prob.c, prob.d[active]])
    k = C.shape[0]
    K = np.block([[H, -C.T], [C, np.zeros((k, k))]])
    rhs = np.concatenate([-spec.g, c])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    x, w = sol[:n], sol[n:]
    n_eq = prob.C.shape[0]
    scale = max(1.0, np.abs(x).max())
    slack = (prob.N @ x - prob.d) / prob.N_norm
    if slack.size and slack.min() < -1e-9 * scale:
        return None
    w_in = w[n_eq:]
    if w_in.size and w_in.min() < -1e-9 * max(1.0, np.abs(w).max()):
        return None
    stat = H @ x + spec.g - C.T @ w
    if np.abs(stat).max(initial=0.0) > 1e-8 * max(1.0, np.abs(spec.g).max(initial=0.0)):
        return None
    u_in = np.zeros(prob.N.shape[0])
    u_in[active] = np.maximum(w_in, 0.0)
    return x, w[:n_eq], u_in, active


def solve_qp(spec: QpSpec, warm_active=None, max_iter: int | None = None) -> QpResult:
    """Solve a convex QP. Raises QpInfeasible or QpUnbounded."""
    prob = _Problem(spec)
    n = spec.n
    L, reg = _factor(spec.H)
    H = spec.H + reg * np.eye(n) if reg else spec.H

    if warm_active is not None:
        warm = _try_warm(spec, prob, H, warm_active)
        if warm is not None:
            x, u_eq, u_in, active = warm
            return _finish(spec, prob, x, u_eq, u_in, active, reg, 0, warm_started=True)

    J = solve_triangular(L, np.eye(n), lower=True, check_finite=False).T
    x = -J @ (J.T @ spec.g)
    R = np.zeros((n, n))
    u = np.zeros(n + 1)
    q = 0
    act: list[int] = []  # entries: ('e', k) for equality k, or inequality row id (int)
    it = 0
    tol = 1e-12

    def add(d, p):
        nonlocal q, J
        d2 = d[q:]
        nrm = np.linalg.norm(d2)
        delta = -nrm if d2[0] > 0 else nrm
        v = d2.copy()
        v[0] -= delta
        vv = v @ v
        if vv > 0:
            J[:, q:] -= np.outer(J[:, q:] @ v, v * (2.0 / vv))
        R[:q, q] = d[:q]
        R[q, q] = delta
        act.append(p)
        q += 1

    def drop(k):
        nonlocal q
        del act[k]
        R[:, k:q - 1] = R[:, k + 1:q]
        R[:, q - 1] = 0.0
        u[k:q - 1] = u[k + 1:q]
        u[q - 1] = 0.0
        for j in range(k, q - 1):
            a, b = R[j, j], R[j + 1, j]
            h = np.hypot(a, b)
            if h == 0.0:
                continue
            c, s = a / h, b / h
            rj, rj1 = R[j, j:q - 1].copy(), R[j + 1, j:q - 1].copy()
            R[j, j:q - 1] = c * rj + s * rj1
            R[j + 1, j:q - 1] = -s * rj + c * rj1
            R[j + 1, j] = 0.0
            Jj, Jj1 = J[:, j].copy(), J[:, j + 1].copy()
            J[:, j] = c * Jj + s * Jj1
            J[:, j + 1] = -s * Jj + c * Jj1
        q -= 1

    # equality rows: always active, multipliers free
    n_eq = prob.C.shape[0]
    eq_sign = np.ones(n_eq)
    for k in range(n_eq):
        npk = prob.C[k]
        d = J.T @ npk
        scale = max(1.0, np.linalg.norm(npk) * np.abs(x).max(initial=0.0), abs(prob.c[k]))
        if np.linalg.norm(d[q:]) <= 1e-10 * np.linalg.norm(npk):
            if abs(npk @ x - prob.c[k]) > 1e-8 * scale:
                raise QpInfeasible(f"equality row {k} is inconsistent with the others")
            continue
        s = npk @ x - prob.c[k]
        z = J[:, q:] @ d[q:]
        r = solve_triangular(R[:q, :q], d[:q], check_finite=False) if q else np.zeros(0)
        t = -s / (z @ npk)
        x = x + t * z
        u[:q] -= t * r
        u[q] = t
        add(d, ("e", k))
        it += 1

    m = prob.N.shape[0]
    if max_iter is None:
        max_iter = 20 * (n + m) + 100
    feas_tol = 1e-11
    while m:
        slack = (prob.N @ x - prob.d) / prob.N_norm
        thresh = feas_tol * max(1.0, np.abs(x).max())
        if act:
            in_act = [a for a in act if not isinstance(a, tuple)]
            slack[in_act] = np.inf
        p = int(np.argmin(slack))
        if slack[p] >= -thresh:
            break
        npv = prob.N[p]
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise QpInfeasible(f"active-set iteration cap {max_iter} reached (cycling?)")
            d = J.T @ npv
            z = J[:, q:] @ d[q:]
            r = solve_triangular(R[:q, :q], d[:q], check_finite=False) if q else np.zeros(0)
            # partial (dual) step limited by multipliers of active inequalities
            t1, k_drop = np.inf, -1
            for j in range(q):
                if isinstance(act[j], tuple):
                    continue
                if r[j] > tol and u[j] / r[j] < t1:
                    t1, k_drop = u[j] / r[j], j
            zn = z @ npv
            s_p = npv @ x - prob.d[p]
            t2 = -s_p / zn if abs(zn) > 1e-14 * max(1.0, npv @ npv) else np.inf
            if not np.isfinite(t1) and not np.isfinite(t2):
                raise QpInfeasible(f"inequality row {p} cannot be satisfied")
            if not np.isfinite(t2):
                u[:q] -= t1 * r
                u_p += t1
                drop(k_drop)
                continue
            t = min(t1, t2)
            x = x + t * z
            u[:q] -= t * r
            u_p += t
            if t2 <= t1:
                u[q] = u_p
                add(d, p)
                break
            drop(k_drop)

    u_eq = np.zeros(n_eq)
    u_in = np.zeros(m)
    active = []
    for j, a in enumerate(act):
        if isinstance(a, tuple):
            u_eq[a[1]] = u[j] * eq_sign[a[1]]
        else:
            u_in[a] = max(u[j], 0.0)
            active.append(a)
    return _finish(spec, prob, x, u_eq, u_in, sorted(active), reg, it)


def _finish(spec, prob, x, u_eq, u_in, active, reg, it, warm_started=False):
    if reg:
        # the ridge only keeps the factorization alive; if it is doing real work
        # the true problem has a descent direction along a flat, unconstrained axis
        pull = reg * np.abs(x).max(initial=0.0)
        if pull > 1e-3 * max(1.0, np.abs(spec.g).max(initial=0.0)):
            raise QpUnbounded("objective decreases without bound along a flat direction")
    lam_eq, mu_in, z = prob.unpack(spec, x, u_eq, u_in)
    obj = 0.5 * x @ spec.H @ x + spec.g @ x
    return QpResult(
        x=x,
        status="optimal",
        active=list(active),
        lam_eq=lam_eq,
        mu_in=mu_in,
        z_bounds=z,
        iterations=it,
        objective=float(obj),
        warm_started=warm_started,
        kkt=_kkt_report(spec, x, lam_eq, mu_in, z),
    )
