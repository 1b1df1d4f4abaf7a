"""Line-search SQP for dense smooth NLPs.

Each iteration solves a convex QP model (see :mod:`leapplan.qp`), globalized by
backtracking on the l1 exact-penalty merit with a second-order correction
to dodge the Maratos effect.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import LineSearchFailure, MaxIterationsExceeded
from .qp import QpSpec, solve_qp

log = logging.getLogger(__name__)

HESSIAN_MODES = ("exact", "gauss_newton", "bfgs", "auto")


@dataclass
class NlpSpec:
    """Problem ``min f(x) s.t. c_eq(x) = 0, c_in(x) <= 0, lb <= x <= ub``.

    ``hessian`` returns the objective Hessian, which is the exact
    Gauss-Newton matrix for least-squares objectives. Without it the solver
    starts BFGS from the identity. ``lagrangian_hessian(x, lam_eq, mu_in)``
    may supply the (possibly indefinite) Hessian of the Lagrangian; modes
    ``exact`` and ``auto`` use it when present, convexified as described in
    :func:`convexify`.
    """

    n: int
    objective: Callable
    gradient: Callable
    hessian: Callable | None = None
    eq: Callable | None = None
    eq_jac: Callable | None = None
    ineq: Callable | None = None
    ineq_jac: Callable | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    max_iter: int = 200
    kkt_tol: float = 1e-4
    feas_tol: float = 1e-6
    hessian_mode: str = "auto"
    lagrangian_hessian: Callable | None = None

    def __post_init__(self):
        self.lb = np.full(self.n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(self.n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.hessian_mode not in HESSIAN_MODES:
            raise ValueError(f"hessian_mode must be one of {HESSIAN_MODES}")

    def constraints(self, x):
        ce = self.eq(x) if self.eq else np.zeros(0)
        ci = self.ineq(x) if self.ineq else np.zeros(0)
        return np.asarray(ce, dtype=float), np.asarray(ci, dtype=float)

    def jacobians(self, x):
        Je = self.eq_jac(x) if self.eq else np.zeros((0, self.n))
        Ji = self.ineq_jac(x) if self.ineq else np.zeros((0, self.n))
        return np.atleast_2d(Je).reshape(-1, self.n), np.atleast_2d(Ji).reshape(-1, self.n)


@dataclass
class NlpResult:
    x: np.ndarray
    lam_eq: np.ndarray
    mu_in: np.ndarray
    z_bounds: np.ndarray
    status: str
    iterations: int
    kkt_residual: float
    violation: float
    objective: float
    merit_history: list = field(default_factory=list)  # (merit before, merit after, penalty, step)
    qp_iterations: int = 0
    hessian_used: str = ""
    wall_time: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _violation(ce, ci):
    return max(np.abs(ce).max(initial=0.0), np.maximum(ci, 0.0).max(initial=0.0))


def _l1(ce, ci):
    return float(np.abs(ce).sum() + np.maximum(ci, 0.0).sum())


def _bfgs_update(B, s, y):
    """Powell-damped BFGS update; keeps B positive definite."""
    Bs = B @ s
    sBs = s @ Bs
    if sBs <= 1e-16:
        return B
    sy = s @ y
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = s @ y
    return B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy


RHO_LADDER = (0.0, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5)


def _is_pd(H):
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return False
    return bool(np.diag(L).min() > 1e-6 * np.sqrt(max(1.0, np.abs(np.diag(H)).max())))


def convexify(H, g, E, e, floor=1e-6):
    """Make a QP model convex without moving its solution when possible.

    Adding ``rho/2 |E d - e|^2`` leaves the objective unchanged on the
    linearized equality set ``E d = e``, so the step and all multipliers are
    those of the original model whenever its reduced Hessian is positive
    definite. If no penalty in the ladder works, negative eigenvalues are
    clipped to ``floor`` instead. Returns ``(H, g, rho)``; ``rho`` is -1
    after clipping.
    """
    H = 0.5 * (H + H.T)
    EtE = E.T @ E
    for rho in RHO_LADDER:
        Hr = H + rho * EtE if rho else H
        if _is_pd(Hr):
            return Hr, (g - rho * (E.T @ e) if rho else g), rho
    w, V = np.linalg.eigh(H)
    scale = max(1.0, np.abs(w).max())
    return (V * np.maximum(w, floor * scale)) @ V.T, g, -1.0


def _hessian_name(use_bfgs, use_exact):
    if use_bfgs:
        return "bfgs"
    return "exact" if use_exact else "gauss_newton"


def solve_nlp(spec: NlpSpec, x_init) -> NlpResult:
    """Run SQP from ``x_init``; raises MaxIterationsExceeded or LineSearchFailure."""
    t0 = time.perf_counter()
    x = np.clip(np.asarray(x_init, dtype=float).copy(), spec.lb, spec.ub)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial point must be finite")

    mode = spec.hessian_mode
    use_bfgs = mode == "bfgs" or (spec.hessian is None and spec.lagrangian_hessian is None)
    use_exact = mode in ("exact", "auto") and spec.lagrangian_hessian is not None
    if mode == "exact" and not use_exact:
        raise ValueError("hessian_mode 'exact' needs a lagrangian_hessian callback")
    B = spec.hessian(x) if spec.hessian is not None else np.eye(spec.n)
    lam_prev = mu_prev = None
    nu = 1.0
    active = None
    history = []
    qp_its = 0
    short_steps = 0
    eta = 1e-4

    def merit(xx, pen):
        ce, ci = spec.constraints(xx)
        return spec.objective(xx) + pen * _l1(ce, ci), ce, ci

    f = spec.objective(x)
    g = spec.gradient(x)
    ce, ci = spec.constraints(x)
    for it in range(spec.max_iter + 1):
        Je, Ji = spec.jacobians(x)
        g_qp, rho, E = g, 0.0, None
        if use_bfgs:
            H = B
        elif use_exact and lam_prev is not None:
            fixed = np.flatnonzero(spec.lb == spec.ub)
            E = np.vstack([Je, np.eye(spec.n)[fixed]])
            e = np.concatenate([-ce, (spec.lb - x)[fixed]])
            H, g_qp, rho = convexify(spec.lagrangian_hessian(x, lam_prev, mu_prev), g, E, e)
            log.debug("exact hessian: rho=%g", rho)
        else:
            H = spec.hessian(x) if spec.hessian is not None else B
        qp = QpSpec(H=H, g=g_qp, A_eq=Je, b_eq=-ce, A_in=Ji, b_in=-ci, lb=spec.lb - x, ub=spec.ub - x)
        res = solve_qp(qp, warm_active=active)
        qp_its += res.iterations
        active = res.active
        d, lam, mu, z = res.x, res.lam_eq, res.mu_in, res.z_bounds

        grad_l = g + Je.T @ lam + Ji.T @ mu - z
        kkt = np.abs(grad_l).max(initial=0.0) / max(1.0, np.abs(g).max(initial=0.0))
        comp = np.abs(mu * ci).max(initial=0.0) / max(1.0, np.abs(g).max(initial=0.0))
        kkt = max(kkt, comp)
        viol = max(_violation(ce, ci), np.maximum(np.maximum(spec.lb - x, x - spec.ub), 0.0).max(initial=0.0))
        log.debug("sqp it=%d f=%.6g kkt=%.3e viol=%.3e |d|=%.3e", it, f, kkt, viol, np.abs(d).max(initial=0.0))
        if kkt <= spec.kkt_tol and viol <= spec.feas_tol:
            return NlpResult(
                x=x, lam_eq=lam, mu_in=mu, z_bounds=z, status="converged", iterations=it,
                kkt_residual=float(kkt), violation=float(viol), objective=float(f),
                merit_history=history, qp_iterations=qp_its,
                hessian_used=_hessian_name(use_bfgs, use_exact),
                wall_time=time.perf_counter() - t0,
            )
        if it == spec.max_iter:
            break

        mult = max(np.abs(lam).max(initial=0.0), mu.max(initial=0.0))
        if nu < 1.1 * mult:
            nu = 1.5 * mult + 1.0
        phi0 = f + nu * _l1(ce, ci)
        D = g @ d - nu * _l1(ce, ci)

        alpha = 1.0
        step = d
        phi1, ce1, ci1 = merit(x + d, nu)
        accepted = phi1 <= phi0 + eta * D
        if not accepted:
            # second-order correction: re-solve with constraint values at x + d
            b_soc = -(ce1 - Je @ d)
            g_soc = g
            if rho > 0:
                g_soc = g - rho * (E.T @ np.concatenate([b_soc, (spec.lb - x)[fixed]]))
            qp_soc = QpSpec(H=H, g=g_soc, A_eq=Je, b_eq=b_soc, A_in=Ji, b_in=-(ci1 - Ji @ d),
                            lb=spec.lb - x, ub=spec.ub - x)
            try:
                soc = solve_qp(qp_soc, warm_active=active)
                qp_its += soc.iterations
                phi_s, ce_s, ci_s = merit(x + soc.x, nu)
                if phi_s <= phi0 + eta * D:
                    step, phi1, ce1, ci1, accepted = soc.x, phi_s, ce_s, ci_s, True
            except Exception as exc:  # noqa: BLE001 - a failed correction just falls back to backtracking
                log.debug("second-order correction skipped: %s", exc)
        while not accepted:
            alpha *= 0.5
            if alpha < 1e-12:
                raise LineSearchFailure(
                    f"step length fell below 1e-12 at iteration {it}",
                    result=NlpResult(x, lam, mu, z, "line_search_failure", it, float(kkt), float(viol),
                                     float(f), history, qp_its, _hessian_name(use_bfgs, use_exact),
                                     time.perf_counter() - t0),
                )
            step = alpha * d
            phi1, ce1, ci1 = merit(x + step, nu)
            accepted = phi1 <= phi0 + eta * alpha * D

        history.append((float(phi0), float(phi1), float(nu), float(alpha)))
        short_steps = short_steps + 1 if alpha < 1e-2 else 0
        x_new = x + step
        g_new = spec.gradient(x_new)
        if use_bfgs:
            Je1, Ji1 = spec.jacobians(x_new)
            y = (g_new + Je1.T @ lam + Ji1.T @ mu) - (g + Je.T @ lam + Ji.T @ mu)
            B = _bfgs_update(B, step, y)
        elif mode == "auto" and short_steps >= 3:
            log.info("switching to damped BFGS after repeated short steps (iteration %d)", it)
            use_bfgs = True
            B = spec.hessian(x_new) if spec.hessian is not None else np.eye(spec.n)
        lam_prev, mu_prev = lam, mu
        x, g, ce, ci = x_new, g_new, ce1, ci1
        f = spec.objective(x)

    raise MaxIterationsExceeded(
        f"SQP did not converge in {spec.max_iter} iterations (kkt={kkt:.3e}, viol={viol:.3e})",
        result=NlpResult(x, lam, mu, z, "max_iterations", spec.max_iter, float(kkt), float(viol),
                         float(f), history, qp_its, _hessian_name(use_bfgs, use_exact), time.perf_counter() - t0),
    )
