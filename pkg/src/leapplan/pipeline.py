"""Plan, gains, simulation and the landing-error study as plain functions.

The command-line front end is a thin wrapper over these.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig, SolverSettings, StudySettings
from .errors import LeapPlanError
from .sim import Perturbation, Trace, landing_metrics, run_closed_loop
from .srb import ModelParams, so3_log
from .store import PlanBundle, target_rotation
from .tasks import TaskSpec, forward_jump
from .trajopt import build_nlp, solve_trajectory
from .vbl import RK4_SUBSTEPS, GainSchedule, RiccatiWeights, build_gain_schedule

log = logging.getLogger(__name__)

LANDING_TOL = 0.05  # m, horizontal landing error accepted as PASS
ATTITUDE_TOL = np.deg2rad(15.0)


def plan_task(task: TaskSpec, params: ModelParams, solver: SolverSettings | None = None) -> PlanBundle:
    solver = solver or SolverSettings()
    nlp = build_nlp(task.reference(params), task.schedule(), task.terrain, params, solver.weights, task.x0)
    plan = solve_trajectory(
        nlp, max_iter=solver.max_iter, kkt_tol=solver.kkt_tol, feas_tol=solver.feas_tol, hessian_mode=solver.hessian
    )
    log.info(
        "planned %s: %s after %d iterations, violation %.2e, KKT %.2e",
        task.name,
        plan.stats["status"],
        plan.stats["iterations"],
        plan.stats["constraint_violation"],
        plan.stats["kkt_residual"],
    )
    return PlanBundle(plan, task, params)


def make_gains(
    bundle: PlanBundle, weights: RiccatiWeights | None = None, substeps: int = RK4_SUBSTEPS
) -> GainSchedule:
    return build_gain_schedule(bundle.plan, bundle.params, weights, substeps=substeps)


def evaluate_landing(trace: Trace, task: TaskSpec) -> dict:
    """Landing error against the target, attitude error and a PASS/FAIL verdict."""
    out = {"mode": trace.mode, "touchdown": trace.landing is not None}
    if trace.landing is None:
        out["status"] = "FAIL"
        return out
    target = task.jump.landing_target
    m = landing_metrics(trace, target, task.x0[:3])
    horiz = float(np.linalg.norm(m.e_la[:2]))
    att = float(np.linalg.norm(so3_log(target_rotation(task).T @ trace.landing.R)))
    out.update(
        m.to_dict(),
        horizontal_error=horiz,
        attitude_error=att,
        touchdown_time=trace.landing.t,
        landing_position=trace.landing.p,
        landing_euler=trace.landing.euler,
        max_orthonormality_error=trace.max_orthonormality_error,
    )
    out["status"] = "PASS" if horiz <= LANDING_TOL and att <= ATTITUDE_TOL else "FAIL"
    return out


def simulate(bundle: PlanBundle, gains: GainSchedule, mode: str, perturbation: Perturbation | None = None):
    trace = run_closed_loop(
        gains, bundle.params, mode, perturbation, landing_height=float(bundle.task.jump.landing_target[2])
    )
    return trace, evaluate_landing(trace, bundle.task)


# --------------------------------------------------------------------------- study


@dataclass
class StudyTrial:
    index: int
    distance: float
    seed: int
    perturbation: Perturbation


def study_trials(study: StudySettings) -> list[StudyTrial]:
    """Trial list with per-trial perturbations; both modes of a trial share one perturbation."""
    trials = []
    for d_idx, d in enumerate(study.distances):
        for s in range(study.seeds):
            idx = d_idx * study.seeds + s
            seed = study.seed + idx
            rng = np.random.default_rng([study.seed, idx])
            lo, hi = study.mass_scale
            pert = Perturbation(
                mass_scale=float(rng.uniform(lo, hi)) if hi > lo else lo,
                inertia_scale=study.inertia_scale,
                foot_noise=study.foot_noise,
                seed=seed,
            )
            trials.append(StudyTrial(idx, float(d), seed, pert))
    return trials


def study_task(cfg: RunConfig, distance: float) -> TaskSpec:
    """Flat-ground forward jump of ``distance`` using the config's schedule and profile."""
    base = forward_jump(distance)
    jump = replace(base.jump, beta=cfg.task.jump.beta, gamma=cfg.task.jump.gamma)
    return replace(base, jump=jump, n_t=cfg.task.n_t, dt=cfg.task.dt)


def _run_trial(args):
    trial, bundle, gains = args
    rows = []
    for mode in ("open_loop", "vboc"):
        row = {
            "trial": trial.index,
            "distance": trial.distance,
            "seed": trial.seed,
            "mass_scale": trial.perturbation.mass_scale,
            "mode": mode,
        }
        try:
            trace, metrics = simulate(bundle, gains, mode, trial.perturbation)
            row.update(
                status="ok",
                e_la=metrics["e_la"],
                relative_error=metrics["relative_error"],
                along_track=metrics["along_track"],
                landing=metrics["landing_position"],
                trace=trace,
            )
        except LeapPlanError as exc:
            row.update(status=f"failed: {type(exc).__name__}: {exc}", trace=None)
        rows.append(row)
    return rows


def run_study(cfg: RunConfig) -> tuple[list[dict], dict]:
    """Fly every trial in both modes. Returns per-run rows (sorted) and a summary."""
    study = cfg.study or StudySettings()
    bundles, gains = {}, {}
    for d in study.distances:
        b = plan_task(study_task(cfg, d), cfg.params, cfg.solver)
        if not b.plan.report.passed:
            log.warning("plan for %.3f m fails its feasibility report", d)
        bundles[d] = b
        gains[d] = make_gains(b, cfg.tracking, cfg.substeps)
    jobs = [(t, bundles[t.distance], gains[t.distance]) for t in study_trials(study)]
    if study.workers > 1:
        with ProcessPoolExecutor(study.workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    rows = sorted((r for rs in results for r in rs), key=lambda r: (r["trial"], r["mode"]))
    return rows, summarize(rows)


def summarize(rows) -> dict:
    summary = {"n_trials": len({r["trial"] for r in rows})}
    for mode in ("open_loop", "vboc"):
        ok = [r for r in rows if r["mode"] == mode and r["status"] == "ok"]
        rel = np.array([r["relative_error"] for r in ok])
        along = np.array([r["along_track"] for r in ok])
        summary[mode] = {
            "n_ok": len(ok),
            "n_failed": sum(1 for r in rows if r["mode"] == mode and r["status"] != "ok"),
            "mean_relative_error": float(rel.mean()) if ok else float("nan"),
            "mean_along_track": float(along.mean()) if ok else float("nan"),
            "max_along_track": float(along.max()) if ok else float("nan"),
            "fraction_short": float((along <= 0).mean()) if ok else float("nan"),
        }
    ol, vb = summary["open_loop"], summary["vboc"]
    summary["vboc_better"] = bool(vb["mean_relative_error"] < ol["mean_relative_error"])
    summary["mean_along_track_nonpositive"] = {m: bool(summary[m]["mean_along_track"] <= 0) for m in ("open_loop", "vboc")}
    return summary


STUDY_COLUMNS = [
    "trial", "distance", "seed", "mass_scale", "mode", "status",
    "e_la_x", "e_la_y", "e_la_z", "landing_x", "landing_y", "landing_z",
    "relative_error", "along_track",
]  # fmt: skip


def study_rows_flat(rows):
    """Rows as CSV-ready lists in :data:`STUDY_COLUMNS` order."""
    out = []
    for r in rows:
        e = r.get("e_la", [np.nan] * 3)
        p = r.get("landing", [np.nan] * 3)
        vals = [r["trial"], r["distance"], r["seed"], r["mass_scale"], r["mode"], r["status"], *e, *p]
        vals += [r.get("relative_error", np.nan), r.get("along_track", np.nan)]
        out.append([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in vals])
    return out
