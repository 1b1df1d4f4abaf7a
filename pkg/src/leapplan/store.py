"""JSON persistence for plans, gain schedules and configs.

Floats are written with ``repr`` precision so ``load(save(x))`` reproduces
every array bit for bit. Wall-clock timings never go into these files; they
live in a ``.timing.json`` sidecar so reruns produce byte-identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, SolverSettings, StudySettings
from .reference import AXES, JumpSpec
from .schedule import ContactSchedule
from .srb import EUL, ModelParams, rotation_from_euler
from .tasks import TaskSpec
from .terrain import TerrainModel
from .trajopt import FeasibilityReport, OptimalPlan
from .vbl import DenseReference, GainSchedule, RiccatiWeights

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A persisted artifact has the wrong kind or schema version."""


def _clean(obj):
    """Make ``obj`` JSON-safe; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=1, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(obj))


def read_json(path, kind: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    if data.get("kind") != kind:
        raise SchemaError(f"{path}: expected a {kind!r} artifact, found {data.get('kind')!r}")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported schema_version {data.get('schema_version')!r}")
    return data


def timing_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".timing.json")


def write_timing(path, timings: dict):
    Path(timing_path(path)).write_text(json.dumps(_clean(timings), indent=1) + "\n")


# --------------------------------------------------------------------------- model and task


def params_to_dict(p: ModelParams) -> dict:
    return {
        "mass": p.mass,
        "inertia": p.inertia,
        "gravity": p.gravity,
        "hip_offsets": p.hip_offsets,
        "l_max": p.l_max,
        "mu": p.mu,
        "f_max": p.f_max,
    }


def params_from_dict(d) -> ModelParams:
    return ModelParams(**{k: np.asarray(v, dtype=float) if k != "mass" else float(v) for k, v in d.items()})


def jump_to_dict(j: JumpSpec) -> dict:
    return {
        "landing_target": j.landing_target,
        "landing_height": j.landing_height,
        "rotation_axis": j.rotation_axis,
        "rotation_angle": j.rotation_angle,
        "gait": j.gait,
        "beta": j.beta,
        "gamma": j.gamma,
    }


def task_to_dict(t: TaskSpec) -> dict:
    return {
        "name": t.name,
        "jump": jump_to_dict(t.jump),
        "n_t": t.n_t,
        "dt": t.dt,
        "initial_phase": t.initial_phase,
        "x0": t.x0,
        "terrain": t.terrain.to_dict(),
    }


def task_from_dict(d) -> TaskSpec:
    return TaskSpec(
        name=d["name"],
        jump=JumpSpec(**d["jump"]),
        n_t=int(d["n_t"]),
        dt=float(d["dt"]),
        initial_phase=float(d["initial_phase"]),
        x0=np.asarray(d["x0"], dtype=float),
        terrain=TerrainModel.from_dict(d["terrain"]),
    )


def target_rotation(task: TaskSpec) -> np.ndarray:
    """Attitude the jump should land in: the start attitude turned by the requested angle."""
    theta = task.x0[EUL].copy()
    theta[AXES[task.jump.rotation_axis]] += task.jump.rotation_angle
    return rotation_from_euler(theta)


# --------------------------------------------------------------------------- plans


@dataclass
class PlanBundle:
    """A solved plan with the task and model it was solved for."""

    plan: OptimalPlan
    task: TaskSpec
    params: ModelParams


def plan_to_dict(b: PlanBundle) -> dict:
    p = b.plan
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "plan",
        "task": task_to_dict(b.task),
        "model": params_to_dict(b.params),
        "schedule": p.schedule.to_dict(),
        "X": p.X,
        "U": p.U,
        "stats": p.stats,
        "report": p.report.to_dict() if p.report is not None else None,
    }


def plan_from_dict(d) -> PlanBundle:
    report = None
    if d.get("report") is not None:
        report = FeasibilityReport(**{k: float(v) for k, v in d["report"].items() if k != "passed"})
    stats = dict(d["stats"])
    plan = OptimalPlan(
        X=np.asarray(d["X"], dtype=float),
        U=np.asarray(d["U"], dtype=float),
        schedule=ContactSchedule.from_dict(d["schedule"]),
        stats=stats,
        report=report,
    )
    return PlanBundle(plan, task_from_dict(d["task"]), params_from_dict(d["model"]))


def save_plan(path, b: PlanBundle):
    write_json(path, plan_to_dict(b))
    write_timing(path, {"solve_wall_time": b.plan.wall_time})


def load_plan(path) -> PlanBundle:
    return plan_from_dict(read_json(path, "plan"))


# --------------------------------------------------------------------------- gains


def weights_to_dict(w: RiccatiWeights) -> dict:
    return {k: getattr(w, k) for k in ("pose", "rate", "foot", "effort", "terminal", "terminal_com")}


def gains_to_dict(g: GainSchedule, checks: dict | None = None) -> dict:
    r = g.ref
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "gains",
        "grid_dt": g.grid_dt,
        "substeps": g.substeps,
        "weights": weights_to_dict(g.weights),
        "t": r.t,
        "x": r.x,
        "feet": r.feet,
        "forces": r.forces,
        "stance": r.stance,
        "A": g.A,
        "B": g.B,
        "P": g.P,
        "checks": checks or {},
    }


def gains_from_dict(d, validate=True) -> GainSchedule:
    ref = DenseReference(
        t=np.asarray(d["t"], dtype=float),
        x=np.asarray(d["x"], dtype=float),
        feet=np.asarray(d["feet"], dtype=float),
        forces=np.asarray(d["forces"], dtype=float),
        stance=np.asarray(d["stance"], dtype=bool),
    )
    g = GainSchedule(
        ref=ref,
        A=np.asarray(d["A"], dtype=float),
        B=np.asarray(d["B"], dtype=float),
        P=np.asarray(d["P"], dtype=float),
        weights=RiccatiWeights(**{k: float(v) for k, v in d["weights"].items()}),
        substeps=int(d["substeps"]),
    )
    if validate:
        g.check()
    return g


def save_gains(path, g: GainSchedule, checks=None, timings=None):
    write_json(path, gains_to_dict(g, checks))
    if timings is not None:
        write_timing(path, timings)


def load_gains(path, validate=True) -> GainSchedule:
    return gains_from_dict(read_json(path, "gains"), validate)


# --------------------------------------------------------------------------- configs


def config_to_dict(c: RunConfig) -> dict:
    """Canonical, fully explicit form of a run config; parses back to an equal config."""
    t = c.task
    s: SolverSettings = c.solver
    w = s.weights
    d = {
        "name": c.name,
        "model": params_to_dict(c.params),
        "jump": jump_to_dict(t.jump),
        "schedule": {"n_t": t.n_t, "dt": t.dt, "initial_phase": t.initial_phase},
        "initial_state": {"vector": t.x0},
        "terrain": t.terrain.to_dict(),
        "solver": {
            "max_iter": s.max_iter,
            "kkt_tol": s.kkt_tol,
            "feas_tol": s.feas_tol,
            "hessian": s.hessian,
            "weights": {k: getattr(w, k) for k in ("pose", "rate", "control", "foot", "terminal_scale")},
        },
        "tracking": {**weights_to_dict(c.tracking), "substeps": c.substeps},
        "perturbation": c.perturbation.to_dict(),
        "output": {"dir": c.output_dir},
    }
    if c.study is not None:
        st: StudySettings = c.study
        d["study"] = {
            "distances": list(st.distances),
            "seeds": st.seeds,
            "seed": st.seed,
            "foot_noise": st.foot_noise,
            "mass_scale": list(st.mass_scale),
            "inertia_scale": st.inertia_scale,
            "workers": st.workers,
            "write_traces": st.write_traces,
        }
    return _clean(d)


def save_config(path, c: RunConfig):
    write_json(path, config_to_dict(c))

