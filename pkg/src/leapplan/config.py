"""Run configuration: strict YAML/JSON parsing into typed settings.

Every block is checked against a fixed key set before anything is computed,
so a typo fails fast instead of silently falling back to a default.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .reference import AXES, JumpSpec
from .schedule import GAITS
from .sim import Perturbation
from .srb import N_FEET, STATE_DIM, ModelParams
from .tasks import TaskSpec, standing_state
from .terrain import TerrainModel
from .trajopt import PlannerWeights
from .sqp import HESSIAN_MODES
from .vbl import RK4_SUBSTEPS, RiccatiWeights

REQUIRED = {
    "model": ("mass", "inertia"),
    "jump": ("landing_target",),
    "schedule": ("n_t", "dt"),
}

KEYS = {
    "model": {"mass", "inertia", "gravity", "hip_offsets", "l_max", "mu", "f_max"},
    "jump": {"landing_target", "landing_height", "rotation_axis", "rotation_angle", "gait", "beta", "gamma"},
    "schedule": {"n_t", "dt", "initial_phase"},
    "initial_state": {"x", "y", "ground", "yaw", "vx", "vector"},
    "terrain": {"default_height", "patches"},
    "solver": {"max_iter", "kkt_tol", "feas_tol", "hessian", "weights"},
    "solver.weights": {"pose", "rate", "control", "foot", "terminal_scale"},
    "tracking": {"pose", "rate", "foot", "effort", "terminal", "terminal_com", "substeps"},
    "perturbation": {"mass_scale", "inertia_scale", "initial_offset", "foot_noise", "external_force", "seed"},
    "study": {"distances", "seeds", "seed", "foot_noise", "mass_scale", "inertia_scale", "workers", "write_traces"},
    "output": {"dir"},
}
TOP = {"name", "model", "jump", "schedule", "initial_state", "terrain", "solver", "tracking", "perturbation", "study", "output"}


@dataclass
class SolverSettings:
    max_iter: int = 200
    kkt_tol: float = 1e-4
    feas_tol: float = 1e-6
    hessian: str = "auto"
    weights: PlannerWeights = field(default_factory=PlannerWeights)


@dataclass
class StudySettings:
    """Landing-error study: every distance is flown once per seed in both modes."""

    distances: list = field(default_factory=lambda: np.linspace(0.1, 0.7, 4).tolist())
    seeds: int = 10
    seed: int = 0
    foot_noise: float = 0.045
    mass_scale: tuple = (1.0, 1.1)  # uniform range of the plant mass factor
    inertia_scale: float = 1.0
    workers: int = 1
    write_traces: bool = False

    @property
    def n_trials(self) -> int:
        return len(self.distances) * self.seeds


@dataclass
class RunConfig:
    name: str
    params: ModelParams
    task: TaskSpec
    solver: SolverSettings = field(default_factory=SolverSettings)
    tracking: RiccatiWeights = field(default_factory=RiccatiWeights)
    substeps: int = RK4_SUBSTEPS
    perturbation: Perturbation = field(default_factory=Perturbation)
    study: StudySettings | None = None
    output_dir: str = "out"
    raw: dict = field(default_factory=dict, repr=False)


def _block(data, name) -> dict:
    blk = data.get(name, {}) if "." not in name else data
    if blk is None:
        blk = {}
    if not isinstance(blk, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(blk).__name__}")
    unknown = set(blk) - KEYS[name]
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    for key in REQUIRED.get(name, ()):
        if key not in blk:
            raise ConfigError(f"{name}.{key} is required")
    return blk


def _num(blk, key, name, default=None, kind=float, positive=False, nonneg=False):
    if key not in blk:
        return default
    v = blk[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name}.{key}: expected a number, got {v!r}")
    if kind is int and v != int(v):
        raise ConfigError(f"{name}.{key}: expected an integer, got {v!r}")
    v = kind(v)
    if not np.isfinite(v):
        raise ConfigError(f"{name}.{key}: must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{name}.{key}: must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"{name}.{key}: must be nonnegative")
    return v


def _vec(blk, key, name, shapes, default=None):
    if key not in blk:
        return default
    try:
        a = np.asarray(blk[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}.{key}: expected numbers, got {blk[key]!r}") from None
    if a.shape not in shapes:
        raise ConfigError(f"{name}.{key}: shape {a.shape} not in {shapes}")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name}.{key}: must be finite")
    return a


def _model(data) -> ModelParams:
    b = _block(data, "model")
    kw = {"mass": _num(b, "mass", "model", positive=True), "inertia": _vec(b, "inertia", "model", {(3,), (3, 3)})}
    for key, shapes in (
        ("gravity", {(3,)}),
        ("hip_offsets", {(N_FEET, 3)}),
        ("l_max", {(), (N_FEET,)}),
        ("mu", {(), (N_FEET,)}),
        ("f_max", {(), (N_FEET,)}),
    ):
        v = _vec(b, key, "model", shapes)
        if v is not None:
            kw[key] = v
    try:
        return ModelParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def _jump(data) -> JumpSpec:
    b = _block(data, "jump")
    kw = {"landing_target": _vec(b, "landing_target", "jump", {(3,)})}
    for key in ("landing_height", "rotation_angle", "beta", "gamma"):
        v = _num(b, key, "jump")
        if v is not None:
            kw[key] = v
    if "rotation_axis" in b:
        if b["rotation_axis"] not in AXES:
            raise ConfigError(f"jump.rotation_axis must be one of {tuple(AXES)}")
        kw["rotation_axis"] = b["rotation_axis"]
    if "gait" in b:
        if b["gait"] not in GAITS:
            raise ConfigError(f"jump.gait must be one of {GAITS}")
        kw["gait"] = b["gait"]
    return JumpSpec(**kw)


def _initial_state(data) -> np.ndarray:
    b = _block(data, "initial_state")
    if "vector" in b:
        if len(b) > 1:
            raise ConfigError("initial_state: 'vector' excludes the other keys")
        return _vec(b, "vector", "initial_state", {(STATE_DIM,)})
    kw = {k: _num(b, k, "initial_state") for k in ("x", "y", "ground", "yaw", "vx") if k in b}
    return standing_state(**kw)


def _terrain(data) -> TerrainModel:
    b = _block(data, "terrain")
    patches = b.get("patches", []) or []
    if not isinstance(patches, list):
        raise ConfigError("terrain.patches: expected a list")
    for j, p in enumerate(patches):
        if not isinstance(p, dict) or set(p) != {"x", "y", "height"}:
            raise ConfigError(f"terrain.patches[{j}]: expected keys x, y, height")
        for ax in ("x", "y"):
            if not (isinstance(p[ax], list) and len(p[ax]) == 2 and p[ax][0] <= p[ax][1]):
                raise ConfigError(f"terrain.patches[{j}].{ax}: expected [min, max]")
    try:
        return TerrainModel.from_dict(b)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"terrain: {exc}") from None


def _solver(data) -> SolverSettings:
    b = _block(data, "solver")
    s = SolverSettings(
        max_iter=_num(b, "max_iter", "solver", 200, int, positive=True),
        kkt_tol=_num(b, "kkt_tol", "solver", 1e-4, positive=True),
        feas_tol=_num(b, "feas_tol", "solver", 1e-6, positive=True),
        hessian=b.get("hessian", "auto"),
    )
    if s.hessian not in HESSIAN_MODES:
        raise ConfigError(f"solver.hessian must be one of {HESSIAN_MODES}")
    w = _block(b.get("weights") or {}, "solver.weights")
    s.weights = PlannerWeights(**{k: _num(w, k, "solver.weights", nonneg=True) for k in w})
    return s


def _tracking(data):
    b = _block(data, "tracking")
    substeps = _num(b, "substeps", "tracking", RK4_SUBSTEPS, int, positive=True)
    kw = {k: _num(b, k, "tracking", nonneg=True) for k in b if k != "substeps"}
    if kw.get("effort", 1.0) <= 0:
        raise ConfigError("tracking.effort must be positive")
    return RiccatiWeights(**kw), substeps


def _perturbation(data) -> Perturbation:
    b = _block(data, "perturbation")
    kw = {}
    for key in ("mass_scale", "inertia_scale"):
        if key in b:
            kw[key] = _num(b, key, "perturbation", positive=True)
    if "foot_noise" in b:
        kw["foot_noise"] = _num(b, "foot_noise", "perturbation", nonneg=True)
    if "seed" in b:
        kw["seed"] = _num(b, "seed", "perturbation", kind=int, nonneg=True)
    for key, shape in (("initial_offset", (STATE_DIM,)), ("external_force", (3,))):
        v = _vec(b, key, "perturbation", {shape})
        if v is not None:
            kw[key] = v
    return Perturbation(**kw)


def _study(data) -> StudySettings | None:
    if "study" not in data:
        return None
    b = _block(data, "study")
    s = StudySettings()
    if "distances" in b:
        d = b["distances"]
        if isinstance(d, dict):
            if set(d) != {"start", "stop", "num"}:
                raise ConfigError("study.distances: expected a list or {start, stop, num}")
            num = _num(d, "num", "study.distances", kind=int, positive=True)
            d = np.linspace(_num(d, "start", "study.distances"), _num(d, "stop", "study.distances"), num).tolist()
        if not isinstance(d, list):
            raise ConfigError("study.distances: expected a list or {start, stop, num}")
        arr = _vec({"distances": d}, "distances", "study", {(len(d),)})
        if arr.size == 0 or np.any(arr <= 0):
            raise ConfigError("study.distances must be a nonempty list of positive distances")
        s.distances = arr.tolist()
    s.seeds = _num(b, "seeds", "study", s.seeds, int, positive=True)
    s.seed = _num(b, "seed", "study", s.seed, int, nonneg=True)
    s.foot_noise = _num(b, "foot_noise", "study", s.foot_noise, nonneg=True)
    s.inertia_scale = _num(b, "inertia_scale", "study", s.inertia_scale, positive=True)
    s.workers = _num(b, "workers", "study", s.workers, int, positive=True)
    if "mass_scale" in b:
        m = _vec(b, "mass_scale", "study", {(), (2,)})
        lo, hi = (float(m), float(m)) if m.ndim == 0 else (float(m[0]), float(m[1]))
        if not (0 < lo <= hi):
            raise ConfigError("study.mass_scale must be a positive value or [lo, hi] with lo <= hi")
        s.mass_scale = (lo, hi)
    if "write_traces" in b:
        if not isinstance(b["write_traces"], bool):
            raise ConfigError("study.write_traces must be true or false")
        s.write_traces = b["write_traces"]
    return s


def parse_config(data: dict) -> RunConfig:
    """Validate a config mapping and build the typed run configuration."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - TOP
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for name in REQUIRED:
        if name not in data:
            raise ConfigError(f"missing required block '{name}'")
    params = _model(data)
    jump = _jump(data)
    sb = _block(data, "schedule")
    n_t = _num(sb, "n_t", "schedule", kind=int)
    if n_t < 2:
        raise ConfigError("schedule.n_t must be at least 2")
    dt = _num(sb, "dt", "schedule", positive=True)
    phase = _num(sb, "initial_phase", "schedule", 0.0)
    task = TaskSpec(
        name=str(data.get("name", "task")),
        jump=jump,
        n_t=n_t,
        dt=dt,
        initial_phase=phase,
        x0=_initial_state(data),
        terrain=_terrain(data),
    )
    tracking, substeps = _tracking(data)
    ob = _block(data, "output")
    return RunConfig(
        name=task.name,
        params=params,
        task=task,
        solver=_solver(data),
        tracking=tracking,
        substeps=substeps,
        perturbation=_perturbation(data),
        study=_study(data),
        output_dir=str(ob.get("dir", "out")),
        raw=data,
    )


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``1e-6``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def load_config(path) -> RunConfig:
    """Read a YAML (or JSON, which is valid YAML) config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return parse_config(data)
