"""Preset aerial motions: four static jumps and two running jumps.

Heights are COM heights; the robot stands with its COM ``STAND_HEIGHT``
above the ground under its feet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .reference import JumpSpec, ReferenceTrajectory, build_reference
from .schedule import ContactSchedule, schedule_from_gait
from .srb import STATE_DIM, ModelParams
from .terrain import FLAT, Patch, TerrainModel

STAND_HEIGHT = 0.25


@dataclass
class TaskSpec:
    name: str
    jump: JumpSpec
    n_t: int = 13
    dt: float = 0.02
    initial_phase: float = 0.0
    x0: np.ndarray = field(default_factory=lambda: standing_state())
    terrain: TerrainModel = FLAT

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(STATE_DIM)

    def schedule(self) -> ContactSchedule:
        return schedule_from_gait(self.jump.gait, self.n_t, self.dt, self.initial_phase)

    def reference(self, params: ModelParams) -> ReferenceTrajectory:
        return build_reference(self.jump, self.schedule(), self.x0, params, self.terrain)

    @property
    def flat(self) -> bool:
        return not self.terrain.patches and self.terrain.default_height == 0.0


def standing_state(x=0.0, y=0.0, ground=0.0, yaw=0.0, vx=0.0) -> np.ndarray:
    s = np.zeros(STATE_DIM)
    s[0:3] = (x, y, ground + STAND_HEIGHT)
    s[5] = yaw
    s[6] = vx
    return s


def spin() -> TaskSpec:
    return TaskSpec(
        "spin",
        JumpSpec(landing_target=[0.0, 0.0, STAND_HEIGHT], rotation_axis="yaw", rotation_angle=np.pi),
    )


def platform_forward(height=0.34, edge=0.25, distance=0.45) -> TaskSpec:
    terrain = TerrainModel(0.0, (Patch(edge, edge + 2.0, -1.0, 1.0, height),))
    return TaskSpec(
        "platform_forward",
        JumpSpec(landing_target=[distance, 0.0, height + STAND_HEIGHT], landing_height=height, gamma=0.6),
        terrain=terrain,
    )


def jump_off_spin(height=0.15, edge=0.25, distance=0.4, angle=np.pi / 2) -> TaskSpec:
    terrain = TerrainModel(0.0, (Patch(-2.0, edge, -1.0, 1.0, height),))
    return TaskSpec(
        "jump_off_spin",
        JumpSpec(landing_target=[distance, 0.0, STAND_HEIGHT], rotation_axis="yaw", rotation_angle=angle),
        x0=standing_state(ground=height),
        terrain=terrain,
    )


def platform_lateral(height=0.2, edge=0.15, distance=0.3) -> TaskSpec:
    terrain = TerrainModel(0.0, (Patch(-1.0, 1.0, edge, edge + 2.0, height),))
    return TaskSpec(
        "platform_lateral",
        JumpSpec(landing_target=[0.0, distance, height + STAND_HEIGHT], landing_height=height, gamma=0.55),
        terrain=terrain,
    )


def trot_jump(speed=1.0, distance=0.8) -> TaskSpec:
    return TaskSpec(
        "trot_jump",
        JumpSpec(landing_target=[distance, 0.0, STAND_HEIGHT], gait="trot"),
        n_t=17,
        dt=0.025,
        x0=standing_state(vx=speed),
    )


def bound_jump(speed=1.0, distance=0.8) -> TaskSpec:
    return TaskSpec(
        "bound_jump",
        JumpSpec(landing_target=[distance, 0.0, STAND_HEIGHT], gait="bound"),
        n_t=17,
        dt=0.025,
        x0=standing_state(vx=speed),
    )


def forward_jump(distance: float) -> TaskSpec:
    """Flat-ground static jump used by the landing study."""
    return TaskSpec("forward_jump", JumpSpec(landing_target=[distance, 0.0, STAND_HEIGHT]))


PRESETS = {
    "spin": spin,
    "platform_forward": platform_forward,
    "jump_off_spin": jump_off_spin,
    "platform_lateral": platform_lateral,
    "trot_jump": trot_jump,
    "bound_jump": bound_jump,
}


def preset(name: str) -> TaskSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown task {name!r}; expected one of {sorted(PRESETS)}") from None
