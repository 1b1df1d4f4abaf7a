from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Patch:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    height: float

    def contains(self, x, y) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class TerrainModel:
    """Piecewise-flat ground: axis-aligned patches over a default height.

    The first patch containing a point wins when patches overlap.
    """

    default_height: float = 0.0
    patches: tuple = field(default_factory=tuple)

    def height(self, x, y) -> float:
        for patch in self.patches:
            if patch.contains(x, y):
                return patch.height
        return self.default_height

    def shifted(self, dx, dy) -> "TerrainModel":
        return TerrainModel(
            self.default_height,
            tuple(Patch(p.x_min + dx, p.x_max + dx, p.y_min + dy, p.y_max + dy, p.height) for p in self.patches),
        )

    def to_dict(self):
        return {
            "default_height": self.default_height,
            "patches": [
                {"x": [p.x_min, p.x_max], "y": [p.y_min, p.y_max], "height": p.height} for p in self.patches
            ],
        }

    @classmethod
    def from_dict(cls, d):
        patches = tuple(
            Patch(float(p["x"][0]), float(p["x"][1]), float(p["y"][0]), float(p["y"][1]), float(p["height"]))
            for p in d.get("patches", [])
        )
        return cls(float(d.get("default_height", 0.0)), patches)


FLAT = TerrainModel()
