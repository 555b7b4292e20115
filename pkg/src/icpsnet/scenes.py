"""Scene definitions: one axis-aligned box room per scene on a shared floor plan."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidConfig, UnknownScene
from .geometry import NormalizationBounds
from .rng import mix_seed

APPEARANCE_ROOT = 2019

# (name, x extent, y extent, height) in meters; Table 1 row order
_ROOMS = [
    ("Armoury", 7.0, 5.0, 3.2),
    ("Billiard", 6.0, 5.5, 3.4),
    ("Dining", 8.0, 5.0, 3.6),
    ("Great Drawing", 9.0, 6.0, 4.0),
    ("Morning", 5.5, 4.5, 3.0),
    ("Porcelain", 6.5, 4.0, 3.2),
    ("Serving", 5.0, 4.0, 3.0),
    ("Small Drawing", 5.0, 4.5, 3.2),
    ("Smoking", 6.0, 4.8, 3.3),
]


@dataclass(frozen=True)
class SceneSpec:
    id: int
    name: str
    bounds: NormalizationBounds
    appearance_seed: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "bounds": self.bounds.to_dict(),
            "appearance_seed": self.appearance_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(int(d["id"]), str(d["name"]), NormalizationBounds.from_dict(d["bounds"]),
                   int(d["appearance_seed"]))


def default_scenes() -> list[SceneSpec]:
    """Nine rooms on a 3x3 grid of 10 m x 8 m lots, all sharing one world origin."""
    scenes = []
    for i, (name, dx, dy, dz) in enumerate(_ROOMS):
        ox, oy = 10.0 * (i % 3), 8.0 * (i // 3)
        bounds = NormalizationBounds((ox, oy, 0.0), (ox + dx, oy + dy, dz))
        scenes.append(SceneSpec(i, name, bounds, mix_seed(APPEARANCE_ROOT, i)))
    return scenes


def validate_scenes(scenes: list[SceneSpec]) -> None:
    ids = [s.id for s in scenes]
    names = [s.name for s in scenes]
    if len(set(ids)) != len(ids) or len(set(names)) != len(names):
        raise InvalidConfig("scene ids and names must be unique")
    if len(scenes) < 2:
        raise InvalidConfig("at least two scenes are required")


def scene_by_name(scenes: list[SceneSpec], name: str) -> SceneSpec:
    for s in scenes:
        if s.name == name:
            return s
    raise UnknownScene(name)
