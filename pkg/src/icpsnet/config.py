"""Run configuration: one JSON file records a whole experiment.

Unknown keys anywhere are rejected. Every random stream is derived from
the root ``seed`` with :func:`icpsnet.rng.mix_seed` and a fixed purpose tag:

====================  =============================
purpose               derived seed
====================  =============================
trajectories          mix_seed(seed, 1)
split shuffles        mix_seed(seed, 2)
classifier training   mix_seed(seed, 3)
regressor training    mix_seed(seed, 4, scene_id)
unified regressor     mix_seed(seed, 4, 2**32)
====================  =============================
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidConfig
from .geometry import NormalizationBounds
from .models import ClassifierConfig, RegressorConfig, config_from_dict
from .pipeline.augment import AugmentationPolicy
from .pipeline.dataset import RenderConfig, SplitSpec
from .pipeline.training import CLASSIFIER_TRAINING, REGRESSOR_TRAINING, TrainingConfig
from .rng import mix_seed
from .scenes import SceneSpec, default_scenes, validate_scenes
from .trajectories import CompositionTable, TrajectoryConfig

UNIFIED_TAG = 2**32


@dataclass(frozen=True)
class CompositionSection:
    csv: str | None = None
    samples_per_cell: int | None = 20


@dataclass(frozen=True)
class TrajectorySection:
    wall_margin: float = 0.5
    camera_height_fraction: float = 0.5


@dataclass(frozen=True)
class SplitSection:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2


@dataclass(frozen=True)
class TrainingSection:
    classifier: TrainingConfig = CLASSIFIER_TRAINING
    regressor: TrainingConfig = REGRESSOR_TRAINING
    regressor_mode: str = "per_scene"


@dataclass(frozen=True)
class AugmentationSection:
    classifier: AugmentationPolicy = AugmentationPolicy()
    regressor: AugmentationPolicy = AugmentationPolicy.disabled()


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/desk"
    scenes: list | str = "default"
    composition: CompositionSection = CompositionSection()
    trajectory: TrajectorySection = TrajectorySection()
    render: RenderConfig = RenderConfig()
    split: SplitSection = SplitSection()
    classifier: ClassifierConfig = ClassifierConfig()
    regressor: RegressorConfig = RegressorConfig()
    training: TrainingSection = TrainingSection()
    augmentation: AugmentationSection = AugmentationSection()
    base_dir: Path = field(default=Path("."), compare=False)

    # derived values ---------------------------------------------------------

    def scene_specs(self) -> list[SceneSpec]:
        if self.scenes == "default":
            scenes = default_scenes()
        else:
            try:
                scenes = [SceneSpec(int(s["id"]), str(s["name"]),
                                    NormalizationBounds(tuple(s["min"]), tuple(s["max"])),
                                    int(s["appearance_seed"])) for s in self.scenes]
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidConfig(f"bad scene definition: {exc}") from exc
        validate_scenes(scenes)
        return scenes

    def composition_table(self) -> CompositionTable:
        if self.composition.csv is not None:
            return CompositionTable.from_csv(self.composition_path)
        if self.composition.samples_per_cell is None:
            raise InvalidConfig("composition needs either csv or samples_per_cell")
        return CompositionTable.uniform([s.name for s in self.scene_specs()], self.composition.samples_per_cell)

    @property
    def composition_path(self) -> Path | None:
        if self.composition.csv is None:
            return None
        return (self.base_dir / self.composition.csv).resolve()

    @property
    def output_path(self) -> Path:
        return (self.base_dir / self.output_dir).resolve()

    def trajectory_config(self) -> TrajectoryConfig:
        return TrajectoryConfig(4, self.trajectory.wall_margin, self.trajectory.camera_height_fraction,
                                mix_seed(self.seed, 1))

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.split.train, self.split.val, self.split.test, mix_seed(self.seed, 2))

    def classifier_seed(self) -> int:
        return mix_seed(self.seed, 3)

    def regressor_seed(self, scene_id: int | None) -> int:
        return mix_seed(self.seed, 4, UNIFIED_TAG if scene_id is None else scene_id)

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed)


def _build(cls, data, where: str):
    """Instantiate a (possibly nested) frozen dataclass from a dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise InvalidConfig(f"{where}: expected an object")
    if cls in (ClassifierConfig, RegressorConfig):
        try:
            return config_from_dict("classifier" if cls is ClassifierConfig else "regressor", data)
        except TypeError as exc:
            raise InvalidConfig(f"{where}: {exc}") from exc
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init and f.name != "base_dir"}
    unknown = set(data) - set(fields)
    if unknown:
        raise InvalidConfig(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name) if _has_defaults(cls) else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple) and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(f"{where}: {exc}") from exc


def _has_defaults(cls) -> bool:
    try:
        cls()
    except TypeError:
        return False
    return True


def _validate(cfg: RunConfig) -> None:
    if cfg.training.regressor_mode not in ("per_scene", "unified"):
        raise InvalidConfig("training.regressor_mode must be 'per_scene' or 'unified'")
    r = cfg.render
    if not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in (r.width, r.height)):
        raise InvalidConfig("render width and height must be positive integers")
    r.intrinsics.validate()
    size = (r.height, r.width)
    if size != tuple(cfg.classifier.input_size) or size != tuple(cfg.regressor.input_size):
        raise InvalidConfig(f"render size {r.width}x{r.height} does not match the model input sizes")
    cfg.training.classifier.validate()
    cfg.training.regressor.validate()
    cfg.classifier.validate()
    cfg.regressor.validate()
    cfg.augmentation.classifier.validate()
    cfg.augmentation.regressor.validate()
    cfg.split_spec().validate()
    if cfg.composition_path is not None and not cfg.composition_path.is_file():
        raise InvalidConfig(f"composition CSV not found: {cfg.composition_path}")
    cfg.scene_specs()


def run_config_from_dict(data: dict, base_dir: Path | str = ".") -> RunConfig:
    cfg = _build(RunConfig, data, "config")
    cfg = dataclasses.replace(cfg, base_dir=Path(base_dir))
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or not 0 <= cfg.seed < 2**64:
        raise InvalidConfig("seed must be an unsigned 64-bit integer")
    try:
        _validate(cfg)
    except InvalidConfig:
        raise
    except (ValueError, TypeError) as exc:
        raise InvalidConfig(f"config: {exc}") from exc
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InvalidConfig(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON ({exc})") from exc
    return run_config_from_dict(data, path.parent)
