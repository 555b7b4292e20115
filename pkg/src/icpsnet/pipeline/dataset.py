"""Dataset manifests: rendering, stratified splitting and per-scene normalization."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DegenerateBounds, InvalidConfig, SceneTooSmall
from ..geometry import NormalizationBounds, Pose, compute_bounds, normalize_position
from ..render import CameraIntrinsics, read_ppm, render, write_ppm
from ..rng import mix_seed, numpy_rng
from ..scenes import SceneSpec
from ..trajectories import CompositionTable, TrajectoryConfig, TrajectoryStyle, expand_composition

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class RenderConfig:
    width: int = 32
    height: int = 32
    hfov_deg: float = 60.0

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.hfov_deg)


@dataclass
class Sample:
    scene_id: int
    style: int
    index: int
    image: str
    pose: list[float]
    position_norm: list[float] | None = None
    split: str | None = None

    @property
    def position(self) -> np.ndarray:
        return np.array(self.pose[:3])

    @property
    def quaternion(self) -> np.ndarray:
        return np.array(self.pose[3:])

    def to_dict(self) -> dict:
        return {"scene_id": self.scene_id, "style": self.style, "index": self.index, "image": self.image,
                "pose": self.pose, "position_norm": self.position_norm, "split": self.split}


@dataclass
class DatasetManifest:
    scenes: list[SceneSpec]
    samples: list[Sample]
    render: RenderConfig = field(default_factory=RenderConfig)
    bounds: dict[int, NormalizationBounds] = field(default_factory=dict)
    root: Path | None = None

    def scene(self, scene_id: int) -> SceneSpec:
        for s in self.scenes:
            if s.id == scene_id:
                return s
        raise KeyError(scene_id)

    @property
    def scene_ids(self) -> list[int]:
        return sorted(s.id for s in self.scenes)

    def split(self, name: str) -> list[Sample]:
        return [s for s in self.samples if s.split == name]

    def to_dict(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "render": {"width": self.render.width, "height": self.render.height, "hfov_deg": self.render.hfov_deg},
            "scenes": [s.to_dict() for s in self.scenes],
            "train_bounds": {str(k): v.to_dict() for k, v in sorted(self.bounds.items())},
            "samples": [s.to_dict() for s in self.samples],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        d = json.loads(path.read_text(encoding="utf-8"))
        if d.get("version") != MANIFEST_VERSION:
            raise InvalidConfig(f"{path}: unsupported manifest version {d.get('version')}")
        return cls(
            scenes=[SceneSpec.from_dict(s) for s in d["scenes"]],
            samples=[Sample(**s) for s in d["samples"]],
            render=RenderConfig(**d["render"]),
            bounds={int(k): NormalizationBounds.from_dict(v) for k, v in d.get("train_bounds", {}).items()},
            root=path.parent,
        )

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def load_images(self, samples: list[Sample]) -> np.ndarray:
        if self.root is None:
            raise InvalidConfig("manifest has no root directory to load images from")
        return np.stack([read_ppm(self.root / s.image) for s in samples])


def image_name(scene_id: int, style: TrajectoryStyle, index: int) -> str:
    return f"images/{scene_id:02d}_seq{int(style)}_{index:05d}.ppm"


def plan_dataset(scenes: list[SceneSpec], composition: CompositionTable,
                 traj_cfg: TrajectoryConfig) -> list[tuple[SceneSpec, TrajectoryStyle, int, Pose]]:
    by_id = {s.id: s for s in scenes}
    plan = []
    for scene_id, style, poses in expand_composition(scenes, composition, traj_cfg):
        for i, pose in enumerate(poses):
            plan.append((by_id[scene_id], style, i, pose))
    return plan


def build_dataset(scenes: list[SceneSpec], composition: CompositionTable, traj_cfg: TrajectoryConfig,
                  render_cfg: RenderConfig, output_dir, threads: int = 1) -> DatasetManifest:
    """Render every planned pose to ``output_dir/images`` and write ``output_dir/manifest.json``."""
    out = Path(output_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    plan = plan_dataset(scenes, composition, traj_cfg)

    def work(item):
        scene, style, i, pose = item
        name = image_name(scene.id, style, i)
        write_ppm(out / name, render(scene, pose, render_cfg.intrinsics, render_cfg.width, render_cfg.height))
        return Sample(scene.id, int(style), i, name, [float(v) for v in pose.as_vector()])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            samples = list(pool.map(work, plan))
    else:
        samples = [work(item) for item in plan]
    manifest = DatasetManifest(list(scenes), samples, render_cfg, root=out)
    manifest.save(out / "manifest.json")
    return manifest


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if min(self.train, self.val, self.test) <= 0 or abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise InvalidConfig("split fractions must be positive and sum to 1")


def _floor_fraction(frac: float, n: int) -> int:
    # 0.6 * 100 evaluates to 59.99999999999999
    return int(np.floor(frac * n + 1e-9))


def split_dataset(manifest: DatasetManifest, spec: SplitSpec = SplitSpec()):
    """Tag each sample train/val/test, stratified by scene; returns the three sample lists.

    Each scene's samples are permuted by a generator seeded from
    ``mix_seed(spec.seed, scene_id)``; the first ``floor(train*n)`` go to
    train, the next ``floor(val*n)`` to validation and the remainder to test.
    """
    spec.validate()
    for sid in manifest.scene_ids:
        rows = [s for s in manifest.samples if s.scene_id == sid]
        if len(rows) < 5:
            raise SceneTooSmall(f"scene {sid} has {len(rows)} samples; splitting needs at least 5")
        order = numpy_rng(mix_seed(spec.seed, sid)).permutation(len(rows))
        n_train = _floor_fraction(spec.train, len(rows))
        n_val = _floor_fraction(spec.val, len(rows))
        for rank, k in enumerate(order):
            rows[k].split = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return tuple(manifest.split(name) for name in SPLITS)


def compute_class_bounds(manifest: DatasetManifest) -> dict[int, NormalizationBounds]:
    """Per-scene bounds from the training split; annotates normalized positions on every sample."""
    bounds = {}
    train = manifest.split("train")
    for sid in manifest.scene_ids:
        pts = [s.position for s in train if s.scene_id == sid]
        if not pts:
            raise DegenerateBounds(f"scene {sid} has no training samples")
        bounds[sid] = compute_bounds(pts)
    for s in manifest.samples:
        if s.scene_id in bounds:
            s.position_norm = [float(v) for v in normalize_position(s.position, bounds[s.scene_id])]
    manifest.bounds = bounds
    return bounds
