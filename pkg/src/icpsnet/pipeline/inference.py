"""Tandem inference: classify the scene, then regress the pose with that scene's regressor."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import MissingRegressor, ZeroNormQuaternion
from ..geometry import NormalizationBounds, Pose, denormalize_position, quat_canonicalize, quat_normalize
from ..models import load_checkpoint, regressor_bounds

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


class RegressorRegistry:
    """Scene id -> (regressor, that scene's normalization bounds).

    A regressor covering several scenes (unified mode) is registered under
    each of them. Any object with ``predict_raw(images) -> [n, 7]`` and a
    ``meta`` dict holding ``bounds`` works as a regressor.
    """

    def __init__(self):
        self._entries: dict[int, tuple[object, NormalizationBounds]] = {}

    def add(self, regressor) -> None:
        for sid, bounds in regressor_bounds(regressor).items():
            self._entries[sid] = (regressor, bounds)

    def get(self, scene_id: int):
        try:
            return self._entries[scene_id]
        except KeyError:
            raise MissingRegressor(f"no regressor registered for scene {scene_id}") from None

    def __contains__(self, scene_id: int) -> bool:
        return scene_id in self._entries

    @property
    def scene_ids(self) -> list[int]:
        return sorted(self._entries)

    @classmethod
    def from_directory(cls, path) -> "RegressorRegistry":
        reg = cls()
        for f in sorted(Path(path).glob("*.icps")):
            reg.add(load_checkpoint(f, "regressor"))
        return reg


def postprocess(raw: np.ndarray, bounds: NormalizationBounds) -> tuple[np.ndarray, np.ndarray]:
    """Split raw 7-wide outputs into meters and unit canonical quaternions.

    A predicted quaternion with (near) zero norm carries no direction and is
    replaced by the identity rotation.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    pos = denormalize_position(raw[:, :3], bounds)
    quats = []
    for q in raw[:, 3:]:
        try:
            quats.append(quat_canonicalize(quat_normalize(q)))
        except ZeroNormQuaternion:
            quats.append(IDENTITY_QUAT.copy())
    return pos, np.array(quats)


def select_scene(probs: np.ndarray, scene_ids: list[int]) -> np.ndarray:
    """Argmax over classes, ties to the lowest scene id (class columns are in ascending id order)."""
    return np.asarray(scene_ids)[np.argmax(probs, axis=-1)]


@dataclass
class InferenceResult:
    scene_id: int
    pose: Pose
    probabilities: np.ndarray
    raw: np.ndarray


def tandem_infer_batch(images: np.ndarray, classifier, registry: RegressorRegistry) -> list[InferenceResult]:
    images = np.asarray(images)
    probs = classifier.predict_proba(images)
    scene_ids = list(classifier.meta["scene_ids"])
    chosen = select_scene(probs, scene_ids)
    results: list[InferenceResult | None] = [None] * len(images)
    for sid in sorted(set(chosen.tolist())):
        rows = np.flatnonzero(chosen == sid)
        model, bounds = registry.get(int(sid))
        raw = np.asarray(model.predict_raw(images[rows]), dtype=np.float64)
        pos, quat = postprocess(raw, bounds)
        for k, i in enumerate(rows):
            results[i] = InferenceResult(int(sid), Pose(pos[k], quat[k]), probs[i], raw[k])
    return results


def tandem_infer(image: np.ndarray, classifier, registry: RegressorRegistry) -> InferenceResult:
    return tandem_infer_batch(np.asarray(image)[None], classifier, registry)[0]
