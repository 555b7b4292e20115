"""Test-split evaluation: confusion matrix, per-axis position error and quaternion error.

Position error is averaged over test samples the classifier routed to
their true scene. Misrouted samples are counted separately and enter only
the ``routed`` figures, which score whatever pose the tandem pipeline
actually returned.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..geometry import normalize_position, quat_angular_error_deg
from .dataset import DatasetManifest, Sample
from .inference import RegressorRegistry, tandem_infer_batch

# published full-scale numbers; not reproducible with the synthetic rooms
REFERENCE_POSITION_MAE_M = {"x": 0.0026, "y": 0.0010, "z": 0.0034}
REFERENCE_QUATERNION_MAE_DEG = 0.0086
REFERENCE_TEST_ACCURACY = 0.98099


@dataclass
class PoseErrors:
    count: int = 0
    position_mae_m: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    position_mae_norm: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    quaternion_mae_deg: float = 0.0

    @classmethod
    def from_arrays(cls, err_m: np.ndarray, err_norm: np.ndarray, err_deg: np.ndarray) -> "PoseErrors":
        if len(err_deg) == 0:
            return cls()
        return cls(len(err_deg), [float(v) for v in err_m.mean(axis=0)],
                   [float(v) for v in err_norm.mean(axis=0)], float(err_deg.mean()))


@dataclass
class EvalReport:
    scene_ids: list[int]
    scene_names: list[str]
    confusion: list[list[int]]
    accuracy: float
    classifier_loss: float
    correct: PoseErrors
    routed: PoseErrors
    misroute_count: int
    per_scene: dict[str, dict] = field(default_factory=dict)
    curves: dict[str, list[dict]] = field(default_factory=dict)
    reference: dict = field(default_factory=lambda: {
        "position_mae_m": REFERENCE_POSITION_MAE_M,
        "quaternion_mae_deg": REFERENCE_QUATERNION_MAE_DEG,
        "test_accuracy": REFERENCE_TEST_ACCURACY,
        "note": "full-scale photogrammetry results, listed for context only",
    })

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    def confusion_csv(self) -> str:
        lines = ["true\\pred," + ",".join(self.scene_names)]
        for name, row in zip(self.scene_names, self.confusion):
            lines.append(name + "," + ",".join(str(v) for v in row))
        return "\n".join(lines) + "\n"


def evaluate(manifest: DatasetManifest, test: list[Sample], images: np.ndarray, classifier,
             registry: RegressorRegistry, batch_size: int = 256) -> EvalReport:
    if not test:
        raise ValueError("test split is empty")
    scene_ids = list(classifier.meta["scene_ids"])
    col = {sid: k for k, sid in enumerate(scene_ids)}
    names = [manifest.scene(sid).name for sid in scene_ids]
    conf = np.zeros((len(scene_ids), len(scene_ids)), dtype=np.int64)
    loss_sum = 0.0
    err_m, err_n, err_q, ok = [], [], [], []
    for start in range(0, len(test), batch_size):
        chunk = test[start:start + batch_size]
        x = images[start:start + batch_size]
        results = tandem_infer_batch(x, classifier, registry)
        y = np.array([col[s.scene_id] for s in chunk])
        probs = np.array([r.probabilities for r in results])
        loss_sum += float(-np.log(np.clip(probs[np.arange(len(y)), y], 1e-300, None)).sum())
        for s, r in zip(chunk, results):
            conf[col[s.scene_id], col[r.scene_id]] += 1
            bounds = manifest.bounds[s.scene_id]
            err_m.append(np.abs(r.pose.position - s.position))
            err_n.append(np.abs(normalize_position(r.pose.position, bounds) - np.asarray(s.position_norm)))
            err_q.append(quat_angular_error_deg(r.pose.orientation, s.quaternion))
            ok.append(r.scene_id == s.scene_id)
    err_m, err_n, err_q, ok = np.array(err_m), np.array(err_n), np.array(err_q), np.array(ok)
    sids = np.array([s.scene_id for s in test])
    per_scene = {}
    for sid, name in zip(scene_ids, names):
        sel = ok & (sids == sid)
        e = PoseErrors.from_arrays(err_m[sel], err_n[sel], err_q[sel])
        extent = manifest.bounds[sid].extent
        per_scene[name] = {**asdict(e), "scene_id": sid, "extent_m": [float(v) for v in extent],
                           "position_mae_fraction_of_extent": [float(m / x) for m, x in zip(e.position_mae_m, extent)]}
    return EvalReport(
        scene_ids=scene_ids,
        scene_names=names,
        confusion=conf.tolist(),
        accuracy=float(np.trace(conf) / conf.sum()),
        classifier_loss=loss_sum / len(test),
        correct=PoseErrors.from_arrays(err_m[ok], err_n[ok], err_q[ok]),
        routed=PoseErrors.from_arrays(err_m, err_n, err_q),
        misroute_count=int((~ok).sum()),
        per_scene=per_scene,
    )

