"""Minibatch Adam training for the classifier and the pose regressors."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidConfig
from ..models import (ClassifierConfig, PoseRegressor, RegressorConfig, SceneClassifier, build_classifier,
                      build_regressor, checkpoint_bytes, load_checkpoint_bytes)
from ..nn import Adam
from ..nn import functional as F
from ..rng import mix_seed, numpy_rng
from .augment import AugmentationPolicy, augment
from .dataset import Sample

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc")
SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 3e-3
    patience: int | None = None
    schedule: str = "constant"

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise InvalidConfig(f"training needs epochs >= 1, batch_size >= 1 and lr > 0: {self}")
        if self.schedule not in SCHEDULES:
            raise InvalidConfig(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.patience is not None and self.patience < 1:
            raise InvalidConfig("patience must be >= 1 when set")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``; "cosine" anneals to 1% of ``lr`` at the last epoch."""
        if self.schedule == "constant":
            return self.lr
        if self.schedule == "cosine":
            frac = (epoch - 1) / max(1, self.epochs - 1)
            return self.lr * (0.01 + 0.99 * 0.5 * (1.0 + np.cos(np.pi * frac)))
        raise InvalidConfig(f"unknown learning-rate schedule {self.schedule!r}")


CLASSIFIER_TRAINING = TrainingConfig(epochs=30, batch_size=32, lr=3e-3, schedule="cosine")
# small batches: batch-norm noise is the main regularizer of the head on ~100 images per scene
REGRESSOR_TRAINING = TrainingConfig(epochs=100, batch_size=16, lr=3e-3, schedule="cosine")


@dataclass
class TrainReport:
    kind: str
    curves: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")
    scenes: list[int] = field(default_factory=list)

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for row in self.curves:
            w.writerow(["" if row.get(c) is None else row[c] for c in CURVE_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    # near-equal batches, so batch-norm never sees a single-row batch
    order = rng.permutation(n)
    return np.array_split(order, max(1, int(np.ceil(n / batch_size))))


def _augment_batch(images: np.ndarray, idx: np.ndarray, policy: AugmentationPolicy, seed: int, epoch: int):
    if not policy.active:
        return images[idx]
    return np.stack([augment(images[i], policy, mix_seed(seed, epoch, int(i))) for i in idx])


def _labels(samples: list[Sample], class_ids: list[int]) -> np.ndarray:
    lookup = {sid: k for k, sid in enumerate(class_ids)}
    return np.array([lookup[s.scene_id] for s in samples], dtype=np.int64)


def classifier_metrics(model: SceneClassifier, images: np.ndarray, labels: np.ndarray,
                       batch_size: int = 256) -> tuple[float, float]:
    """Mean cross-entropy and accuracy in inference mode."""
    loss_sum, correct = 0.0, 0
    for start in range(0, len(labels), batch_size):
        x, y = images[start:start + batch_size], labels[start:start + batch_size]
        logits = model.forward(x, train=False)
        loss_sum += F.softmax_cross_entropy(logits, F.one_hot(y, model.cfg.num_classes)).item() * len(y)
        correct += int((logits.data.argmax(axis=1) == y).sum())
    return loss_sum / len(labels), correct / len(labels)


def train_classifier(train: list[Sample], val: list[Sample], train_images: np.ndarray, val_images: np.ndarray,
                     cfg: ClassifierConfig, tcfg: TrainingConfig = CLASSIFIER_TRAINING, seed: int = 0,
                     policy: AugmentationPolicy = AugmentationPolicy(),
                     class_ids: list[int] | None = None) -> tuple[SceneClassifier, TrainReport]:
    """Train on ``train`` with augmentation; keep the weights of the best validation-accuracy epoch."""
    tcfg.validate()
    class_ids = sorted({s.scene_id for s in train}) if class_ids is None else list(class_ids)
    if len(class_ids) != cfg.num_classes:
        raise ValueError(f"config has {cfg.num_classes} classes but the data has {len(class_ids)} scenes")
    model = build_classifier(cfg, mix_seed(seed, 0))
    model.meta = {"scene_ids": class_ids}
    opt = Adam(model.parameters(), lr=tcfg.lr)
    rng = numpy_rng(mix_seed(seed, 1))
    y_train, y_val = _labels(train, class_ids), _labels(val, class_ids)
    report = TrainReport("classifier", scenes=class_ids)
    best, best_acc, stale = None, -1.0, 0
    for epoch in range(1, tcfg.epochs + 1):
        opt.state.lr = tcfg.lr_at(epoch)
        loss_sum, correct = 0.0, 0
        for idx in _batches(len(train), tcfg.batch_size, rng):
            x = _augment_batch(train_images, idx, policy, seed, epoch)
            opt.zero_grad()
            logits = model.forward(x, train=True, rng=rng)
            loss = F.softmax_cross_entropy(logits, F.one_hot(y_train[idx], cfg.num_classes))
            loss.backward()
            opt.step()
            loss_sum += loss.item() * len(idx)
            correct += int((logits.data.argmax(axis=1) == y_train[idx]).sum())
        val_loss, val_acc = classifier_metrics(model, val_images, y_val)
        row = {"epoch": epoch, "train_loss": loss_sum / len(train), "val_loss": val_loss,
               "train_acc": correct / len(train), "val_acc": val_acc}
        report.curves.append(row)
        log.info("classifier epoch %d train_loss %.6f val_loss %.6f train_acc %.4f val_acc %.4f",
                 epoch, row["train_loss"], val_loss, row["train_acc"], val_acc)
        if val_acc > best_acc:
            best, best_acc, stale = checkpoint_bytes(model), val_acc, 0
            report.best_epoch, report.best_metric = epoch, val_acc
        else:
            stale += 1
            if tcfg.patience is not None and stale >= tcfg.patience:
                break
    return load_checkpoint_bytes(best, "classifier"), report


def regressor_targets(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array([s.position_norm for s in samples], dtype=np.float64)
    quat = np.array([s.quaternion for s in samples], dtype=np.float64)
    return pos, quat


def regressor_loss(model: PoseRegressor, images: np.ndarray, samples: list[Sample], batch_size: int = 256) -> float:
    """Mean pose loss (without the activity penalty) in inference mode."""
    pos, quat = regressor_targets(samples)
    total = 0.0
    for start in range(0, len(samples), batch_size):
        sl = slice(start, start + batch_size)
        out = model.forward(images[sl], train=False)
        total += F.pose_loss(out[:, :3], out[:, 3:], pos[sl], quat[sl], model.cfg.beta).item() * len(pos[sl])
    return total / len(samples)


def train_regressor(train: list[Sample], val: list[Sample], train_images: np.ndarray, val_images: np.ndarray,
                    cfg: RegressorConfig, bounds: dict, tcfg: TrainingConfig = REGRESSOR_TRAINING,
                    seed: int = 0, policy: AugmentationPolicy = AugmentationPolicy.disabled(),
                    ) -> tuple[PoseRegressor, TrainReport]:
    """Fit normalized positions and canonical quaternions; keep the best validation-loss epoch.

    ``bounds`` maps every scene id present in ``train`` to its training
    normalization bounds; they are stored in the model for inference.
    """
    tcfg.validate()
    if not train:
        raise ValueError("regressor training set is empty")
    scenes = sorted({s.scene_id for s in train})
    model = build_regressor(cfg, mix_seed(seed, 0))
    model.meta = {"scene_ids": scenes, "bounds": {str(k): bounds[k].to_dict() for k in scenes}}
    opt = Adam(model.parameters(), lr=tcfg.lr)
    rng = numpy_rng(mix_seed(seed, 1))
    pos, quat = regressor_targets(train)
    report = TrainReport("regressor", scenes=scenes)
    best, best_loss, stale = None, np.inf, 0
    for epoch in range(1, tcfg.epochs + 1):
        opt.state.lr = tcfg.lr_at(epoch)
        loss_sum = 0.0
        for idx in _batches(len(train), tcfg.batch_size, rng):
            x = _augment_batch(train_images, idx, policy, seed, epoch)
            opt.zero_grad()
            loss = model.loss(x, pos[idx], quat[idx], train=True, rng=rng)
            loss.backward()
            opt.step()
            loss_sum += loss.item() * len(idx)
        val_loss = regressor_loss(model, val_images, val) if val else float("nan")
        row = {"epoch": epoch, "train_loss": loss_sum / len(train), "val_loss": val_loss,
               "train_acc": None, "val_acc": None}
        report.curves.append(row)
        log.debug("regressor %s epoch %d train_loss %.6f val_loss %.6f", scenes, epoch, row["train_loss"], val_loss)
        metric = val_loss if val else row["train_loss"]
        if metric < best_loss:
            best, best_loss, stale = checkpoint_bytes(model), metric, 0
            report.best_epoch, report.best_metric = epoch, metric
        else:
            stale += 1
            if tcfg.patience is not None and stale >= tcfg.patience:
                break
    return load_checkpoint_bytes(best, "regressor"), report
