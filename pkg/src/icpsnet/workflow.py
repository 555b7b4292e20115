"""End-to-end steps driven by a :class:`RunConfig`, shared by the CLI and the tests.

Output layout under ``cfg.output_path``::

    dataset/manifest.json, dataset/images/*.ppm
    models/classifier.icps
    models/regressors/scene_XX.icps        (per-scene mode)
    models/regressors/unified.icps         (unified mode)
    reports/classifier_curves.csv, reports/classifier_train.json
    reports/regressor_XX_curves.csv, reports/regressor_XX_train.json   (XX = scene id or "unified")
    reports/evaluation.json, reports/confusion.csv

Nothing written depends on wall-clock time, so equal configs give
byte-identical files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .errors import InvalidConfig
from .models import load_checkpoint, save_checkpoint
from .pipeline.dataset import DatasetManifest, build_dataset, compute_class_bounds, plan_dataset, split_dataset
from .pipeline.evaluation import EvalReport, evaluate
from .pipeline.inference import RegressorRegistry
from .pipeline.training import TrainReport, train_classifier, train_regressor
from .trajectories import CompositionTable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def dataset(self) -> Path:
        return self.root / "dataset"

    @property
    def manifest(self) -> Path:
        return self.dataset / "manifest.json"

    @property
    def models(self) -> Path:
        return self.root / "models"

    @property
    def classifier(self) -> Path:
        return self.models / "classifier.icps"

    @property
    def regressors(self) -> Path:
        return self.models / "regressors"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    def regressor(self, tag: str) -> Path:
        return self.regressors / f"{tag}.icps"

    @property
    def evaluation(self) -> Path:
        return self.reports / "evaluation.json"


def paths(cfg: RunConfig) -> RunPaths:
    return RunPaths(cfg.output_path)


def planned_table(cfg: RunConfig) -> CompositionTable:
    """The composition that ``generate`` would render, after validating it against the scenes."""
    table = cfg.composition_table()
    known = {s.name for s in cfg.scene_specs()}
    unknown = [n for n in table.scene_order if n not in known]
    if unknown:
        raise InvalidConfig(f"composition names unknown scenes: {unknown}")
    return table


def generate(cfg: RunConfig, threads: int = 1) -> DatasetManifest:
    p = paths(cfg)
    log.info("rendering %d samples into %s", planned_table(cfg).grand_total, p.dataset)
    return build_dataset(cfg.scene_specs(), planned_table(cfg), cfg.trajectory_config(), cfg.render,
                         p.dataset, threads=threads)


def dry_run_count(cfg: RunConfig) -> int:
    """Plan every pose without rendering; returns the number of planned samples."""
    return len(plan_dataset(cfg.scene_specs(), planned_table(cfg), cfg.trajectory_config()))


def load_manifest(cfg: RunConfig) -> DatasetManifest:
    path = paths(cfg).manifest
    if not path.is_file():
        raise InvalidConfig(f"manifest not found: {path} (run generate first)")
    return DatasetManifest.load(path)


def split(cfg: RunConfig) -> DatasetManifest:
    manifest = load_manifest(cfg)
    split_dataset(manifest, cfg.split_spec())
    compute_class_bounds(manifest)
    manifest.save(paths(cfg).manifest)
    return manifest


def load_split_manifest(cfg: RunConfig, do_split: bool = False) -> DatasetManifest:
    if do_split:
        return split(cfg)
    manifest = load_manifest(cfg)
    if any(s.split is None for s in manifest.samples) or not manifest.bounds:
        raise InvalidConfig("manifest has no split yet; run split or pass --split")
    return manifest


def _write_report(report: TrainReport, reports: Path, stem: str) -> None:
    reports.mkdir(parents=True, exist_ok=True)
    (reports / f"{stem}_curves.csv").write_text(report.curves_csv(), encoding="utf-8")
    (reports / f"{stem}_train.json").write_text(report.to_json(), encoding="utf-8")


def _train_classifier(cfg: RunConfig, manifest: DatasetManifest) -> TrainReport:
    p = paths(cfg)
    train, val = manifest.split("train"), manifest.split("val")
    model, report = train_classifier(train, val, manifest.load_images(train), manifest.load_images(val),
                                     cfg.classifier, cfg.training.classifier, cfg.classifier_seed(),
                                     cfg.augmentation.classifier, class_ids=manifest.scene_ids)
    model.meta["scene_names"] = {str(s.id): s.name for s in manifest.scenes}
    p.models.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, p.classifier)
    _write_report(report, p.reports, "classifier")
    return report


def train_classifier_step(cfg: RunConfig, do_split: bool = False) -> TrainReport:
    manifest = load_split_manifest(cfg, do_split)
    if cfg.classifier.num_classes != len(manifest.scene_ids):
        raise InvalidConfig(f"classifier.num_classes is {cfg.classifier.num_classes} "
                            f"but the dataset has {len(manifest.scene_ids)} scenes")
    return _train_classifier(cfg, manifest)


def train_regressors_step(cfg: RunConfig, scene: str | None = None, do_split: bool = False) -> dict[str, TrainReport]:
    """Per-scene regressors (all scenes, or only ``scene``), or one unified regressor."""
    manifest = load_split_manifest(cfg, do_split)
    p = paths(cfg)
    p.regressors.mkdir(parents=True, exist_ok=True)
    if cfg.training.regressor_mode == "unified":
        if scene is not None:
            raise InvalidConfig("--scene cannot be combined with the unified regressor mode")
        groups = {"unified": (manifest.scene_ids, cfg.regressor_seed(None))}
    else:
        ids = manifest.scene_ids
        if scene is not None:
            matches = [s.id for s in manifest.scenes if s.name == scene]
            if not matches:
                raise InvalidConfig(f"unknown scene {scene!r}; known: {[s.name for s in manifest.scenes]}")
            ids = matches
        groups = {f"scene_{sid:02d}": ([sid], cfg.regressor_seed(sid)) for sid in ids}
    reports = {}
    for tag, (sids, seed) in groups.items():
        train = [s for s in manifest.split("train") if s.scene_id in sids]
        val = [s for s in manifest.split("val") if s.scene_id in sids]
        log.info("training regressor %s on %d samples", tag, len(train))
        model, report = train_regressor(train, val, manifest.load_images(train), manifest.load_images(val),
                                        cfg.regressor, manifest.bounds, cfg.training.regressor, seed,
                                        cfg.augmentation.regressor)
        save_checkpoint(model, p.regressor(tag))
        _write_report(report, p.reports, f"regressor_{tag.removeprefix('scene_')}")
        reports[tag] = report
    return reports


def _curves(reports: Path) -> dict[str, list[dict]]:
    out = {}
    for f in sorted(reports.glob("*_train.json")):
        out[f.name.removesuffix("_train.json")] = json.loads(f.read_text(encoding="utf-8"))["curves"]
    return out


def evaluate_step(cfg: RunConfig) -> EvalReport:
    p = paths(cfg)
    manifest = load_split_manifest(cfg)
    if not p.classifier.is_file():
        raise InvalidConfig(f"classifier checkpoint not found: {p.classifier}")
    classifier = load_checkpoint(p.classifier, "classifier")
    registry = RegressorRegistry.from_directory(p.regressors)
    test = manifest.split("test")
    report = evaluate(manifest, test, manifest.load_images(test), classifier, registry)
    report.curves = _curves(p.reports)
    p.reports.mkdir(parents=True, exist_ok=True)
    p.evaluation.write_text(report.to_json(), encoding="utf-8")
    (p.reports / "confusion.csv").write_text(report.confusion_csv(), encoding="utf-8")
    return report


def run_all(cfg: RunConfig, threads: int = 1) -> EvalReport:
    generate(cfg, threads)
    split(cfg)
    train_classifier_step(cfg)
    train_regressors_step(cfg)
    return evaluate_step(cfg)
