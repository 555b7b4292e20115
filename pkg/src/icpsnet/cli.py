"""Command-line entry point: ``icpsnet <command> [options]``.

Exit status: 0 success, 1 internal failure, 2 usage or configuration
error (including unreadable inputs), 3 missing model for a predicted scene.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import workflow
from .config import RunConfig, load_run_config
from .errors import (CheckpointError, IcpsError, ImageFormatError, InvalidConfig, MissingRegressor,
                     SceneTooSmall, UnknownScene)
from .models import load_checkpoint
from .nn import functional as F
from .nn.suite import CASE_NAMES, TOLERANCE, run_suite
from .pipeline.inference import RegressorRegistry, tandem_infer
from .render import read_ppm

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_MISSING_MODEL = 0, 1, 2, 3

log = logging.getLogger("icpsnet")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration JSON (defaults apply when omitted)")
    common.add_argument("--seed", type=_u64, help="override the root seed of the configuration")
    common.add_argument("--threads", type=_positive, default=1, help="worker threads for rendering (default 1)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="log progress (-vv for debug)")

    parser = argparse.ArgumentParser(prog="icpsnet", description="Indoor camera positioning: scene classifier "
                                     "plus per-scene pose regressors, trained on synthetic box rooms.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    g = sub.add_parser("generate", parents=[common], help="render the dataset and write its manifest")
    g.add_argument("--dry-run", action="store_true", help="plan and print counts without rendering")

    sub.add_parser("split", parents=[common], help="stratified train/val/test split and training bounds")

    tc = sub.add_parser("train-classifier", parents=[common], help="train the scene classifier")
    tc.add_argument("--split", action="store_true", help="split the manifest first")

    tr = sub.add_parser("train-regressor", parents=[common], help="train pose regressors")
    tr.add_argument("--scene", help="train only the regressor of this scene (by name)")
    tr.add_argument("--split", action="store_true", help="split the manifest first")

    inf = sub.add_parser("infer", parents=[common], help="classify one PPM image and regress its pose")
    inf.add_argument("image", type=Path)
    inf.add_argument("--classifier", type=Path, help="classifier checkpoint (default: from the run directory)")
    inf.add_argument("--regressors", type=Path, help="directory of regressor checkpoints")
    inf.add_argument("--json", action="store_true", help="machine-readable output")

    sub.add_parser("evaluate", parents=[common], help="evaluate on the test split and write the report")

    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every layer and loss")
    gc.add_argument("--sabotage", action="append", default=[], choices=CASE_NAMES,
                    help="inject a gradient fault into this op (test hook)")

    sub.add_parser("run", parents=[common], help="generate, split, train everything and evaluate")
    return parser


def _config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config is not None else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_generate(args) -> int:
    cfg = _config(args)
    table = workflow.planned_table(cfg)
    print(table.format_table())
    if args.dry_run:
        planned = workflow.dry_run_count(cfg)
        print(f"planned samples: {planned} (dry run, nothing rendered)")
        return EXIT_OK
    manifest = workflow.generate(cfg, args.threads)
    print(f"rendered {len(manifest.samples)} samples")
    print(f"manifest: {workflow.paths(cfg).manifest}")
    return EXIT_OK


def cmd_split(args) -> int:
    manifest = workflow.split(_config(args))
    for name in ("train", "val", "test"):
        print(f"{name}: {len(manifest.split(name))}")
    return EXIT_OK


def _print_epoch1(report, label: str) -> None:
    if report.curves:
        print(f"{label} epoch 1 train_loss {report.curves[0]['train_loss']:.17g}")


def cmd_train_classifier(args) -> int:
    cfg = _config(args)
    report = workflow.train_classifier_step(cfg, args.split)
    _print_epoch1(report, "classifier")
    print(f"best epoch {report.best_epoch} val_acc {report.best_metric:.6f}")
    print(f"checkpoint: {workflow.paths(cfg).classifier}")
    return EXIT_OK


def cmd_train_regressor(args) -> int:
    cfg = _config(args)
    for tag, report in workflow.train_regressors_step(cfg, args.scene, args.split).items():
        _print_epoch1(report, f"regressor {tag}")
        print(f"regressor {tag}: best epoch {report.best_epoch} val_loss {report.best_metric:.6f} "
              f"-> {workflow.paths(cfg).regressor(tag)}")
    return EXIT_OK


def cmd_infer(args) -> int:
    run = workflow.paths(_config(args))
    clf_path = args.classifier or run.classifier
    reg_dir = args.regressors or run.regressors
    image = read_ppm(args.image)
    classifier = load_checkpoint(clf_path, "classifier")
    registry = RegressorRegistry.from_directory(reg_dir)
    result = tandem_infer(image, classifier, registry)
    names = classifier.meta.get("scene_names") or {}
    name = names.get(str(result.scene_id), f"scene {result.scene_id}")
    payload = {
        "scene_id": result.scene_id,
        "scene_name": name,
        "probabilities": {str(sid): float(p) for sid, p in zip(classifier.meta["scene_ids"], result.probabilities)},
        "position_m": [float(v) for v in result.pose.position],
        "quaternion_wpqr": [float(v) for v in result.pose.orientation],
    }
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(f"scene: {name} (id {result.scene_id})")
        print("probabilities: " + " ".join(f"{k}:{v:.4f}" for k, v in payload["probabilities"].items()))
        print("position (m): " + " ".join(f"{v:.4f}" for v in payload["position_m"]))
        print("quaternion (w p q r): " + " ".join(f"{v:.6f}" for v in payload["quaternion_wpqr"]))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    report = workflow.evaluate_step(cfg)
    print(f"test accuracy {report.accuracy:.6f} loss {report.classifier_loss:.6f} "
          f"misrouted {report.misroute_count}")
    print(f"position MAE (m)          x {report.correct.position_mae_m[0]:.4f} "
          f"y {report.correct.position_mae_m[1]:.4f} z {report.correct.position_mae_m[2]:.4f}")
    print(f"position MAE (normalized) x {report.correct.position_mae_norm[0]:.4f} "
          f"y {report.correct.position_mae_norm[1]:.4f} z {report.correct.position_mae_norm[2]:.4f}")
    print(f"quaternion MAE {report.correct.quaternion_mae_deg:.3f} deg")
    print(f"report: {workflow.paths(cfg).evaluation}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    with F.sabotage(*args.sabotage):
        results = run_suite(args.seed or 0)
    ok = True
    print(f"{'op':<18}{'max rel err':>14}  result")
    for name, err in results.items():
        passed = err < TOLERANCE
        ok &= passed
        print(f"{name:<18}{err:>14.3e}  {'pass' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_run(args) -> int:
    cfg = _config(args)
    report = workflow.run_all(cfg, args.threads)
    print(f"test accuracy {report.accuracy:.6f}; report: {workflow.paths(cfg).evaluation}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "split": cmd_split,
    "train-classifier": cmd_train_classifier,
    "train-regressor": cmd_train_regressor,
    "infer": cmd_infer,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "run": cmd_run,
}

USAGE_ERRORS = (InvalidConfig, ImageFormatError, CheckpointError, UnknownScene, SceneTooSmall,
                FileNotFoundError, IsADirectoryError, json.JSONDecodeError)


def _remove_partials(cfg_path: Path | None) -> None:
    try:
        cfg = load_run_config(cfg_path) if cfg_path is not None else RunConfig()
    except (IcpsError, OSError):
        return
    models = workflow.paths(cfg).models
    if models.is_dir():
        for f in models.rglob("*.partial"):
            f.unlink(missing_ok=True)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MissingRegressor as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_MODEL
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - last-resort report with a distinct status
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        if args.command in ("train-classifier", "train-regressor", "run"):
            _remove_partials(args.config)


if __name__ == "__main__":
    sys.exit(main())
