import json
import shutil

import numpy as np
import pytest

from icpsnet import cli
from icpsnet.scenes import default_scenes


def small_config(root, **overrides):
    scenes = [{"id": s.id, "name": s.name, "min": list(s.bounds.lo), "max": list(s.bounds.hi),
               "appearance_seed": s.appearance_seed} for s in default_scenes()[:3]]
    cfg = {
        "seed": 4,
        "output_dir": "run",
        "scenes": scenes,
        "composition": {"samples_per_cell": 4},
        "classifier": {"num_classes": 3, "conv_filters": [4, 8], "dense_widths": [8]},
        "regressor": {"conv_filters": [4, 8], "dense_widths": [8]},
        "training": {"classifier": {"epochs": 2, "batch_size": 16},
                     "regressor": {"epochs": 2, "batch_size": 8}},
    }
    cfg.update(overrides)
    path = root / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = small_config(root)
    assert cli.main(["generate", "--config", str(cfg)]) == 0
    assert cli.main(["train-classifier", "--config", str(cfg), "--split"]) == 0
    assert cli.main(["train-regressor", "--config", str(cfg)]) == 0
    return root, cfg


# --- usage errors -------------------------------------------------------------------------

def test_usage_errors_exit_two(capsys, tmp_path):
    assert run(capsys)[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "gradcheck", "--seed", "-1")[0] == 2
    assert run(capsys, "gradcheck", "--seed", str(2**64))[0] == 2
    assert run(capsys, "generate", "--config", tmp_path / "nope.json")[0] == 2


def test_help_exits_zero(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0 and "train-regressor" in out


def test_missing_composition_csv_names_the_path(capsys, tmp_path):
    cfg = small_config(tmp_path, composition={"csv": "tables/missing.csv", "samples_per_cell": None})
    code, _, err = run(capsys, "generate", "--config", cfg, "--dry-run")
    assert code == 2
    assert "missing.csv" in err


def test_malformed_config_exit_two(capsys, tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    assert run(capsys, "generate", "--config", tmp_path / "bad.json")[0] == 2
    cfg = small_config(tmp_path, colour="blue")
    assert run(capsys, "generate", "--config", cfg)[0] == 2


def test_internal_failure_exit_one(capsys, monkeypatch):
    def boom(args):
        raise RuntimeError("unexpected")

    monkeypatch.setitem(cli.COMMANDS, "gradcheck", boom)
    code, _, err = run(capsys, "gradcheck")
    assert code == 1 and "RuntimeError" in err


# --- generate -----------------------------------------------------------------------------

def test_dry_run_counts_without_rendering(capsys, tmp_path):
    cfg = small_config(tmp_path)
    code, out, _ = run(capsys, "generate", "--config", cfg, "--dry-run")
    assert code == 0
    assert "planned samples: 108" in out
    assert "Armoury" in out and "Seq9" in out
    assert not (tmp_path / "run").exists()


def test_generate_is_reproducible(capsys, tmp_path, trained):
    root, cfg = trained
    other = small_config(tmp_path)
    assert run(capsys, "generate", "--config", other)[0] == 0
    assert run(capsys, "split", "--config", other)[0] == 0
    a = (root / "run" / "dataset" / "manifest.json").read_bytes()
    b = (tmp_path / "run" / "dataset" / "manifest.json").read_bytes()
    assert a == b


def test_seed_flag_changes_the_dataset(capsys, tmp_path):
    cfg = small_config(tmp_path)
    run(capsys, "generate", "--config", cfg)
    a = (tmp_path / "run" / "dataset" / "manifest.json").read_bytes()
    run(capsys, "generate", "--config", cfg, "--seed", "5")
    b = (tmp_path / "run" / "dataset" / "manifest.json").read_bytes()
    assert a != b


# --- training -----------------------------------------------------------------------------

def test_train_needs_a_split(capsys, tmp_path):
    cfg = small_config(tmp_path)
    run(capsys, "generate", "--config", cfg)
    code, _, err = run(capsys, "train-classifier", "--config", cfg)
    assert code == 2 and "split" in err


def test_classifier_outputs_and_epoch_one_determinism(capsys, trained):
    root, cfg = trained
    reports = root / "run" / "reports"
    rows = (reports / "classifier_curves.csv").read_text().splitlines()
    assert rows[0] == "epoch,train_loss,val_loss,train_acc,val_acc" and len(rows) == 1 + 2
    first = (root / "run" / "models" / "classifier.icps").read_bytes()
    code, out, _ = run(capsys, "train-classifier", "--config", cfg)
    again = run(capsys, "train-classifier", "--config", cfg)[1]
    line = [l for l in out.splitlines() if l.startswith("classifier epoch 1 train_loss")]
    assert code == 0 and line and line[0] in again
    assert (root / "run" / "models" / "classifier.icps").read_bytes() == first
    assert not list((root / "run" / "models").rglob("*.partial"))


def test_regressor_scene_filter(capsys, tmp_path, trained):
    root, _ = trained
    shutil.copytree(root / "run" / "dataset", tmp_path / "run" / "dataset")
    cfg = small_config(tmp_path)
    code, out, _ = run(capsys, "train-regressor", "--config", cfg, "--scene", "Billiard")
    assert code == 0
    assert [p.name for p in (tmp_path / "run" / "models" / "regressors").iterdir()] == ["scene_01.icps"]
    report = json.loads((tmp_path / "run" / "reports" / "regressor_01_train.json").read_text())
    assert report["scenes"] == [1]
    assert run(capsys, "train-regressor", "--config", cfg, "--scene", "Attic")[0] == 2


def test_unified_regressor_mode(capsys, tmp_path, trained):
    root, _ = trained
    shutil.copytree(root / "run" / "dataset", tmp_path / "run" / "dataset")
    cfg = small_config(tmp_path, training={"regressor_mode": "unified",
                                           "regressor": {"epochs": 1, "batch_size": 16}})
    assert run(capsys, "train-regressor", "--config", cfg)[0] == 0
    assert [p.name for p in (tmp_path / "run" / "models" / "regressors").iterdir()] == ["unified.icps"]


# --- infer and evaluate -------------------------------------------------------------------

def _some_image(root):
    return sorted((root / "run" / "dataset" / "images").glob("*.ppm"))[5]


def test_infer_json_round_trip(capsys, trained):
    root, cfg = trained
    code, out, _ = run(capsys, "infer", _some_image(root), "--config", cfg, "--json")
    assert code == 0
    payload = json.loads(out)
    assert json.loads(json.dumps(payload)) == payload
    assert set(payload) == {"scene_id", "scene_name", "probabilities", "position_m", "quaternion_wpqr"}
    assert abs(sum(payload["probabilities"].values()) - 1.0) < 1e-9
    q = np.array(payload["quaternion_wpqr"])
    assert abs(np.linalg.norm(q) - 1.0) < 1e-9 and q[0] >= 0
    text = run(capsys, "infer", _some_image(root), "--config", cfg)[1]
    assert payload["scene_name"] in text


def test_infer_corrupt_image_exit_two(capsys, tmp_path, trained):
    _, cfg = trained
    bad = tmp_path / "bad.ppm"
    bad.write_bytes(b"P6\n32 32\n255\n\x00\x01")
    assert run(capsys, "infer", bad, "--config", cfg)[0] == 2
    assert run(capsys, "infer", tmp_path / "absent.ppm", "--config", cfg)[0] == 2


def test_infer_missing_regressor_exit_three(capsys, tmp_path, trained):
    root, cfg = trained
    (tmp_path / "empty").mkdir()
    code, _, err = run(capsys, "infer", _some_image(root), "--config", cfg, "--regressors", tmp_path / "empty")
    assert code == 3 and "regressor" in err


def test_evaluate_report_contents(capsys, trained):
    root, cfg = trained
    code, out, _ = run(capsys, "evaluate", "--config", cfg)
    assert code == 0 and "test accuracy" in out
    rep = json.loads((root / "run" / "reports" / "evaluation.json").read_text())
    conf = np.array(rep["confusion"])
    assert conf.shape == (3, 3)
    assert len(rep["correct"]["position_mae_m"]) == 3 and len(rep["correct"]["position_mae_norm"]) == 3
    assert "quaternion_mae_deg" in rep["correct"] and "misroute_count" in rep
    assert abs(rep["accuracy"] - np.trace(conf) / conf.sum()) < 1e-12
    first = (root / "run" / "reports" / "evaluation.json").read_bytes()
    run(capsys, "evaluate", "--config", cfg)
    assert (root / "run" / "reports" / "evaluation.json").read_bytes() == first


# --- gradcheck ----------------------------------------------------------------------------

def test_gradcheck_clean_and_stable(capsys):
    code, out, _ = run(capsys, "gradcheck")
    assert code == 0 and "FAIL" not in out
    assert run(capsys, "gradcheck")[1] == out


def test_gradcheck_sabotage_flags_only_that_op(capsys):
    code, out, _ = run(capsys, "gradcheck", "--sabotage", "dense")
    assert code == 1
    rows = {line.split()[0]: line.split()[-1] for line in out.splitlines()[1:]}
    assert rows["dense"] == "FAIL"
    assert all(v == "pass" for k, v in rows.items() if k != "dense")
