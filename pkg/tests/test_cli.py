import json
import os

import pytest

from seqrank.cli import main
from seqrank.features import GmmEntry, VisibilityModel


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_help_exits_zero(capsys):
    for cmd in ("gen-scenes", "plan", "features", "fit-vis", "train",
                "eval", "optimize", "stats"):
        code, out, _ = run([cmd, "--help"], capsys)
        assert code == 0
        assert "usage" in out.lower()


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(["stats", "--tree-size", "3", "--bogus"], capsys)
    assert code == 1
    assert "usage" in err.lower()


def test_seed_required_for_generation(capsys):
    code, _, err = run(["gen-scenes", "--classes", "cube",
                        "--out", "/tmp/x"], capsys)
    assert code == 1
    assert "--seed" in err


def test_stats_tree_size(capsys):
    code, out, _ = run(["stats", "--tree-size", "4"], capsys)
    assert code == 0
    assert "41" in out
    assert "1,4,12,24" in out


def test_gen_plan_features_roundtrip(tmp_path, capsys):
    out_dir = str(tmp_path / "scenes")
    code, _, _ = run(["gen-scenes", "--seed", "3", "--classes",
                      "cube,can", "--scenes", "1", "--out", out_dir], capsys)
    assert code == 0
    scene_path = os.path.join(out_dir, "scene_0000.json")
    assert os.path.exists(scene_path)

    report_path = str(tmp_path / "plan.json")
    code, _, _ = run(["plan", "--scene", scene_path, "--out", report_path],
                     capsys)
    assert code == 0
    rep = json.load(open(report_path))
    assert sorted(rep["best"]["sequence"]) == [0, 1]

    # identical reruns are byte-identical
    rep2_path = str(tmp_path / "plan2.json")
    run(["plan", "--scene", scene_path, "--out", rep2_path], capsys)
    assert open(report_path, "rb").read() == open(rep2_path, "rb").read()

    vis_path = str(tmp_path / "vis.json")
    entry = GmmEntry(1, (1.0,), (0.5,), (0.01,), 100)
    VisibilityModel({"cube": entry, "can": entry}).save(vis_path)
    feat_path = str(tmp_path / "features.json")
    code, _, _ = run(["features", "--scene", scene_path, "--vis", vis_path,
                      "--out", feat_path], capsys)
    assert code == 0
    data = json.load(open(feat_path))
    assert data["length"] == 63


def test_missing_scene_is_domain_error(capsys):
    code, _, err = run(["plan", "--scene", "/nonexistent.json"], capsys)
    assert code == 2
    assert "error" in err.lower()


def test_fit_vis_train_eval_optimize(tmp_path, capsys):
    vis_path = str(tmp_path / "vis.json")
    code, _, _ = run(["fit-vis", "--seed", "2", "--classes", "cube",
                      "--samples", "25", "--out", vis_path], capsys)
    assert code == 0
    model = VisibilityModel.load(vis_path)
    assert "cube" in model.entries

    out_dir = str(tmp_path / "opt")
    code, out, _ = run(["optimize", "--seed", "8", "--classes", "cube,can",
                        "--scenes", "3", "--variants", "1", "--samples", "2",
                        "--vis-samples", "25", "--out", out_dir], capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary["scenes"] >= 2
    dataset_path = os.path.join(out_dir, "dataset.jsonl")
    assert os.path.exists(dataset_path)
    assert os.path.exists(os.path.join(out_dir, "model.json"))
    assert os.path.exists(os.path.join(out_dir, "history.csv"))

    model_path = str(tmp_path / "trained.json")
    code, _, _ = run(["train", "--dataset", dataset_path, "--out",
                      model_path], capsys)
    assert code == 0
    report_path = str(tmp_path / "eval.json")
    code, _, _ = run(["eval", "--model", model_path, "--dataset",
                      dataset_path, "--out", report_path], capsys)
    assert code == 0
    rep = json.load(open(report_path))
    assert -1.0 <= rep["tau_w"]["median"] <= 1.0
