import csv
import io
import json
import struct

import numpy as np
import pytest
from PIL import Image

from fishnet import FISH_CLASSES, SplitPlan, load_model, predict, save_model
from fishnet.cli import main
from fishnet.model_io import MAGIC
from fishnet.models import build_model, TrainedModel


def write_image_tree(root, per_class, size=(12, 10), seed=0):
    rng = np.random.default_rng(seed)
    for name in FISH_CLASSES:
        class_dir = root / name
        class_dir.mkdir(parents=True)
        for i in range(per_class):
            arr = rng.integers(0, 256, (*size, 3), dtype=np.uint8)
            Image.fromarray(arr).save(class_dir / f"img_{i:04d}.png")


SMOKE_FLAGS = [
    "--seed", "5",
    "--epochs", "2",
    "--folds", "2",
    "--holdout-counts", "2,2,2,2,2,2,2,2",
    "--balance-target", "4",
]


def run_train(tmp_path, out_name="out", extra=()):
    data = tmp_path / "data"
    if not data.exists():
        write_image_tree(data, per_class=6)
    out = tmp_path / out_name
    code = main(
        ["train", "--variant", "model1", "--data", str(data), "--out", str(out)]
        + SMOKE_FLAGS
        + list(extra)
    )
    return code, out


def test_train_writes_three_artifacts(tmp_path, capsys):
    code, out = run_train(tmp_path)
    assert code == 0
    assert (out / "model.cnf").is_file()
    assert (out / "report.json").is_file()
    assert (out / "split.json").is_file()
    assert not list(out.glob("*.tmp"))
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1
    assert len(report["folds"]) == 2
    assert all(len(f["train_logloss"]) == 2 for f in report["folds"])
    SplitPlan.load(out / "split.json")  # parses and validates
    assert "holdout" in capsys.readouterr().out


def test_train_missing_data_dir_exits_2_without_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(
        ["train", "--data", str(tmp_path / "nope"), "--out", str(out)] + SMOKE_FLAGS
    )
    assert code == 2
    assert not out.exists()
    assert "not found" in capsys.readouterr().err


def test_train_is_byte_deterministic(tmp_path):
    code_a, out_a = run_train(tmp_path, "out_a")
    code_b, out_b = run_train(tmp_path, "out_b")
    assert code_a == code_b == 0
    assert (out_a / "model.cnf").read_bytes() == (out_b / "model.cnf").read_bytes()
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
    assert (out_a / "split.json").read_bytes() == (out_b / "split.json").read_bytes()


def test_train_epoch_and_fold_overrides_honored(tmp_path):
    code, out = run_train(tmp_path)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["sgd"]["epochs_per_fold"] == 2
    assert len(report["folds"]) == 2


# ------------------------------------------------------------- predict


def test_predict_csv_contract(tmp_path, capsys):
    code, out = run_train(tmp_path)
    assert code == 0
    capsys.readouterr()
    images = sorted((tmp_path / "data" / "ALB").iterdir())[:3]
    code = main(
        ["predict", "--model", str(out / "model.cnf"), "--images"]
        + [str(p) for p in images]
    )
    assert code == 0
    text = capsys.readouterr().out
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["image"] + list(FISH_CLASSES)
    assert len(rows) == 4
    for row in rows[1:]:
        probs = [float(v) for v in row[1:]]
        assert all(len(v.split(".")[1]) == 6 for v in row[1:])
        assert abs(sum(probs) - 1.0) <= 1e-5


def test_predict_on_directory_sorted(tmp_path, capsys):
    code, out = run_train(tmp_path)
    capsys.readouterr()
    code = main(
        ["predict", "--model", str(out / "model.cnf"),
         "--images", str(tmp_path / "data" / "BET"),
         "--out", str(tmp_path / "sub.csv")]
    )
    assert code == 0
    rows = (tmp_path / "sub.csv").read_text().splitlines()
    assert len(rows) == 7  # header + 6 images
    names = [r.split(",")[0] for r in rows[1:]]
    assert names == sorted(names)


def test_predict_skips_undecodable_and_warns(tmp_path, capsys):
    code, out = run_train(tmp_path)
    img_dir = tmp_path / "mixed"
    img_dir.mkdir()
    (img_dir / "bad.png").write_bytes(b"junk")
    good = sorted((tmp_path / "data" / "DOL").iterdir())[0]
    (img_dir / "good.png").write_bytes(good.read_bytes())
    capsys.readouterr()
    code = main(["predict", "--model", str(out / "model.cnf"), "--images", str(img_dir)])
    captured = capsys.readouterr()
    assert code == 0
    assert "bad.png" in captured.err
    assert len(captured.out.splitlines()) == 2


def test_predict_all_undecodable_fails(tmp_path, capsys):
    code, out = run_train(tmp_path)
    img_dir = tmp_path / "allbad"
    img_dir.mkdir()
    (img_dir / "bad.png").write_bytes(b"junk")
    capsys.readouterr()
    code = main(["predict", "--model", str(out / "model.cnf"), "--images", str(img_dir)])
    assert code != 0


# ------------------------------------------------------------- evaluate


def test_evaluate_prints_metrics_and_writes_json(tmp_path, capsys):
    code, out = run_train(tmp_path)
    capsys.readouterr()
    metrics_path = tmp_path / "metrics.json"
    code = main(
        ["evaluate", "--model", str(out / "model.cnf"),
         "--data", str(tmp_path / "data"), "--out", str(metrics_path)]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "logloss" in text and "accuracy" in text and "ALB" in text
    metrics = json.loads(metrics_path.read_text())
    assert np.array(metrics["confusion"]).sum() == 48


# ------------------------------------------------------------- bench


def test_bench_csv_to_stdout(tmp_path, capsys):
    code = main(["bench", "--sizes", "8,12", "--reps", "3", "--tile", "4"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["size", "method", "seconds", "reps"]
    assert len(rows) == 7
    methods = {r[1] for r in rows[1:]}
    assert methods == {"naive", "tiled", "parallel"}


def test_bench_thread_flag(tmp_path, capsys):
    code = main(["bench", "--sizes", "8", "--reps", "3", "--threads", "1"])
    assert code == 0
    assert len(capsys.readouterr().out.splitlines()) == 4


def test_bench_env_thread_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CNF_THREADS", "1")
    code = main(["bench", "--sizes", "8", "--reps", "3"])
    assert code == 0


def test_bench_bad_reps_exits_2(capsys):
    assert main(["bench", "--sizes", "8", "--reps", "2"]) == 2
    assert "reps" in capsys.readouterr().err


# ------------------------------------------------------------- model files


def test_save_load_round_trip_predictions_bitwise(tmp_path):
    net, _ = build_model("model1", seed=3)
    model = TrainedModel(
        config=__import__("fishnet").model_config("model1"),
        network=net,
        seed=3,
        flags={"fresh_per_fold": False},
    )
    path = tmp_path / "m.cnf"
    save_model(path, model)
    loaded = load_model(path)
    x = np.random.default_rng(0).random((3, 3, 48, 48))
    assert np.array_equal(predict(model, x), predict(loaded, x))
    for a, b in zip(model.network.params(), loaded.network.params()):
        assert np.array_equal(a, b)
    assert loaded.flags == {"fresh_per_fold": False}


def test_load_truncated_file_names_offset(tmp_path):
    net, _ = build_model("model1", seed=0)
    model = TrainedModel(__import__("fishnet").model_config("model1"), net, 0, {})
    path = tmp_path / "m.cnf"
    save_model(path, model)
    data = path.read_bytes()
    (tmp_path / "cut.cnf").write_bytes(data[: len(data) // 2])
    with pytest.raises(ValueError, match="byte offset"):
        load_model(tmp_path / "cut.cnf")


def test_load_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.cnf"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError, match="magic"):
        load_model(path)


def test_load_future_version_suggests_upgrade(tmp_path):
    path = tmp_path / "future.cnf"
    path.write_bytes(MAGIC + struct.pack("<I", 99) + b"\x00" * 16)
    with pytest.raises(ValueError, match="upgrade"):
        load_model(path)
