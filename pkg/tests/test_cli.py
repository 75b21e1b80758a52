import json
import os

import pytest

from neuroergo.cli import main
from neuroergo.models import Model

from pipeline import run_pipeline


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("cli"))


def test_pipeline_outputs(pipeline_dirs):
    d = pipeline_dirs
    index = json.loads(open(os.path.join(d["features"], "index.json")).read())
    assert len(index["samples"]) == 36
    sid = index["samples"][0]["id"]
    assert os.path.getsize(os.path.join(d["features"], "spec", sid + ".f32")) == 3 * 64 * 64 * 4
    assert os.path.exists(os.path.join(d["features"], "spec", sid + ".png"))
    for name in ("model.ckpt", "model_final.ckpt", "curves.csv"):
        assert os.path.exists(os.path.join(d["run"], name))
    metrics = json.loads(open(os.path.join(d["eval"], "metrics.json")).read())
    assert metrics["model"] == "D" and metrics["n"] == 36
    assert set(metrics["auc"]) == {"class_1", "class_2", "class_3", "micro", "macro"}
    for name in ("roc.csv", "roc.svg", "confusion.svg", "curves.svg", "tsne.csv", "tsne.svg"):
        assert os.path.exists(os.path.join(d["eval"], name)), name
    model, header = Model.load(os.path.join(d["run"], "model.ckpt"))
    assert model.cfg.cnn_hidden == 8 and len(header["test_ids"]) > 0


def test_evaluate_test_split_only(pipeline_dirs, tmp_path):
    d = pipeline_dirs
    out = tmp_path / "e"
    assert main(["evaluate", os.path.join(d["run"], "model.ckpt"), d["features"], "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    _, header = Model.load(os.path.join(d["run"], "model.ckpt"))
    assert metrics["n"] == len(header["test_ids"])


def test_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": 1}))
    assert main(["synth", "--out", str(tmp_path / "x"), "--config", str(bad)]) == 2
    assert "unknown config keys" in capsys.readouterr().err
    assert main(["evaluate", str(tmp_path / "none.ckpt"), str(tmp_path), "--out", str(tmp_path / "o")]) == 3
    with pytest.raises(SystemExit):
        main(["train"])
