# -*- coding: utf-8 -*-
# Command line tests
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
import json

import pytest
from click.testing import CliRunner

from app.main import EXIT_INPUT_ERROR, main

SMALL_RUN = """
[data]
image_size = 16

[model]
image_size = 16
backbone_channels = [4, 8]
convs_per_block = 1
meta_channels = [2]
reduction = 2
spatial_kernel = 3

[train]
batch_size = 8
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "run.toml"
    config.write_text(SMALL_RUN, encoding="utf-8")
    runner = CliRunner()
    result = runner.invoke(main, ["--config", str(config), "gen-data", "--n", "40", "--seed", "4",
                                  "--out", str(root / "data")])
    assert result.exit_code == 0, result.output
    result = runner.invoke(main, ["--config", str(config), "train", "--data", str(root / "data"),
                                  "--out", str(root / "run"), "--epochs", "1", "--keep-epochs"])
    assert result.exit_code == 0, result.output
    return root


def _last_json(output):
    return json.loads(output.strip().splitlines()[-1])


def test_gen_data(workspace):
    manifest = json.loads((workspace / "data" / "manifest.json").read_text(encoding="utf-8"))
    assert len(manifest["samples"]) == 40
    assert manifest["seed"] == 4
    assert manifest["config"]["data"]["image_size"] == 16


def test_train(workspace):
    report = json.loads((workspace / "run" / "report.json").read_text(encoding="utf-8"))
    assert report["seed"] == 0
    assert report["selected"] == "checkpoint_best"
    assert report["train_samples"] == 28
    assert set(report["test"]) == {"all", "hq", "lq"}
    assert report["config"]["model"]["backbone_channels"] == [4, 8]
    for name in ("checkpoint_best", "checkpoint_last", "epochs/001"):
        assert (workspace / "run" / name / "checkpoint.json").exists()


def test_train_without_epochs(workspace):
    result = CliRunner().invoke(main, ["--config", str(workspace / "run.toml"), "train",
                                       "--data", str(workspace / "data"), "--out", str(workspace / "run0"),
                                       "--epochs", "0", "--model", "vanilla", "--seed", "7"])
    assert result.exit_code == 0, result.output
    line = _last_json(result.output)
    assert line["seed"] == 7
    assert line["selected"] == "checkpoint_best"


def test_eval(workspace):
    out = workspace / "eval" / "test.json"
    result = CliRunner().invoke(main, ["eval", "--checkpoint", str(workspace / "run"),
                                       "--data", str(workspace / "data"), "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["split"] == "test"
    assert report["metrics"]["all"]["n"] == 8
    assert "subset" in out.with_suffix(".txt").read_text(encoding="utf-8")

    result = CliRunner().invoke(main, ["eval", "--checkpoint", str(workspace / "run" / "checkpoint_last"),
                                       "--data", str(workspace / "data"), "--split", "val"])
    assert result.exit_code == 0, result.output
    assert "auc" in result.output


def test_export(workspace):
    out = workspace / "export"
    result = CliRunner().invoke(main, ["export", "--checkpoint", str(workspace / "run"),
                                       "--data", str(workspace / "data"), "--out", str(out), "--limit", "2"])
    assert result.exit_code == 0, result.output
    assert _last_json(result.output)["files"] == 2 + 2 * 4 + 1
    header = (out / "features.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("sample,y_d,y_q,code,m_0")
    sidecar = json.loads((out / "features.meta.json").read_text(encoding="utf-8"))
    assert [col["name"] for col in sidecar["cols"]] == header.split(",")
    index = json.loads((out / "cams" / "index.json").read_text(encoding="utf-8"))
    for artifact in (sidecar["meta"], index):
        assert artifact["seed"] == 0
        assert artifact["config"]["model"]["backbone_channels"] == [4, 8]
    assert len(index["maps"]) == 2 * 4


def test_grad_analysis(workspace):
    out = workspace / "grad.json"
    result = CliRunner().invoke(main, ["grad-analysis", "--run", str(workspace / "run"),
                                       "--data", str(workspace / "data"), "--samples", "8",
                                       "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["samples"] == 8
    assert [e["epoch"] for e in report["epochs"]] == [1]
    assert report["median"]["names"] == ["l_d", "l_q", "l_omega"]


def test_grad_analysis_needs_epoch_checkpoints(workspace, tmp_path):
    result = CliRunner().invoke(main, ["grad-analysis", "--run", str(tmp_path),
                                       "--data", str(workspace / "data")])
    assert result.exit_code == EXIT_INPUT_ERROR
    assert "--keep-epochs" in result.output


@pytest.mark.parametrize("priors", ["0.5,0.5,0.5", "a,b,c"])
def test_bad_priors(tmp_path, priors):
    result = CliRunner().invoke(main, ["gen-data", "--n", "20", "--priors", priors, "--out", str(tmp_path)])
    assert result.exit_code == EXIT_INPUT_ERROR
    assert not (tmp_path / "manifest.json").exists()


def test_missing_dataset(tmp_path):
    (tmp_path / "empty").mkdir()
    result = CliRunner().invoke(main, ["train", "--data", str(tmp_path / "empty"), "--out", str(tmp_path / "run")])
    assert result.exit_code == EXIT_INPUT_ERROR


def test_reruns_write_the_same_bytes(workspace, tmp_path):
    runner = CliRunner()
    config = str(workspace / "run.toml")
    result = runner.invoke(main, ["--config", config, "gen-data", "--n", "40", "--seed", "4",
                                  "--out", str(tmp_path / "data")])
    assert result.exit_code == 0, result.output
    for name in ("manifest.json", "images.mkct"):
        assert (tmp_path / "data" / name).read_bytes() == (workspace / "data" / name).read_bytes()

    result = runner.invoke(main, ["--config", config, "train", "--data", str(workspace / "data"),
                                  "--out", str(tmp_path / "run"), "--epochs", "1", "--keep-epochs"])
    assert result.exit_code == 0, result.output
    for name in ("report.json", "checkpoint_last/params.mkct", "checkpoint_best/checkpoint.json"):
        assert (tmp_path / "run" / name).read_bytes() == (workspace / "run" / name).read_bytes()


def test_ablate(workspace, tmp_path):
    result = CliRunner().invoke(main, ["--config", str(workspace / "run.toml"), "ablate",
                                       "--data", str(workspace / "data"), "--out", str(tmp_path),
                                       "--variants", "mkcnet,vanilla", "--seeds", "0,1", "--epochs", "0",
                                       "--workers", "2"])
    assert result.exit_code == 0, result.output
    assert _last_json(result.output)["runs"] == 4
    summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert [(row["variant"], row["seed"]) for row in summary["rows"]] == \
           [("mkcnet", 0), ("mkcnet", 1), ("vanilla", 0), ("vanilla", 1)]
    median = json.loads((tmp_path / "median.json").read_text(encoding="utf-8"))
    assert [row["runs"] for row in median["rows"]] == [2, 2]
    assert (tmp_path / "median.txt").read_text(encoding="utf-8").startswith("variant")
    assert (tmp_path / "vanilla" / "lq1.00" / "1" / "report.json").exists()


def test_ablate_unknown_variant(workspace, tmp_path):
    result = CliRunner().invoke(main, ["ablate", "--data", str(workspace / "data"), "--out", str(tmp_path),
                                       "--variants", "mkcnet,bigger"])
    assert result.exit_code == EXIT_INPUT_ERROR
    assert "bigger" in result.output


def test_too_few_samples(tmp_path):
    result = CliRunner().invoke(main, ["gen-data", "--n", "2", "--out", str(tmp_path)])
    assert result.exit_code == EXIT_INPUT_ERROR
    assert "n_samples" in result.output
    assert not (tmp_path / "manifest.json").exists()
