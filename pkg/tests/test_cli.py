"""Command-line interface: every subcommand end to end, and the exit-code contract."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from tabrisk.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main

from test_pipeline import SMALL_PARAMS


def raw(path: Path) -> str:
    """File contents with line endings preserved (reports use CRLF)."""
    return path.read_bytes().decode("utf-8")


@pytest.fixture(scope="module")
def work(tmp_path_factory) -> Path:
    d = tmp_path_factory.mktemp("cli")
    assert main(["fixture", "--out", str(d / "heart.csv"), "--rows", "240", "--seed", "2"]) == EXIT_OK
    return d


def test_stats(work, capsys):
    assert main(["stats", "--data", str(work / "heart.csv"), "--out", str(work / "stats")]) == EXIT_OK
    assert "Feature" in capsys.readouterr().out
    assert raw(work / "stats" / "association.csv").startswith("feature,test")


def test_stage_by_stage_flow(work):
    heart, d = str(work / "heart.csv"), work
    config = d / "tt.json"
    config.write_text(json.dumps({"data": heart, "transformer": {"epochs": 2, "batch_size": 64}}))
    assert main(["train-transformer", "--config", str(config), "--out", str(d / "tt")]) == EXIT_OK
    assert raw(d / "tt" / "loss_curve.csv").count("\r\n") == 3

    assert main(["extract", "--model", str(d / "tt" / "extractor.json"), "--data", heart,
                 "--out", str(d / "features.csv")]) == EXIT_OK
    header = raw(d / "features.csv").split("\r\n")[0].split(",")
    assert header[0] == "row_id" and header[-1] == "label" and len(header) == 48

    assert main(["rank", "--features", str(d / "features.csv"), "--out", str(d / "ranking.csv"),
                 "--trees", "10"]) == EXIT_OK
    sel = ["--features", str(d / "features.csv"), "--ranking", str(d / "ranking.csv"), "--top-n", "6"]

    assert main(["train", *sel, "--kind", "extra_trees", "--params", '{"n_estimators": 10}',
                 "--out", str(d / "et.json")]) == EXIT_OK
    assert main(["evaluate", *sel, "--model", str(d / "et.json"), "--out", str(d / "eval")]) == EXIT_OK
    assert json.loads((d / "eval" / "report.json").read_text())["n"] == 240

    assert main(["evaluate", *sel, "--kind", "lda", "--folds", "3", "--out", str(d / "cv")]) == EXIT_OK
    assert raw(d / "cv" / "cv_report.csv").count("\r\n") == 1 + 3 + 2

    space = d / "space.json"
    space.write_text(json.dumps({"n_estimators": {"type": "int", "low": 5, "high": 10}}))
    assert main(["tune", *sel, "--trials", "2", "--folds", "3", "--space", str(space),
                 "--out", str(d / "tune")]) == EXIT_OK
    assert raw(d / "tune" / "history.csv").count("\r\n") == 3

    assert main(["nomogram", *sel, "--out", str(d / "nomo")]) == EXIT_OK
    for name in ("nomogram.json", "ticks.csv", "calibration.csv", "decision_curve.csv", "nomogram_model.json"):
        assert (d / "nomo" / name).is_file()


def test_run_and_predict(work, capsys):
    cfg = work / "run.json"
    cfg.write_text(json.dumps({
        "data": str(work / "heart.csv"), "output_dir": str(work / "ignored"), "k_folds": 3,
        "transformer": {"epochs": 2, "batch_size": 64}, "ranking_trees": 10,
        "classifier_params": SMALL_PARAMS,
        "tuning": {"trials": 2, "space": {"n_estimators": {"type": "int", "low": 5, "high": 10}}},
    }))
    out = work / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == EXIT_OK
    assert "leaderboard" in capsys.readouterr().out
    assert json.loads((out / "config.json").read_text())["seed"] == 4  # flag overrides the file
    assert not (work / "ignored").exists()
    assert main(["predict", "--bundle", str(out / "models" / "bundle.json"), "--data", str(work / "heart.csv"),
                 "--out", str(work / "pred.csv")]) == EXIT_OK
    assert raw(work / "pred.csv").startswith("row_id,probability,prediction\r\n")


def _tiny_features(path: Path) -> Path:
    rows = ["row_id,f0,f1,label"] + [f"{i},{i % 7},{(3 * i) % 5},{i % 2}" for i in range(30)]
    path.write_text("\r\n".join(rows) + "\r\n")
    return path


def test_config_errors_exit_2(work, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"data": str(work / "heart.csv"), "colour": "red"}))
    assert main(["stats", "--config", str(bad)]) == EXIT_CONFIG
    assert "unknown configuration keys" in capsys.readouterr().err
    bad.write_text("{")
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG
    assert main(["stats"]) == EXIT_CONFIG  # no data path at all
    feats = str(_tiny_features(tmp_path / "f.csv"))
    out = str(tmp_path / "m.json")
    assert main(["train", "--features", feats, "--kind", "lda", "--params", "[1]", "--out", out]) == EXIT_CONFIG
    assert main(["train", "--features", feats, "--kind", "lda", "--params", '{"depth": 2}', "--out", out]) == EXIT_CONFIG
    assert main(["train", "--features", feats, "--kind", "lda", "--top-n", "1", "--out", out]) == EXIT_CONFIG


def test_data_errors_exit_3(work, tmp_path):
    assert main(["stats", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_DATA
    lines = raw(work / "heart.csv").split("\r\n")
    lines[1] = "abc" + lines[1][lines[1].index(","):]  # first field of the first data row
    broken = tmp_path / "broken.csv"
    broken.write_bytes("\r\n".join(lines).encode())
    assert main(["stats", "--data", str(broken), "--out", str(tmp_path)]) == EXIT_DATA

    feats = str(_tiny_features(tmp_path / "f.csv"))
    model = tmp_path / "m.json"
    assert main(["train", "--features", feats, "--kind", "lda", "--out", str(model)]) == EXIT_OK
    doc = json.loads(model.read_text())
    doc["checksum"] = "0" * 64
    model.write_text(json.dumps(doc))
    assert main(["evaluate", "--features", feats, "--model", str(model), "--out", str(tmp_path)]) == EXIT_DATA
    (tmp_path / "junk.csv").write_text("a,b\r\n1,2\r\n")
    assert main(["rank", "--features", str(tmp_path / "junk.csv"), "--out", str(tmp_path / "r.csv")]) == EXIT_DATA


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exits_4(work, tmp_path):
    cfg = tmp_path / "diverge.json"
    cfg.write_text(json.dumps({"data": str(work / "heart.csv"),
                               "transformer": {"epochs": 5, "lr": 1e12, "batch_size": 64}}))
    assert main(["train-transformer", "--config", str(cfg), "--out", str(tmp_path / "tt")]) == EXIT_NUMERIC
