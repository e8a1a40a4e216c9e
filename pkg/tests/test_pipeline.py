"""End-to-end pipeline on a small synthetic dataset: artifacts, reports, determinism."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from tabrisk.classical import ROSTER
from tabrisk.data import DataError
from tabrisk.eval import LeakageGuard
from tabrisk.fixture import write_fixture
from tabrisk.pipeline import ConfigError, PipelineConfig, load_bundle, run_pipeline

SMALL_PARAMS = {
    "extra_trees": {"n_estimators": 15},
    "random_forest": {"n_estimators": 15},
    "gradient_boost": {"n_estimators": 15},
    "gbt_variant_a": {"n_estimators": 10},
    "gbt_variant_b": {"n_estimators": 15},
    "gbt_variant_c": {"n_estimators": 15},
    "adaboost": {"n_estimators": 15},
    "mlp": {"epochs": 20},
}


def small_config(data: Path, out: Path, **overrides) -> PipelineConfig:
    d = {
        "data": str(data),
        "output_dir": str(out),
        "seed": 11,
        "k_folds": 3,
        "transformer": {"epochs": 3, "batch_size": 64},
        "ranking_trees": 20,
        "classifier_params": SMALL_PARAMS,
        "tuning": {"trials": 3, "space": {"n_estimators": {"type": "int", "low": 5, "high": 20},
                                          "max_depth": {"type": "int", "low": 3, "high": 10},
                                          "bootstrap": {"type": "choice", "values": [True, False]}}},
    }
    d.update(overrides)
    return PipelineConfig.from_dict(d)


def _read_csv(path: Path) -> list[dict]:
    return list(csv.DictReader(io.StringIO(path.read_text())))


@pytest.fixture(scope="module")
def fixture_csv(tmp_path_factory) -> Path:
    return write_fixture(tmp_path_factory.mktemp("data") / "heart.csv", 300, seed=5)


@pytest.fixture(scope="module")
def run_dirs(fixture_csv, tmp_path_factory):
    """Two runs with the same configuration in different directories."""
    dirs, guards = [], []
    for name in ("a", "b"):
        out = tmp_path_factory.mktemp(f"run_{name}")
        guard = LeakageGuard()
        run_pipeline(small_config(fixture_csv, out), guard)
        dirs.append(out)
        guards.append(guard)
    return dirs, guards


def test_declared_artifacts_exist(run_dirs):
    out = run_dirs[0][0]
    for rel in ("config.json", "manifest.json", "stats/association.csv", "stats/association.json",
                "stats/filter_report.json", "transformer/loss_curve.csv", "transformer/cv_head_accuracy.csv",
                "ranking/importance.csv", "leaderboard.csv", "leaderboard.json", "tuning/history.csv",
                "tuning/best.json", "cv_report.csv", "cv_report.json", "roc_cv.csv", "holdout_report.json",
                "nomogram/nomogram.json", "nomogram/ticks.csv", "nomogram/calibration.csv",
                "nomogram/decision_curve.csv", "models/bundle.json", "leakage.json"):
        assert (out / rel).is_file(), rel


def test_manifest_lists_every_file(run_dirs):
    out = run_dirs[0][0]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    listed = {a["path"] for a in manifest["artifacts"]}
    on_disk = {p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file()} - {"manifest.json"}
    assert listed == on_disk
    assert manifest["row_counts"]["loaded"] == 300
    assert {"load", "filter", "stats", "leaderboard", "nomogram"} <= set(manifest["stage_timings"])


def test_leaderboard_has_all_kinds_sorted(run_dirs):
    rows = _read_csv(run_dirs[0][0] / "leaderboard.csv")
    assert sorted(r["kind"] for r in rows) == sorted(ROSTER)
    acc = [float(r["accuracy"]) for r in rows]
    assert acc == sorted(acc, reverse=True)
    assert [int(r["rank"]) for r in rows] == list(range(1, 11))


def test_cv_report_has_fold_average_and_pooled_rows(run_dirs):
    rows = _read_csv(run_dirs[0][0] / "cv_report.csv")
    assert [r["fold"] for r in rows] == ["1", "2", "3", "average", "pooled"]
    avg = np.mean([float(r["accuracy"]) for r in rows[:3]])
    assert float(rows[3]["accuracy"]) == pytest.approx(avg, abs=1e-12)


def test_roc_fpr_monotone_per_curve(run_dirs):
    rows = _read_csv(run_dirs[0][0] / "roc_cv.csv")
    for curve in {r["curve"] for r in rows}:
        fpr = [float(r["fpr"]) for r in rows if r["curve"] == curve]
        assert fpr[0] == 0.0 and fpr[-1] == 1.0
        assert all(b >= a for a, b in zip(fpr, fpr[1:]))


def test_strict_run_is_leak_free(run_dirs):
    _, guards = run_dirs
    assert all(g.clean for g in guards)
    assert json.loads((run_dirs[0][0] / "leakage.json").read_text())["violations"] == []


def test_reports_are_byte_identical_across_runs(run_dirs):
    (a, b), _ = run_dirs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name != "manifest.json")
    assert len(files) > 20
    for rel in files:
        if rel.as_posix() == "config.json":  # differs only in output_dir
            continue
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_bundle_predicts_saved_holdout(run_dirs, fixture_csv):
    from tabrisk.data import IEEE_HEADER_ALIASES, load_csv

    bundle = load_bundle(run_dirs[0][0] / "models" / "bundle.json")
    ds = load_csv(fixture_csv, bundle.schema, IEEE_HEADER_ALIASES)
    p = bundle.predict_proba(ds)
    assert p.shape == (300,) and np.all((p >= 0) & (p <= 1))
    assert len(bundle.selected) == 10


def test_manifest_written_on_failure(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("Age,Sex\n1,2\n")
    cfg = small_config(bad, tmp_path / "out")
    with pytest.raises(DataError):
        run_pipeline(cfg)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["failed_stage"] == "load"
    assert "DataError" in manifest["error"]


def test_global_fit_mode_is_flagged_but_completes(fixture_csv, tmp_path):
    guard = LeakageGuard()
    cfg = small_config(fixture_csv, tmp_path, mode="paper", classifiers=["lda"],
                       tuning={"kind": "lda", "trials": 0})
    manifest = run_pipeline(cfg, guard)
    assert manifest.status == "ok" and not guard.clean


# --------------------------------------------------------------------- config


def test_config_round_trip_and_hash(tmp_path):
    cfg = small_config(tmp_path / "x.csv", tmp_path)
    again = PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.config_hash() == cfg.config_hash()
    assert small_config(tmp_path / "x.csv", tmp_path, seed=12).config_hash() != cfg.config_hash()


@pytest.mark.parametrize(
    "bad",
    [
        {"colour": 1},
        {"tuning": {"budget": 5}},
        {"k_folds": 1},
        {"mode": "loose"},
        {"classifiers": ["svm"]},
        {"classifiers": ["lda", "lda"]},
        {"transformer": {"d": 7}},
        {"tuning": {"method": "grid"}},
        {"classifier_params": {"lda": {"depth": 3}}},
    ],
)
def test_invalid_configs_rejected(bad, tmp_path):
    with pytest.raises(ConfigError):
        small_config(tmp_path / "x.csv", tmp_path, **bad)


def test_missing_data_key():
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({})
