"""End-to-end run: statistics, filtering, cross-validated model comparison,
tuning, a final model, and the nomogram, with every artifact written to disk.

Stage order::

    load -> filter -> stats -> split -> fold features (scale, transformer,
    extract, rank, top-N, SMOTE per fold) -> leaderboard -> tune ->
    cross-validation report -> final model + hold-out report -> nomogram

All numeric outputs are deterministic functions of the configuration; wall
clock times appear only in ``manifest.json``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import serialization as ser
from .classical import (
    DEFAULTS,
    DISPLAY_NAMES,
    ROSTER,
    ClassifierSpec,
    feature_importance,
    fit_classifier,
    fit_forest,
    model_from_dict,
)
from .data import (
    IEEE_HEADER_ALIASES,
    Dataset,
    DataError,
    ScalerParams,
    Schema,
    SmoteConfig,
    apply_scaler,
    encode,
    fit_scaler,
    heart_schema,
    load_csv,
    smote,
    stratified_split,
    zscore_filter,
)
from .eval import (
    EXTRA_TREES_SPACE,
    Choice,
    FeatureSpec,
    FloatRange,
    IntRange,
    LeakageGuard,
    MetricsReport,
    confusion,
    cv_objective,
    evaluate_folds,
    metrics,
    prepare_folds,
    roc_auc,
    tune,
)
from .nomogram import (
    calibration_csv,
    calibration_curve,
    decision_csv,
    decision_curve,
    fit_nomogram,
    probability_of_score,
    score,
)
from .rng import derive_int
from .stats import association_csv, association_json, association_table, association_text
from .tabtransformer import TabTransformer, TrainConfig, build_model, feature_names, train
from .textio import csv_text, json_text, write_text

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _dimension_from_dict(d: dict):
    kind = d.get("type")
    if kind == "int":
        return IntRange(int(d["low"]), int(d["high"]))
    if kind == "float":
        return FloatRange(float(d["low"]), float(d["high"]), bool(d.get("log", False)))
    if kind == "choice":
        return Choice(tuple(d["values"]))
    raise ConfigError(f"search dimension needs type int/float/choice, got {kind!r}")


def _dimension_to_dict(dim) -> dict:
    if isinstance(dim, IntRange):
        return {"type": "int", "low": dim.low, "high": dim.high}
    if isinstance(dim, FloatRange):
        return {"type": "float", "low": dim.low, "high": dim.high, "log": dim.log}
    return {"type": "choice", "values": list(dim.values)}


def default_space() -> dict:
    return {k: _dimension_to_dict(v) for k, v in EXTRA_TREES_SPACE.items()}


@dataclass
class TuningConfig:
    kind: str = "extra_trees"
    trials: int = 100
    method: str = "random"
    metric: str = "accuracy"
    space: dict = field(default_factory=default_space)
    initial: list = field(default_factory=list)
    n_startup: int = 10

    def validate(self) -> None:
        if self.kind not in DEFAULTS:
            raise ConfigError(f"tuning.kind {self.kind!r} is not a known classifier")
        if self.trials < 0:
            raise ConfigError("tuning.trials must be >= 0 (0 disables tuning)")
        if self.method not in ("random", "tpe"):
            raise ConfigError("tuning.method must be 'random' or 'tpe'")
        if self.metric not in ("accuracy", "auc", "f1"):
            raise ConfigError("tuning.metric must be accuracy, auc or f1")
        if not self.trials:
            return  # the space is unused
        if not self.space:
            raise ConfigError("tuning.space is empty")
        try:
            self.dimensions()
            ClassifierSpec(self.kind, {k: None for k in self.space})
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"tuning.space: {exc}") from exc

    def dimensions(self) -> dict:
        return {k: _dimension_from_dict(v) for k, v in self.space.items()}


@dataclass
class PipelineConfig:
    """Everything a run needs; serialises to a single JSON document."""

    data: str = ""
    output_dir: str = "tabrisk-run"
    seed: int = 0
    schema: dict | None = None
    header_aliases: bool = True
    tau: float = 3.0
    zscore_columns: list | None = None
    alpha: float = 0.05
    scale: bool = True
    k_folds: int = 5
    holdout_fraction: float = 0.2
    smote: bool = True
    smote_k: int = 5
    transformer: dict = field(default_factory=lambda: TrainConfig().to_dict())
    use_transformer: bool = True
    top_n: int = 10
    ranking_trees: int = 100
    classifiers: list = field(default_factory=lambda: list(ROSTER))
    classifier_params: dict = field(default_factory=dict)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    nomogram_exclude: list = field(default_factory=list)
    nomogram_l2: float = 0.0
    mode: str = "strict"

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys {unknown}")
        d = dict(d)
        tuning = d.pop("tuning", {}) or {}
        tknown = {f.name for f in fields(TuningConfig)}
        if set(tuning) - tknown:
            raise ConfigError(f"unknown tuning keys {sorted(set(tuning) - tknown)}")
        transformer = {**TrainConfig().to_dict(), **(d.pop("transformer", {}) or {})}
        try:
            cfg = cls(**d, transformer=transformer, tuning=TuningConfig(**tuning))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tuning"] = asdict(self.tuning)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        if not self.data:
            raise ConfigError("config needs a 'data' path")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be at least 2")
        if not 0 <= self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in [0, 1)")
        if self.top_n < 1:
            raise ConfigError("top_n must be positive")
        if self.ranking_trees < 1:
            raise ConfigError("ranking_trees must be positive")
        if self.smote_k < 1:
            raise ConfigError("smote_k must be positive")
        if self.mode not in ("strict", "paper"):
            raise ConfigError("mode must be 'strict' or 'paper'")
        if not self.classifiers:
            raise ConfigError("classifiers must list at least one model kind")
        for kind in self.classifiers:
            if kind not in DEFAULTS:
                raise ConfigError(f"unknown classifier kind {kind!r}; choose from {list(DEFAULTS)}")
        if len(set(self.classifiers)) != len(self.classifiers):
            raise ConfigError("classifiers must not repeat")
        for kind, params in self.classifier_params.items():
            try:
                ClassifierSpec(kind, params)
            except ValueError as exc:
                raise ConfigError(f"classifier_params: {exc}") from exc
        try:
            self.train_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"transformer: {exc}") from exc
        if self.schema is not None:
            try:
                Schema.from_dict(self.schema)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"schema: {exc}") from exc
        self.tuning.validate()

    # -- derived objects ---------------------------------------------------

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict({**self.transformer, "seed": derive_int(self.seed, "transformer")})

    def data_schema(self) -> Schema:
        return Schema.from_dict(self.schema) if self.schema is not None else heart_schema()

    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec(
            transformer=self.train_config() if self.use_transformer else None,
            scale=self.scale,
            top_n=self.top_n,
            ranking_trees=self.ranking_trees,
            smote=SmoteConfig(self.smote_k) if self.smote else None,
            mode=self.mode,
            seed=derive_int(self.seed, "features"),
        )

    def classifier_spec(self, kind: str, params: dict | None = None) -> ClassifierSpec:
        merged = {**self.classifier_params.get(kind, {}), **(params or {})}
        return ClassifierSpec(kind, merged, derive_int(self.seed, "classifier", kind))


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    software_version: str = __version__
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None
    stage_timings: dict = field(default_factory=dict)
    row_counts: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


class _Run:
    """Bookkeeping shared by the stages of one run."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.manifest = RunManifest(cfg.config_hash())
        self.stage = "setup"

    def write(self, rel: str, text: str) -> Path:
        path = write_text(self.out / rel, text)
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        self.manifest.artifacts = [a for a in self.manifest.artifacts if a["path"] != rel]
        self.manifest.artifacts.append({"path": rel, "sha256": digest})
        return path

    def save_model(self, rel: str, obj, schema: Schema | None = None, kind: str | None = None) -> None:
        doc = ser.to_document(obj, schema, kind)
        self.write(rel, json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")

    def timed(self, name: str):
        run = self

        class _Stage:
            def __enter__(self):
                run.stage = name
                self.t0 = time.perf_counter()
                logger.info("stage %s", name)

            def __exit__(self, *exc):
                run.manifest.stage_timings[name] = round(time.perf_counter() - self.t0, 6)
                return False

        return _Stage()

    def write_manifest(self) -> None:
        write_text(self.out / "manifest.json", json_text(self.manifest.to_dict()))


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def load_dataset(cfg: PipelineConfig) -> Dataset:
    return load_csv(cfg.data, cfg.data_schema(), IEEE_HEADER_ALIASES if cfg.header_aliases else None)


def leaderboard_rows(reports: dict[str, MetricsReport]) -> list[dict]:
    """Mean fold metrics per classifier, best accuracy first (ties keep roster order)."""
    rows = []
    for kind, rep in reports.items():
        m = rep.mean()
        rows.append({"kind": kind, "model": DISPLAY_NAMES[kind], **{k: getattr(m, k) for k in
                     ("accuracy", "precision", "recall", "specificity", "f1", "auc")},
                     "accuracy_std": rep.std("accuracy")})
    order = sorted(range(len(rows)), key=lambda i: -rows[i]["accuracy"])
    return [dict(rows[i], rank=r + 1) for r, i in enumerate(order)]


def leaderboard_csv(rows: list[dict]) -> str:
    cols = ["rank", "kind", "model", "accuracy", "precision", "recall", "specificity", "f1", "auc", "accuracy_std"]
    return csv_text(cols, [[r[c] for c in cols] for r in rows])


def roc_csv(reports: list[tuple[str, object]]) -> str:
    rows = []
    for label, curve in reports:
        if curve is None:
            continue
        for t, f, r in zip(curve.thresholds, curve.fpr, curve.tpr):
            rows.append([label, float(t), float(f), float(r)])
    return csv_text(["curve", "threshold", "fpr", "tpr"], rows)


def features_csv(row_ids, x, y, names) -> str:
    return csv_text(["row_id", *names, "label"],
                    [[int(i), *map(float, row), int(lab)] for i, row, lab in zip(row_ids, x, y)])


@dataclass
class FinalModel:
    """Everything needed to score new rows: scaler, transformer, selected columns, classifier."""

    schema: Schema
    scaler: object | None
    transformer: object | None
    selected: list[int]
    names: list[str]
    classifier: object

    def features(self, ds: Dataset) -> np.ndarray:
        if self.scaler is not None:
            ds = apply_scaler(self.scaler, ds)
        if self.transformer is not None:
            x = self.transformer.extract_features(ds.categorical_data, ds.numeric_data)
        else:
            x = encode(ds, "onehot")[0]
        return x[:, self.selected]

    def predict_proba(self, ds: Dataset) -> np.ndarray:
        return self.classifier.predict_proba(self.features(ds))[:, 1]

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "transformer": None if self.transformer is None else self.transformer.to_dict(),
            "selected": self.selected,
            "names": self.names,
            "classifier": self.classifier.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FinalModel":
        return cls(
            Schema.from_dict(d["schema"]),
            None if d["scaler"] is None else ScalerParams.from_dict(d["scaler"]),
            None if d["transformer"] is None else TabTransformer.from_dict(d["transformer"]),
            list(d["selected"]),
            list(d["names"]),
            model_from_dict(d["classifier"]),
        )


def load_bundle(path: str | Path) -> FinalModel:
    return FinalModel.from_dict(ser.read_document(path, kind="bundle")["payload"])


# --------------------------------------------------------------------------
# the run
# --------------------------------------------------------------------------


def run_pipeline(cfg: PipelineConfig, guard: LeakageGuard | None = None) -> RunManifest:
    """Execute every stage and write all artifacts under ``cfg.output_dir``.

    The manifest is written even when a stage fails; the exception is then
    re-raised.
    """
    cfg.validate()
    run = _Run(cfg)
    run.out.mkdir(parents=True, exist_ok=True)
    guard = guard or LeakageGuard()
    try:
        _run_stages(run, guard)
        run.manifest.status = "ok"
        return run.manifest
    except Exception as exc:
        run.manifest.status = "failed"
        run.manifest.failed_stage = run.stage
        run.manifest.error = f"{type(exc).__name__}: {exc}"
        logger.debug("%s", traceback.format_exc())
        raise
    finally:
        run.write_manifest()


def _run_stages(run: _Run, guard: LeakageGuard) -> None:
    cfg = run.cfg
    run.write("config.json", json_text(cfg.to_dict()))
    counts = run.manifest.row_counts

    with run.timed("load"):
        raw = load_dataset(cfg)
        counts["loaded"] = raw.n_rows
        if raw.n_rows == 0:
            raise DataError("the dataset has no rows")

    with run.timed("filter"):
        ds, removal = zscore_filter(raw, cfg.tau, cfg.zscore_columns)
        counts["after_filter"] = ds.n_rows
        run.write("stats/filter_report.json", json_text(removal.to_dict()))

    with run.timed("stats"):
        rows = association_table(ds, cfg.alpha)
        run.write("stats/association.json", association_json(rows, ds) + "\n")
        run.write("stats/association.csv", association_csv(rows))
        run.write("stats/association.txt", association_text(rows, ds))

    with run.timed("split"):
        plan, holdout = stratified_split(ds, cfg.k_folds, cfg.holdout_fraction, derive_int(cfg.seed, "split"))
        counts["cv"] = int(plan.cv_index.size)
        counts["holdout"] = int(holdout.sum())
        run.write("split/folds.json", json_text({**plan.to_dict(), "row_ids": ds.row_ids.tolist()}))

    with run.timed("fold_features"):
        fspec = cfg.feature_spec()
        folds = prepare_folds(fspec, ds, plan, guard)
        counts["folds"] = [{"fold": f.fold + 1, "train": int(f.train_ids.size), "test": int(f.test_ids.size),
                            "train_after_smote": int(len(f.y_train))} for f in folds]
        if fspec.transformer is not None:
            run.write("transformer/cv_head_accuracy.csv",
                      csv_text(["fold", "head_accuracy", "final_loss"],
                               [[f.fold + 1, f.head_accuracy, f.loss_curve[-1] if f.loss_curve else None]
                                for f in folds]))
            run.write("transformer/cv_loss_curves.csv",
                      csv_text(["fold", "epoch", "loss"],
                               [[f.fold + 1, e + 1, v] for f in folds for e, v in enumerate(f.loss_curve)]))
        run.write("ranking/cv_rankings.json",
                  json_text({"folds": [f.ranking.to_dict() if f.ranking else None for f in folds]}))

    with run.timed("leaderboard"):
        reports = {}
        for kind in cfg.classifiers:
            reports[kind] = evaluate_folds(cfg.classifier_spec(kind), folds, guard, DISPLAY_NAMES[kind])
        board = leaderboard_rows(reports)
        run.write("leaderboard.csv", leaderboard_csv(board))
        run.write("leaderboard.json", json_text({"rows": board}))

    tc = cfg.tuning
    with run.timed("tune"):
        best_params = dict(cfg.classifier_params.get(tc.kind, {}))
        if tc.trials > 0:
            objective = cv_objective(tc.kind, folds, tc.metric, fixed=best_params,
                                     seed=derive_int(cfg.seed, "classifier", tc.kind))
            result = tune(tc.dimensions(), objective, tc.trials, derive_int(cfg.seed, "tune"), tc.method,
                          tc.n_startup, tc.initial)
            best_params.update(result.best.params)
            run.write("tuning/history.csv", result.history_csv())
            run.write("tuning/best.json", json_text({"kind": tc.kind, "metric": tc.metric,
                                                     "best": result.best.to_dict(), "params": best_params}))
    final_spec = cfg.classifier_spec(tc.kind, best_params)

    with run.timed("cv_report"):
        report = evaluate_folds(final_spec, folds, guard, DISPLAY_NAMES[tc.kind])
        run.write("cv_report.csv", report.to_csv())
        run.write("cv_report.json", report.to_json())
        run.write("roc_cv.csv", roc_csv([(f"fold_{f.fold + 1}", f.roc) for f in report.folds]))

    with run.timed("final_model"):
        final, train_x, train_y = _fit_final(run, ds, plan.cv_index, final_spec, fspec, guard)
        hold = ds.subset(np.flatnonzero(holdout))
        if hold.n_rows:
            p = final.predict_proba(hold)
            cm = confusion(hold.labels, (p >= 0.5).astype(np.int64))
            auc, curve = (roc_auc(p, hold.labels) if 0 < hold.labels.sum() < hold.n_rows else (None, None))
            run.write("holdout_report.json", json_text({"n": hold.n_rows, "confusion": cm.to_dict(),
                                                        "metrics": metrics(cm, auc).to_dict()}))
            run.write("roc_holdout.csv", roc_csv([("holdout", curve)]))

    with run.timed("nomogram"):
        nomo = fit_nomogram(train_x, train_y, final.names, cfg.nomogram_exclude, l2=cfg.nomogram_l2)
        run.save_model("models/nomogram.json", nomo)
        run.write("nomogram/nomogram.json", nomo.to_json())
        run.write("nomogram/ticks.csv", nomo.ticks_csv())
        if hold.n_rows:
            eval_x, eval_y = final.features(hold), hold.labels
        else:
            eval_x, eval_y = train_x, train_y
        probs = probability_of_score(nomo, score(nomo, eval_x).total)
        run.write("nomogram/calibration.csv", calibration_csv(calibration_curve(probs, eval_y)))
        run.write("nomogram/decision_curve.csv", decision_csv(decision_curve(probs, eval_y)))

    run.write("leakage.json", json_text(guard.to_dict()))
    if not guard.clean and cfg.mode == "strict":
        raise RuntimeError(f"leakage guard recorded {len(guard.violations)} violation(s) in strict mode")


def _fit_final(run: _Run, ds: Dataset, cv_index: np.ndarray, spec: ClassifierSpec, fspec: FeatureSpec,
               guard: LeakageGuard):
    """Fit the whole chain on every cross-validation row and save it."""
    fit_ds = ds.subset(cv_index)
    guard.open_fold(-1, fit_ds.row_ids)
    scaler = None
    if fspec.scale and fit_ds.numeric_data.shape[1]:
        guard.record("scaler", fit_ds.row_ids)
        scaler = fit_scaler(fit_ds)
        fit_ds = apply_scaler(scaler, fit_ds)
    model = None
    if fspec.transformer is not None:
        guard.record("transformer", fit_ds.row_ids)
        model = build_model(fit_ds, fspec.transformer)
        curve = train(model, fit_ds)
        run.write("transformer/loss_curve.csv", csv_text(["epoch", "loss"], [[e + 1, v] for e, v in enumerate(curve)]))
        x = model.extract_features(fit_ds.categorical_data, fit_ds.numeric_data)
        names = feature_names(model)
    else:
        x, names = encode(fit_ds, "onehot")
    guard.record("ranking", fit_ds.row_ids)
    forest = fit_forest(x, fit_ds.labels, kind="random_forest", n_estimators=fspec.ranking_trees,
                        seed=derive_int(fspec.seed, "ranking", "final"))
    ranking = feature_importance(forest, names, min(fspec.top_n or x.shape[1], x.shape[1]))
    run.write("ranking/importance.csv", _ranking_csv(ranking))
    run.write("ranking/importance.json", json_text(ranking.to_dict()))
    keep = ranking.selected()
    x_top, y = x[:, keep], fit_ds.labels
    run.manifest.row_counts["final_train"] = int(len(y))
    xb, yb = x_top, y
    if fspec.smote is not None:
        guard.record("smote", fit_ds.row_ids)
        xb, yb = smote(x_top, y, SmoteConfig(fspec.smote.k_neighbors, derive_int(fspec.seed, "smote", "final")))
    run.manifest.row_counts["final_train_after_smote"] = int(len(yb))
    guard.record("classifier", fit_ds.row_ids)
    clf = fit_classifier(spec, xb, yb)
    sel_names = [names[i] for i in keep]
    final = FinalModel(ds.schema, scaler, model, [int(i) for i in keep], sel_names, clf)
    run.save_model("models/bundle.json", final.to_dict(), ds.schema, kind="bundle")
    if model is not None:
        run.save_model("models/transformer.json", model, ds.schema)
    if scaler is not None:
        run.save_model("models/scaler.json", scaler, ds.schema)
    run.save_model("models/classifier.json", clf)
    return final, x_top, y


def _ranking_csv(ranking) -> str:
    return csv_text(["rank", "feature", "index", "importance", "selected"],
                    [[r + 1, name, i, imp, r < ranking.top_n] for r, (i, name, imp) in enumerate(ranking.ranked())])
