"""Classification metrics, ROC analysis, leak-free cross-validation and tuning.

The cross-validation chain for one fold is

    scale -> train transformer -> extract -> rank -> top-N -> SMOTE -> classifier

with every fitted component seeing training-fold rows only.  Because the
transformer dominates the cost, :func:`prepare_folds` runs everything up to
SMOTE once and returns per-fold feature matrices that any number of
classifiers (the leaderboard, every tuning trial) can then reuse through
:func:`evaluate_folds`.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import numerics as nx
from .classical import ClassifierSpec, RankedFeatures, feature_importance, fit_classifier, fit_forest
from .data import Dataset, FoldPlan, SmoteConfig, apply_scaler, encode, fit_scaler, smote
from .rng import derive_int, derive_rng
from .tabtransformer import TabTransformer, TrainConfig, build_model, feature_names, train
from .textio import csv_text as _csv_text, fmt_num as _num, json_text

logger = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "precision", "recall", "specificity", "f1", "auc")


# --------------------------------------------------------------------------
# confusion matrix and scalar metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def _binary(y, what: str) -> np.ndarray:
    y = np.asarray(y).ravel()
    if y.size and not np.isin(y, (0, 1)).all():
        raise ValueError(f"{what} must be binary 0/1")
    return y.astype(np.int64)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    """Counts with class 1 as the positive class."""
    t, p = _binary(y_true, "y_true"), _binary(y_pred, "y_pred")
    if len(t) != len(p):
        raise ValueError(f"length mismatch: {len(t)} labels vs {len(p)} predictions")
    return ConfusionMatrix(
        tp=int(np.sum((t == 1) & (p == 1))),
        tn=int(np.sum((t == 0) & (p == 0))),
        fp=int(np.sum((t == 0) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == 0))),
    )


@dataclass(frozen=True)
class MetricScores:
    """One row of a metrics report.

    ``undefined`` names the metrics whose denominator was zero; those are
    reported as 0.  ``auc`` is ``None`` when no scores were supplied.
    """

    accuracy: float
    precision: float
    recall: float
    specificity: float
    f1: float
    auc: float | None = None
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in METRIC_NAMES}
        d["undefined"] = list(self.undefined)
        return d


def _ratio(num: float, den: float, name: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def f1_from(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both are 0)."""
    s = precision + recall
    return 0.0 if s == 0 else 2.0 * precision * recall / s


def metrics(cm: ConfusionMatrix, auc: float | None = None) -> MetricScores:
    """Accuracy, precision, recall (sensitivity), specificity and F1."""
    undefined: list[str] = []
    acc = _ratio(cm.tp + cm.tn, cm.total, "accuracy", undefined)
    prec = _ratio(cm.tp, cm.tp + cm.fp, "precision", undefined)
    rec = _ratio(cm.tp, cm.tp + cm.fn, "recall", undefined)
    spec = _ratio(cm.tn, cm.tn + cm.fp, "specificity", undefined)
    if prec + rec == 0:
        undefined.append("f1")
    return MetricScores(acc, prec, rec, spec, f1_from(prec, rec), auc, tuple(undefined))


# --------------------------------------------------------------------------
# ROC
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RocCurve:
    """ROC points from the strictest threshold down; starts at (0, 0), ends at (1, 1).

    ``thresholds[i]`` is the score cut producing point ``i`` (predict
    positive when ``score >= threshold``); the first point uses ``+inf``.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def to_rows(self) -> list[dict]:
        return [
            {"threshold": float(t), "fpr": float(f), "tpr": float(r)}
            for t, f, r in zip(self.thresholds, self.fpr, self.tpr)
        ]

    def to_csv(self) -> str:
        return _csv_text(["threshold", "fpr", "tpr"], [[_num(r["threshold"]), _num(r["fpr"]), _num(r["tpr"])]
                                                        for r in self.to_rows()])


def roc_curve(scores, y_true) -> RocCurve:
    """ROC curve with one point per distinct score and trapezoidal AUC.

    Tied scores move along a diagonal segment, which is exactly what gives
    tied positive/negative pairs half credit.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _binary(y_true, "y_true")
    if len(s) != len(y):
        raise ValueError(f"length mismatch: {len(s)} scores vs {len(y)} labels")
    n_pos, n_neg = int(y.sum()), int(len(y) - y.sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC analysis needs both classes present")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last_of_run = np.r_[s[1:] != s[:-1], True]
    tps = np.cumsum(y)[last_of_run]
    fps = np.cumsum(1 - y)[last_of_run]
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    thresholds = np.r_[np.inf, s[last_of_run]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, auc)


def roc_auc(scores, y_true) -> tuple[float, RocCurve]:
    """Area under the ROC curve together with the curve itself."""
    curve = roc_curve(scores, y_true)
    return curve.auc, curve


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    confusion: ConfusionMatrix
    scores: MetricScores
    n_train: int
    n_test: int
    roc: RocCurve | None = None
    head_accuracy: float | None = None

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "confusion": self.confusion.to_dict(),
            "metrics": self.scores.to_dict(),
            "head_accuracy": self.head_accuracy,
        }


@dataclass
class MetricsReport:
    """Per-fold metrics with two summaries.

    ``mean`` averages each metric over folds (its F1 is therefore the mean
    of fold F1s, not the harmonic mean of the mean precision and recall);
    ``pooled`` recomputes every metric from the summed confusion counts and
    the ROC of all held-out scores together.
    """

    folds: list[FoldResult] = field(default_factory=list)
    label: str = ""
    pooled_auc: float | None = None

    @property
    def k(self) -> int:
        return len(self.folds)

    def mean(self) -> MetricScores:
        if not self.folds:
            raise ValueError("empty report")
        vals = {}
        for name in METRIC_NAMES:
            col = [getattr(f.scores, name) for f in self.folds]
            vals[name] = None if any(v is None for v in col) else float(np.mean(col))
        undefined = tuple(sorted({u for f in self.folds for u in f.scores.undefined}))
        return MetricScores(**vals, undefined=undefined)

    def pooled(self) -> MetricScores:
        cm = ConfusionMatrix()
        for f in self.folds:
            cm = cm + f.confusion
        return metrics(cm, self.pooled_auc)

    def std(self, name: str = "accuracy") -> float:
        return float(np.std([getattr(f.scores, name) for f in self.folds]))

    def head_accuracies(self) -> list[float]:
        return [f.head_accuracy for f in self.folds if f.head_accuracy is not None]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "k": self.k,
            "folds": [f.to_dict() for f in self.folds],
            "mean": self.mean().to_dict(),
            "pooled": self.pooled().to_dict(),
        }

    def to_json(self) -> str:
        return json_text(self.to_dict())

    def to_csv(self) -> str:
        """``k`` fold rows, then an ``average`` row and a ``pooled`` row."""
        header = ["fold", "tp", "tn", "fp", "fn", *METRIC_NAMES, "head_accuracy"]
        rows = []
        for f in self.folds:
            c = f.confusion
            rows.append([f.fold + 1, c.tp, c.tn, c.fp, c.fn, *(_num(getattr(f.scores, m)) for m in METRIC_NAMES),
                         _num(f.head_accuracy)])
        mean = self.mean()
        heads = self.head_accuracies()
        rows.append(["average", "", "", "", "", *(_num(getattr(mean, m)) for m in METRIC_NAMES),
                     _num(float(np.mean(heads)) if heads else None)])
        pooled, cm = self.pooled(), self.pooled_confusion()
        rows.append(["pooled", cm.tp, cm.tn, cm.fp, cm.fn, *(_num(getattr(pooled, m)) for m in METRIC_NAMES), ""])
        return _csv_text(header, rows)

    def pooled_confusion(self) -> ConfusionMatrix:
        cm = ConfusionMatrix()
        for f in self.folds:
            cm = cm + f.confusion
        return cm


# --------------------------------------------------------------------------
# leakage guard
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AccessRecord:
    fold: int
    stage: str
    n_rows: int
    n_violations: int


class LeakageGuard:
    """Log of which original rows each fitting stage consumed.

    :meth:`open_fold` declares the rows a fold may fit on; every later
    :meth:`record` call whose row ids fall outside that set is a violation.
    Synthetic rows (id ``-1``) are allowed: they are built from training rows
    only, and SMOTE records its source rows separately.
    """

    def __init__(self):
        self.records: list[AccessRecord] = []
        self.violations: list[tuple[int, str, list[int]]] = []
        self._fold = -1
        self._allowed: np.ndarray | None = None

    def open_fold(self, fold: int, allowed_row_ids) -> None:
        self._fold = fold
        self._allowed = np.unique(np.asarray(allowed_row_ids, dtype=np.int64))

    def record(self, stage: str, row_ids) -> None:
        ids = np.asarray(row_ids, dtype=np.int64).ravel()
        real = ids[ids >= 0]
        bad = real if self._allowed is None else real[~np.isin(real, self._allowed)]
        bad = np.unique(bad)
        self.records.append(AccessRecord(self._fold, stage, int(real.size), int(bad.size)))
        if bad.size:
            self.violations.append((self._fold, stage, bad.tolist()))
            logger.warning("leakage: fold %d stage %s fitted on %d held-out rows", self._fold, stage, bad.size)

    @property
    def clean(self) -> bool:
        return not self.violations

    def stages(self) -> list[str]:
        return sorted({r.stage for r in self.records})

    def to_dict(self) -> dict:
        return {
            "records": [r.__dict__ for r in self.records],
            "violations": [{"fold": f, "stage": s, "row_ids": ids} for f, s, ids in self.violations],
        }


class _NullGuard(LeakageGuard):
    def record(self, stage: str, row_ids) -> None:  # noqa: D102 - no-op
        pass


# --------------------------------------------------------------------------
# fold preparation
# --------------------------------------------------------------------------

STRICT = "strict"
PAPER = "paper"


@dataclass
class FeatureSpec:
    """Everything upstream of the classifier.

    ``transformer=None`` skips the transformer and feeds the one-hot encoded
    (scaled) table to the ranking stage instead.  ``mode="paper"`` fits the
    scaler and transformer once on all cross-validation rows (a global fit,
    kept for comparison); it leaks by construction and the guard will say so.
    """

    transformer: TrainConfig | None = field(default_factory=TrainConfig)
    scale: bool = True
    top_n: int | None = 10
    ranking_trees: int = 100
    smote: SmoteConfig | None = field(default_factory=SmoteConfig)
    mode: str = STRICT
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (STRICT, PAPER):
            raise ValueError(f"mode must be {STRICT!r} or {PAPER!r}")
        if self.top_n is not None and self.top_n < 1:
            raise ValueError("top_n must be positive")
        if self.ranking_trees < 1:
            raise ValueError("ranking_trees must be positive")


@dataclass
class FoldData:
    """Classifier-ready matrices of one fold."""

    fold: int
    train_ids: np.ndarray
    test_ids: np.ndarray
    x_train: np.ndarray  # after top-N selection and SMOTE
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    ranking: RankedFeatures | None = None
    head_accuracy: float | None = None
    loss_curve: list = field(default_factory=list)
    n_synthetic: int = 0


class FoldError(RuntimeError):
    """A stage failed inside a fold; the message names fold and stage."""


def _features(model: TabTransformer | None, ds: Dataset) -> tuple[np.ndarray, list[str]]:
    if model is None:
        return encode(ds, "onehot")
    return model.extract_features(ds.categorical_data, ds.numeric_data), feature_names(model)


def _fit_upstream(spec: FeatureSpec, fit_ds: Dataset, guard: LeakageGuard, seed: int):
    """Scaler and transformer fitted on ``fit_ds``."""
    scaler = None
    if spec.scale and fit_ds.numeric_data.shape[1]:
        guard.record("scaler", fit_ds.row_ids)
        scaler = fit_scaler(fit_ds)
        fit_ds = apply_scaler(scaler, fit_ds)
    model, curve = None, []
    if spec.transformer is not None:
        cfg = TrainConfig.from_dict({**spec.transformer.to_dict(), "seed": seed})
        guard.record("transformer", fit_ds.row_ids)
        model = build_model(fit_ds, cfg)
        curve = train(model, fit_ds)
    return scaler, model, curve


def _run_stage(fold: int, stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except FoldError:
        raise
    except Exception as exc:  # re-raised with context
        raise FoldError(f"fold {fold}, stage {stage}: {exc}") from exc


def prepare_folds(spec: FeatureSpec, ds: Dataset, plan: FoldPlan, guard: LeakageGuard | None = None) -> list[FoldData]:
    """Run scale/transformer/extract/rank/top-N/SMOTE for every fold.

    Row indices in ``plan`` refer to positions in ``ds``; the guard sees
    ``ds.row_ids``.
    """
    guard = guard or _NullGuard()
    if len(plan.assignments) != ds.n_rows:
        raise ValueError("fold plan and dataset disagree on the number of rows")
    shared = None
    if spec.mode == PAPER:
        cv = ds.subset(plan.cv_index)
        guard.open_fold(-1, cv.row_ids)
        shared = _run_stage(-1, "upstream", _fit_upstream, spec, cv, guard, derive_int(spec.seed, "transformer"))
    out = []
    for fold in range(plan.k):
        tr, te = ds.subset(plan.train_index(fold)), ds.subset(plan.test_index(fold))
        guard.open_fold(fold, tr.row_ids)
        if shared is None:
            scaler, model, curve = _run_stage(fold, "upstream", _fit_upstream, spec, tr, guard,
                                              derive_int(spec.seed, "transformer", fold))
        else:
            # the shared fit used every CV row: log it against this fold too
            guard.record("scaler", plan_ids(ds, plan.cv_index) if spec.scale else [])
            if spec.transformer is not None:
                guard.record("transformer", plan_ids(ds, plan.cv_index))
            scaler, model, curve = shared
        if scaler is not None:
            tr, te = apply_scaler(scaler, tr), apply_scaler(scaler, te)
        x_tr, names = _run_stage(fold, "extract", _features, model, tr)
        x_te, _ = _run_stage(fold, "extract", _features, model, te)
        head_acc = None
        if model is not None:
            head_pred = np.argmax(model.predict_proba(te.categorical_data, te.numeric_data), axis=1)
            head_acc = float(np.mean(head_pred == te.labels))
        ranking = None
        if spec.top_n is not None:
            guard.record("ranking", tr.row_ids)
            forest = _run_stage(fold, "ranking", fit_forest, x_tr, tr.labels, kind="random_forest",
                                n_estimators=spec.ranking_trees, seed=derive_int(spec.seed, "ranking", fold))
            ranking = feature_importance(forest, names, min(spec.top_n, x_tr.shape[1]))
            keep = ranking.selected()
            x_tr, x_te = x_tr[:, keep], x_te[:, keep]
        y_tr, n_syn = tr.labels, 0
        if spec.smote is not None:
            guard.record("smote", tr.row_ids)
            cfg = SmoteConfig(spec.smote.k_neighbors, derive_int(spec.seed, "smote", fold))
            n0 = len(y_tr)
            x_tr, y_tr = _run_stage(fold, "smote", smote, x_tr, y_tr, cfg)
            n_syn = len(y_tr) - n0
        out.append(FoldData(fold, tr.row_ids, te.row_ids, x_tr, y_tr, x_te, te.labels, ranking, head_acc, curve, n_syn))
    return out


def plan_ids(ds: Dataset, index: np.ndarray) -> np.ndarray:
    return ds.row_ids[np.asarray(index)]


# --------------------------------------------------------------------------
# classifier evaluation
# --------------------------------------------------------------------------

Fitter = Callable[[np.ndarray, np.ndarray], object]


def _fitter(classifier: ClassifierSpec | Fitter, fold: int) -> Fitter:
    if isinstance(classifier, ClassifierSpec):
        spec = ClassifierSpec(classifier.kind, dict(classifier.params), derive_int(classifier.seed, "classifier", fold))
        return lambda x, y: fit_classifier(spec, x, y)
    return classifier


def evaluate_folds(classifier: ClassifierSpec | Fitter, folds: Sequence[FoldData],
                   guard: LeakageGuard | None = None, label: str = "") -> MetricsReport:
    """Fit ``classifier`` on each fold's training matrix and score its test fold.

    ``classifier`` is a :class:`ClassifierSpec` or any callable
    ``fit(x, y) -> model`` whose model has ``predict_proba``.
    """
    guard = guard or _NullGuard()
    report = MetricsReport(label=label or (classifier.kind if isinstance(classifier, ClassifierSpec) else ""))
    all_scores, all_y = [], []
    for fd in folds:
        guard.open_fold(fd.fold, fd.train_ids)
        guard.record("classifier", fd.train_ids)
        model = _run_stage(fd.fold, "classifier", _fitter(classifier, fd.fold), fd.x_train, fd.y_train)
        proba = _run_stage(fd.fold, "predict", model.predict_proba, fd.x_test)[:, 1]
        if not np.all(np.isfinite(proba)):
            raise nx.NumericError(f"fold {fd.fold}: classifier produced non-finite probabilities")
        pred = (proba >= 0.5).astype(np.int64)
        cm = confusion(fd.y_test, pred)
        roc = None
        auc = None
        if 0 < fd.y_test.sum() < len(fd.y_test):
            auc, roc = roc_auc(proba, fd.y_test)
        report.folds.append(FoldResult(fd.fold, cm, metrics(cm, auc), len(fd.y_train), len(fd.y_test), roc,
                                       fd.head_accuracy))
        all_scores.append(proba)
        all_y.append(fd.y_test)
    y = np.concatenate(all_y) if all_y else np.zeros(0)
    if len(y) and 0 < y.sum() < len(y):
        report.pooled_auc = roc_auc(np.concatenate(all_scores), y)[0]
    return report


def cross_validate(classifier: ClassifierSpec | Fitter, ds: Dataset, plan: FoldPlan,
                   features: FeatureSpec | None = None, guard: LeakageGuard | None = None) -> MetricsReport:
    """Full per-fold chain followed by classifier evaluation."""
    features = features or FeatureSpec()
    folds = prepare_folds(features, ds, plan, guard)
    return evaluate_folds(classifier, folds, guard)


# --------------------------------------------------------------------------
# hyperparameter search
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError("IntRange needs low <= high")

    def sample(self, rng: np.random.Generator):
        return int(rng.integers(self.low, self.high + 1))

    def contains(self, v) -> bool:
        return isinstance(v, (int, np.integer)) and not isinstance(v, bool) and self.low <= v <= self.high


@dataclass(frozen=True)
class FloatRange:
    low: float
    high: float
    log: bool = False

    def __post_init__(self):
        if not self.low <= self.high or (self.log and self.low <= 0):
            raise ValueError("FloatRange needs low <= high (and low > 0 on a log scale)")

    def sample(self, rng: np.random.Generator):
        if self.log:
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))

    def contains(self, v) -> bool:
        return self.low <= v <= self.high


@dataclass(frozen=True)
class Choice:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ValueError("Choice needs at least one value")

    def sample(self, rng: np.random.Generator):
        return self.values[int(rng.integers(len(self.values)))]

    def contains(self, v) -> bool:
        return v in self.values


Dimension = IntRange | FloatRange | Choice

#: Search space used for the ExtraTrees model.
EXTRA_TREES_SPACE: dict[str, Dimension] = {
    "n_estimators": IntRange(50, 300),
    "max_depth": IntRange(3, 25),
    "bootstrap": Choice((True, False)),
}


@dataclass
class TrialRecord:
    trial: int
    params: dict
    objective: float
    seed: int
    duration: float = 0.0

    def to_dict(self, timing: bool = False) -> dict:
        d = {"trial": self.trial, "params": self.params, "objective": self.objective, "seed": self.seed}
        if timing:
            d["duration"] = self.duration
        return d


@dataclass
class TuneResult:
    best: TrialRecord
    history: list[TrialRecord]
    method: str

    def history_csv(self, timing: bool = False) -> str:
        keys = list(self.history[0].params) if self.history else []
        header = ["trial", *keys, "objective", "seed"] + (["duration"] if timing else [])
        rows = []
        for r in self.history:
            row = [r.trial, *(_num(r.params[k]) if not isinstance(r.params[k], str) else r.params[k] for k in keys),
                   _num(r.objective), r.seed]
            if timing:
                row.append(_num(r.duration))
            rows.append(row)
        return _csv_text(header, rows)

    def to_dict(self) -> dict:
        return {"method": self.method, "best": self.best.to_dict(), "history": [r.to_dict() for r in self.history]}


def _numeric_kde_sample(dim: IntRange | FloatRange, good: list, rng: np.random.Generator):
    lo, hi = (math.log(dim.low), math.log(dim.high)) if isinstance(dim, FloatRange) and dim.log else (dim.low, dim.high)
    pts = np.asarray([math.log(v) if isinstance(dim, FloatRange) and dim.log else v for v in good], dtype=np.float64)
    bw = max((hi - lo) / max(len(pts), 1) ** 0.5 / 2.0, 1e-12)
    v = float(np.clip(rng.normal(pts[int(rng.integers(len(pts)))], bw), lo, hi))
    if isinstance(dim, IntRange):
        return int(round(v))
    return float(math.exp(v)) if dim.log else v


def _kde_logpdf(dim, v, pts: list) -> float:
    if isinstance(dim, Choice):
        counts = sum(1 for p in pts if p == v)
        return math.log((counts + 1.0) / (len(pts) + len(dim.values)))
    log = isinstance(dim, FloatRange) and dim.log
    lo, hi = (math.log(dim.low), math.log(dim.high)) if log else (dim.low, dim.high)
    x = math.log(v) if log else v
    arr = np.asarray([math.log(p) if log else p for p in pts], dtype=np.float64)
    bw = max((hi - lo) / max(len(arr), 1) ** 0.5 / 2.0, 1e-12)
    dens = np.mean(np.exp(-0.5 * ((x - arr) / bw) ** 2)) / bw + 1e-12 / max(hi - lo, 1e-12)
    return float(math.log(dens))


def _tpe_propose(space: dict, history: list[TrialRecord], rng: np.random.Generator, n_candidates: int = 24) -> dict:
    """Split history at the median objective and pick the candidate with the best good/bad density ratio."""
    objs = np.asarray([r.objective for r in history])
    med = float(np.median(objs))
    good = [r.params for r in history if r.objective >= med]
    bad = [r.params for r in history if r.objective < med] or good
    best, best_score = None, -math.inf
    for _ in range(n_candidates):
        cand = {}
        for name, dim in space.items():
            gv = [p[name] for p in good]
            if isinstance(dim, Choice):
                w = np.asarray([sum(1 for g in gv if g == v) + 1.0 for v in dim.values])
                cand[name] = dim.values[int(rng.choice(len(dim.values), p=w / w.sum()))]
            else:
                cand[name] = _numeric_kde_sample(dim, gv, rng)
        score = sum(_kde_logpdf(dim, cand[n], [p[n] for p in good]) - _kde_logpdf(dim, cand[n], [p[n] for p in bad])
                    for n, dim in space.items())
        if score > best_score:
            best, best_score = cand, score
    return best


def tune(space: dict[str, Dimension], objective: Callable[[dict, int], float], trials: int = 100, seed: int = 0,
         method: str = "random", n_startup: int = 10, initial: Sequence[dict] = ()) -> TuneResult:
    """Maximise ``objective(params, trial_seed)`` over ``space``.

    ``method="random"`` samples every dimension independently;
    ``method="tpe"`` does so for the first ``n_startup`` trials and then
    proposes from a kernel density fitted to the better half of the history.
    ``initial`` parameter sets are evaluated first, before any sampling.
    Ties in the objective keep the earliest trial.
    """
    if not space:
        raise ValueError("search space is empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if method not in ("random", "tpe"):
        raise ValueError(f"unknown search method {method!r}")
    for p in initial:
        if set(p) != set(space) or not all(space[k].contains(v) for k, v in p.items()):
            raise ValueError(f"initial point {p} is not inside the search space")
    rng = derive_rng(seed, "tune", method)
    history: list[TrialRecord] = []
    for t in range(trials):
        if t < len(initial):
            params = dict(initial[t])
        elif method == "tpe" and len(history) >= max(n_startup, 2):
            params = _tpe_propose(space, history, rng)
        else:
            params = {name: dim.sample(rng) for name, dim in space.items()}
        trial_seed = derive_int(seed, "trial", t)
        start = time.perf_counter()
        value = float(objective(params, trial_seed))
        if not math.isfinite(value):
            raise nx.NumericError(f"trial {t}: objective is not finite ({value}) for {params}")
        history.append(TrialRecord(t, params, value, trial_seed, time.perf_counter() - start))
        logger.info("trial %d %s -> %.6f", t, params, value)
    best = history[0]
    for r in history[1:]:
        if r.objective > best.objective:
            best = r
    return TuneResult(best, history, method)


def cv_objective(kind: str, folds: Sequence[FoldData], metric: str = "accuracy", fixed: dict | None = None,
                 seed: int | None = 0):
    """Objective for :func:`tune`: mean fold ``metric`` of ``kind`` on prepared folds.

    With an integer ``seed`` every trial fits with the same classifier seed,
    so trials differ only in their hyperparameters; ``seed=None`` uses the
    per-trial seed instead.
    """
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}")

    def objective(params: dict, trial_seed: int) -> float:
        spec = ClassifierSpec(kind, {**(fixed or {}), **params}, trial_seed if seed is None else seed)
        return float(getattr(evaluate_folds(spec, folds).mean(), metric))

    return objective
