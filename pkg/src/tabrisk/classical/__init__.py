"""Classical classifiers behind one ``fit`` / ``predict_proba`` contract.

The roster has ten kinds.  ``gbt_variant_a/b/c`` are presets of the in-house
gradient booster (deep/fast, shallow/subsampled, many slow rounds) standing
in for the three third-party boosted-tree libraries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boost import AdaBoostModel, GradientBoostModel
from .forest import (
    EXTRA_TREES,
    RANDOM_FOREST,
    ForestModel,
    RankedFeatures,
    feature_importance,
    fit_forest,
    fit_tree,
    rank_importances,
    select_top,
)
from .linear import ConvergenceError, LinearModel, fit_lda, fit_linear, fit_logistic
from .mlp import MlpModel, fit_mlp

DEFAULTS: dict[str, dict] = {
    "extra_trees": {"n_estimators": 100, "max_depth": None, "max_features": None, "bootstrap": False},
    "random_forest": {"n_estimators": 100, "max_depth": None, "max_features": "sqrt", "bootstrap": True},
    "gradient_boost": {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3, "subsample": 1.0},
    "gbt_variant_a": {"n_estimators": 100, "learning_rate": 0.3, "max_depth": 6, "subsample": 1.0},
    "gbt_variant_b": {"n_estimators": 200, "learning_rate": 0.05, "max_depth": 4, "subsample": 0.8, "max_features": 0.8},
    "gbt_variant_c": {"n_estimators": 300, "learning_rate": 0.03, "max_depth": 5, "subsample": 1.0},
    "adaboost": {"n_estimators": 50, "learning_rate": 1.0},
    "mlp": {"hidden": 64, "lr": 0.01, "epochs": 200, "batch_size": 64},
    "lda": {"ridge": 1e-6},
    "logistic_regression": {"l2": 1e-4, "tol": 1e-6, "max_iter": 10000},
}

ROSTER = tuple(DEFAULTS)

DISPLAY_NAMES = {
    "extra_trees": "ExtraTrees",
    "random_forest": "RandomForest",
    "gradient_boost": "GradientBoosting",
    "gbt_variant_a": "GBT variant A (deep)",
    "gbt_variant_b": "GBT variant B (subsampled)",
    "gbt_variant_c": "GBT variant C (slow)",
    "adaboost": "AdaBoost",
    "mlp": "MLP",
    "lda": "LinearDiscriminantAnalysis",
    "logistic_regression": "LogisticRegression",
}


@dataclass
class ClassifierSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; choose from {list(DEFAULTS)}")
        unknown = set(self.params) - set(DEFAULTS[self.kind]) - {"laplace", "min_samples_leaf", "weight_decay", "solver"}
        if unknown:
            raise ValueError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        lr = self.params.get("learning_rate", self.params.get("lr"))
        if lr is not None and lr <= 0:
            raise ValueError(f"{self.kind}: learning rate must be positive")

    def resolved(self) -> dict:
        return {**DEFAULTS[self.kind], **self.params}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}


def fit_classifier(spec: ClassifierSpec, x, y):
    """Fit the model described by ``spec``; every model exposes ``predict_proba``."""
    p = spec.resolved()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    k = spec.kind
    if k in (EXTRA_TREES, RANDOM_FOREST):
        return ForestModel(k, seed=spec.seed, **p).fit(x, y)
    if k == "gradient_boost" or k.startswith("gbt_variant"):
        return GradientBoostModel(kind=k, seed=spec.seed, **p).fit(x, y)
    if k == "adaboost":
        return AdaBoostModel(seed=spec.seed, **p).fit(x, y)
    if k == "mlp":
        return MlpModel(seed=spec.seed, **p).fit(x, y)
    if k == "lda":
        return fit_lda(x, y, **p)
    return fit_logistic(x, y, **p)


def fit_boosted(x, y, spec: ClassifierSpec):
    if spec.kind not in ("gradient_boost", "adaboost") and not spec.kind.startswith("gbt_variant"):
        raise ValueError("fit_boosted expects a boosting kind")
    return fit_classifier(spec, x, y)


def model_from_dict(d: dict):
    k = d["kind"]
    if k in (EXTRA_TREES, RANDOM_FOREST):
        return ForestModel.from_dict(d)
    if k == "gradient_boost" or k.startswith("gbt_variant"):
        return GradientBoostModel.from_dict(d)
    if k == "adaboost":
        return AdaBoostModel.from_dict(d)
    if k == "mlp":
        return MlpModel.from_dict(d)
    if k in ("lda", "logistic_regression"):
        return LinearModel.from_dict(d)
    raise ValueError(f"unknown model kind {k!r}")


__all__ = [
    "AdaBoostModel",
    "ClassifierSpec",
    "ConvergenceError",
    "DEFAULTS",
    "DISPLAY_NAMES",
    "ForestModel",
    "GradientBoostModel",
    "LinearModel",
    "MlpModel",
    "ROSTER",
    "RankedFeatures",
    "feature_importance",
    "fit_boosted",
    "fit_classifier",
    "fit_forest",
    "fit_lda",
    "fit_linear",
    "fit_logistic",
    "fit_mlp",
    "fit_tree",
    "model_from_dict",
    "rank_importances",
    "select_top",
]
