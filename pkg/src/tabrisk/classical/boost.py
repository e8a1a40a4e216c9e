"""Gradient boosting on logistic loss and discrete AdaBoost (SAMME)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import derive_rng
from .tree import Tree, build_classifier_tree, build_regression_tree


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(y, p) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def _prior_log_odds(y: np.ndarray) -> float:
    p = np.clip(y.mean(), 1e-6, 1 - 1e-6) if len(y) else 0.5
    return float(np.log(p / (1 - p)))


@dataclass
class GradientBoostModel:
    """Stagewise regression trees on logistic-loss pseudo-residuals.

    Each round fits a least-squares tree to ``y - p`` and sets leaf values by
    one Newton step, ``sum(y - p) / sum(p (1 - p))``, scaled by the learning
    rate.
    """

    kind: str = "gradient_boost"
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    subsample: float = 1.0
    max_features: object = None
    min_samples_leaf: int = 1
    seed: int = 0
    init_score: float = 0.0
    trees: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.n_estimators < 0 or self.max_depth < 1:
            raise ValueError("n_estimators must be >= 0 and max_depth >= 1")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")

    def fit(self, x, y) -> "GradientBoostModel":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        n = len(y)
        self.init_score = _prior_log_odds(y)
        f = np.full(n, self.init_score)
        self.trees = []
        self.train_loss = [log_loss(y, sigmoid(f))]
        for t in range(self.n_estimators):
            rng = derive_rng(self.seed, "boost", t)
            p = sigmoid(f)
            residual = y - p
            hessian = np.maximum(p * (1 - p), 1e-12)
            rows = np.arange(n)
            if self.subsample < 1.0:
                rows = np.sort(rng.choice(n, size=max(2, int(self.subsample * n)), replace=False))
            tree = build_regression_tree(
                x[rows], residual[rows], hessian[rows],
                max_depth=self.max_depth,
                max_features=self.max_features,
                min_samples_leaf=self.min_samples_leaf,
                rng=rng,
            )
            tree.value *= self.learning_rate
            self.trees.append(tree)
            f += tree.predict(x)
            self.train_loss.append(log_loss(y, sigmoid(f)))
        return self

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        f = np.full(len(x), self.init_score)
        for tree in self.trees:
            f += tree.predict(x)
        return f

    def predict_proba(self, x) -> np.ndarray:
        p = sigmoid(self.decision_function(x))
        return np.column_stack([1 - p, p])

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def params(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "subsample": self.subsample,
            "max_features": self.max_features,
            "min_samples_leaf": self.min_samples_leaf,
        }

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params(),
            "seed": self.seed,
            "init_score": self.init_score,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoostModel":
        model = cls(kind=d["kind"], seed=d["seed"], **d["params"])
        model.init_score = d["init_score"]
        model.trees = [Tree.from_dict(t) for t in d["trees"]]
        return model


@dataclass
class AdaBoostModel:
    """SAMME with depth-1 Gini stumps."""

    kind: str = "adaboost"
    n_estimators: int = 50
    learning_rate: float = 1.0
    seed: int = 0
    prior: float = 0.5
    stumps: list = field(default_factory=list)
    alphas: list = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")

    def fit(self, x, y) -> "AdaBoostModel":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n = len(y)
        self.prior = float(y.mean()) if n else 0.5
        w = np.full(n, 1.0 / n)
        self.stumps, self.alphas = [], []
        for t in range(self.n_estimators):
            stump = build_classifier_tree(
                x, y, w, max_depth=1, splitter="best", laplace=0.0, rng=derive_rng(self.seed, "adaboost", t)
            )
            pred = np.argmax(stump.predict(x), axis=1)
            wrong = pred != y
            err = float(w[wrong].sum() / w.sum())
            if err >= 0.5:
                break
            if err <= 0.0:
                self.stumps.append(stump)
                self.alphas.append(1.0)
                break
            alpha = self.learning_rate * np.log((1 - err) / err)
            self.stumps.append(stump)
            self.alphas.append(float(alpha))
            w = w * np.exp(alpha * wrong)
            w /= w.sum()
        return self

    def decision_function(self, x) -> np.ndarray:
        """Weighted vote in [-1, 1]: sum(alpha * (+1 | -1)) / sum(alpha)."""
        x = np.asarray(x, dtype=np.float64)
        f = np.zeros(len(x))
        for stump, a in zip(self.stumps, self.alphas):
            f += a * np.where(np.argmax(stump.predict(x), axis=1) == 1, 1.0, -1.0)
        return f / sum(self.alphas) if self.alphas else f

    def predict_proba(self, x) -> np.ndarray:
        if not self.stumps:
            p = np.full(len(np.asarray(x)), self.prior)
        else:
            p = sigmoid(2.0 * self.decision_function(x))
        return np.column_stack([1 - p, p])

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def params(self) -> dict:
        return {"n_estimators": self.n_estimators, "learning_rate": self.learning_rate}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params(),
            "seed": self.seed,
            "prior": self.prior,
            "alphas": self.alphas,
            "stumps": [s.to_dict() for s in self.stumps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaBoostModel":
        model = cls(kind=d["kind"], seed=d["seed"], **d["params"])
        model.prior = d["prior"]
        model.alphas = list(d["alphas"])
        model.stumps = [Tree.from_dict(s) for s in d["stumps"]]
        return model
