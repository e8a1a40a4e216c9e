"""Random forests, extremely randomised trees, and impurity-based ranking."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..rng import derive_rng
from .tree import Tree, build_classifier_tree

RANDOM_FOREST = "random_forest"
EXTRA_TREES = "extra_trees"


def fit_tree(x, y, params: dict | None = None, rng: np.random.Generator | None = None, sample_weight=None) -> Tree:
    """Single Gini tree.  ``params`` keys: max_depth, max_features, splitter, laplace."""
    params = dict(params or {})
    return build_classifier_tree(
        x,
        y,
        sample_weight,
        max_depth=params.get("max_depth"),
        max_features=params.get("max_features"),
        splitter=params.get("splitter", "best"),
        laplace=params.get("laplace", 1.0),
        rng=rng,
    )


@dataclass
class ForestModel:
    kind: str
    n_estimators: int = 100
    max_depth: int | None = None
    max_features: object = "default"
    bootstrap: bool | None = None
    laplace: float = 1.0
    seed: int = 0
    trees: list = field(default_factory=list)
    n_features: int = 0

    def __post_init__(self):
        if self.kind not in (RANDOM_FOREST, EXTRA_TREES):
            raise ValueError(f"unknown forest kind {self.kind!r}")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_features == "default":
            self.max_features = "sqrt" if self.kind == RANDOM_FOREST else None
        if self.bootstrap is None:
            self.bootstrap = self.kind == RANDOM_FOREST

    @property
    def splitter(self) -> str:
        return "best" if self.kind == RANDOM_FOREST else "random"

    def fit(self, x, y) -> "ForestModel":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n = len(y)
        self.n_features = x.shape[1]
        self.trees = []
        for t in range(self.n_estimators):
            rng = derive_rng(self.seed, "forest", t)
            if self.bootstrap:
                counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
                rows = np.flatnonzero(counts)
                xs, ys, ws = x[rows], y[rows], counts[rows].astype(np.float64)
            else:
                xs, ys, ws = x, y, None
            self.trees.append(
                build_classifier_tree(
                    xs, ys, ws,
                    max_depth=self.max_depth,
                    max_features=self.max_features,
                    splitter=self.splitter,
                    laplace=self.laplace,
                    rng=rng,
                )
            )
        return self

    def predict_proba(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        acc = np.zeros((len(x), 2))
        for tree in self.trees:
            acc += tree.predict(x)
        return acc / len(self.trees)

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def feature_importances(self) -> np.ndarray:
        """Mean of per-tree normalised Gini decreases, renormalised to sum 1."""
        total = np.zeros(self.n_features)
        for tree in self.trees:
            imp = tree.feature_importances()
            s = imp.sum()
            if s > 0:
                total += imp / s
        s = total.sum()
        return total / s if s > 0 else total

    def params(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
            "laplace": self.laplace,
        }

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params(),
            "seed": self.seed,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        model = cls(d["kind"], seed=d["seed"], **d["params"])
        model.n_features = d["n_features"]
        model.trees = [Tree.from_dict(t) for t in d["trees"]]
        return model


def fit_forest(x, y, kind: str = RANDOM_FOREST, seed: int = 0, **params) -> ForestModel:
    return ForestModel(kind, seed=seed, **params).fit(x, y)


# --------------------------------------------------------------------------
# ranking
# --------------------------------------------------------------------------


@dataclass
class RankedFeatures:
    """Features ordered by non-increasing importance (ties by index)."""

    order: np.ndarray
    importances: np.ndarray  # indexed by original feature position
    names: list[str]
    top_n: int

    def ranked(self) -> list[tuple[int, str, float]]:
        return [(int(i), self.names[i], float(self.importances[i])) for i in self.order]

    def selected(self) -> np.ndarray:
        return self.order[: self.top_n]

    def to_csv(self, path: str | Path, limit: int | None = None) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "index", "importance"])
            for rank, (i, name, imp) in enumerate(self.ranked()[:limit], start=1):
                w.writerow([rank, name, i, repr(imp)])

    def to_dict(self) -> dict:
        return {
            "top_n": self.top_n,
            "ranking": [{"index": i, "feature": n, "importance": v} for i, n, v in self.ranked()],
        }

    @classmethod
    def from_csv(cls, path: str | Path, top_n: int) -> "RankedFeatures":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        width = max(int(r["index"]) for r in rows) + 1
        names = [""] * width
        imp = np.zeros(width)
        order = []
        for r in rows:
            i = int(r["index"])
            names[i], imp[i] = r["feature"], float(r["importance"])
            order.append(i)
        return cls(np.asarray(order, dtype=np.int64), imp, names, top_n)


def rank_importances(importances: np.ndarray, names: list[str] | None = None, top_n: int = 10) -> RankedFeatures:
    importances = np.asarray(importances, dtype=np.float64)
    names = names or [f"feature_{i}" for i in range(len(importances))]
    # stable sort of the negated values keeps ascending index among ties
    order = np.argsort(-importances, kind="stable")
    return RankedFeatures(order, importances, list(names), int(top_n))


def feature_importance(forest: ForestModel, names: list[str] | None = None, top_n: int = 10) -> RankedFeatures:
    return rank_importances(forest.feature_importances(), names, top_n)


def select_top(ranked: RankedFeatures, x, top_n: int | None = None) -> np.ndarray:
    """Columns of ``x`` in rank order, first ``top_n`` of them."""
    x = np.asarray(x)
    top_n = ranked.top_n if top_n is None else top_n
    if top_n > x.shape[1]:
        raise ValueError(f"top_n={top_n} exceeds feature width {x.shape[1]}")
    if top_n < 1:
        raise ValueError("top_n must be positive")
    return x[:, ranked.order[:top_n]]
