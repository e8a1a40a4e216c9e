"""Flat-array CART trees.

Two builders share one node layout:

* classification trees grown on weighted Gini impurity, either scanning every
  threshold (``splitter="best"``) or drawing one uniform threshold per
  candidate feature (``splitter="random"``, extremely randomised trees);
* regression trees on boosting pseudo-residuals with Newton leaf values.

Nodes are stored in parallel arrays; ``feature == -1`` marks a leaf.  A row
goes left when ``x[feature] <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, 2) class probabilities, or (n_nodes,) regression output
    impurity: np.ndarray
    weight: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``x``."""
        node = np.zeros(len(x), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            nd = node[active]
            go_left = x[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.apply(np.asarray(x, dtype=np.float64))]

    def feature_importances(self) -> np.ndarray:
        """Unnormalised weighted impurity decrease per feature."""
        imp = np.zeros(self.n_features)
        for i in np.flatnonzero(self.feature != LEAF):
            l, r = self.left[i], self.right[i]
            gain = self.weight[i] * self.impurity[i] - self.weight[l] * self.impurity[l] - self.weight[r] * self.impurity[r]
            imp[self.feature[i]] += max(gain, 0.0)
        return imp

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "impurity": self.impurity.tolist(),
            "weight": self.weight.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
            np.asarray(d["impurity"], dtype=np.float64),
            np.asarray(d["weight"], dtype=np.float64),
            int(d["n_features"]),
        )


def gini(w_pos, w_total):
    """Binary Gini impurity ``1 - p^2 - (1-p)^2`` from weighted counts."""
    w_total = np.asarray(w_total, dtype=np.float64)
    p = np.divide(w_pos, w_total, out=np.zeros_like(w_total), where=w_total > 0)
    return 2.0 * p * (1.0 - p)


def _gini_scalar(w_pos: float, w_total: float) -> float:
    if w_total <= 0:
        return 0.0
    p = w_pos / w_total
    return 2.0 * p * (1.0 - p)


def resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None or max_features == "all":
        return n_features
    if max_features == "sqrt":
        return max(1, int(np.sqrt(n_features)))
    if max_features == "log2":
        return max(1, int(np.log2(n_features))) if n_features > 1 else 1
    if isinstance(max_features, float):
        if not 0.0 < max_features <= 1.0:
            raise ValueError("fractional max_features must lie in (0, 1]")
        return max(1, int(max_features * n_features))
    k = int(max_features)
    if k < 1:
        raise ValueError("max_features must be positive")
    return min(k, n_features)


class _Builder:
    def __init__(self, n_features: int, value_width: int):
        self.n_features = n_features
        self.value_width = value_width
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list = []
        self.impurity: list[float] = []
        self.weight: list[float] = []

    def new_node(self, value, impurity: float, weight: float) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.impurity.append(impurity)
        self.weight.append(weight)
        return len(self.feature) - 1

    def finish(self) -> Tree:
        value = np.asarray(self.value, dtype=np.float64)
        if self.value_width == 1:
            value = value.reshape(-1)
        return Tree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            value,
            np.asarray(self.impurity, dtype=np.float64),
            np.asarray(self.weight, dtype=np.float64),
            self.n_features,
        )


def _candidate_features(xn: np.ndarray, k_feat: int, shuffle: bool, rng: np.random.Generator) -> np.ndarray:
    """Up to ``k_feat`` non-constant features, in random order when ``shuffle``."""
    order = rng.permutation(xn.shape[1]) if shuffle else np.arange(xn.shape[1])
    xo = xn[:, order]
    varying = xo.min(axis=0) < xo.max(axis=0)
    return order[varying][:k_feat]


def _scan_thresholds(xs: np.ndarray, w: np.ndarray, wy: np.ndarray, score_fn):
    """Best threshold per column of ``xs`` (rows, features).

    ``score_fn(cum_w, cum_wy)`` scores every cut between consecutive sorted
    values.  Returns ``(score, column, threshold)`` of the overall minimum,
    ties resolved by column order then by the lower threshold, or ``None``.
    """
    order = np.argsort(xs, axis=0, kind="stable")
    sx = np.take_along_axis(xs, order, axis=0)
    valid = sx[:-1] < sx[1:]
    if not valid.any():
        return None
    cw = np.cumsum(w[order], axis=0)[:-1]
    cwy = np.cumsum(wy[order], axis=0)[:-1]
    scores = np.where(valid, score_fn(cw, cwy), np.inf)
    flat = int(np.argmin(scores.T))
    col, i = divmod(flat, scores.shape[0])
    if not np.isfinite(scores[i, col]):
        return None
    lo, hi = sx[i, col], sx[i + 1, col]
    thr = 0.5 * (lo + hi)
    if thr >= hi:  # midpoint rounded onto the upper value
        thr = lo
    return float(scores[i, col]), col, float(thr)



def _grow_random(x, w, wy, b: "_Builder", *, k_feat: int, max_depth: int, min_samples_split: int,
                 leaf_value, rng: np.random.Generator) -> None:
    """Extremely-randomised growth, one depth level at a time.

    All open nodes of a level are processed together: rows are kept grouped
    by node, and per-node minima, maxima and left-side weight sums come from
    segmented reductions, so the cost per level is a handful of array
    operations instead of a Python loop over nodes.
    """
    n, p = x.shape
    w_all = float(w.sum())
    rows = np.arange(n)
    seg_nodes = np.array([0])
    counts = np.array([n])
    depth = 0
    while seg_nodes.size and depth < max_depth:
        imp = np.asarray(b.impurity)[seg_nodes]
        open_ = (imp > 0.0) & (counts >= min_samples_split)
        if not open_.all():
            rows = rows[np.repeat(open_, counts)]
            seg_nodes, counts, imp = seg_nodes[open_], counts[open_], imp[open_]
            if not seg_nodes.size:
                break
        n_seg = seg_nodes.size
        starts = np.r_[0, np.cumsum(counts)[:-1]]
        seg_of_row = np.repeat(np.arange(n_seg), counts)
        xr, wr, wyr = x[rows], w[rows], wy[rows]
        lo = np.minimum.reduceat(xr, starts, axis=0)
        hi = np.maximum.reduceat(xr, starts, axis=0)
        varying = lo < hi
        if k_feat < p:
            keys = rng.random((n_seg, p))
            keys[~varying] = np.inf
            cand = np.argsort(keys, axis=1, kind="stable")[:, :k_feat]
        else:
            cand = np.broadcast_to(np.arange(p), (n_seg, p))
        cand_ok = np.take_along_axis(varying, cand, axis=1)
        thr = lo + rng.random((n_seg, p)) * (hi - lo)
        thr = np.where(thr >= hi, lo, thr)
        go = xr <= thr[seg_of_row]
        wl = np.add.reduceat(go * wr[:, None], starts, axis=0)
        wl1 = np.add.reduceat(go * wyr[:, None], starts, axis=0)
        W = np.add.reduceat(wr, starts)[:, None]
        W1 = np.add.reduceat(wyr, starts)[:, None]
        wrr, wr1 = W - wl, W1 - wl1
        score = 2.0 * (wl1 * (wl - wl1) / np.maximum(wl, 1e-300) + wr1 * (wrr - wr1) / np.maximum(wrr, 1e-300)) / W
        cscore = np.where(cand_ok, np.take_along_axis(score, cand, axis=1), np.inf)
        j = np.argmin(cscore, axis=1)
        seg = np.arange(n_seg)
        best = cscore[seg, j]
        feat = cand[seg, j]
        split = np.isfinite(best) & (best <= imp + 1e-12)
        if not split.any():
            break
        # children: left rows then right rows of every splitting node
        row_split = split[seg_of_row]
        side = ~go[np.arange(len(rows)), feat[seg_of_row]]
        key = (seg_of_row * 2 + side)[row_split]
        order = np.argsort(key, kind="stable")
        rows = rows[row_split][order]
        new_nodes, new_counts = [], []
        child_counts = np.bincount(key, minlength=2 * n_seg)
        for s in np.flatnonzero(split):
            f = int(feat[s])
            node = int(seg_nodes[s])
            stats = ((wl[s, f], wl1[s, f]), (wrr[s, f], wr1[s, f]))
            kids = []
            for (cw, cw1) in stats:
                cw, cw1 = float(cw), float(cw1)
                kids.append(b.new_node(leaf_value(cw, cw1), _gini_scalar(cw1, cw), cw / w_all))
            b.feature[node], b.threshold[node] = f, float(thr[s, f])
            b.left[node], b.right[node] = kids
            new_nodes.extend(kids)
            new_counts.extend((child_counts[2 * s], child_counts[2 * s + 1]))
        seg_nodes = np.asarray(new_nodes, dtype=np.int64)
        counts = np.asarray(new_counts, dtype=np.int64)
        depth += 1


def build_classifier_tree(
    x: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray | None = None,
    *,
    max_depth: int | None = None,
    max_features=None,
    splitter: str = "best",
    min_samples_split: int = 2,
    laplace: float = 1.0,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Grow a Gini classification tree.

    Leaves hold class-probability pairs with additive smoothing ``laplace``
    on the weighted counts; smoothing is switched off when the training set
    holds a single class.  Candidate features are visited in a random order
    until ``max_features`` non-constant ones have been evaluated.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, n_features = x.shape
    if n == 0:
        raise ValueError("cannot grow a tree on zero rows")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    rng = rng or np.random.default_rng(0)
    k_feat = resolve_max_features(max_features, n_features)
    max_depth = np.iinfo(np.int64).max if max_depth is None else int(max_depth)
    alpha = laplace if len(np.unique(y[w > 0])) > 1 else 0.0
    wy = w * y
    w_all = w.sum()
    b = _Builder(n_features, 2)

    def leaf_value(w_tot, w_pos):
        p1 = (w_pos + alpha) / (w_tot + 2.0 * alpha)
        return [1.0 - p1, p1]

    root_w, root_pos = float(w_all), float(wy.sum())
    root = b.new_node(leaf_value(root_w, root_pos), _gini_scalar(root_pos, root_w), 1.0)
    if splitter == "random":
        _grow_random(x, w, wy, b, k_feat=k_feat, max_depth=max_depth, min_samples_split=min_samples_split,
                     leaf_value=leaf_value, rng=rng)
        return b.finish()
    if splitter != "best":
        raise ValueError(f"unknown splitter {splitter!r}")
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        node_imp = b.impurity[node]
        if depth >= max_depth or node_imp <= 0.0 or len(idx) < min_samples_split:
            continue
        wn, wyn = w[idx], wy[idx]
        W, W1 = wn.sum(), wyn.sum()

        def child_score(wl, wl1):
            # weight * gini == 2 * w_pos * w_neg / weight
            # an empty side has a zero numerator, so a tiny floor is exact
            wr, wr1 = W - wl, W1 - wl1
            s = wl1 * (wl - wl1) / np.maximum(wl, 1e-300) + wr1 * (wr - wr1) / np.maximum(wr, 1e-300)
            return 2.0 * s / W

        xn = x[idx]
        feats = _candidate_features(xn, k_feat, k_feat < n_features, rng)
        if feats.size == 0:
            continue
        found = _scan_thresholds(xn[:, feats], wn, wyn, child_score)
        if found is None:
            continue
        best = (found[0], int(feats[found[1]]), found[2])
        if best[0] > node_imp + 1e-12:
            continue
        _, f, thr = best
        go_left = xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        if len(li) == 0 or len(ri) == 0:
            continue
        children = []
        for part in (li, ri):
            pw, ppos = float(w[part].sum()), float(wy[part].sum())
            children.append(b.new_node(leaf_value(pw, ppos), _gini_scalar(ppos, pw), pw / w_all))
        b.feature[node], b.threshold[node] = f, thr
        b.left[node], b.right[node] = children
        stack.append((children[1], ri, depth + 1))
        stack.append((children[0], li, depth + 1))
    return b.finish()


def build_regression_tree(
    x: np.ndarray,
    residual: np.ndarray,
    hessian: np.ndarray,
    *,
    max_depth: int = 3,
    max_features=None,
    min_samples_leaf: int = 1,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Least-squares tree on ``residual``; leaves hold ``sum(residual) / sum(hessian)``."""
    x = np.asarray(x, dtype=np.float64)
    n, n_features = x.shape
    rng = rng or np.random.default_rng(0)
    k_feat = resolve_max_features(max_features, n_features)
    ones = np.ones(n)
    b = _Builder(n_features, 1)

    def leaf(idx):
        h = hessian[idx].sum()
        return residual[idx].sum() / h if h > 1e-12 else 0.0

    def sse(idx):
        r = residual[idx]
        return float(np.sum((r - r.mean()) ** 2)) if len(r) else 0.0

    root = b.new_node(leaf(np.arange(n)), sse(np.arange(n)) / max(n, 1), 1.0)
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < 2 * min_samples_leaf:
            continue
        r = residual[idx]
        S, N = r.sum(), float(len(idx))

        def neg_gain(cn, cs):
            nr = N - cn
            ok = (cn >= min_samples_leaf) & (nr >= min_samples_leaf)
            with np.errstate(divide="ignore", invalid="ignore"):
                g = cs**2 / cn + (S - cs) ** 2 / nr
            return np.where(ok, -g, np.inf)

        xn = x[idx]
        feats = _candidate_features(xn, k_feat, k_feat < n_features, rng)
        if feats.size == 0:
            continue
        found = _scan_thresholds(xn[:, feats], ones[idx], r, neg_gain)
        best = None if found is None else (found[0], int(feats[found[1]]), found[2])
        if best is None or -best[0] <= S * S / N + 1e-12:
            continue
        _, f, thr = best
        go_left = xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        children = [b.new_node(leaf(part), sse(part) / len(part), len(part) / n) for part in (li, ri)]
        b.feature[node], b.threshold[node] = f, thr
        b.left[node], b.right[node] = children
        stack.append((children[1], ri, depth + 1))
        stack.append((children[0], li, depth + 1))
    return b.finish()
