"""Points-based risk nomogram on top of a logistic regression.

Each included feature ``i`` with coefficient ``beta_i`` and observed range
``[lo_i, hi_i]`` gets a low-risk reference ``r_i`` (``lo_i`` when
``beta_i >= 0``, else ``hi_i``) and contributes

    points_i(x) = beta_i * (x_i - r_i) / u,

which is non-negative inside the range and increases with risk.  ``u`` is
chosen so the feature with the widest span covers exactly ``max_points``
points.  Since the linear predictor is

    beta_0 + sum_i beta_i x_i = u * total + (beta_0 + sum_i beta_i r_i),

the map from total points to probability, ``sigmoid(a * total + b)`` with
``a = u`` and ``b = beta_0 + sum beta_i r_i``, reproduces the regression
exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classical.boost import sigmoid
from .classical.linear import fit_logistic
from .textio import csv_text, json_text

logger = logging.getLogger(__name__)

COLLINEAR = "collinear"
MANUAL = "manual"
CORRELATION_LIMIT = 0.999


@dataclass(frozen=True)
class FeatureScale:
    index: int  # column in the input matrix
    name: str
    coef: float
    lo: float
    hi: float

    @property
    def reference(self) -> float:
        """Feature value worth zero points."""
        return self.lo if self.coef >= 0 else self.hi


@dataclass(frozen=True)
class Exclusion:
    index: int
    name: str
    reason: str
    detail: str = ""


@dataclass(frozen=True)
class NomogramSpec:
    features: tuple[FeatureScale, ...]
    intercept: float
    unit: float  # u: linear-predictor change per point
    offset: float  # b: linear predictor at zero total points
    n_features_in: int
    excluded: tuple[Exclusion, ...] = ()
    max_points: float = 10.0

    def __post_init__(self):
        if not self.unit > 0:
            raise ValueError("points unit must be positive")

    @property
    def slope(self) -> float:
        """``a`` in ``p = sigmoid(a * total + b)``."""
        return self.unit

    @property
    def included(self) -> list[int]:
        return [f.index for f in self.features]

    @property
    def zero_total(self) -> float:
        """Total score at which the linear predictor is 0 (probability 0.5)."""
        return -self.offset / self.unit

    def span(self, f: FeatureScale) -> float:
        return abs(f.coef) * (f.hi - f.lo) / self.unit

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "unit": self.unit,
            "offset": self.offset,
            "max_points": self.max_points,
            "n_features_in": self.n_features_in,
            "features": [
                {"index": f.index, "name": f.name, "coef": f.coef, "lo": f.lo, "hi": f.hi,
                 "reference": f.reference, "max_points": self.span(f)}
                for f in self.features
            ],
            "excluded": [{"index": e.index, "name": e.name, "reason": e.reason, "detail": e.detail}
                         for e in self.excluded],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NomogramSpec":
        return cls(
            tuple(FeatureScale(f["index"], f["name"], f["coef"], f["lo"], f["hi"]) for f in d["features"]),
            d["intercept"], d["unit"], d["offset"], d["n_features_in"],
            tuple(Exclusion(e["index"], e["name"], e["reason"], e.get("detail", "")) for e in d["excluded"]),
            d.get("max_points", 10.0),
        )

    def to_json(self) -> str:
        return json_text(self.to_dict())

    def ticks_csv(self, n_ticks: int = 6) -> str:
        """One row per tick mark: feature axes, then the total-points and probability axes."""
        rows = []
        for f in self.features:
            for v in np.linspace(f.lo, f.hi, n_ticks):
                rows.append([f.name, f.index, float(v), float(f.coef * (v - f.reference) / self.unit), ""])
        top = sum(self.span(f) for f in self.features)
        for t in np.linspace(0.0, top, 2 * n_ticks - 1):
            rows.append(["total", "", "", float(t), float(probability_of_score(self, t))])
        return csv_text(["axis", "index", "value", "points", "probability"], rows)


def _resolve(names: list[str], item) -> int:
    if isinstance(item, str):
        if item not in names:
            raise ValueError(f"unknown feature {item!r}")
        return names.index(item)
    if not 0 <= int(item) < len(names):
        raise ValueError(f"feature index {item} out of range")
    return int(item)


def _collinear_screen(x: np.ndarray, candidates: list[int], names: list[str]) -> tuple[list[int], list[Exclusion]]:
    """Keep features in index order, dropping any nearly collinear with those kept before it."""
    kept: list[int] = []
    dropped: list[Exclusion] = []
    n = len(x)
    for j in candidates:
        col = x[:, j]
        reason = ""
        for k in kept:
            other = x[:, k]
            if col.std() > 0 and other.std() > 0:
                r = float(np.corrcoef(col, other)[0, 1])
                if abs(r) > CORRELATION_LIMIT:
                    reason = f"|corr| with {names[k]} = {abs(r):.6f}"
                    break
        if not reason:
            design = np.column_stack([np.ones(n), x[:, kept + [j]]])
            if np.linalg.matrix_rank(design) < design.shape[1]:
                reason = "design matrix loses rank"
        if reason:
            dropped.append(Exclusion(j, names[j], COLLINEAR, reason))
        else:
            kept.append(j)
    return kept, dropped


def fit_nomogram(x, y, names: Sequence[str] | None = None, exclude: Sequence = (), max_points: float = 10.0,
                 l2: float = 0.0) -> NomogramSpec:
    """Fit the logistic model on the usable columns of ``x`` and build point scales.

    ``exclude`` lists features (names or indices) to leave out by hand.
    Remaining columns are screened for collinearity; the later-indexed
    member of an offending pair is dropped.  Raises ``ValueError`` when
    fewer than two features survive and
    :class:`~tabrisk.classical.linear.ConvergenceError` if Newton's method
    does not converge.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("x must be 2-D with one row per label")
    p = x.shape[1]
    names = list(names) if names is not None else [f"feature_{i}" for i in range(p)]
    if len(names) != p:
        raise ValueError("names must match the number of columns")
    manual = sorted({_resolve(names, e) for e in exclude})
    excluded = [Exclusion(j, names[j], MANUAL) for j in manual]
    candidates = [j for j in range(p) if j not in manual]
    kept, collinear = _collinear_screen(x, candidates, names)
    excluded += collinear
    for e in collinear:
        logger.info("nomogram: %s excluded (%s)", e.name, e.detail)
    if len(kept) < 2:
        raise ValueError(f"nomogram needs at least 2 usable features, {len(kept)} left after exclusions")
    model = fit_logistic(x[:, kept], y, l2=l2, tol=1e-10, solver="newton")
    lo, hi = x[:, kept].min(axis=0), x[:, kept].max(axis=0)
    scales = tuple(FeatureScale(j, names[j], float(b), float(a), float(c))
                   for j, b, a, c in zip(kept, model.coef, lo, hi))
    widest = max(abs(f.coef) * (f.hi - f.lo) for f in scales)
    if not widest > 0:
        raise ValueError("every included feature has a zero coefficient or zero range")
    unit = widest / max_points
    offset = model.intercept + sum(f.coef * f.reference for f in scales)
    excluded.sort(key=lambda e: e.index)
    return NomogramSpec(scales, float(model.intercept), float(unit), float(offset), p, tuple(excluded),
                        float(max_points))


@dataclass
class ScoreResult:
    points: np.ndarray  # (n, included features)
    total: np.ndarray  # (n,)
    out_of_range: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def score(spec: NomogramSpec, x) -> ScoreResult:
    """Per-feature points and total score for rows in the original column layout."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != spec.n_features_in:
        raise ValueError(f"expected {spec.n_features_in} columns, got {x.shape[1]}")
    cols = x[:, spec.included]
    coef = np.array([f.coef for f in spec.features])
    ref = np.array([f.reference for f in spec.features])
    lo = np.array([f.lo for f in spec.features])
    hi = np.array([f.hi for f in spec.features])
    outside = ((cols < lo) | (cols > hi)).any(axis=1)
    if outside.any():
        logger.warning("nomogram: %d row(s) outside the reference ranges; points extrapolated", int(outside.sum()))
    points = coef * (cols - ref) / spec.unit
    total = points.sum(axis=1)
    if single:
        return ScoreResult(points[0], total[0], outside[0])
    return ScoreResult(points, total, outside)


def probability_of_score(spec: NomogramSpec, total):
    return sigmoid(spec.slope * np.asarray(total, dtype=np.float64) + spec.offset)


def linear_probability(spec: NomogramSpec, x) -> np.ndarray:
    """``sigmoid(beta_0 + beta^T x)`` straight from the coefficients."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    coef = np.array([f.coef for f in spec.features])
    return sigmoid(spec.intercept + x[:, spec.included] @ coef)


# --------------------------------------------------------------------------
# calibration and decision curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationBin:
    lo: float
    hi: float
    mean_predicted: float | None
    observed_rate: float | None
    count: int


def calibration_curve(probs, y, bins: int = 10) -> list[CalibrationBin]:
    """Equal-width bins on [0, 1]; the last bin is closed on the right."""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(probs) != len(y):
        raise ValueError("probs and y must have equal length")
    if bins < 1:
        raise ValueError("bins must be positive")
    if probs.size and (probs.min() < 0 or probs.max() > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    idx = np.minimum((probs * bins).astype(np.int64), bins - 1)
    out = []
    for b in range(bins):
        m = idx == b
        c = int(m.sum())
        out.append(CalibrationBin(b / bins, (b + 1) / bins,
                                  float(probs[m].mean()) if c else None, float(y[m].mean()) if c else None, c))
    return out


@dataclass(frozen=True)
class NetBenefitPoint:
    threshold: float
    model: float
    treat_all: float
    treat_none: float = 0.0


DEFAULT_THRESHOLDS = tuple(round(0.01 * i, 2) for i in range(1, 100))


def decision_curve(probs, y, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> list[NetBenefitPoint]:
    """Net benefit of the model, treat-all and treat-none; positive means ``prob >= t``."""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.int64).ravel()
    if len(probs) != len(y) or len(y) == 0:
        raise ValueError("probs and y must be non-empty and of equal length")
    n = len(y)
    prevalence = float(y.mean())
    out = []
    for t in thresholds:
        t = float(t)
        if not 0.0 < t < 1.0:
            raise ValueError(f"threshold {t} outside (0, 1)")
        odds = t / (1.0 - t)
        pos = probs >= t
        tp = int(np.sum(pos & (y == 1)))
        fp = int(np.sum(pos & (y == 0)))
        out.append(NetBenefitPoint(t, tp / n - fp / n * odds, prevalence - (1.0 - prevalence) * odds, 0.0))
    return out


def calibration_csv(bins: list[CalibrationBin]) -> str:
    return csv_text(["bin_lo", "bin_hi", "mean_predicted", "observed_rate", "count"],
                    [[b.lo, b.hi, b.mean_predicted, b.observed_rate, b.count] for b in bins])


def decision_csv(points: list[NetBenefitPoint]) -> str:
    return csv_text(["threshold", "model", "treat_all", "treat_none"],
                    [[p.threshold, p.model, p.treat_all, p.treat_none] for p in points])
