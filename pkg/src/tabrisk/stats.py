"""Descriptive summaries and two-group association tests.

Conventions (fixed so reports are reproducible):

* quartiles use linear interpolation between order statistics (type 7);
* ``t_test`` is the pooled-variance Student test, reporting
  ``(mean(b) - mean(a)) / se``;
* ``rank_sum`` reports the normal-approximation z of the rank sum of ``a``,
  using mid-ranks, a tie-corrected variance and no continuity correction;
* ``normality`` is the D'Agostino-Pearson K^2 omnibus test.

In :func:`association_table` the groups are ordered so that the sign of both
location statistics reads "negative class minus positive class".
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .data import Dataset
from .textio import csv_text

CHI_SQUARE = "chi_square"
T_TEST = "t_test"
RANK_SUM = "rank_sum"
NORMALITY = "normality"


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    min: float
    max: float


@dataclass(frozen=True)
class TestResult:
    test_kind: str
    statistic: float
    p_value: float
    df: float | None = None
    n: int | None = None


# --------------------------------------------------------------------------
# distribution tails
# --------------------------------------------------------------------------


def chi2_sf(x: float, df: float) -> float:
    """Upper tail of the chi-square distribution, Q(df/2, x/2)."""
    if x <= 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided Student-t p-value, I_{df/(df+t^2)}(df/2, 1/2)."""
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def normal_two_sided_p(z: float) -> float:
    return float(special.erfc(abs(z) / math.sqrt(2.0)))


def _clip_p(p: float) -> float:
    return min(1.0, max(0.0, p))


# --------------------------------------------------------------------------
# tests
# --------------------------------------------------------------------------


def describe(values) -> SummaryStats:
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("describe() needs at least one value")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    std = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return SummaryStats(int(x.size), float(x.mean()), std, float(med), float(q1), float(q3), float(x.min()), float(x.max()))


def chi_square(table) -> TestResult:
    """Pearson chi-square for a 2 x K table, no continuity correction."""
    obs = np.asarray(table, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] != 2 or obs.shape[1] < 2:
        raise ValueError("chi_square expects a 2 x K table with K >= 2")
    if np.any(obs < 0):
        raise ValueError("counts must be non-negative")
    rows, cols = obs.sum(axis=1), obs.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise ValueError("every row and column total must be positive")
    expected = np.outer(rows, cols) / obs.sum()
    stat = float(np.sum((obs - expected) ** 2 / expected))
    df = float(obs.shape[1] - 1)
    return TestResult(CHI_SQUARE, stat, _clip_p(chi2_sf(stat, df)), df=df, n=int(obs.sum()))


def t_test(a, b) -> TestResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("t_test needs at least two values per group")
    df = a.size + b.size - 2
    pooled = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / df
    if pooled <= 0:
        raise ValueError("zero pooled variance")
    diff = b.mean() - a.mean()
    se = math.sqrt(pooled * (1.0 / a.size + 1.0 / b.size))
    t = float(diff / se)
    return TestResult(T_TEST, t, _clip_p(t_two_sided_p(t, df)), df=float(df), n=int(a.size + b.size))


def midranks(x: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties given their average rank."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rank_sum(a, b) -> TestResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = a.size, b.size
    if n1 < 1 or n2 < 1:
        raise ValueError("rank_sum needs at least one value per group")
    pooled = np.concatenate([a, b])
    n = n1 + n2
    ranks = midranks(pooled)
    w = ranks[:n1].sum()
    expected = n1 * (n + 1) / 2.0
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = np.sum(tie_counts**3 - tie_counts)
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return TestResult(RANK_SUM, 0.0, 1.0, n=n)
    z = float((w - expected) / math.sqrt(var))
    return TestResult(RANK_SUM, z, _clip_p(normal_two_sided_p(z)), n=n)


def _skew_z(b1: float, n: int) -> float:
    y = b1 * math.sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)))
    beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2.0) * (n + 5) * (n + 7) * (n + 9))
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(0.5 * math.log(w2))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    ya = y / alpha
    return delta * math.log(ya + math.sqrt(ya * ya + 1.0))


def _kurtosis_z(b2: float, n: int) -> float:
    mean = 3.0 * (n - 1) / (n + 1)
    var = 24.0 * n * (n - 2) * (n - 3) / ((n + 1.0) ** 2 * (n + 3) * (n + 5))
    x = (b2 - mean) / math.sqrt(var)
    sqrt_beta1 = 6.0 * (n * n - 5 * n + 2) / ((n + 7.0) * (n + 9)) * math.sqrt(
        6.0 * (n + 3) * (n + 5) / (n * (n - 2.0) * (n - 3))
    )
    a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + math.sqrt(1.0 + 4.0 / sqrt_beta1**2))
    term1 = 1.0 - 2.0 / (9.0 * a)
    denom = 1.0 + x * math.sqrt(2.0 / (a - 4.0))
    term2 = float(np.cbrt((1.0 - 2.0 / a) / denom)) if denom != 0 else 0.0
    return (term1 - term2) / math.sqrt(2.0 / (9.0 * a))


def normality(values) -> TestResult:
    """D'Agostino-Pearson omnibus K^2 = Z_skew^2 + Z_kurt^2, p from chi-square(2)."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 20:
        raise ValueError("normality test needs n >= 20")
    xc = x - x.mean()
    m2 = np.mean(xc**2)
    if m2 <= 0:
        raise ValueError("normality test undefined for a constant sample")
    b1 = float(np.mean(xc**3) / m2**1.5)
    b2 = float(np.mean(xc**4) / m2**2)
    k2 = _skew_z(b1, n) ** 2 + _kurtosis_z(b2, n) ** 2
    return TestResult(NORMALITY, float(k2), _clip_p(chi2_sf(k2, 2.0)), df=2.0, n=n)


# --------------------------------------------------------------------------
# association report
# --------------------------------------------------------------------------


@dataclass
class AssociationRow:
    feature: str
    test: str
    result: TestResult
    normality: TestResult | None = None
    # per-class summaries: "positive" / "negative" / "total"
    summaries: dict = field(default_factory=dict)
    # for categorical rows: level -> {"positive": n, "negative": n, "total": n}
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "feature": self.feature,
            "test": self.test,
            "statistic": self.result.statistic,
            "p_value": self.result.p_value,
            "df": self.result.df,
        }
        if self.normality is not None:
            d["normality_statistic"] = self.normality.statistic
            d["normality_p_value"] = self.normality.p_value
        if self.summaries:
            d["summaries"] = {k: asdict(v) for k, v in self.summaries.items()}
        if self.counts:
            d["counts"] = self.counts
        return d


def _level_counts(flags: np.ndarray, y: np.ndarray) -> dict:
    return {
        "positive": int(np.sum(flags & (y == 1))),
        "negative": int(np.sum(flags & (y == 0))),
        "total": int(np.sum(flags)),
    }


def _categorical_rows(name: str, codes: np.ndarray, levels: list[str], y: np.ndarray) -> list[AssociationRow]:
    present = [k for k in range(len(levels)) if np.any(codes == k)]
    if len(present) <= 2:
        table = np.array([[np.sum((codes == k) & (y == cls)) for k in present] for cls in (1, 0)])
        if len(present) < 2 or np.any(table.sum(axis=1) == 0):
            return []
        row = AssociationRow(name, CHI_SQUARE, chi_square(table))
        row.counts = {levels[k]: _level_counts(codes == k, y) for k in present}
        return [row]
    rows = []
    for k in present:
        flag = codes == k
        table = np.array([[np.sum(flag & (y == cls)), np.sum(~flag & (y == cls))] for cls in (1, 0)])
        if np.any(table.sum(axis=0) == 0) or np.any(table.sum(axis=1) == 0):
            continue
        row = AssociationRow(f"{name}_{levels[k]}", CHI_SQUARE, chi_square(table))
        row.counts = {"yes": _level_counts(flag, y), "no": _level_counts(~flag, y)}
        rows.append(row)
    return rows


def association_table(ds: Dataset, alpha: float = 0.05) -> list[AssociationRow]:
    """Per-feature association with the binary label.

    Categorical features (and numeric ones with at most two distinct values)
    use chi-square, one table per level when there are more than two levels.
    Other numeric features are screened for normality at ``alpha`` and then
    use the t-test (normal) or the rank-sum test (non-normal).
    """
    y = ds.labels
    if ds.n_rows == 0 or len(np.unique(y)) < 2:
        raise ValueError("association_table needs both classes present")
    out: list[AssociationRow] = []
    for j, col in enumerate(ds.schema.numeric):
        x = ds.numeric_data[:, j]
        distinct = np.unique(x)
        if len(distinct) <= 2:
            codes = np.searchsorted(distinct, x)
            levels = [repr(float(v)) if v != int(v) else str(int(v)) for v in distinct]
            out.extend(_categorical_rows(col.name, codes, levels, y))
            continue
        pos, neg = x[y == 1], x[y == 0]
        try:
            norm = normality(x)
            is_normal = norm.p_value >= alpha
        except ValueError:
            norm, is_normal = None, False
        if is_normal:
            res = t_test(pos, neg)
        else:
            res = rank_sum(neg, pos)
        row = AssociationRow(col.name, res.test_kind, res, normality=norm)
        row.summaries = {"positive": describe(pos), "negative": describe(neg), "total": describe(x)}
        out.append(row)
    for j, col in enumerate(ds.schema.categorical):
        levels = list(col.categories) + ["<missing>"]
        out.extend(_categorical_rows(col.name, ds.categorical_data[:, j], levels, y))
    return out


def association_json(rows: list[AssociationRow], ds: Dataset) -> str:
    payload = {
        "n": ds.n_rows,
        "positive": int(ds.labels.sum()),
        "negative": int((ds.labels == 0).sum()),
        "features": [r.to_dict() for r in rows],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def _fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def association_text(rows: list[AssociationRow], ds: Dataset) -> str:
    """Aligned text table: feature, positive, negative, total, test, statistic, p."""
    y = ds.labels
    n_pos, n_neg = int(y.sum()), int((y == 0).sum())
    lines = [("Feature", "Positive", "Negative", "Total", "Test", "Statistic", "P-value")]
    for r in rows:
        lines.append((r.feature, "", "", "", r.test, f"{r.result.statistic:.4f}", _fmt_p(r.result.p_value)))
        if r.summaries:
            s = r.summaries
            lines.append(
                ("  Mean ± STD", *(f"{s[g].mean:.2f}±{s[g].std:.2f}" for g in ("positive", "negative", "total")), "", "", "")
            )
            lines.append(("  Median", *(f"{s[g].median:.2f}" for g in ("positive", "negative", "total")), "", "", ""))
            lines.append(("  Q1, Q3", *(f"{s[g].q1:.2f}, {s[g].q3:.2f}" for g in ("positive", "negative", "total")), "", "", ""))
            lines.append(("  Min, Max", *(f"{s[g].min:.2f}, {s[g].max:.2f}" for g in ("positive", "negative", "total")), "", "", ""))
        for level, c in r.counts.items():
            n_all = n_pos + n_neg
            lines.append(
                (
                    f"  {level} (%)",
                    f"{c['positive']}({100 * c['positive'] / n_pos:.2f}%)",
                    f"{c['negative']}({100 * c['negative'] / n_neg:.2f}%)",
                    f"{c['total']}({100 * c['total'] / n_all:.2f}%)",
                    "",
                    "",
                    "",
                )
            )
    lines.append(("Target (%)", f"{n_pos}({100 * n_pos / len(y):.2f}%)", f"{n_neg}({100 * n_neg / len(y):.2f}%)", str(len(y)), "", "", ""))
    widths = [max(len(row[i]) for row in lines) for i in range(7)]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in lines) + "\n"


def association_csv(rows: list[AssociationRow]) -> str:
    """One line per test: feature, test, statistic, p-value, degrees of freedom."""
    return csv_text(["feature", "test", "statistic", "p_value", "df"],
                    [[r.feature, r.test, r.result.statistic, r.result.p_value, r.result.df] for r in rows])
