"""Descriptive statistics, association tests and their p-value tails."""

from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabrisk.data import CATEGORICAL, LABEL, NUMERIC, Column, Dataset, Schema
from tabrisk.stats import (
    CHI_SQUARE,
    RANK_SUM,
    T_TEST,
    association_csv,
    association_json,
    association_table,
    association_text,
    chi2_sf,
    chi_square,
    describe,
    midranks,
    normal_two_sided_p,
    normality,
    rank_sum,
    t_test,
    t_two_sided_p,
)

mpmath.mp.dps = 40


# ------------------------------------------------------------------- describe


def test_describe_single_value():
    s = describe([5.0])
    assert (s.mean, s.median, s.q1, s.q3, s.min, s.max, s.std, s.n) == (5, 5, 5, 5, 5, 5, 0, 1)


def test_describe_four_values():
    s = describe([1, 2, 3, 4])
    assert s.median == 2.5 and s.mean == 2.5
    assert s.q1 == 1.75 and s.q3 == 3.25  # linear interpolation between order statistics
    assert s.std == pytest.approx(math.sqrt(5 / 3))


def test_describe_empty():
    with pytest.raises(ValueError):
        describe([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=50))
def test_describe_order(values):
    s = describe(values)
    assert s.min <= s.q1 <= s.median <= s.q3 <= s.max


# ----------------------------------------------------------------- chi-square


@pytest.mark.parametrize(
    "table, expected, tol",
    [
        ([[548, 67], [349, 209]], 114.707, 0.05),
        ([[182, 433], [67, 491]], 54.11, 0.05),
        ([[451, 164], [121, 437]], 312.36, 0.5),
    ],
)
def test_chi_square_reference_tables(table, expected, tol):
    res = chi_square(table)
    assert res.test_kind == CHI_SQUARE
    assert abs(res.statistic - expected) <= tol
    assert res.df == 1


def test_chi_square_identical_rows_is_zero():
    res = chi_square([[10, 20, 30], [20, 40, 60]])
    assert res.statistic == pytest.approx(0.0, abs=1e-12)
    assert res.p_value == pytest.approx(1.0)


def test_chi_square_zero_marginal():
    with pytest.raises(ValueError):
        chi_square([[0, 0], [3, 4]])
    with pytest.raises(ValueError):
        chi_square([[0, 5], [0, 4]])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 200), st.integers(1, 200)), min_size=2, max_size=5), st.randoms())
def test_chi_square_symmetries(cols, rnd):
    table = np.array(cols).T
    base = chi_square(table).statistic
    perm = list(range(table.shape[1]))
    rnd.shuffle(perm)
    assert chi_square(table[:, perm]).statistic == pytest.approx(base, rel=1e-10, abs=1e-10)
    assert chi_square(table[::-1]).statistic == pytest.approx(base, rel=1e-10, abs=1e-10)


# --------------------------------------------------------------------- t-test


def test_t_test_hand_example():
    res = t_test([1, 2, 3, 4], [3, 4, 5, 6])
    # pooled variance 5/3, se = sqrt(5/3 * 1/2), difference 2
    assert res.statistic == pytest.approx(2.0 / math.sqrt(5 / 6), abs=1e-12)
    assert res.statistic == pytest.approx(2.1909, abs=1e-4)
    assert res.test_kind == T_TEST and res.df == 6


def test_t_test_identical_samples():
    res = t_test([1, 2, 3], [1, 2, 3])
    assert res.statistic == 0.0 and res.p_value == pytest.approx(1.0)


def test_t_test_errors():
    with pytest.raises(ValueError):
        t_test([1], [1, 2])
    with pytest.raises(ValueError):
        t_test([2, 2], [2, 2])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.integers(2, 20), st.floats(-100, 100), st.floats(0.1, 50), st.integers(0, 10_000))
def test_t_test_invariances(n1, n2, shift, scale, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n1), rng.normal(size=n2)
    t = t_test(a, b).statistic
    assert t_test(b, a).statistic == pytest.approx(-t, rel=1e-9, abs=1e-9)
    assert t_test(a + shift, b + shift).statistic == pytest.approx(t, rel=1e-6, abs=1e-6)
    assert t_test(a * scale, b * scale).statistic == pytest.approx(t, rel=1e-9, abs=1e-9)


# ------------------------------------------------------------------- rank sum


def _exact_rank_moments(a, b):
    """Mean and variance of W (rank sum of group a) over every equally likely assignment of the pooled mid-ranks."""
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    n1 = len(a)
    sums = [ranks[list(c)].sum() for c in itertools.combinations(range(len(pooled)), n1)]
    return float(np.mean(sums)), float(np.var(sums)), float(ranks[:n1].sum())


def test_rank_sum_hand_example():
    res = rank_sum([1, 2], [3, 4])
    mean, var, w = _exact_rank_moments(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    assert (w, mean, var) == (3.0, 5.0, pytest.approx(5 / 3))
    assert res.statistic == pytest.approx(-2 / math.sqrt(5 / 3), abs=1e-12)
    assert res.statistic == pytest.approx(-1.549, abs=5e-4)
    assert res.test_kind == RANK_SUM


def test_rank_sum_equal_samples():
    assert rank_sum([1, 2, 3], [1, 2, 3]).statistic == 0.0
    res = rank_sum([4, 4], [4, 4, 4])
    assert res.statistic == 0.0 and res.p_value == 1.0


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 7), st.data())
def test_rank_sum_matches_exact_enumeration(n1, data):
    n2 = data.draw(st.integers(1, 8 - n1))
    values = st.integers(0, 4)  # small range forces ties
    a = np.array(data.draw(st.lists(values, min_size=n1, max_size=n1)), float)
    b = np.array(data.draw(st.lists(values, min_size=n2, max_size=n2)), float)
    mean, var, w = _exact_rank_moments(a, b)
    res = rank_sum(a, b)
    if var <= 1e-12:
        assert res.statistic == 0.0
    else:
        assert res.statistic == pytest.approx((w - mean) / math.sqrt(var), rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 15), st.integers(2, 15), st.integers(0, 10_000))
def test_rank_sum_monotone_invariance(n1, n2, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n1), rng.normal(size=n2)
    z = rank_sum(a, b).statistic
    assert rank_sum(np.exp(a), np.exp(b)).statistic == pytest.approx(z, abs=1e-12)
    assert rank_sum(3 * a + 1, 3 * b + 1).statistic == pytest.approx(z, abs=1e-12)


# ------------------------------------------------------------------ normality


def test_normality_monte_carlo():
    passes = sum(normality(np.random.default_rng(s).normal(size=1000)).p_value > 0.05 for s in range(100))
    assert passes >= 95
    for s in range(5):
        lognormal = np.exp(np.random.default_rng(1000 + s).normal(size=1000))
        assert normality(lognormal).p_value < 0.001


def test_normality_robust_and_errors():
    x = 5.0 + 1e-9 * np.random.default_rng(0).normal(size=50)
    res = normality(x)
    assert math.isfinite(res.statistic) and 0.0 <= res.p_value <= 1.0
    with pytest.raises(ValueError):
        normality(np.arange(19.0))


def test_normality_matches_scipy_reference():
    from scipy import stats as sps

    for s in range(5):
        x = np.random.default_rng(s).gamma(3.0, size=200)
        ref = sps.normaltest(x)
        res = normality(x)
        assert res.statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert res.p_value == pytest.approx(ref.pvalue, rel=1e-8)


# ------------------------------------------------------------- p-value tails


@pytest.mark.parametrize("df", [1, 2, 3, 5, 10, 30])
@pytest.mark.parametrize("x", [0.01, 0.5, 1.0, 3.84, 10.0, 50.0])
def test_chi2_tail_against_mpmath(x, df):
    oracle = float(mpmath.gammainc(mpmath.mpf(df) / 2, mpmath.mpf(x) / 2, mpmath.inf, regularized=True))
    assert abs(chi2_sf(x, df) - oracle) < 1e-8


@pytest.mark.parametrize("df", [1, 2, 5, 10, 100, 1000])
@pytest.mark.parametrize("t", [-8.0, -2.5, -0.3, 0.0, 1.0, 2.1909, 9.42])
def test_t_tail_against_mpmath(t, df):
    f = lambda u: (1 + u * u / df) ** (-(df + 1) / 2)  # noqa: E731
    norm = mpmath.gamma(mpmath.mpf(df + 1) / 2) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(mpmath.mpf(df) / 2))
    oracle = float(2 * norm * mpmath.quad(f, [abs(t), mpmath.inf]))
    assert abs(t_two_sided_p(t, df) - oracle) < 1e-8


@pytest.mark.parametrize("z", [0.0, 0.5, 1.549, 1.96, 3.88, 6.0])
def test_normal_tail_against_mpmath(z):
    assert abs(normal_two_sided_p(z) - float(mpmath.erfc(z / mpmath.sqrt(2)))) < 1e-12


# ------------------------------------------------------------ association table


def _assoc_dataset(n=400, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    schema = Schema(
        (
            Column("age", NUMERIC),
            Column("noise", NUMERIC),
            Column("flag", NUMERIC),
            Column("sex", CATEGORICAL, ("F", "M")),
            Column("pain", CATEGORICAL, ("A", "B", "C")),
            Column("target", LABEL),
        )
    )
    num = np.column_stack([rng.normal(50 + 5 * y, 9), rng.uniform(size=n), rng.integers(0, 2, n)])
    cat = np.column_stack([rng.integers(0, 2, n), rng.integers(0, 3, n)])
    return Dataset(schema, num, cat, y)


def test_association_routing():
    ds = _assoc_dataset()
    rows = {r.feature: r for r in association_table(ds)}
    assert "target" not in rows
    assert rows["age"].test == T_TEST  # normal column
    assert rows["age"].result.statistic < 0  # negative minus positive class
    assert rows["noise"].test == RANK_SUM  # uniform noise is not normal at n=400
    assert rows["flag"].test == CHI_SQUARE  # binary numeric column
    assert rows["sex"].test == CHI_SQUARE
    assert {"pain_A", "pain_B", "pain_C"} <= set(rows)
    assert rows["age"].summaries["total"].n == ds.n_rows


def test_association_noise_column_mostly_insignificant():
    pvals = [
        {r.feature: r for r in association_table(_assoc_dataset(seed=s))}["noise"].result.p_value for s in range(40)
    ]
    assert np.mean(np.array(pvals) > 0.05) >= 0.85


def test_association_reports(heart_fixture):
    rows = association_table(heart_fixture)
    assert rows[0].feature == "Age"
    sex = next(r for r in rows if r.feature == "Sex")
    assert sex.test == CHI_SQUARE
    text = association_text(rows, heart_fixture)
    assert text.splitlines()[0].startswith("Feature")
    assert "Target (%)" in text
    csv = association_csv(rows)
    assert csv.startswith("feature,test,statistic,p_value,df\r\n")
    assert '"features"' in association_json(rows, heart_fixture)


def test_association_needs_both_classes():
    ds = _assoc_dataset()
    with pytest.raises(ValueError):
        association_table(ds.subset(np.flatnonzero(ds.labels == 1)))
