"""Trees, forests, boosting, linear models, MLP and feature ranking."""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabrisk.classical import (
    DEFAULTS,
    ROSTER,
    ClassifierSpec,
    ConvergenceError,
    ForestModel,
    feature_importance,
    fit_boosted,
    fit_classifier,
    fit_forest,
    fit_lda,
    fit_linear,
    fit_logistic,
    fit_mlp,
    fit_tree,
    model_from_dict,
    rank_importances,
    select_top,
)
from tabrisk.classical.tree import LEAF, gini

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def _depth2_rule(n=200, p=10, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, p))
    y = ((x[:, 2] > 0.5) ^ (x[:, 7] > 0.5)).astype(int)
    return x, y


# ---------------------------------------------------------------------- trees


def test_gini_values():
    assert gini(2.0, 4.0) == 0.5
    assert gini(4.0, 4.0) == 0.0 and gini(0.0, 4.0) == 0.0


def test_single_class_gives_one_certain_leaf():
    tree = fit_tree(np.random.default_rng(0).normal(size=(9, 3)), np.ones(9, int))
    assert tree.n_nodes == 1
    np.testing.assert_array_equal(tree.value[0], [0.0, 1.0])


@pytest.mark.parametrize("splitter", ["best", "random"])
def test_xor_depth_two(splitter):
    tree = fit_tree(XOR_X, XOR_Y, {"max_depth": 2, "splitter": splitter}, rng=np.random.default_rng(1))
    assert np.array_equal(np.argmax(tree.predict(XOR_X), axis=1), XOR_Y)
    assert tree.depth <= 2


def test_xor_has_a_depth_two_solution_by_exhaustion():
    # oracle: every depth-2 tree of axis splits at 0.5 with majority leaves
    def leaf_of(row, f_root, f_left, f_right):
        go_left = row[f_root] <= 0.5
        return (go_left, row[f_left if go_left else f_right] <= 0.5)

    perfect = 0
    for f_root, f_left, f_right in itertools.product(range(2), repeat=3):
        leaves = [leaf_of(r, f_root, f_left, f_right) for r in XOR_X]
        pred = [XOR_Y[[j for j, m in enumerate(leaves) if m == leaf]].mean() > 0.5 for leaf in leaves]
        perfect += np.array_equal(np.array(pred, int), XOR_Y)
    assert perfect > 0


def test_tree_respects_max_depth_and_probabilities():
    x, y = _depth2_rule()
    for depth in (1, 3, 5):
        tree = fit_tree(x, y, {"max_depth": depth})
        assert tree.depth <= depth
        np.testing.assert_allclose(tree.value.sum(axis=1), 1.0)
        assert np.all(np.isfinite(tree.threshold[tree.feature != LEAF]))
        assert np.all((tree.impurity >= 0) & (tree.impurity <= 0.5))


def test_full_tree_fits_training_data():
    x, y = _depth2_rule(seed=3)
    tree = fit_tree(x, y, {"laplace": 0.0})
    assert np.mean(np.argmax(tree.predict(x), axis=1) == y) == 1.0


def _weighted_child_gini(x, y, f, thr):
    left = x[:, f] <= thr
    out = 0.0
    for side in (left, ~left):
        if side.any():
            out += side.sum() * gini(y[side].sum(), side.sum())
    return out / len(y)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.integers(1, 2), st.integers(0, 100_000))
def test_root_split_is_optimal_by_brute_force(n, p, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=(n, p)).astype(float)
    y = rng.integers(0, 2, n)
    tree = fit_tree(x, y, {"max_depth": 1})
    candidates = [
        _weighted_child_gini(x, y, f, t)
        for f in range(p)
        for t in np.unique(x[:, f])[:-1]
    ]
    parent = gini(y.sum(), n)
    if tree.feature[0] == LEAF:
        assert parent == 0.0 or not candidates
    else:
        chosen = _weighted_child_gini(x, y, tree.feature[0], tree.threshold[0])
        assert chosen == pytest.approx(min(candidates), abs=1e-12)
        assert chosen <= parent + 1e-12


# -------------------------------------------------------------------- forests


def test_one_tree_forest_equals_tree():
    x, y = _depth2_rule(n=80)
    forest = ForestModel("random_forest", n_estimators=1, bootstrap=False, max_features=None, seed=4).fit(x, y)
    from tabrisk.rng import derive_rng

    tree = fit_tree(x, y, {"max_features": None}, rng=derive_rng(4, "forest", 0))
    np.testing.assert_array_equal(forest.predict_proba(x), tree.predict(x))


def test_tuned_extra_trees_on_46_wide_features():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(300, 46))
    y = (x[:, 0] + x[:, 5] > 0).astype(int)
    spec = ClassifierSpec("extra_trees", {"n_estimators": 176, "max_depth": 19, "bootstrap": True}, seed=1)
    model = fit_classifier(spec, x, y)
    assert len(model.trees) == 176 and model.bootstrap
    assert max(t.depth for t in model.trees) <= 19


@pytest.mark.parametrize("kind", ["random_forest", "extra_trees"])
def test_forest_determinism(kind):
    x, y = _depth2_rule(n=100)
    a = fit_forest(x, y, kind, seed=5, n_estimators=10).predict_proba(x)
    b = fit_forest(x, y, kind, seed=5, n_estimators=10).predict_proba(x)
    np.testing.assert_array_equal(a, b)
    c = fit_forest(x, y, kind, seed=6, n_estimators=10).predict_proba(x)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("kind", ["random_forest", "extra_trees"])
def test_forests_learn_a_depth_two_rule(kind):
    # label is a depth-2 threshold tree on features 2 and 7 of 10; 200 training rows
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=(1200, 10))
        y = np.where(x[:, 2] > 0.5, x[:, 7] > 0.3, x[:, 7] > 0.7).astype(int)
        model = fit_forest(x[:200], y[:200], kind, seed=seed, n_estimators=100)
        assert np.mean(model.predict(x[200:]) == y[200:]) >= 0.95


# ---------------------------------------------------------------- importances


def test_importances_sum_to_one_and_zero_for_constant():
    x, y = _depth2_rule(n=150)
    x[:, 4] = 1.0
    for kind in ("random_forest", "extra_trees"):
        ranked = feature_importance(fit_forest(x, y, kind, n_estimators=20, seed=1))
        assert ranked.importances.sum() == pytest.approx(1.0, abs=1e-9)
        assert ranked.importances[4] == 0.0
        assert np.all(np.diff(ranked.importances[ranked.order]) <= 0)


def test_single_informative_feature_ranked_first():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(120, 6))
        y = (x[:, 0] > 0).astype(int)
        ranked = feature_importance(fit_forest(x, y, "random_forest", n_estimators=30, seed=seed))
        assert ranked.order[0] == 0


def test_rank_ties_break_by_index_and_select_top():
    ranked = rank_importances(np.array([0.2, 0.4, 0.2, 0.2]), top_n=2)
    assert ranked.order.tolist() == [1, 0, 2, 3]
    x = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(select_top(ranked, x), x[:, [1, 0]])
    np.testing.assert_array_equal(select_top(ranked, x, 4), x[:, [1, 0, 2, 3]])
    with pytest.raises(ValueError):
        select_top(ranked, x, 5)


def test_ranking_csv_round_trip(tmp_path):
    ranked = rank_importances(np.array([0.1, 0.6, 0.3]), ["a", "b", "c"], top_n=2)
    ranked.to_csv(tmp_path / "r.csv")
    back = type(ranked).from_csv(tmp_path / "r.csv", top_n=2)
    assert back.order.tolist() == [1, 2, 0]
    assert back.names == ["a", "b", "c"]
    ranked20 = rank_importances(np.random.default_rng(0).uniform(size=46), top_n=20)
    assert len(ranked20.selected()) == 20


# ------------------------------------------------------------------- boosting


def _threshold_data():
    x = np.linspace(-1, 1, 40)[:, None]
    return x, (x[:, 0] > 0.1).astype(int)


@pytest.mark.parametrize("kind", ["gradient_boost", "adaboost"])
def test_boosting_separates_threshold_data(kind):
    x, y = _threshold_data()
    model = fit_boosted(x, y, ClassifierSpec(kind, {"n_estimators": 10}))
    assert np.mean(model.predict(x) == y) == 1.0


@pytest.mark.parametrize("kind", ["gradient_boost", "adaboost"])
def test_zero_rounds_is_prior(kind):
    x, y = _threshold_data()
    model = fit_boosted(x, y, ClassifierSpec(kind, {"n_estimators": 0}))
    np.testing.assert_allclose(model.predict_proba(x)[:, 1], y.mean(), atol=1e-9)


def test_gradient_boost_training_loss_non_increasing():
    x, y = _depth2_rule(n=150)
    model = fit_boosted(x, y, ClassifierSpec("gradient_boost", {"n_estimators": 40}))
    assert np.all(np.diff(model.train_loss) <= 1e-12)


def test_boosting_rejects_bad_learning_rate():
    with pytest.raises(ValueError):
        ClassifierSpec("gradient_boost", {"learning_rate": 0.0})
    with pytest.raises(ValueError):
        fit_boosted(np.zeros((2, 1)), np.array([0, 1]), ClassifierSpec("lda"))


# --------------------------------------------------------------------- linear


def test_logistic_separable_1d():
    x = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    model = fit_linear(x, y, "logistic_regression")
    assert np.mean(model.predict(x) == y) == 1.0


def test_lda_identical_classes_predicts_majority():
    rng = np.random.default_rng(0)
    base = rng.normal(size=(10, 2))
    x = np.vstack([base, base, base])  # class 1 has the same points twice
    y = np.array([0] * 10 + [1] * 20)
    model = fit_lda(x, y)
    np.testing.assert_allclose(model.coef, 0.0, atol=1e-9)
    assert np.all(model.predict(rng.normal(size=(50, 2)) * 10) == 1)
    with pytest.raises(ValueError):
        fit_lda(np.zeros((3, 1)), np.array([0, 1, 1]))


def test_logistic_duplicated_column_keeps_accuracy():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 3))
    y = (x @ [1.0, -2.0, 0.5] + rng.normal(0, 0.5, 200) > 0).astype(int)
    a = np.mean(fit_logistic(x, y).predict(x) == y)
    xd = np.column_stack([x, x[:, 1]])
    b = np.mean(fit_logistic(xd, y).predict(xd) == y)
    assert abs(a - b) <= 1e-3


def test_logistic_newton_matches_gradient_descent():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(100, 2))
    y = (x[:, 0] + rng.normal(0, 1, 100) > 0).astype(int)
    gd = fit_logistic(x, y, tol=1e-9, max_iter=100_000)
    nt = fit_logistic(x, y, tol=1e-10, solver="newton")
    np.testing.assert_allclose(gd.coef, nt.coef, atol=1e-6)
    with pytest.raises(ValueError):
        fit_logistic(x, y, solver="lbfgs")


def test_newton_raises_when_iterations_run_out():
    x = np.array([[-1.0], [0.2], [1.0], [-0.3]])
    with pytest.raises(ConvergenceError):
        fit_logistic(x, np.array([0, 0, 1, 1]), solver="newton", max_iter=1)


# ------------------------------------------------------------------------ MLP


def test_mlp_xor():
    solved = sum(
        np.array_equal(fit_mlp(XOR_X, XOR_Y, seed=s, hidden=8, epochs=2000, lr=0.01, batch_size=4).predict(XOR_X), XOR_Y)
        for s in range(10)
    )
    assert solved >= 8


# --------------------------------------------------------------- every kind


@pytest.mark.parametrize("kind", ROSTER)
def test_every_kind_predicts_valid_probabilities(kind):
    x, y = _depth2_rule(n=120)
    params = {"epochs": 20} if kind == "mlp" else {}
    if "n_estimators" in DEFAULTS[kind]:
        params["n_estimators"] = 15
    model = fit_classifier(ClassifierSpec(kind, params, seed=3), x, y)
    proba = model.predict_proba(x)
    assert proba.shape == (120, 2)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
    assert np.all((proba >= 0) & (proba <= 1))
    np.testing.assert_array_equal(model.predict(x), np.argmax(proba, axis=1))
    clone = model_from_dict(model.to_dict())
    assert np.max(np.abs(clone.predict_proba(x) - proba)) == 0.0


def test_roster_has_ten_kinds_and_rejects_unknown():
    assert len(ROSTER) == 10
    with pytest.raises(ValueError):
        ClassifierSpec("xgboost")
    with pytest.raises(ValueError):
        ClassifierSpec("extra_trees", {"n_trees": 5})
