"""Learner suite: oracles, equivalences, determinism, sanity floors."""

import json

import numpy as np
import pytest

from mousepara.learners import (
    ConvergenceError,
    Dataset,
    FitError,
    complexity_key,
    default_grid,
    fit,
    init_params,
    model_from_dict,
    model_to_dict,
    nn_loss_and_grad,
    pack_params,
    validate_hp,
)
from mousepara.learners.boosting import fit_boosting
from mousepara.learners.logistic import fit_logistic_irls
from mousepara.learners.neural import n_parameters, weight_mask
from mousepara.learners.svm import SVMParams, decision as svm_decision
from mousepara.learners.tree import (
    Tree,
    grow_classification,
    grow_regression,
    prune_cost_complexity,
)

FEATURES2 = ("f0", "f1")


def dataset(X, y, names=None):
    X = np.asarray(X, dtype=float)
    names = names or tuple(f"f{i}" for i in range(X.shape[1]))
    return Dataset(X=X, y=np.asarray(y, dtype=int), feature_names=names)


def separable_toy(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    # guard against an accidental single-class draw
    y[0], y[1] = 0, 1
    return dataset(X, y, FEATURES2)


ALL_KINDS_HP = [
    ("logistic", {}),
    ("tree", {"cp": 0.001}),
    ("random_forest", {"n_trees": 30, "m": 1}),
    ("boosting", {"n_trees": 60, "depth": 2, "shrinkage": 0.1}),
    ("svm", {"C": 10.0, "gamma": 1.0}),
    ("neural_net", {"hidden": 5, "decay": 0.0}),
]


# ---------------------------------------------------------------------------
# Logistic regression


def test_logistic_null_data_slopes_near_zero():
    rng = np.random.default_rng(1)
    n = 600
    X = rng.normal(size=(n, 4))
    y = rng.integers(0, 2, size=n)
    params = fit_logistic_irls(X, y)
    rate = y.mean()
    assert abs(params.coef[0] - np.log(rate / (1 - rate))) < 3 * params.se[0]
    for j in range(1, 5):
        assert abs(params.coef[j]) < 3 * params.se[j]


def test_logistic_zero_coefficients_give_half_probability():
    model = fit("logistic", separable_toy(), {}, seed=0)
    model.params.coef[:] = 0.0
    proba = model.predict_proba(np.random.default_rng(0).normal(size=(7, 2)))
    assert np.all(proba == 0.5)


def test_logistic_matches_sklearn_oracle():
    sklearn = pytest.importorskip("sklearn.linear_model")
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 3))
    y = (X @ np.array([1.0, -2.0, 0.5]) + rng.normal(size=300) > 0).astype(int)
    mine = fit_logistic_irls(X, y)
    ref = sklearn.LogisticRegression(penalty=None, tol=1e-10, max_iter=2000).fit(X, y)
    assert np.allclose(mine.coef[1:], ref.coef_[0], atol=1e-4)
    assert np.isclose(mine.coef[0], ref.intercept_[0], atol=1e-4)


def test_logistic_converges_on_separated_data():
    X = np.linspace(-2, 2, 40)[:, None]
    y = (X[:, 0] > 0).astype(int)
    params = fit_logistic_irls(X, y)  # complete separation saturates the fit
    preds = (params.coef[0] + X @ params.coef[1:] > 0).astype(int)
    assert np.array_equal(preds.ravel(), y)


# ---------------------------------------------------------------------------
# Trees


def test_tree_finds_the_clean_threshold():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])
    tree = grow_classification(X, y)
    assert tree.root.feature == 0
    assert tree.root.threshold == 2.5
    assert np.array_equal((tree.predict_value(X) >= 0.5).astype(int), y)


def test_tree_tie_breaks_to_lowest_feature():
    # both features split perfectly; feature 0 must win
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y = np.array([0, 0, 1, 1])
    tree = grow_classification(X, y)
    assert tree.root.feature == 0


def test_pruning_collapses_noise_to_majority():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 3))
    y = rng.integers(0, 2, size=200)
    y[0] = 1 - y[1]
    data = dataset(X, y)
    heavy = fit("tree", data, {"cp": 0.5}, seed=0)
    assert heavy.params.root.is_leaf
    unpruned = fit("tree", data, {"cp": 0.0}, seed=0)
    assert not unpruned.params.root.is_leaf


def test_pruning_keeps_real_structure():
    data = separable_toy(seed=4)
    model = fit("tree", data, {"cp": 0.01}, seed=0)
    acc = np.mean(model.predict(data.X) == data.y)
    assert acc >= 0.95


def test_tree_monotone_transform_invariance():
    # the fitted partition is transform-invariant; midpoints between two
    # training values are not, so evaluate on training-valued points
    rng = np.random.default_rng(5)
    X = rng.normal(size=(150, 3))
    y = (X[:, 0] * X[:, 1] > 0).astype(int)
    X_test = X[rng.integers(0, 150, size=60)]
    for hp in ({"cp": 0.0}, {"cp": 0.01}):
        base = fit("tree", dataset(X, y), hp, seed=0)
        cube = fit("tree", dataset(X**3, y), hp, seed=0)
        assert np.array_equal(base.predict(X), cube.predict(X**3))
        assert np.array_equal(base.predict(X_test), cube.predict(X_test**3))


def test_regression_tree_depth_limit():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 2))
    r = rng.normal(size=100)
    tree, assignment = grow_regression(X, r, max_depth=1)
    assert len(tree.leaves) <= 2
    assert np.array_equal(tree.leaf_assignment(X), assignment)


# ---------------------------------------------------------------------------
# Random forest


def test_rf_single_tree_no_bootstrap_equals_unpruned_tree():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(120, 4))
    y = (X[:, 0] + X[:, 2] > 0).astype(int)
    data = dataset(X, y)
    rf = fit("random_forest", data, {"n_trees": 1, "m": 4, "bootstrap": False}, seed=9)
    single = fit("tree", data, {"cp": 0.0}, seed=9)
    X_test = rng.normal(size=(80, 4))
    assert np.array_equal(rf.predict(X_test), single.predict(X_test))


def test_rf_probability_is_vote_fraction():
    data = separable_toy(seed=8)
    B = 16
    rf = fit("random_forest", data, {"n_trees": B, "m": 2}, seed=1)
    proba = rf.predict_proba(data.X)
    votes = proba * B
    assert np.allclose(votes, np.round(votes), atol=1e-12)


# ---------------------------------------------------------------------------
# Boosting


def test_depth1_single_tree_shrinkage1_equals_gini_stump():
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        n = 120  # balanced labels: intercept score is exactly zero
        X = rng.normal(size=(n, 5))
        y = np.zeros(n, dtype=int)
        y[: n // 2] = 1
        y = y[rng.permutation(n)]
        X[:, 2] += y * rng.uniform(0.8, 1.6)  # informative feature
        data = dataset(X, y)
        boost = fit("boosting", data, {"n_trees": 1, "depth": 1, "shrinkage": 1.0}, seed=0)
        stump_tree = grow_classification(X, y, max_depth=1)
        X_test = rng.normal(size=(200, 5))
        stump_pred = (stump_tree.predict_value(X_test) >= 0.5).astype(int)
        assert np.array_equal(boost.predict(X_test), stump_pred), f"seed {seed}"


def test_boosting_training_loss_non_increasing():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(200, 4))
    y = (X[:, 0] > 0.3).astype(int)
    y[:8] = 1 - y[:8]
    for shrinkage in (0.01, 0.1):
        params = fit_boosting(X, y, n_trees=40, depth=2, shrinkage=shrinkage)
        losses = np.array(params.train_loss_path)
        assert np.all(np.diff(losses) <= 1e-12)


# ---------------------------------------------------------------------------
# SVM


def test_svm_agrees_with_sklearn_oracle():
    svm_mod = pytest.importorskip("sklearn.svm")
    rng = np.random.default_rng(10)
    X = rng.normal(size=(150, 3))
    y = (X[:, 0] ** 2 + X[:, 1] > 1).astype(int)
    data = dataset(X, y)
    mine = fit("svm", data, {"C": 1.0, "gamma": 0.5}, seed=0)
    ref = svm_mod.SVC(C=1.0, gamma=0.5).fit(mine.standardizer.apply(X), y)
    X_test = rng.normal(size=(300, 3))
    agree = np.mean(mine.predict(X_test) == ref.predict(mine.standardizer.apply(X_test)))
    assert agree >= 0.95


def test_svm_boundary_tie_predicts_one():
    params = SVMParams(
        support_vectors=np.array([[1.0, 0.0], [-1.0, 0.0]]),
        coef=np.array([1.0, -1.0]),
        b=0.0,
        gamma=1.0,
        converged=True,
    )
    X = np.array([[0.0, 0.0]])  # equidistant: decision exactly 0
    assert svm_decision(params, X)[0] == 0.0
    model_dict = {
        "version": 1,
        "kind": "svm",
        "hyperparams": {"C": 1.0, "gamma": 1.0},
        "seed": 0,
        "feature_names": ["a", "b"],
        "standardizer": None,
        "params": {
            "support_vectors": params.support_vectors.tolist(),
            "coef": params.coef.tolist(),
            "b": 0.0,
            "gamma": 1.0,
            "converged": True,
        },
    }
    model = model_from_dict(model_dict)
    assert model.predict(X)[0] == 1


def test_svm_has_no_probability_interface():
    model = fit("svm", separable_toy(), {"C": 1.0, "gamma": 0.5}, seed=0)
    with pytest.raises(FitError):
        model.predict_proba(separable_toy().X)


# ---------------------------------------------------------------------------
# Neural network


def test_nn_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(10, 4))
    y = rng.integers(0, 2, size=10)
    for _ in range(10):
        hidden = int(rng.integers(1, 5))
        decay = float(rng.uniform(0, 0.2))
        theta = rng.normal(scale=0.8, size=n_parameters(4, hidden))
        _, grad = nn_loss_and_grad(theta, X, y, hidden, decay)
        fd = np.empty_like(theta)
        eps = 1e-6
        for i in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[i] += eps
            down[i] -= eps
            fd[i] = (
                nn_loss_and_grad(up, X, y, hidden, decay)[0]
                - nn_loss_and_grad(down, X, y, hidden, decay)[0]
            ) / (2 * eps)
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), np.linalg.norm(fd))
        assert rel < 1e-4


def test_nn_decay_gradient_is_exactly_2_lambda_w():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(12, 3))
    y = rng.integers(0, 2, size=12)
    hidden, lam = 4, 0.07
    theta = rng.normal(size=n_parameters(3, hidden))
    _, g0 = nn_loss_and_grad(theta, X, y, hidden, 0.0)
    _, g1 = nn_loss_and_grad(theta, X, y, hidden, lam)
    mask = weight_mask(3, hidden)
    assert np.allclose((g1 - g0)[mask], 2 * lam * theta[mask], atol=1e-12)
    assert np.allclose((g1 - g0)[~mask], 0.0, atol=1e-12)


def test_nn_zero_weights_balanced_batch_zero_output_bias_gradient():
    X = np.random.default_rng(13).normal(size=(8, 3))
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    theta = np.zeros(n_parameters(3, 2))
    _, grad = nn_loss_and_grad(theta, X, y, 2, 0.0)
    assert grad[-1] == pytest.approx(0.0, abs=1e-15)


# ---------------------------------------------------------------------------
# Cross-learner contracts


@pytest.mark.parametrize("kind,hp", ALL_KINDS_HP)
def test_sanity_floor_on_separable_toy(kind, hp):
    data = separable_toy()
    model = fit(kind, data, hp, seed=3)
    assert np.mean(model.predict(data.X) == data.y) >= 0.95


@pytest.mark.parametrize("kind,hp", ALL_KINDS_HP)
def test_seed_determinism(kind, hp):
    data = separable_toy(seed=14)
    X_test = np.random.default_rng(15).normal(size=(50, 2))
    a = fit(kind, data, hp, seed=42).predict(X_test)
    b = fit(kind, data, hp, seed=42).predict(X_test)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", ["logistic", "svm", "neural_net"])
def test_standardized_kinds_invariant_to_column_scaling(kind):
    hp = dict(ALL_KINDS_HP)[kind]
    rng = np.random.default_rng(16)
    X = rng.normal(size=(120, 2))
    y = (X[:, 0] - X[:, 1] > 0).astype(int)
    X_test = rng.normal(size=(40, 2))
    base = fit(kind, dataset(X, y, FEATURES2), hp, seed=5)
    scaled_X = X.copy()
    scaled_X[:, 1] *= 4.0  # power of two: standardization is bit-identical
    scaled_test = X_test.copy()
    scaled_test[:, 1] *= 4.0
    scaled = fit(kind, dataset(scaled_X, y, FEATURES2), hp, seed=5)
    assert np.array_equal(base.predict(X_test), scaled.predict(scaled_test))


@pytest.mark.parametrize("kind,hp", ALL_KINDS_HP)
def test_model_dump_reloads_bit_exact(kind, hp):
    data = separable_toy(seed=17)
    model = fit(kind, data, hp, seed=1)
    X_test = np.random.default_rng(18).normal(size=(60, 2))
    dumped = json.loads(json.dumps(model_to_dict(model)))
    reloaded = model_from_dict(dumped)
    assert np.array_equal(model.predict(X_test), reloaded.predict(X_test))
    if kind != "svm":
        assert np.array_equal(model.predict_proba(X_test), reloaded.predict_proba(X_test))


def test_single_class_data_is_an_error():
    X = np.random.default_rng(19).normal(size=(20, 2))
    data = dataset(X, np.ones(20))
    for kind, hp in ALL_KINDS_HP:
        with pytest.raises(FitError):
            fit(kind, data, hp, seed=0)


def test_feature_count_mismatch_at_predict_errors():
    model = fit("logistic", separable_toy(), {}, seed=0)
    with pytest.raises(ValueError):
        model.predict(np.zeros((3, 5)))


def test_default_grids_and_complexity_keys():
    for kind in ("logistic", "tree", "random_forest", "boosting", "svm", "neural_net"):
        grid = default_grid(kind, p=11)
        assert grid
        for hp in grid:
            validate_hp(kind, hp, p=11)
            complexity_key(kind, hp)
    ms = [hp["m"] for hp in default_grid("random_forest", p=11)]
    assert ms == sorted(set(ms)) and all(1 <= m <= 11 for m in ms)
    # least-complex ordering: heavier pruning sorts first for trees
    tree_keys = [complexity_key("tree", hp) for hp in default_grid("tree", 11)]
    assert tree_keys[-1] == min(tree_keys)  # cp = 0.05 is least complex
