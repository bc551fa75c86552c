"""Random forest: bootstrapped, unpruned Gini trees with m random
candidate predictors at every split. The ensemble probability is the
fraction of trees voting class 1, so it is always a multiple of 1/B.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mousepara.learners.base import register
from mousepara.learners.tree import Tree, grow_classification, tree_from_dict, tree_to_dict
from mousepara.seeding import derive_rng


@dataclass
class ForestParams:
    trees: list[Tree]


def fit_forest(
    X: np.ndarray, y: np.ndarray, n_trees: int, m: int, bootstrap: bool, seed: int
) -> ForestParams:
    n = X.shape[0]
    trees = []
    for b in range(n_trees):
        rng = derive_rng(seed, "rf_tree", b)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(grow_classification(X, y, rows=rows, max_features=m, rng=rng))
    return ForestParams(trees=trees)


def _fit(X: np.ndarray, y: np.ndarray, hp: dict, seed: int):
    params = fit_forest(
        X, y, n_trees=hp["n_trees"], m=hp["m"], bootstrap=hp.get("bootstrap", True), seed=seed
    )
    return params, {}


def _proba(params: ForestParams, X: np.ndarray) -> np.ndarray:
    votes = np.zeros(X.shape[0])
    for tree in params.trees:
        votes += tree.predict_value(X) >= 0.5
    return votes / len(params.trees)


def _predict(params: ForestParams, X: np.ndarray) -> np.ndarray:
    return (_proba(params, X) >= 0.5).astype(int)


def _export(params: ForestParams) -> dict:
    return {"trees": [tree_to_dict(t) for t in params.trees]}


def _import(d: dict) -> ForestParams:
    return ForestParams(trees=[tree_from_dict(t) for t in d["trees"]])


register("random_forest", _fit, _predict, _proba, _export, _import)
