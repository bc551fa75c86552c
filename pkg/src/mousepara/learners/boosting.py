"""Gradient boosting for binary outcomes with logistic loss.

Each round fits a depth-limited squared-error tree to the current
pseudo-residuals (label minus predicted probability), then replaces each
leaf value with the one-step Newton update for the logistic loss and adds
the shrunken tree to the score. The per-round training loss is recorded
so callers can check that it never increases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mousepara.learners.base import FitError, register
from mousepara.learners.tree import Tree, grow_regression, tree_from_dict, tree_to_dict

_LEAF_CLIP = 10.0


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class BoostingParams:
    f0: float
    shrinkage: float
    trees: list[Tree]
    train_loss_path: list[float]


def fit_boosting(
    X: np.ndarray, y: np.ndarray, n_trees: int, depth: int, shrinkage: float
) -> BoostingParams:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p_bar = y.mean()
    if p_bar in (0.0, 1.0):
        raise FitError("both classes must be present for boosting")
    f0 = float(np.log(p_bar / (1.0 - p_bar)))
    score = np.full(y.shape[0], f0)
    trees: list[Tree] = []
    losses: list[float] = []
    for _ in range(n_trees):
        prob = _sigmoid(score)
        residual = y - prob
        hessian = prob * (1.0 - prob)
        tree, leaf_of_row = grow_regression(X, residual, max_depth=depth)
        gamma = np.empty(len(tree.leaves))
        for leaf in tree.leaves:
            members = leaf_of_row == leaf.leaf_id
            denom = max(float(hessian[members].sum()), 1e-12)
            value = float(residual[members].sum()) / denom
            value = float(np.clip(value, -_LEAF_CLIP, _LEAF_CLIP))
            leaf.value = value
            gamma[leaf.leaf_id] = value
        trees.append(tree)
        score = score + shrinkage * gamma[leaf_of_row]
        losses.append(float(np.mean(np.logaddexp(0.0, score) - y * score)))
    return BoostingParams(f0=f0, shrinkage=shrinkage, trees=trees, train_loss_path=losses)


def _fit(X: np.ndarray, y: np.ndarray, hp: dict, seed: int):
    params = fit_boosting(
        X, y, n_trees=hp["n_trees"], depth=hp["depth"], shrinkage=hp["shrinkage"]
    )
    return params, {"train_loss_path": params.train_loss_path}


def decision(params: BoostingParams, X: np.ndarray) -> np.ndarray:
    score = np.full(X.shape[0], params.f0)
    for tree in params.trees:
        score += params.shrinkage * tree.predict_value(X)
    return score


def _proba(params: BoostingParams, X: np.ndarray) -> np.ndarray:
    return _sigmoid(decision(params, X))


def _predict(params: BoostingParams, X: np.ndarray) -> np.ndarray:
    return (decision(params, X) >= 0.0).astype(int)


def _export(params: BoostingParams) -> dict:
    return {
        "f0": params.f0,
        "shrinkage": params.shrinkage,
        "trees": [tree_to_dict(t) for t in params.trees],
    }


def _import(d: dict) -> BoostingParams:
    return BoostingParams(
        f0=d["f0"],
        shrinkage=d["shrinkage"],
        trees=[tree_from_dict(t) for t in d["trees"]],
        train_loss_path=[],
    )


register("boosting", _fit, _predict, _proba, _export, _import)
