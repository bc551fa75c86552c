"""Six classifier families behind one fit/predict contract.

Logistic regression (IRLS), a Gini classification tree with
cost-complexity pruning, random forests, gradient boosting with logistic
loss, a soft-margin SVM with radial kernel trained by sequential minimal
optimization, and a single-hidden-layer network trained by
backpropagation with weight decay. All are implemented on numpy with
seed-deterministic fitting.
"""

from mousepara.learners.base import (
    Dataset,
    FittedModel,
    LEARNER_KINDS,
    fit,
    predict,
    predict_proba,
    default_grid,
    complexity_key,
    validate_hp,
    model_to_dict,
    model_from_dict,
    FitError,
    ConvergenceError,
)
from mousepara.learners.neural import nn_loss_and_grad, init_params, pack_params, unpack_params

__all__ = [
    "Dataset",
    "FittedModel",
    "LEARNER_KINDS",
    "fit",
    "predict",
    "predict_proba",
    "default_grid",
    "complexity_key",
    "validate_hp",
    "model_to_dict",
    "model_from_dict",
    "FitError",
    "ConvergenceError",
    "nn_loss_and_grad",
    "init_params",
    "pack_params",
    "unpack_params",
]
