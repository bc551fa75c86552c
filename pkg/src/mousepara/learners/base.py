"""Shared learner contract: datasets, standardization, dispatch, grids.

Feature scaling policy: continuous features are standardized (training
mean/sd) for the margin- and gradient-based learners (logistic, svm,
neural_net); tree-based learners see raw features, to which their splits
are invariant. Standardization parameters live on the fitted model and
are reapplied at predict time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

LEARNER_KINDS = ("logistic", "tree", "random_forest", "boosting", "svm", "neural_net")

_STANDARDIZED_KINDS = {"logistic", "svm", "neural_net"}


class FitError(RuntimeError):
    pass


class ConvergenceError(FitError):
    """Optimizer failed to converge within its iteration cap; carries a trace."""

    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class Dataset:
    """Design matrix with binary labels (1 = difficult)."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=int)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n, p) with matching y of length n")
        if X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names length must match X columns")
        if not np.isfinite(X).all():
            raise ValueError("X contains non-finite entries")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0/1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def require_both_classes(self) -> None:
        if len(np.unique(self.y)) < 2:
            raise FitError("both classes must be present for fitting")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd == 0.0, 1.0, sd)
        return cls(mean=mean, sd=sd)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.sd


@dataclass(frozen=True)
class FittedModel:
    """A trained classifier; predict is deterministic given the model."""

    kind: str
    params: Any
    hyperparams: dict
    seed: int
    feature_names: tuple[str, ...]
    standardizer: Standardizer | None = None
    train_meta: dict = field(default_factory=dict)

    def _prepare(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected {len(self.feature_names)} feature columns, got {X.shape}"
            )
        if self.standardizer is not None:
            X = self.standardizer.apply(X)
        return X

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _PREDICTORS[self.kind](self.params, self._prepare(X))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        proba = _PROBA[self.kind]
        if proba is None:
            raise FitError(f"{self.kind} reports class decisions only, no probabilities")
        return proba(self.params, self._prepare(X))


def fit(kind: str, data: Dataset, hp: dict, seed: int) -> FittedModel:
    """Train one learner; deterministic given (data, hp, seed)."""
    if kind not in LEARNER_KINDS:
        raise ValueError(f"unknown learner kind {kind!r}")
    data.require_both_classes()
    validate_hp(kind, hp, data.p)
    standardizer = None
    X = data.X
    if kind in _STANDARDIZED_KINDS:
        standardizer = Standardizer.fit(X)
        X = standardizer.apply(X)
    params, meta = _FITTERS[kind](X, data.y, hp, seed)
    return FittedModel(
        kind=kind,
        params=params,
        hyperparams=dict(hp),
        seed=seed,
        feature_names=data.feature_names,
        standardizer=standardizer,
        train_meta=meta,
    )


def predict(model: FittedModel, X: np.ndarray) -> np.ndarray:
    return model.predict(X)


def predict_proba(model: FittedModel, X: np.ndarray) -> np.ndarray:
    return model.predict_proba(X)


# ---------------------------------------------------------------------------
# Hyperparameter grids and tuning complexity order
#
# The grids span under- to over-fitting with standard defaults and are
# overridable from the run config. Among settings within one standard
# error of the best inner accuracy, tuning picks the least complex:
# fewest trees, smallest hidden size, smallest C, largest pruning.


def default_grid(kind: str, p: int) -> list[dict]:
    if kind == "logistic":
        return [{}]
    if kind == "tree":
        return [{"cp": c} for c in (0.001, 0.005, 0.01, 0.05)]
    if kind == "random_forest":
        ms = sorted({1, 2, 3, int(math.isqrt(p)), max(1, p // 2)})
        ms = [m for m in ms if 1 <= m <= p]
        return [{"n_trees": 500, "m": m, "bootstrap": True} for m in ms]
    if kind == "boosting":
        return [
            {"n_trees": t, "depth": d, "shrinkage": s}
            for t in (50, 100, 250, 500)
            for d in (1, 2, 3)
            for s in (0.01, 0.1)
        ]
    if kind == "svm":
        return [{"C": c, "gamma": g} for c in (0.1, 1.0, 10.0, 100.0) for g in (0.01, 0.1, 1.0)]
    if kind == "neural_net":
        return [{"hidden": h, "decay": lam} for h in (1, 3, 5, 10) for lam in (0.0, 0.01, 0.1)]
    raise ValueError(f"unknown learner kind {kind!r}")


def complexity_key(kind: str, hp: dict) -> tuple:
    """Sort key; smaller means less complex."""
    if kind == "logistic":
        return (0,)
    if kind == "tree":
        return (-hp["cp"],)
    if kind == "random_forest":
        return (hp["m"], hp["n_trees"])
    if kind == "boosting":
        return (hp["n_trees"], hp["depth"], hp["shrinkage"])
    if kind == "svm":
        return (hp["C"], hp["gamma"])
    if kind == "neural_net":
        return (hp["hidden"], -hp["decay"])
    raise ValueError(f"unknown learner kind {kind!r}")


def validate_hp(kind: str, hp: dict, p: int) -> None:
    def need(*keys):
        missing = [k for k in keys if k not in hp]
        if missing:
            raise ValueError(f"{kind}: missing hyperparameters {missing}")

    if kind == "logistic":
        return
    if kind == "tree":
        need("cp")
        if hp["cp"] < 0:
            raise ValueError("tree: cp must be >= 0")
    elif kind == "random_forest":
        need("n_trees", "m")
        if not (1 <= hp["m"] <= p):
            raise ValueError(f"random_forest: m must be in [1, {p}]")
        if hp["n_trees"] < 1:
            raise ValueError("random_forest: n_trees must be >= 1")
    elif kind == "boosting":
        need("n_trees", "depth", "shrinkage")
        if hp["n_trees"] < 1 or hp["depth"] < 1 or not (0 < hp["shrinkage"] <= 1):
            raise ValueError("boosting: invalid setting")
    elif kind == "svm":
        need("C", "gamma")
        if hp["C"] <= 0 or hp["gamma"] <= 0:
            raise ValueError("svm: C and gamma must be positive")
    elif kind == "neural_net":
        need("hidden", "decay")
        if hp["hidden"] < 1 or hp["decay"] < 0:
            raise ValueError("neural_net: invalid setting")


# ---------------------------------------------------------------------------
# Registry, filled by the learner modules at import time

_FITTERS: dict[str, Callable] = {}
_PREDICTORS: dict[str, Callable] = {}
_PROBA: dict[str, Callable | None] = {}
_EXPORTERS: dict[str, Callable] = {}
_IMPORTERS: dict[str, Callable] = {}


def register(
    kind: str,
    fitter: Callable,
    predictor: Callable,
    proba: Callable | None,
    exporter: Callable,
    importer: Callable,
) -> None:
    _FITTERS[kind] = fitter
    _PREDICTORS[kind] = predictor
    _PROBA[kind] = proba
    _EXPORTERS[kind] = exporter
    _IMPORTERS[kind] = importer


MODEL_DUMP_VERSION = 1


def model_to_dict(model: FittedModel) -> dict:
    """Textual parameter dump sufficient for bit-exact predict reload."""
    return {
        "version": MODEL_DUMP_VERSION,
        "kind": model.kind,
        "hyperparams": model.hyperparams,
        "seed": model.seed,
        "feature_names": list(model.feature_names),
        "standardizer": None
        if model.standardizer is None
        else {
            "mean": model.standardizer.mean.tolist(),
            "sd": model.standardizer.sd.tolist(),
        },
        "params": _EXPORTERS[model.kind](model.params),
    }


def model_from_dict(d: dict) -> FittedModel:
    if d.get("version") != MODEL_DUMP_VERSION:
        raise ValueError(f"unsupported model dump version {d.get('version')!r}")
    std = d["standardizer"]
    return FittedModel(
        kind=d["kind"],
        params=_IMPORTERS[d["kind"]](d["params"]),
        hyperparams=dict(d["hyperparams"]),
        seed=d["seed"],
        feature_names=tuple(d["feature_names"]),
        standardizer=None
        if std is None
        else Standardizer(mean=np.array(std["mean"]), sd=np.array(std["sd"])),
    )


# Importing the learner modules registers their fit/predict callables.
from mousepara.learners import logistic as _logistic  # noqa: E402,F401
from mousepara.learners import tree as _tree  # noqa: E402,F401
from mousepara.learners import forest as _forest  # noqa: E402,F401
from mousepara.learners import boosting as _boosting  # noqa: E402,F401
from mousepara.learners import svm as _svm  # noqa: E402,F401
from mousepara.learners import neural as _neural  # noqa: E402,F401
