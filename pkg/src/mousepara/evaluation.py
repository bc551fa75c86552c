"""Nested cross-validation, classification metrics, permutation importance.

Protocol: 10 stratified outer folds estimate out-of-sample performance;
inside each outer training set, hyperparameters are chosen by repeated
stratified subsampling (500 repetitions, 75/25 train/test) scored by
accuracy. The same inner splits are reused for every grid setting and
every learner so comparisons share training and testing samples. Pooled
out-of-fold predictions give one accuracy/sensitivity/specificity triple;
per-fold metrics are retained as detail.

Feature importance is the drop in out-of-fold accuracy when one feature
column is randomly permuted, averaged over independent permutations, with
the fitted fold models held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from mousepara.learners import Dataset, FittedModel, complexity_key, fit
from mousepara.seeding import derive_rng, derive_seed


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Cross-validation plan


@dataclass(frozen=True)
class CVPlan:
    fold_of_row: np.ndarray  # (n,) values in [0, n_folds)
    n_folds: int
    inner_reps: int
    train_frac: float
    seed: int

    @property
    def n(self) -> int:
        return self.fold_of_row.shape[0]

    def train_rows(self, fold: int) -> np.ndarray:
        return np.nonzero(self.fold_of_row != fold)[0]

    def validation_rows(self, fold: int) -> np.ndarray:
        return np.nonzero(self.fold_of_row == fold)[0]


def make_cv_plan(
    labels: Sequence[int],
    n_folds: int = 10,
    inner_reps: int = 500,
    train_frac: float = 0.75,
    seed: int = 0,
) -> CVPlan:
    """Stratified, seeded outer partition; same seed gives the same plan."""
    y = np.asarray(labels, dtype=int)
    n = y.shape[0]
    if n < 2 * n_folds:
        raise EvaluationError(f"need at least {2 * n_folds} rows for {n_folds} folds")
    if not (0 < train_frac < 1):
        raise EvaluationError("train_frac must be in (0, 1)")
    fold_of_row = np.full(n, -1, dtype=int)
    rng = derive_rng(seed, "outer_folds")
    for cls in (0, 1):
        members = np.nonzero(y == cls)[0]
        if members.size < n_folds:
            raise EvaluationError(
                f"class {cls} has {members.size} member(s), too small to stratify "
                f"over {n_folds} folds"
            )
        members = members[rng.permutation(members.size)]
        for fold, chunk in enumerate(np.array_split(members, n_folds)):
            fold_of_row[chunk] = fold
    return CVPlan(
        fold_of_row=fold_of_row,
        n_folds=n_folds,
        inner_reps=inner_reps,
        train_frac=train_frac,
        seed=seed,
    )


def inner_split(
    plan: CVPlan, train_rows: np.ndarray, y: np.ndarray, fold: int, rep: int
) -> tuple[np.ndarray, np.ndarray]:
    """One stratified 75/25 subsample of the outer-fold training rows.

    Deterministic in (plan.seed, fold, rep), so every grid setting sees
    identical splits.
    """
    rng = derive_rng(plan.seed, "inner", fold, rep)
    sub_train: list[np.ndarray] = []
    sub_test: list[np.ndarray] = []
    for cls in (0, 1):
        members = train_rows[y[train_rows] == cls]
        members = members[rng.permutation(members.size)]
        n_tr = int(round(plan.train_frac * members.size))
        n_tr = min(max(n_tr, 1), members.size - 1)
        sub_train.append(members[:n_tr])
        sub_test.append(members[n_tr:])
    return np.sort(np.concatenate(sub_train)), np.sort(np.concatenate(sub_test))


# ---------------------------------------------------------------------------
# Inner tuning


@dataclass(frozen=True)
class TuningResult:
    chosen: dict
    mean_accuracy: dict[int, float]  # grid index -> mean inner accuracy
    disqualified: tuple[int, ...]
    diagnostics: tuple[str, ...]


def tune_inner(
    kind: str | Callable,
    grid: Sequence[dict],
    X: np.ndarray,
    y: np.ndarray,
    train_rows: np.ndarray,
    plan: CVPlan,
    fold: int,
    feature_names: tuple[str, ...],
    fit_fn: Callable | None = None,
) -> TuningResult:
    """Pick the grid setting with best mean inner accuracy.

    A single-setting grid is returned unconditionally. Settings failing to
    fit on more than 10% of the sub-splits are disqualified. Among
    settings within one standard error of the best mean, the least
    complex wins (learner-specific order), ties broken by grid position.
    The outer validation rows are never touched.
    """
    grid = list(grid)
    if not grid:
        raise EvaluationError("empty hyperparameter grid")
    fitter = fit_fn or fit
    if len(grid) == 1:
        return TuningResult(chosen=grid[0], mean_accuracy={0: np.nan}, disqualified=(), diagnostics=())

    accs = np.full((len(grid), plan.inner_reps), np.nan)
    for rep in range(plan.inner_reps):
        sub_train, sub_test = inner_split(plan, train_rows, y, fold, rep)
        train_data = Dataset(X[sub_train], y[sub_train], feature_names)
        for gi, hp in enumerate(grid):
            try:
                model = fitter(kind, train_data, hp, derive_seed(plan.seed, "tune", fold, rep, gi))
                preds = model.predict(X[sub_test])
            except Exception:
                continue
            accs[gi, rep] = float(np.mean(preds == y[sub_test]))

    diagnostics: list[str] = []
    disqualified: list[int] = []
    means: dict[int, float] = {}
    for gi in range(len(grid)):
        failures = int(np.isnan(accs[gi]).sum())
        if failures > 0.1 * plan.inner_reps:
            disqualified.append(gi)
            diagnostics.append(
                f"setting {gi} failed on {failures}/{plan.inner_reps} sub-splits, disqualified"
            )
            continue
        means[gi] = float(np.nanmean(accs[gi]))
    if not means:
        raise EvaluationError("every grid setting was disqualified during tuning")

    best_gi = max(means, key=lambda gi: (means[gi], -gi))
    best_accs = accs[best_gi][~np.isnan(accs[best_gi])]
    se = float(best_accs.std(ddof=1) / np.sqrt(best_accs.size)) if best_accs.size > 1 else 0.0
    eligible = [gi for gi, m in means.items() if m >= means[best_gi] - se]
    if isinstance(kind, str):
        chosen_gi = min(eligible, key=lambda gi: (complexity_key(kind, grid[gi]), gi))
    else:
        chosen_gi = best_gi
    return TuningResult(
        chosen=grid[chosen_gi],
        mean_accuracy=means,
        disqualified=tuple(disqualified),
        diagnostics=tuple(diagnostics),
    )


# ---------------------------------------------------------------------------
# Metrics


def confusion_metrics(
    predictions: Sequence[int], labels: Sequence[int], positive_class: int = 1
) -> tuple[float, float, float]:
    """(accuracy, sensitivity, specificity) with an explicit positive class.

    Sensitivity is recall of the positive (difficult) class, specificity
    recall of the negative class. Zero-denominator recalls come back NaN.
    """
    preds = np.asarray(predictions, dtype=int)
    y = np.asarray(labels, dtype=int)
    if preds.size == 0:
        raise EvaluationError("empty input")
    if preds.shape != y.shape:
        raise EvaluationError("predictions and labels differ in length")
    pos = y == positive_class
    accuracy = float(np.mean(preds == y))
    sensitivity = float(np.mean(preds[pos] == positive_class)) if pos.any() else float("nan")
    specificity = float(np.mean(preds[~pos] != positive_class)) if (~pos).any() else float("nan")
    return accuracy, sensitivity, specificity


# ---------------------------------------------------------------------------
# Nested cross-validation


@dataclass
class FoldOutcome:
    fold: int
    chosen_hp: dict
    model: FittedModel
    validation_rows: np.ndarray
    predictions: np.ndarray
    accuracy: float
    design: np.ndarray | None = None  # fold-local design matrix (all rows)


@dataclass
class NestedCVResult:
    accuracy: float
    sensitivity: float
    specificity: float
    pooled_predictions: np.ndarray
    folds: list[FoldOutcome] = field(default_factory=list)

    def oof_design(self) -> np.ndarray:
        """Out-of-fold design matrix: each row from its own fold's design."""
        n = self.pooled_predictions.shape[0]
        base = self.folds[0].design
        out = np.empty((n, base.shape[1]))
        for fo in self.folds:
            out[fo.validation_rows] = fo.design[fo.validation_rows]
        return out


def nested_cv(
    kind: str | Callable,
    y: np.ndarray,
    grid: Sequence[dict],
    plan: CVPlan,
    design_builder: Callable[[np.ndarray], np.ndarray],
    feature_names: tuple[str, ...],
    fit_fn: Callable | None = None,
    keep_designs: bool = True,
) -> NestedCVResult:
    """Out-of-sample evaluation with per-fold inner tuning.

    ``design_builder(train_rows)`` returns the full (n, p) design matrix
    with any training-dependent preprocessing (fold-local personalization)
    fitted on ``train_rows`` only. For static designs pass
    ``lambda rows: X``.
    """
    y = np.asarray(y, dtype=int)
    fitter = fit_fn or fit
    n = y.shape[0]
    pooled = np.full(n, -1, dtype=int)
    covered = np.zeros(n, dtype=bool)
    outcomes: list[FoldOutcome] = []
    for fold in range(plan.n_folds):
        train_rows = plan.train_rows(fold)
        val_rows = plan.validation_rows(fold)
        if np.intersect1d(train_rows, val_rows).size:
            raise EvaluationError(f"fold {fold}: training and validation rows overlap")
        X_all = np.asarray(design_builder(train_rows), dtype=float)
        tuning = tune_inner(
            kind, grid, X_all, y, train_rows, plan, fold, feature_names, fit_fn=fit_fn
        )
        try:
            model = fitter(
                kind,
                Dataset(X_all[train_rows], y[train_rows], feature_names),
                tuning.chosen,
                derive_seed(plan.seed, "outer_fit", fold),
            )
            preds = np.asarray(model.predict(X_all[val_rows]), dtype=int)
        except Exception as exc:
            raise EvaluationError(f"fold {fold}: fit failed: {exc}") from exc
        if covered[val_rows].any():
            raise EvaluationError(f"fold {fold}: validation rows already covered")
        covered[val_rows] = True
        pooled[val_rows] = preds
        outcomes.append(
            FoldOutcome(
                fold=fold,
                chosen_hp=tuning.chosen,
                model=model,
                validation_rows=val_rows,
                predictions=preds,
                accuracy=float(np.mean(preds == y[val_rows])),
                design=X_all if keep_designs else None,
            )
        )
    if not covered.all():
        raise EvaluationError("pooled out-of-fold predictions do not cover every row")
    accuracy, sensitivity, specificity = confusion_metrics(pooled, y)
    return NestedCVResult(
        accuracy=accuracy,
        sensitivity=sensitivity,
        specificity=specificity,
        pooled_predictions=pooled,
        folds=outcomes,
    )


def oof_predict_fn(result: NestedCVResult) -> Callable[[np.ndarray], np.ndarray]:
    """Predictor routing each row to the fold model that never trained on it."""

    def predict(X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=int)
        for fo in result.folds:
            out[fo.validation_rows] = fo.model.predict(X[fo.validation_rows])
        return out

    return predict


# ---------------------------------------------------------------------------
# Permutation importance


@dataclass(frozen=True)
class ImportanceReport:
    feature_names: tuple[str, ...]
    mean_drop: np.ndarray
    sd_drop: np.ndarray
    rank: np.ndarray  # 1 = largest mean drop
    baseline_accuracy: float
    n_perm: int
    seed: int


def permutation_importance(
    predict_fn: Callable[[np.ndarray], np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str],
    n_perm: int = 500,
    seed: int = 0,
) -> ImportanceReport:
    """Mean accuracy drop per feature over fresh random permutations.

    The model is held fixed; only one column is shuffled at a time.
    Applied to out-of-fold data via ``oof_predict_fn`` this is held-out
    importance.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    baseline = float(np.mean(np.asarray(predict_fn(X)) == y))
    p = X.shape[1]
    mean_drop = np.empty(p)
    sd_drop = np.empty(p)
    for j in range(p):
        rng = derive_rng(seed, "perm", j)
        drops = np.empty(n_perm)
        X_perm = X.copy()
        for r in range(n_perm):
            X_perm[:, j] = X[rng.permutation(X.shape[0]), j]
            acc = float(np.mean(np.asarray(predict_fn(X_perm)) == y))
            drops[r] = baseline - acc
        mean_drop[j] = drops.mean()
        sd_drop[j] = drops.std(ddof=1) if n_perm > 1 else 0.0
    order = np.lexsort((np.arange(p), -mean_drop))
    rank = np.empty(p, dtype=int)
    rank[order] = np.arange(1, p + 1)
    return ImportanceReport(
        feature_names=tuple(feature_names),
        mean_drop=mean_drop,
        sd_drop=sd_drop,
        rank=rank,
        baseline_accuracy=baseline,
        n_perm=n_perm,
        seed=seed,
    )
