"""Personalization: residualize measures against baseline behavior.

Two correction modes, both fitted per measure by ordinary least squares
and consumed as residuals:

  * baseline: regress each target-question measure on an intercept plus
    that measure's values over the R baseline questions; keep the
    residuals ("deviation from this respondent's habitual behavior").
  * baseline_and_position: first residualize every question's measures
    (target and baseline alike) on answer-position dummies, then regress
    the target residuals on the respondent's mean baseline residual and
    keep those second-stage residuals.

All fits honor a training index: coefficients are estimated on training
rows only and applied out-of-fold, so the corrections can run leak-free
inside a cross-validation fold or, mirroring a full-sample analysis,
globally.

OLS is solved by a rank-revealing least-squares factorization; rank
deficiency yields the minimum-norm coefficients plus a diagnostic rather
than a failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MODE_NONE = "none"
MODE_BASELINE = "baseline"
MODE_BASELINE_POSITION = "baseline_position"
CORRECTION_MODES = (MODE_NONE, MODE_BASELINE, MODE_BASELINE_POSITION)


class CorrectionError(ValueError):
    pass


class UnderdeterminedError(CorrectionError):
    """Fewer training rows than regression parameters."""


def _lstsq(design: np.ndarray, y: np.ndarray) -> np.ndarray:
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def _as_index(index: Sequence[int], n: int) -> np.ndarray:
    idx = np.asarray(index, dtype=int)
    if idx.ndim != 1 or idx.size == 0:
        raise CorrectionError("index must be a nonempty 1-D sequence of row numbers")
    if idx.min() < 0 or idx.max() >= n:
        raise CorrectionError("index out of range")
    return idx


# ---------------------------------------------------------------------------
# Baseline correction (regress target measure on its 8 baseline values)


@dataclass(frozen=True)
class BaselineCorrection:
    """Per-measure OLS of the target measure on intercept + baseline values."""

    measure_names: tuple[str, ...]
    coef: np.ndarray  # (J, 1 + R); dropped columns carry coefficient 0
    imputation_means: np.ndarray  # (J, R) training-fold means for missing panel cells
    dropped_columns: tuple[tuple[int, int], ...]  # (measure index, baseline column)
    train_index: tuple[int, ...]
    diagnostics: tuple[str, ...]

    @property
    def n_baselines(self) -> int:
        return self.coef.shape[1] - 1


def _impute_columns(panel_j: np.ndarray, means: np.ndarray) -> np.ndarray:
    filled = panel_j.copy()
    nan_rows, nan_cols = np.nonzero(np.isnan(filled))
    filled[nan_rows, nan_cols] = means[nan_cols]
    return filled


def fit_baseline_correction(
    target: np.ndarray,
    panel: np.ndarray,
    train_index: Sequence[int],
    measure_names: Sequence[str],
) -> BaselineCorrection:
    """Fit the baseline regression for every measure over train_index.

    target: (n, J) target-question measures. panel: (n, R, J) baseline
    values with NaN for missing cells (imputed with training column
    means). Constant baseline columns are dropped with a diagnostic.
    """
    target = np.asarray(target, dtype=float)
    panel = np.asarray(panel, dtype=float)
    n, J = target.shape
    if panel.shape[0] != n or panel.shape[2] != J:
        raise CorrectionError("panel shape does not match target table")
    R = panel.shape[1]
    idx = _as_index(train_index, n)
    if idx.size <= R + 1:
        raise UnderdeterminedError(
            f"underdetermined correction: {idx.size} training rows for {R + 1} parameters"
        )

    coef = np.zeros((J, 1 + R))
    impute = np.zeros((J, R))
    dropped: list[tuple[int, int]] = []
    diagnostics: list[str] = []
    for j in range(J):
        panel_j = panel[idx, :, j]
        col_means = np.nanmean(np.where(np.isnan(panel_j), np.nan, panel_j), axis=0)
        col_means = np.where(np.isnan(col_means), 0.0, col_means)
        impute[j] = col_means
        n_missing = int(np.isnan(panel_j).sum())
        if n_missing:
            diagnostics.append(
                f"measure {measure_names[j]}: imputed {n_missing} missing baseline value(s)"
            )
        filled = _impute_columns(panel_j, col_means)
        keep = np.ptp(filled, axis=0) > 0
        for r in np.nonzero(~keep)[0]:
            dropped.append((j, int(r)))
            diagnostics.append(
                f"measure {measure_names[j]}: baseline column {int(r)} constant on "
                "training rows, dropped"
            )
        design = np.column_stack([np.ones(idx.size), filled[:, keep]])
        beta = _lstsq(design, target[idx, j])
        coef[j, 0] = beta[0]
        coef[j, 1:][keep] = beta[1:]
    return BaselineCorrection(
        measure_names=tuple(measure_names),
        coef=coef,
        imputation_means=impute,
        dropped_columns=tuple(dropped),
        train_index=tuple(int(i) for i in idx),
        diagnostics=tuple(diagnostics),
    )


def apply_baseline_correction(
    model: BaselineCorrection,
    target: np.ndarray,
    panel: np.ndarray,
    index: Sequence[int],
    measure_names: Sequence[str] | None = None,
) -> np.ndarray:
    """Residuals (len(index), J) for the given rows, out-of-fold capable."""
    target = np.asarray(target, dtype=float)
    panel = np.asarray(panel, dtype=float)
    if measure_names is not None and tuple(measure_names) != model.measure_names:
        raise CorrectionError(
            "measures at apply time do not match the fitted correction model"
        )
    if target.shape[1] != len(model.measure_names):
        raise CorrectionError("target table width does not match the fitted model")
    if panel.shape[1] != model.n_baselines:
        raise CorrectionError("panel width does not match the fitted model")
    idx = _as_index(index, target.shape[0])
    J = target.shape[1]
    out = np.empty((idx.size, J))
    for j in range(J):
        filled = _impute_columns(panel[idx, :, j], model.imputation_means[j])
        fitted = model.coef[j, 0] + filled @ model.coef[j, 1:]
        out[:, j] = target[idx, j] - fitted
    return out


# ---------------------------------------------------------------------------
# Position correction (per-question dummies, last option is the reference)


@dataclass(frozen=True)
class PositionCorrection:
    """Per-measure OLS on answer-position dummies for one question."""

    question_id: str
    measure_names: tuple[str, ...]
    levels: tuple[int, ...]  # dummy-coded positions (1..m-1 that had occupants)
    coef: np.ndarray  # (J, 1 + len(levels))
    train_index: tuple[int, ...]
    diagnostics: tuple[str, ...]


def _position_design(positions: np.ndarray, levels: Sequence[int]) -> np.ndarray:
    cols = [np.ones(positions.shape[0])]
    cols += [(positions == lvl).astype(float) for lvl in levels]
    return np.column_stack(cols)


def fit_position_correction(
    values: np.ndarray,
    positions: np.ndarray,
    n_options: int,
    train_index: Sequence[int],
    measure_names: Sequence[str],
    question_id: str = "",
) -> PositionCorrection:
    """Fit position dummies (m_k - 1, last position as reference) per measure.

    Position levels with no occupants among the training rows are dropped
    with a diagnostic.
    """
    values = np.asarray(values, dtype=float)
    positions = np.asarray(positions, dtype=float)
    idx = _as_index(train_index, values.shape[0])
    if n_options < 2:
        raise CorrectionError("position correction needs at least two options")
    diagnostics: list[str] = []
    levels = []
    train_pos = positions[idx]
    for lvl in range(1, n_options):
        if np.any(train_pos == lvl):
            levels.append(lvl)
        else:
            diagnostics.append(
                f"question {question_id}: position {lvl} unoccupied on training rows, "
                "dummy dropped"
            )
    design = _position_design(train_pos, levels)
    if idx.size <= design.shape[1]:
        raise UnderdeterminedError(
            f"underdetermined correction: {idx.size} training rows for "
            f"{design.shape[1]} parameters"
        )
    coef = _lstsq(design, values[idx]).T  # (J, 1 + len(levels))
    return PositionCorrection(
        question_id=question_id,
        measure_names=tuple(measure_names),
        levels=tuple(levels),
        coef=np.atleast_2d(coef),
        train_index=tuple(int(i) for i in idx),
        diagnostics=tuple(diagnostics),
    )


def apply_position_correction(
    model: PositionCorrection,
    values: np.ndarray,
    positions: np.ndarray,
    index: Sequence[int],
) -> np.ndarray:
    """Residuals after removing the fitted position effect.

    Rows at a position whose dummy was dropped fall back to the reference
    category.
    """
    values = np.asarray(values, dtype=float)
    positions = np.asarray(positions, dtype=float)
    idx = _as_index(index, values.shape[0])
    design = _position_design(positions[idx], model.levels)
    fitted = design @ model.coef.T
    return values[idx] - fitted


# ---------------------------------------------------------------------------
# Two-step correction (position, then mean baseline residual)


@dataclass(frozen=True)
class TwoStepCorrection:
    """Position correction on every question, then per-measure regression of
    the target residuals on the mean baseline residual."""

    target_position: PositionCorrection
    baseline_positions: tuple[PositionCorrection, ...]
    mean_resid_coef: np.ndarray  # (J, 2): intercept, slope on the mean residual
    slope_dropped: np.ndarray  # (J,) bool, True when the mean residual was constant
    train_index: tuple[int, ...]
    diagnostics: tuple[str, ...]


def _baseline_position_residuals(
    models: Sequence[PositionCorrection],
    panel_values: np.ndarray,
    panel_positions: np.ndarray,
    index: np.ndarray,
) -> np.ndarray:
    """Residual panel (len(index), R, J); missing cells become NaN."""
    n_idx = index.size
    R = panel_values.shape[1]
    J = panel_values.shape[2]
    out = np.full((n_idx, R, J), np.nan)
    for r in range(R):
        vals = panel_values[:, r, :]
        pos = panel_positions[:, r]
        present = ~(np.isnan(pos[index]) | np.isnan(vals[index]).any(axis=1))
        if not present.any():
            continue
        rows = index[present]
        out[present, r, :] = apply_position_correction(models[r], vals, pos, rows)
    return out


def fit_two_step_correction(
    target: np.ndarray,
    target_positions: np.ndarray,
    target_n_options: int,
    panel_values: np.ndarray,
    panel_positions: np.ndarray,
    panel_n_options: Sequence[int],
    train_index: Sequence[int],
    measure_names: Sequence[str],
    question_id: str = "",
    baseline_ids: Sequence[str] | None = None,
) -> TwoStepCorrection:
    """Fit both stages over train_index.

    Baseline cells with a missing value or position contribute a zero
    residual (the training-fold mean residual) to the respondent's mean,
    with a diagnostic.
    """
    target = np.asarray(target, dtype=float)
    panel_values = np.asarray(panel_values, dtype=float)
    panel_positions = np.asarray(panel_positions, dtype=float)
    n = target.shape[0]
    idx = _as_index(train_index, n)
    R = panel_values.shape[1]
    if baseline_ids is None:
        baseline_ids = [f"baseline_{r}" for r in range(R)]
    diagnostics: list[str] = []

    target_model = fit_position_correction(
        target, target_positions, target_n_options, idx, measure_names, question_id
    )
    diagnostics.extend(target_model.diagnostics)

    baseline_models = []
    for r in range(R):
        present = idx[~(np.isnan(panel_positions[idx, r]) | np.isnan(panel_values[idx, r]).any(axis=1))]
        if present.size == 0:
            raise CorrectionError(
                f"baseline question {baseline_ids[r]} has no usable training rows"
            )
        model_r = fit_position_correction(
            panel_values[:, r, :],
            panel_positions[:, r],
            int(panel_n_options[r]),
            present,
            measure_names,
            str(baseline_ids[r]),
        )
        baseline_models.append(model_r)
        diagnostics.extend(model_r.diagnostics)

    w_target_train = apply_position_correction(target_model, target, target_positions, idx)
    resid_panel = _baseline_position_residuals(
        baseline_models, panel_values, panel_positions, idx
    )
    n_missing = int(np.isnan(resid_panel[:, :, 0]).sum())
    if n_missing:
        diagnostics.append(
            f"question {question_id}: {n_missing} missing baseline cell(s) imputed as "
            "zero residual"
        )
    w_bar = np.nanmean(np.where(np.isnan(resid_panel), 0.0, resid_panel), axis=1)  # (n_tr, J)

    J = target.shape[1]
    coef = np.zeros((J, 2))
    slope_dropped = np.zeros(J, dtype=bool)
    for j in range(J):
        wc = w_bar[:, j]
        if np.ptp(wc) <= 1e-12 * max(1.0, np.abs(wc).max()):
            coef[j, 0] = w_target_train[:, j].mean()
            slope_dropped[j] = True
            diagnostics.append(
                f"measure {measure_names[j]}: mean baseline residual constant on "
                "training rows, slope dropped"
            )
            continue
        design = np.column_stack([np.ones(idx.size), wc])
        coef[j] = _lstsq(design, w_target_train[:, j])
    return TwoStepCorrection(
        target_position=target_model,
        baseline_positions=tuple(baseline_models),
        mean_resid_coef=coef,
        slope_dropped=slope_dropped,
        train_index=tuple(int(i) for i in idx),
        diagnostics=tuple(diagnostics),
    )


def apply_two_step_correction(
    model: TwoStepCorrection,
    target: np.ndarray,
    target_positions: np.ndarray,
    panel_values: np.ndarray,
    panel_positions: np.ndarray,
    index: Sequence[int],
) -> np.ndarray:
    """Position- and baseline-corrected measures for the given rows."""
    target = np.asarray(target, dtype=float)
    panel_values = np.asarray(panel_values, dtype=float)
    panel_positions = np.asarray(panel_positions, dtype=float)
    idx = _as_index(index, target.shape[0])
    w_target = apply_position_correction(model.target_position, target, target_positions, idx)
    resid_panel = _baseline_position_residuals(
        model.baseline_positions, panel_values, panel_positions, idx
    )
    w_bar = np.nanmean(np.where(np.isnan(resid_panel), 0.0, resid_panel), axis=1)
    fitted = model.mean_resid_coef[:, 0][None, :] + w_bar * model.mean_resid_coef[:, 1][None, :]
    return w_target - fitted


def fit_and_apply_two_step(
    target: np.ndarray,
    target_positions: np.ndarray,
    target_n_options: int,
    panel_values: np.ndarray,
    panel_positions: np.ndarray,
    panel_n_options: Sequence[int],
    train_index: Sequence[int],
    index: Sequence[int],
    measure_names: Sequence[str],
    question_id: str = "",
) -> tuple[np.ndarray, TwoStepCorrection]:
    """Convenience wrapper: fit on train_index, return residuals on index."""
    model = fit_two_step_correction(
        target,
        target_positions,
        target_n_options,
        panel_values,
        panel_positions,
        panel_n_options,
        train_index,
        measure_names,
        question_id,
    )
    corrected = apply_two_step_correction(
        model, target, target_positions, panel_values, panel_positions, index
    )
    return corrected, model


def coefficients_table(model: BaselineCorrection) -> list[tuple[str, str, float]]:
    """(measure, term, coefficient) rows for CSV export."""
    rows = []
    for j, name in enumerate(model.measure_names):
        rows.append((name, "intercept", float(model.coef[j, 0])))
        for r in range(model.n_baselines):
            rows.append((name, f"baseline_{r}", float(model.coef[j, 1 + r])))
    return rows
