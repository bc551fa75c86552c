"""File-based analysis pipeline behind the CLI.

Stages compose through files only: synth writes an event log + metadata;
extract parses, applies exclusions and writes per-threshold measures;
personalize writes globally corrected measures for inspection; evaluate
runs nested CV over every requested (question x personalization x learner
x threshold) cell; importance permutes features of the best model per
question. Identical config + seed gives byte-identical report and
importance CSVs regardless of worker count (cells carry derived seeds and
results merge in a fixed order).
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from mousepara import __version__
from mousepara.corrections import (
    MODE_BASELINE,
    MODE_BASELINE_POSITION,
    MODE_NONE,
    CORRECTION_MODES,
    apply_baseline_correction,
    apply_two_step_correction,
    coefficients_table,
    fit_baseline_correction,
    fit_two_step_correction,
)
from mousepara.evaluation import (
    CVPlan,
    NestedCVResult,
    make_cv_plan,
    nested_cv,
    oof_predict_fn,
    permutation_importance,
)
from mousepara.learners import LEARNER_KINDS, default_grid
from mousepara.measures import (
    DEFAULT_HOVER_THRESHOLDS,
    MEASURE_NAMES,
    extract_measures,
    format_value,
    write_measures_csv,
)
from mousepara.records import (
    ExclusionConfig,
    QuestionRecord,
    apply_exclusions,
    read_session_data,
)
from mousepara.seeding import derive_seed
from mousepara.synth import SynthConfig, gen_dataset, write_synth_outputs

VARIANT_FULL = "full"
VARIANT_RT_ONLY = "response_time_only"

LEAKAGE_FOLD_LOCAL = "fold_local"
LEAKAGE_GLOBAL = "global"

REPORT_COLUMNS = (
    "question",
    "manipulation",
    "personalization",
    "model",
    "supervised_learner",
    "threshold_hovers_ms",
    "accuracy",
    "sensitivity",
    "specificity",
)

IMPORTANCE_COLUMNS = ("question", "model", "feature", "mean_drop", "sd_drop", "rank")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Run configuration


@dataclass
class RunConfig:
    seed: int = 20160901
    out_dir: str = "out"
    workers: int = 1
    synth: dict = field(default_factory=dict)
    input: dict = field(default_factory=dict)  # events/metadata paths for real data
    thresholds: list[int] = field(default_factory=lambda: list(DEFAULT_HOVER_THRESHOLDS))
    personalization: list[str] = field(
        default_factory=lambda: [MODE_NONE, MODE_BASELINE, MODE_BASELINE_POSITION]
    )
    leakage: str = LEAKAGE_FOLD_LOCAL
    learners: list[str] = field(default_factory=lambda: list(LEARNER_KINDS))
    include_rt_only: bool = True
    cv: dict = field(
        default_factory=lambda: {"n_folds": 10, "inner_reps": 500, "train_frac": 0.75}
    )
    importance: dict = field(default_factory=lambda: {"n_perm": 500})
    grids: dict = field(default_factory=dict)
    exclusions: dict = field(default_factory=dict)
    # write extract outputs even when the event log had malformed lines
    allow_partial: bool = False

    def validate(self) -> None:
        if not self.thresholds or len(set(self.thresholds)) != len(self.thresholds):
            raise ConfigError("thresholds must be nonempty and distinct")
        if any(t <= 0 for t in self.thresholds):
            raise ConfigError("thresholds must be positive")
        for mode in self.personalization:
            if mode not in CORRECTION_MODES:
                raise ConfigError(f"unknown personalization mode {mode!r}")
        if self.leakage not in (LEAKAGE_FOLD_LOCAL, LEAKAGE_GLOBAL):
            raise ConfigError(f"unknown leakage policy {self.leakage!r}")
        for kind in self.learners:
            if kind not in LEARNER_KINDS:
                raise ConfigError(f"unknown learner {kind!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.synth and self.synth.get("n_respondents", 1) < 1:
            raise ConfigError("synth.n_respondents must be >= 1")
        for key in ("events", "metadata"):
            if key in self.input and not Path(self.input[key]).exists():
                raise ConfigError(f"input path does not exist: {self.input[key]}")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def synth_config(self) -> SynthConfig:
        known = set(SynthConfig.__dataclass_fields__)
        unknown = set(self.synth) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return SynthConfig(**self.synth)

    def exclusion_config(self) -> ExclusionConfig:
        return ExclusionConfig.from_dict(self.exclusions)


# ---------------------------------------------------------------------------
# Per-question data assembly


@dataclass(frozen=True)
class QuestionData:
    """Everything one target question contributes to modeling.

    Arrays are row-aligned over the question's retained respondents,
    sorted by respondent id. The baseline panel may contain NaN for
    respondents whose baseline record is missing; corrections impute.
    """

    question_id: str
    manipulation: str
    respondent_ids: tuple[str, ...]
    y: np.ndarray  # (n,)
    age: np.ndarray
    gender: np.ndarray
    answer_position: np.ndarray
    n_options: int
    measures: dict[int, np.ndarray]  # threshold -> (n, 9)
    panel_values: dict[int, np.ndarray]  # threshold -> (n, R, 9)
    panel_positions: np.ndarray  # (n, R)
    panel_n_options: tuple[int, ...]
    baseline_ids: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.y.shape[0]


def collect_question_data(
    records: Sequence[QuestionRecord],
    target_id: str,
    baseline_ids: Sequence[str],
    thresholds: Sequence[int],
    manipulation: str = "",
) -> QuestionData:
    """Assemble the modeling arrays for one target question."""
    target_recs = {
        r.respondent_id: r
        for r in records
        if r.question_id == target_id and r.condition is not None and r.trajectory.events
    }
    if not target_recs:
        raise ConfigError(f"no retained records for target question {target_id!r}")
    respondents = tuple(sorted(target_recs))
    baseline_recs: dict[tuple[str, str], QuestionRecord] = {
        (r.respondent_id, r.question_id): r
        for r in records
        if r.question_id in set(baseline_ids) and r.trajectory.events
    }
    n = len(respondents)
    R = len(baseline_ids)
    y = np.array([target_recs[rid].condition for rid in respondents], dtype=int)
    age = np.array([target_recs[rid].age for rid in respondents], dtype=float)
    gender = np.array([target_recs[rid].gender for rid in respondents], dtype=float)
    positions = np.array([target_recs[rid].answer_position for rid in respondents], dtype=float)
    n_options = target_recs[respondents[0]].n_options

    measures: dict[int, np.ndarray] = {}
    panel_values: dict[int, np.ndarray] = {}
    for thr in thresholds:
        tm = np.empty((n, len(MEASURE_NAMES)))
        pv = np.full((n, R, len(MEASURE_NAMES)), np.nan)
        for i, rid in enumerate(respondents):
            tm[i] = extract_measures(target_recs[rid].trajectory, thr).as_vector()
            for r, bid in enumerate(baseline_ids):
                rec = baseline_recs.get((rid, bid))
                if rec is not None:
                    pv[i, r] = extract_measures(rec.trajectory, thr).as_vector()
        measures[thr] = tm
        panel_values[thr] = pv

    panel_positions = np.full((n, R), np.nan)
    panel_n_options = []
    for r, bid in enumerate(baseline_ids):
        m_opts = 0
        for i, rid in enumerate(respondents):
            rec = baseline_recs.get((rid, bid))
            if rec is not None and rec.answer_position is not None:
                panel_positions[i, r] = rec.answer_position
                m_opts = max(m_opts, rec.n_options)
        panel_n_options.append(m_opts if m_opts else 2)

    return QuestionData(
        question_id=target_id,
        manipulation=manipulation,
        respondent_ids=respondents,
        y=y,
        age=age,
        gender=gender,
        answer_position=positions,
        n_options=n_options,
        measures=measures,
        panel_values=panel_values,
        panel_positions=panel_positions,
        panel_n_options=tuple(panel_n_options),
        baseline_ids=tuple(baseline_ids),
    )


def corrected_measures(
    qd: QuestionData, threshold: int, mode: str, train_rows: np.ndarray
) -> np.ndarray:
    """The (n, 9) measure block under a personalization mode.

    Correction coefficients are estimated on ``train_rows`` only and
    applied to every row (out-of-fold application).
    """
    all_rows = np.arange(qd.n)
    target = qd.measures[threshold]
    if mode == MODE_NONE:
        return target
    if mode == MODE_BASELINE:
        model = fit_baseline_correction(
            target, qd.panel_values[threshold], train_rows, MEASURE_NAMES
        )
        return apply_baseline_correction(
            model, target, qd.panel_values[threshold], all_rows
        )
    if mode == MODE_BASELINE_POSITION:
        model = fit_two_step_correction(
            target,
            qd.answer_position,
            qd.n_options,
            qd.panel_values[threshold],
            qd.panel_positions,
            qd.panel_n_options,
            train_rows,
            MEASURE_NAMES,
            qd.question_id,
            qd.baseline_ids,
        )
        return apply_two_step_correction(
            model,
            target,
            qd.answer_position,
            qd.panel_values[threshold],
            qd.panel_positions,
            all_rows,
        )
    raise ConfigError(f"unknown personalization mode {mode!r}")


def design_features(variant: str) -> tuple[str, ...]:
    if variant == VARIANT_FULL:
        return MEASURE_NAMES + ("age", "gender")
    if variant == VARIANT_RT_ONLY:
        return ("response_time", "age", "gender")
    raise ConfigError(f"unknown model variant {variant!r}")


def make_design_builder(
    qd: QuestionData, threshold: int, mode: str, variant: str, leakage: str
) -> Callable[[np.ndarray], np.ndarray]:
    """Design-matrix factory for nested_cv.

    fold_local: corrections refit on each outer fold's training rows.
    global: corrections fit once on all rows (full-sample analysis).
    """

    def assemble(block: np.ndarray) -> np.ndarray:
        X = np.column_stack([block, qd.age, qd.gender])
        if variant == VARIANT_RT_ONLY:
            X = X[:, [0, len(MEASURE_NAMES), len(MEASURE_NAMES) + 1]]
        return X

    if mode == MODE_NONE or leakage == LEAKAGE_GLOBAL:
        static = assemble(corrected_measures(qd, threshold, mode, np.arange(qd.n)))
        return lambda train_rows: static
    return lambda train_rows: assemble(corrected_measures(qd, threshold, mode, train_rows))


# ---------------------------------------------------------------------------
# Evaluation cells


@dataclass(frozen=True)
class Cell:
    question: str
    mode: str
    learner: str
    threshold: int | None  # None for response-time-only rows
    variant: str

    def key(self) -> tuple:
        return (self.question, self.mode, self.learner, self.variant, self.threshold or 0)

    def label(self) -> str:
        thr = "" if self.threshold is None else str(self.threshold)
        return f"{self.question}/{self.mode}/{self.learner}/{self.variant}/{thr}"


def enumerate_cells(config: RunConfig, question_ids: Sequence[str]) -> list[Cell]:
    cells = []
    for q in question_ids:
        for mode in config.personalization:
            for kind in config.learners:
                for thr in config.thresholds:
                    cells.append(Cell(q, mode, kind, thr, VARIANT_FULL))
                if config.include_rt_only:
                    # hover measures are not predictors here, so one cell
                    # covers every threshold (blank in the report)
                    cells.append(Cell(q, mode, kind, None, VARIANT_RT_ONLY))
    return sorted(cells, key=lambda c: c.key())


def cell_grid(config: RunConfig, kind: str, p: int) -> list[dict]:
    if kind in config.grids:
        return [dict(hp) for hp in config.grids[kind]]
    return default_grid(kind, p)


def question_plan(config: RunConfig, qd: QuestionData) -> CVPlan:
    """One outer partition per question, shared by every cell of that
    question so learners and thresholds see equal training samples."""
    return make_cv_plan(
        qd.y,
        n_folds=config.cv.get("n_folds", 10),
        inner_reps=config.cv.get("inner_reps", 500),
        train_frac=config.cv.get("train_frac", 0.75),
        seed=derive_seed(config.seed, "cv_plan", qd.question_id),
    )


def run_cell(config: RunConfig, qd: QuestionData, cell: Cell) -> tuple[dict, NestedCVResult]:
    plan = question_plan(config, qd)
    threshold = cell.threshold if cell.threshold is not None else config.thresholds[0]
    features = design_features(cell.variant)
    builder = make_design_builder(qd, threshold, cell.mode, cell.variant, config.leakage)
    grid = cell_grid(config, cell.learner, len(features))
    result = nested_cv(
        cell.learner, qd.y, grid, plan, builder, features, keep_designs=True
    )
    row = {
        "question": cell.question,
        "manipulation": qd.manipulation,
        "personalization": cell.mode,
        "model": cell.variant,
        "supervised_learner": cell.learner,
        "threshold_hovers_ms": "" if cell.threshold is None else str(cell.threshold),
        "accuracy": f"{result.accuracy:.4f}",
        "sensitivity": f"{result.sensitivity:.4f}",
        "specificity": f"{result.specificity:.4f}",
    }
    return row, result


def _fold_detail_rows(cell: Cell, result: NestedCVResult) -> list[dict]:
    rows = []
    for fo in result.folds:
        rows.append(
            {
                "question": cell.question,
                "personalization": cell.mode,
                "model": cell.variant,
                "supervised_learner": cell.learner,
                "threshold_hovers_ms": "" if cell.threshold is None else str(cell.threshold),
                "fold": fo.fold,
                "n_validation": fo.validation_rows.size,
                "accuracy": f"{fo.accuracy:.4f}",
                "chosen_hp": json.dumps(fo.chosen_hp, sort_keys=True),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Pipeline stages


def _atomic_write(path: Path, writer_fn: Callable[[Path], None]) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    os.close(fd)
    try:
        writer_fn(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_synth(config: RunConfig) -> dict:
    """Generate a synthetic session set and write collector-format files.

    Files land atomically: the dataset is written to a scratch directory
    and moved into place only when complete.
    """
    synth_cfg = config.synth_config()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = gen_dataset(synth_cfg, config.seed)
    with tempfile.TemporaryDirectory(dir=out) as scratch:
        staged = write_synth_outputs(data, scratch)
        paths = {}
        for name, src in staged.items():
            dest = out / Path(src).name
            os.replace(src, dest)
            paths[name] = str(dest)
    return paths


def load_records(config: RunConfig) -> tuple[list[QuestionRecord], list, dict[str, str]]:
    """Records plus diagnostics plus question -> manipulation tags."""
    out = Path(config.out_dir)
    events = Path(config.input.get("events", out / "events.jsonl"))
    metadata = Path(config.input.get("metadata", out / "metadata.csv"))
    if not events.exists() or not metadata.exists():
        raise ConfigError(
            f"missing input files: {events} / {metadata}; run synth or point input paths"
        )
    records, diagnostics = read_session_data(events, metadata)
    manipulations: dict[str, str] = {}
    gt = Path(config.input.get("ground_truth", out / "ground_truth.csv"))
    if gt.exists():
        with open(gt, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                manipulations[row["question_id"]] = row.get("manipulation", "")
    return records, diagnostics, manipulations


def retained_records(config: RunConfig) -> tuple[list[QuestionRecord], dict, dict[str, str]]:
    records, diagnostics, manipulations = load_records(config)
    retained, report = apply_exclusions(records, config.exclusion_config())
    info = {
        "parse_diagnostics": [str(d) for d in diagnostics],
        "exclusions": {
            "total": report.total,
            "retained": report.retained,
            "counts": report.counts,
            "excluded": [list(e) for e in report.excluded],
        },
    }
    return retained, info, manipulations


def question_ids(records: Sequence[QuestionRecord]) -> tuple[list[str], list[str]]:
    targets = sorted({r.question_id for r in records if r.is_target})
    baselines = sorted({r.question_id for r in records if not r.is_target})
    return targets, baselines


def run_extract(config: RunConfig) -> dict:
    """Measures CSV (one row per record x threshold) plus summary statistics.

    Malformed event-log lines are reported with counts; writing output in
    their presence requires the explicit ``allow_partial`` opt-in.
    """
    retained, info, _ = retained_records(config)
    n_bad = len(info["parse_diagnostics"])
    if n_bad and not config.allow_partial:
        raise ConfigError(
            f"{n_bad} malformed event-log line(s); set allow_partial to write "
            "output anyway (diagnostics land in exclusions.json)"
        )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for rec in retained:
        for thr in config.thresholds:
            rows.append(
                (rec.respondent_id, rec.question_id, thr, extract_measures(rec.trajectory, thr))
            )
    measures_path = out / "measures.csv"
    _atomic_write(measures_path, lambda p: write_measures_csv(rows, p))

    # per-condition descriptive statistics (the numbers behind the
    # distribution figure), target questions only
    summary_path = out / "measures_summary.csv"
    by_key: dict[tuple, list[np.ndarray]] = {}
    for rec in retained:
        if rec.condition is None:
            continue
        for thr in config.thresholds:
            key = (rec.question_id, thr, rec.condition)
            by_key.setdefault(key, []).append(extract_measures(rec.trajectory, thr).as_vector())

    def write_summary(p: Path) -> None:
        with open(p, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["question_id", "threshold_ms", "condition", "measure", "n", "mean", "sd", "q25", "median", "q75"]
            )
            for key in sorted(by_key):
                block = np.vstack(by_key[key])
                for j, name in enumerate(MEASURE_NAMES):
                    col = block[:, j]
                    writer.writerow(
                        [
                            key[0],
                            key[1],
                            key[2],
                            name,
                            col.size,
                            format_value(float(col.mean())),
                            format_value(float(col.std(ddof=1)) if col.size > 1 else 0.0),
                            format_value(float(np.quantile(col, 0.25))),
                            format_value(float(np.quantile(col, 0.5))),
                            format_value(float(np.quantile(col, 0.75))),
                        ]
                    )

    _atomic_write(summary_path, write_summary)
    exclusions_path = out / "exclusions.json"
    _atomic_write(
        exclusions_path,
        lambda p: p.write_text(json.dumps(info, indent=2, sort_keys=True), encoding="utf-8"),
    )
    return {
        "measures": str(measures_path),
        "summary": str(summary_path),
        "exclusions": str(exclusions_path),
        "n_retained": info["exclusions"]["retained"],
        "n_parse_diagnostics": len(info["parse_diagnostics"]),
    }


def run_personalize(config: RunConfig) -> dict:
    """Globally fitted corrected measures, for inspection and export."""
    retained, _, manipulations = retained_records(config)
    targets, baselines = question_ids(retained)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corrected_path = out / "corrected_measures.csv"
    coef_path = out / "correction_coefficients.csv"
    coef_rows: list[tuple[str, int, str, str, float]] = []

    def write_corrected(p: Path) -> None:
        with open(p, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            # the measures CSV schema plus a trailing correction column
            writer.writerow(
                ["respondent_id", "question_id", "threshold_ms"]
                + list(MEASURE_NAMES)
                + ["correction"]
            )
            for q in targets:
                qd = collect_question_data(
                    retained, q, baselines, config.thresholds, manipulations.get(q, "")
                )
                all_rows = np.arange(qd.n)
                for thr in config.thresholds:
                    for mode in config.personalization:
                        block = corrected_measures(qd, thr, mode, all_rows)
                        for i, rid in enumerate(qd.respondent_ids):
                            writer.writerow(
                                [rid, q, thr]
                                + [format_value(float(v)) for v in block[i]]
                                + [mode]
                            )
                    if MODE_BASELINE in config.personalization:
                        model = fit_baseline_correction(
                            qd.measures[thr], qd.panel_values[thr], all_rows, MEASURE_NAMES
                        )
                        for measure, term, value in coefficients_table(model):
                            coef_rows.append((q, thr, measure, term, value))

    _atomic_write(corrected_path, write_corrected)

    def write_coefficients(p: Path) -> None:
        with open(p, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["question_id", "threshold_ms", "measure", "term", "coefficient"])
            for q, thr, measure, term, value in coef_rows:
                writer.writerow([q, thr, measure, term, format_value(value)])

    _atomic_write(coef_path, write_coefficients)
    return {"corrected_measures": str(corrected_path), "coefficients": str(coef_path)}


def _cell_worker(args: tuple) -> tuple[tuple, dict, list[dict], str]:
    config_dict, qd, cell = args
    config = RunConfig.from_dict(config_dict)
    try:
        row, result = run_cell(config, qd, cell)
        return cell.key(), row, _fold_detail_rows(cell, result), ""
    except Exception as exc:  # cell failures recorded, other cells proceed
        return cell.key(), {}, [], f"{cell.label()}: {exc}"


def run_evaluate(config: RunConfig) -> dict:
    retained, info, manipulations = retained_records(config)
    targets, baselines = question_ids(retained)
    if not targets:
        raise ConfigError("no target questions in the input data")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    question_data = {
        q: collect_question_data(
            retained, q, baselines, config.thresholds, manipulations.get(q, "")
        )
        for q in targets
    }
    cells = enumerate_cells(config, targets)
    tasks = [(config.to_dict(), question_data[c.question], c) for c in cells]
    results: dict[tuple, dict] = {}
    fold_detail: dict[tuple, list[dict]] = {}
    failures: list[str] = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for key, row, detail, err in pool.map(_cell_worker, tasks):
                if err:
                    failures.append(err)
                else:
                    results[key] = row
                    fold_detail[key] = detail
    else:
        for task in tasks:
            key, row, detail, err = _cell_worker(task)
            if err:
                failures.append(err)
            else:
                results[key] = row
                fold_detail[key] = detail

    rows = [results[k] for k in sorted(results)]
    detail_rows = [r for k in sorted(fold_detail) for r in fold_detail[k]]
    best_by_question: dict[str, dict] = {}
    for row in rows:
        q = row["question"]
        if q not in best_by_question or float(row["accuracy"]) > float(
            best_by_question[q]["accuracy"]
        ):
            best_by_question[q] = row

    report_path = out / "report.csv"

    def write_report(p: Path) -> None:
        with open(p, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)

    _atomic_write(report_path, write_report)

    detail_path = out / "fold_detail.csv"

    def write_detail(p: Path) -> None:
        fieldnames = (
            "question",
            "personalization",
            "model",
            "supervised_learner",
            "threshold_hovers_ms",
            "fold",
            "n_validation",
            "accuracy",
            "chosen_hp",
        )
        with open(p, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(detail_rows)

    _atomic_write(detail_path, write_detail)

    manifest = {
        "package_version": __version__,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "protocol": {
            "outer_folds": config.cv.get("n_folds", 10),
            "outer_stratified": True,
            "inner_repetitions": config.cv.get("inner_reps", 500),
            "inner_train_fraction": config.cv.get("train_frac", 0.75),
            "importance_permutations": config.importance.get("n_perm", 500),
            "hover_thresholds_ms": list(config.thresholds),
            "positive_class": "difficult",
            "importance_data": "out_of_fold_pooled",
        },
        "grids": {
            kind: cell_grid(config, kind, len(MEASURE_NAMES) + 2) for kind in config.learners
        },
        "questions": {
            q: {
                "n": question_data[q].n,
                "manipulation": question_data[q].manipulation,
                "n_options": question_data[q].n_options,
            }
            for q in targets
        },
        "best_by_question": best_by_question,
        "cells_total": len(cells),
        "cells_failed": failures,
        "exclusions": info["exclusions"],
        "timestamp_unix": time.time(),
    }
    manifest_path = out / "run_manifest.json"
    _atomic_write(
        manifest_path,
        lambda p: p.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"),
    )
    return {
        "report": str(report_path),
        "fold_detail": str(detail_path),
        "manifest": str(manifest_path),
        "n_cells": len(cells),
        "n_failed": len(failures),
    }


def run_importance(config: RunConfig) -> dict:
    """Permutation importance of the best full model per question.

    The winning cell is re-run with its derived seed (deterministic), and
    features are permuted on the pooled out-of-fold data.
    """
    out = Path(config.out_dir)
    manifest_path = out / "run_manifest.json"
    if not manifest_path.exists():
        raise ConfigError("run evaluate before importance (missing run_manifest.json)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    retained, _, manipulations = retained_records(config)
    targets, baselines = question_ids(retained)
    n_perm = config.importance.get("n_perm", 500)

    rows: list[dict] = []
    for q in targets:
        # best full-variant row for this question from the evaluation report
        best = None
        with open(out / "report.csv", newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["question"] != q or row["model"] != VARIANT_FULL:
                    continue
                if best is None or float(row["accuracy"]) > float(best["accuracy"]):
                    best = row
        if best is None:
            continue
        qd = collect_question_data(
            retained, q, baselines, config.thresholds, manipulations.get(q, "")
        )
        cell = Cell(
            question=q,
            mode=best["personalization"],
            learner=best["supervised_learner"],
            threshold=int(best["threshold_hovers_ms"]),
            variant=VARIANT_FULL,
        )
        _, result = run_cell(config, qd, cell)
        report = permutation_importance(
            oof_predict_fn(result),
            result.oof_design(),
            qd.y,
            design_features(VARIANT_FULL),
            n_perm=n_perm,
            seed=derive_seed(config.seed, "importance", q),
        )
        for j, name in enumerate(report.feature_names):
            rows.append(
                {
                    "question": q,
                    "model": cell.learner,
                    "feature": name,
                    "mean_drop": format_value(float(report.mean_drop[j])),
                    "sd_drop": format_value(float(report.sd_drop[j])),
                    "rank": int(report.rank[j]),
                }
            )

    importance_path = out / "importance.csv"

    def write_importance(p: Path) -> None:
        with open(p, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=IMPORTANCE_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)

    _atomic_write(importance_path, write_importance)
    return {"importance": str(importance_path), "n_rows": len(rows)}


def run_report(config: RunConfig) -> dict:
    """Plain-text digest: best row per question plus importance leaders."""
    out = Path(config.out_dir)
    report_csv = out / "report.csv"
    if not report_csv.exists():
        raise ConfigError("run evaluate before report (missing report.csv)")
    with open(report_csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    lines = ["question | best accuracy | learner | personalization | model | threshold"]
    best_by_q: dict[str, dict] = {}
    for row in rows:
        q = row["question"]
        if q not in best_by_q or float(row["accuracy"]) > float(best_by_q[q]["accuracy"]):
            best_by_q[q] = row
    for q in sorted(best_by_q):
        b = best_by_q[q]
        lines.append(
            f"{q} | {b['accuracy']} | {b['supervised_learner']} | "
            f"{b['personalization']} | {b['model']} | {b['threshold_hovers_ms'] or '-'}"
        )
    importance_csv = out / "importance.csv"
    if importance_csv.exists():
        lines.append("")
        lines.append("top importance (rank 1 per question):")
        with open(importance_csv, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["rank"] == "1":
                    lines.append(
                        f"{row['question']}: {row['feature']} (drop {row['mean_drop']})"
                    )
    text = "\n".join(lines) + "\n"
    summary_path = out / "summary.txt"
    _atomic_write(summary_path, lambda p: p.write_text(text, encoding="utf-8"))
    return {"summary": str(summary_path), "text": text}
