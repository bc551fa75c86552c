"""Synthetic survey sessions with known ground truth.

Respondents get persistent interaction habits (speed, pausing, jitter);
questions get geometries (option list plus submit button); the difficult
condition perturbs behavior through an EffectSpec. Trajectories are
simulated as minimum-jerk point-to-point movements sampled on a fixed
cadence with additive jitter, inserted stationary pauses, and optional
zigzag detours that create direction flips. The emitted wire format and
metadata CSV are exactly what the parsing module consumes, so the
generator is a drop-in replacement for a live collector.

Randomness: one root seed, with per-entity derived streams, so any single
trajectory can be regenerated in isolation and output does not depend on
generation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from mousepara.learners import Dataset
from mousepara.measures import MEASURE_NAMES, extract_measures
from mousepara.records import CursorEvent, QuestionRecord, Trajectory, write_event_log, write_metadata
from mousepara.seeding import derive_rng


@dataclass(frozen=True)
class RespondentProfile:
    respondent_id: str
    speed_mult: float  # > 0; scales every duration this person produces
    pause_mult: float  # > 0; scales the person's pause rate
    jitter_px: float  # >= 0; movement noise amplitude
    age: int
    gender: int


@dataclass(frozen=True)
class EffectSpec:
    """Shifts applied in the difficult condition, plus a position nuisance.

    The position term is applied to every record of the question
    regardless of condition (it is what the position correction removes).
    """

    rt_mult: float = 1.0  # scales movement, pause and terminal durations
    init_mult: float = 1.0  # scales the pre-movement reading pause
    hover_rate_add: float = 0.0  # extra inserted pauses (Poisson rate)
    x_flip_rate_add: float = 0.0  # extra horizontal detours (each ~ 2 flips)
    y_flip_rate_add: float = 0.0
    position_ms_per_option: float = 0.0  # added dwell per (answer_position - 1)

    def is_identity(self) -> bool:
        return (
            self.rt_mult == 1.0
            and self.init_mult == 1.0
            and self.hover_rate_add == 0.0
            and self.x_flip_rate_add == 0.0
            and self.y_flip_rate_add == 0.0
        )


EFFECT_PRESETS = {
    "identity": EffectSpec(),
    # slower overall interaction, extra pausing, more vertical scanning
    "language_complexity": EffectSpec(
        rt_mult=1.3,
        hover_rate_add=0.8,
        y_flip_rate_add=0.8,
        position_ms_per_option=120.0,
    ),
    # longer orientation phase, horizontal searching, some extra pausing
    "option_shuffle": EffectSpec(
        init_mult=1.4,
        hover_rate_add=0.5,
        x_flip_rate_add=1.0,
        position_ms_per_option=150.0,
    ),
}


@dataclass(frozen=True)
class QuestionGeometry:
    start: tuple[float, float]
    options: tuple[tuple[float, float], ...]
    submit: tuple[float, float]

    @property
    def n_options(self) -> int:
        return len(self.options)


def default_geometry(n_options: int, spacing: float = 60.0) -> QuestionGeometry:
    options = tuple((420.0, 220.0 + spacing * i) for i in range(n_options))
    return QuestionGeometry(
        start=(640.0, 80.0),
        options=options,
        submit=(420.0, 220.0 + spacing * n_options + 110.0),
    )


@dataclass(frozen=True)
class SynthQuestion:
    question_id: str
    n_options: int
    is_target: bool
    effects: EffectSpec
    manipulation: str = ""


@dataclass(frozen=True)
class SynthConfig:
    n_respondents: int = 200
    preset: str = "language_complexity"
    target_questions: tuple[SynthQuestion, ...] | None = None
    n_baseline: int = 8
    baseline_n_options: int = 5
    baseline_position_ms: float = 120.0
    # person effects (log-sd of the respondent multipliers)
    person_speed_sd: float = 0.35
    person_pause_sd: float = 0.3
    person_jitter_sd: float = 0.3
    # base interaction parameters
    init_ms: float = 300.0
    speed_px_ms: float = 0.7
    pause_rate: float = 1.2
    pause_ms: float = 900.0
    terminal_ms: float = 500.0
    duration_noise_sd: float = 0.2
    pause_noise_sd: float = 0.45
    cadence_ms: float = 15.0
    jitter_px: float = 1.2
    flip_amp_px: float = 80.0
    age_range: tuple[int, int] = (21, 68)
    gender_rate: float = 0.5

    def resolved_targets(self) -> tuple[SynthQuestion, ...]:
        if self.target_questions is not None:
            return self.target_questions
        if self.preset not in EFFECT_PRESETS:
            raise ValueError(f"unknown effect preset {self.preset!r}")
        effects = EFFECT_PRESETS[self.preset]
        return (
            SynthQuestion("employment_detail", 9, True, effects, self.preset),
            SynthQuestion("employee_level", 4, True, effects, self.preset),
            SynthQuestion("education_level", 11, True, effects, self.preset),
        )

    def baseline_questions(self) -> tuple[SynthQuestion, ...]:
        nuisance = EffectSpec(position_ms_per_option=self.baseline_position_ms)
        return tuple(
            SynthQuestion(f"baseline_{r + 1}", self.baseline_n_options, False, nuisance)
            for r in range(self.n_baseline)
        )


# ---------------------------------------------------------------------------
# Respondents


def gen_respondents(n: int, seed: int, config: SynthConfig | None = None) -> list[RespondentProfile]:
    if n < 1:
        raise ValueError("need at least one respondent")
    cfg = config or SynthConfig()
    profiles = []
    for i in range(n):
        rng = derive_rng(seed, "respondent", i)
        profiles.append(
            RespondentProfile(
                respondent_id=f"r{i:05d}",
                speed_mult=float(np.exp(rng.normal(0.0, cfg.person_speed_sd))),
                pause_mult=float(np.exp(rng.normal(0.0, cfg.person_pause_sd))),
                jitter_px=cfg.jitter_px * float(np.exp(rng.normal(0.0, cfg.person_jitter_sd))),
                age=int(rng.integers(cfg.age_range[0], cfg.age_range[1] + 1)),
                gender=int(rng.random() < cfg.gender_rate),
            )
        )
    return profiles


# ---------------------------------------------------------------------------
# Trajectory simulation


def _minjerk(tau: np.ndarray) -> np.ndarray:
    return 10.0 * tau**3 - 15.0 * tau**4 + 6.0 * tau**5


class _EventSink:
    def __init__(self):
        self.events: list[CursorEvent] = []

    def emit(self, t: float, x: float, y: float) -> None:
        ti = int(round(t))
        xi, yi = int(round(x)), int(round(y))
        if self.events:
            last = self.events[-1]
            if (xi, yi) == (last.x, last.y):
                return  # no movement, no event
            ti = max(ti, last.t_ms + 1)
        self.events.append(CursorEvent(ti, xi, yi))


def gen_trajectory(
    profile: RespondentProfile,
    geometry: QuestionGeometry,
    condition: int | None,
    effects: EffectSpec,
    seed: int,
    config: SynthConfig | None = None,
    answer_position: int = 1,
    question_id: str = "q",
) -> Trajectory:
    """Simulate one page visit ending in submission.

    The difficult condition applies the EffectSpec multipliers/rates; the
    position term applies regardless of condition.
    """
    cfg = config or SynthConfig()
    rng = derive_rng(seed, "trajectory", profile.respondent_id, question_id)
    difficult = condition == 1
    rt_mult = effects.rt_mult if difficult else 1.0
    init_mult = effects.init_mult if difficult else 1.0

    def noisy(scale_sd: float) -> float:
        return float(np.exp(rng.normal(0.0, scale_sd))) if scale_sd > 0 else 1.0

    start = np.array(geometry.start)
    option = np.array(geometry.options[answer_position - 1])
    submit = np.array(geometry.submit)

    # waypoints with zigzag detours on the approach leg
    n_x = rng.poisson(effects.x_flip_rate_add) if difficult else 0
    n_y = rng.poisson(effects.y_flip_rate_add) if difficult else 0
    detours = []
    for i in range(n_x):
        tau = rng.uniform(0.25, 0.75)
        base = start + tau * (option - start)
        off = cfg.flip_amp_px * (1 if i % 2 == 0 else -1)
        detours.append((tau, base + np.array([off, 0.0])))
    for i in range(n_y):
        tau = rng.uniform(0.25, 0.75)
        base = start + tau * (option - start)
        off = cfg.flip_amp_px * (1 if i % 2 == 0 else -1)
        detours.append((tau, base + np.array([0.0, off])))
    detours.sort(key=lambda d: d[0])
    approach = [start] + [pt for _, pt in detours] + [option]
    legs = list(zip(approach[:-1], approach[1:])) + [(option, submit)]
    option_boundary = len(approach) - 1  # boundary index after reaching the option

    # stationary pauses at leg boundaries (1 .. n_legs); boundary 0 would
    # only extend the initiation phase
    pause_rate = cfg.pause_rate * profile.pause_mult + (
        effects.hover_rate_add if difficult else 0.0
    )
    n_pauses = min(int(rng.poisson(pause_rate)), 20)
    pause_at = np.zeros(len(legs) + 1)
    for _ in range(n_pauses):
        boundary = int(rng.integers(1, len(legs) + 1))
        pause_at[boundary] += cfg.pause_ms * profile.speed_mult * rt_mult * noisy(cfg.pause_noise_sd)
    pause_at[option_boundary] += (
        (answer_position - 1) * effects.position_ms_per_option * profile.speed_mult
    )

    sink = _EventSink()
    t = cfg.init_ms * profile.speed_mult * init_mult * noisy(cfg.duration_noise_sd)
    for leg_idx, (p, q) in enumerate(legs, start=1):
        if leg_idx > 1:
            t += pause_at[leg_idx - 1]
        dist = float(np.hypot(*(q - p)))
        duration = max(
            dist / cfg.speed_px_ms * profile.speed_mult * rt_mult * noisy(cfg.duration_noise_sd),
            40.0,
        )
        k = max(2, min(int(round(duration / cfg.cadence_ms)), int(duration)))
        taus = np.arange(1, k + 1) / k
        path = p + np.outer(_minjerk(taus), q - p)
        if profile.jitter_px > 0:
            path = path + rng.normal(0.0, profile.jitter_px, size=path.shape)
        for i in range(k):
            sink.emit(t + duration * taus[i], path[i, 0], path[i, 1])
        t += duration
    t += pause_at[len(legs)]
    t += cfg.terminal_ms * profile.speed_mult * rt_mult * noisy(cfg.duration_noise_sd)
    submit_t = max(int(round(t)), sink.events[-1].t_ms if sink.events else 0)
    return Trajectory(page_id=question_id, events=tuple(sink.events), submit_t_ms=submit_t)


# ---------------------------------------------------------------------------
# Full dataset generation


@dataclass(frozen=True)
class SynthDataset:
    config: SynthConfig
    seed: int
    profiles: list[RespondentProfile]
    records: list[QuestionRecord]
    target_questions: tuple[SynthQuestion, ...]
    baseline_questions: tuple[SynthQuestion, ...]

    def target_ids(self) -> list[str]:
        return [q.question_id for q in self.target_questions]

    def baseline_ids(self) -> list[str]:
        return [q.question_id for q in self.baseline_questions]


def _balanced_conditions(n: int, rng: np.random.Generator) -> np.ndarray:
    conditions = np.zeros(n, dtype=int)
    conditions[: n // 2] = 1
    if n % 2:
        conditions[n // 2] = int(rng.random() < 0.5)
    return conditions[rng.permutation(n)]


def gen_dataset(config: SynthConfig, seed: int) -> SynthDataset:
    """All respondents answering every target and baseline question.

    Conditions are assigned balanced at random, independently per target
    question; per-question counts differ by at most one.
    """
    profiles = gen_respondents(config.n_respondents, seed, config)
    targets = config.resolved_targets()
    baselines = config.baseline_questions()
    records: list[QuestionRecord] = []
    condition_of: dict[str, np.ndarray] = {}
    for q in targets:
        rng = derive_rng(seed, "conditions", q.question_id)
        condition_of[q.question_id] = _balanced_conditions(len(profiles), rng)
    for idx, profile in enumerate(profiles):
        for q in list(targets) + list(baselines):
            rng = derive_rng(seed, "answer", profile.respondent_id, q.question_id)
            answer = int(rng.integers(1, q.n_options + 1))
            condition = int(condition_of[q.question_id][idx]) if q.is_target else None
            traj = gen_trajectory(
                profile,
                default_geometry(q.n_options),
                condition,
                q.effects,
                seed,
                config,
                answer_position=answer,
                question_id=q.question_id,
            )
            records.append(
                QuestionRecord(
                    respondent_id=profile.respondent_id,
                    question_id=q.question_id,
                    trajectory=traj,
                    is_target=q.is_target,
                    condition=condition,
                    answer_position=answer,
                    n_options=q.n_options,
                    age=profile.age,
                    gender=profile.gender,
                )
            )
    return SynthDataset(
        config=config,
        seed=seed,
        profiles=profiles,
        records=records,
        target_questions=targets,
        baseline_questions=baselines,
    )


def write_synth_outputs(data: SynthDataset, out_dir: str | Path, batch_ms: int = 10_000) -> dict:
    """Write events.jsonl, metadata.csv and ground_truth.csv; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "events": out / "events.jsonl",
        "metadata": out / "metadata.csv",
        "ground_truth": out / "ground_truth.csv",
    }
    write_event_log(data.records, paths["events"], batch_ms=batch_ms)
    write_metadata(data.records, paths["metadata"])
    with open(paths["ground_truth"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "question_id",
                "manipulation",
                "rt_mult",
                "init_mult",
                "hover_rate_add",
                "x_flip_rate_add",
                "y_flip_rate_add",
                "position_ms_per_option",
            ]
        )
        for q in data.target_questions:
            e = q.effects
            writer.writerow(
                [
                    q.question_id,
                    q.manipulation,
                    e.rt_mult,
                    e.init_mult,
                    e.hover_rate_add,
                    e.x_flip_rate_add,
                    e.y_flip_rate_add,
                    e.position_ms_per_option,
                ]
            )
    return {k: str(v) for k, v in paths.items()}


# ---------------------------------------------------------------------------
# Measure-level fast generator (learner tests skip the trajectory layer)


def gen_measure_dataset(
    n: int,
    seed: int,
    effect: Sequence[float] | float = 0.0,
    person_sd: float = 0.0,
    noise_sd: float = 0.3,
) -> Dataset:
    """Log-normal measures with an optional condition shift and person effect.

    ``effect`` is the per-measure log-scale shift for the difficult
    condition (a scalar applies to response_time only).
    """
    rng = derive_rng(seed, "measure_dataset")
    J = len(MEASURE_NAMES)
    if np.isscalar(effect):
        delta = np.zeros(J)
        delta[0] = float(effect)
    else:
        delta = np.asarray(effect, dtype=float)
    y = _balanced_conditions(n, rng)
    u = rng.normal(0.0, person_sd, size=n) if person_sd > 0 else np.zeros(n)
    base = np.log(np.array([3000.0, 300.0, 2.0, 1500.0, 800.0, 1.0, 0.01, 3.0, 4.0]))
    logs = base[None, :] + u[:, None] + delta[None, :] * y[:, None]
    logs = logs + rng.normal(0.0, noise_sd, size=(n, J))
    X = np.exp(logs)
    for j, name in enumerate(MEASURE_NAMES):
        if name in ("hover_count", "x_flips", "y_flips"):
            X[:, j] = np.round(X[:, j])
    age = rng.integers(21, 69, size=n).astype(float)
    gender = (rng.random(n) < 0.5).astype(float)
    X = np.column_stack([X, age, gender])
    return Dataset(X=X, y=y, feature_names=MEASURE_NAMES + ("age", "gender"))


def extract_record_measures(
    records: Sequence[QuestionRecord], threshold_ms: int
) -> dict[tuple[str, str], np.ndarray]:
    """Measure vectors keyed by (respondent_id, question_id)."""
    return {
        (r.respondent_id, r.question_id): extract_measures(r.trajectory, threshold_ms).as_vector()
        for r in records
        if r.trajectory.events
    }


def with_preset(config: SynthConfig, preset: str) -> SynthConfig:
    return replace(config, preset=preset, target_questions=None)
