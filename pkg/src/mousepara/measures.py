"""Mouse-tracking measures computed from one trajectory.

Nine measures per (respondent, question): response time, initiation time,
hover count and total hover duration (threshold-dependent), total
Euclidean distance, maximum velocity, maximum acceleration, and direction
flips along each axis.

Conventions, fixed package-wide:
  * times in ms, coordinates in px, velocity px/ms, acceleration px/ms².
  * a hover is a maximal stationary period of at least the threshold
    duration: the gap between two consecutive events, or between the last
    event and submission. The gap from page load to the first movement is
    initiation time, never a hover.
  * velocity is per-segment (length / elapsed); acceleration is the
    velocity difference between adjacent segments over the time between
    their midpoints, taken from the raw irregular samples with no
    smoothing. The maximum is of the signed acceleration.
  * flips count adjacent sign alternations of the nonzero per-segment
    deltas; zero deltas are skipped without resetting direction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from mousepara.records import Trajectory

DEFAULT_HOVER_THRESHOLDS = (250, 500, 2000, 3000)

MEASURE_NAMES = (
    "response_time",
    "initiation_time",
    "hover_count",
    "hover_total_ms",
    "total_distance",
    "max_velocity",
    "max_acceleration",
    "x_flips",
    "y_flips",
)

MEASURES_CSV_COLUMNS = ("respondent_id", "question_id", "threshold_ms") + MEASURE_NAMES


class EmptyTrajectoryError(ValueError):
    """No movement recorded; such records are excluded upstream."""


@dataclass(frozen=True)
class MeasureSet:
    response_time: float
    initiation_time: float
    hover_count: int
    hover_total_ms: float
    total_distance: float
    max_velocity: float
    max_acceleration: float
    x_flips: int
    y_flips: int

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in MEASURE_NAMES], dtype=float)


def _require_events(traj: Trajectory) -> None:
    if not traj.events:
        raise EmptyTrajectoryError(f"page {traj.page_id}: no movement recorded")


def response_and_initiation_time(traj: Trajectory) -> tuple[float, float]:
    """(time to submission, time to first recorded movement), both from page load."""
    _require_events(traj)
    return float(traj.submit_t_ms), float(traj.events[0].t_ms)


def hover_metrics(
    traj: Trajectory, threshold_ms: int, include_terminal: bool = True
) -> tuple[int, float]:
    """Count and total duration of stationary periods >= threshold_ms.

    ``include_terminal`` controls whether the pause between the last
    movement and submission can count as a hover (default yes).
    """
    if threshold_ms <= 0:
        raise ValueError("hover threshold must be positive")
    _require_events(traj)
    times = [ev.t_ms for ev in traj.events]
    gaps = [b - a for a, b in zip(times, times[1:])]
    if include_terminal:
        gaps.append(traj.submit_t_ms - times[-1])
    hovers = [g for g in gaps if g >= threshold_ms]
    return len(hovers), float(sum(hovers))


def kinematics(traj: Trajectory) -> tuple[float, float, float]:
    """(total distance, max velocity, max signed acceleration).

    Zero with fewer than 2 events; acceleration zero with fewer than 3.
    """
    _require_events(traj)
    if len(traj.events) < 2:
        return 0.0, 0.0, 0.0
    t = np.array([ev.t_ms for ev in traj.events], dtype=float)
    x = np.array([ev.x for ev in traj.events], dtype=float)
    y = np.array([ev.y for ev in traj.events], dtype=float)
    dt = np.diff(t)  # > 0 by trajectory invariant
    seg = np.hypot(np.diff(x), np.diff(y))
    total = float(seg.sum())
    vel = seg / dt
    max_vel = float(vel.max())
    if len(traj.events) < 3:
        return total, max_vel, 0.0
    mid = (t[:-1] + t[1:]) / 2.0
    acc = np.diff(vel) / np.diff(mid)
    return total, max_vel, float(acc.max())


def axis_flips(traj: Trajectory) -> tuple[int, int]:
    """Direction reversals along the horizontal and vertical axes."""
    _require_events(traj)
    x = np.array([ev.x for ev in traj.events], dtype=float)
    y = np.array([ev.y for ev in traj.events], dtype=float)
    return _flips(np.diff(x)), _flips(np.diff(y))


def _flips(deltas: np.ndarray) -> int:
    signs = np.sign(deltas)
    signs = signs[signs != 0]
    if signs.size < 2:
        return 0
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def extract_measures(
    traj: Trajectory, threshold_ms: int, include_terminal_hover: bool = True
) -> MeasureSet:
    """All nine measures for one trajectory at one hover threshold."""
    rt, it = response_and_initiation_time(traj)
    n_hover, hover_ms = hover_metrics(traj, threshold_ms, include_terminal_hover)
    dist, vmax, amax = kinematics(traj)
    xf, yf = axis_flips(traj)
    return MeasureSet(
        response_time=rt,
        initiation_time=it,
        hover_count=n_hover,
        hover_total_ms=hover_ms,
        total_distance=dist,
        max_velocity=vmax,
        max_acceleration=amax,
        x_flips=xf,
        y_flips=yf,
    )


# ---------------------------------------------------------------------------
# CSV interface


def format_value(v: float | int) -> str:
    """Serialize with enough digits for oracle comparison (>= 9 significant)."""
    if isinstance(v, int):
        return str(v)
    f = float(v)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return f"{f:.12g}"


def write_measures_csv(
    rows: Iterable[tuple[str, str, int, MeasureSet]], path: str | Path
) -> None:
    """Rows are (respondent_id, question_id, threshold_ms, measures)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MEASURES_CSV_COLUMNS)
        for respondent_id, question_id, threshold_ms, ms in rows:
            writer.writerow(
                [respondent_id, question_id, threshold_ms]
                + [format_value(getattr(ms, name)) for name in MEASURE_NAMES]
            )


def read_measures_csv(path: str | Path) -> list[dict]:
    """Read back a measures CSV; numeric fields become floats/ints."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed: dict = {
                "respondent_id": row["respondent_id"],
                "question_id": row["question_id"],
                "threshold_ms": int(row["threshold_ms"]),
            }
            for name in MEASURE_NAMES:
                v = float(row[name])
                parsed[name] = int(v) if name in ("hover_count", "x_flips", "y_flips") else v
            out.append(parsed)
    return out


def displacement(traj: Trajectory) -> float:
    """Euclidean distance between the first and last event."""
    _require_events(traj)
    a, b = traj.events[0], traj.events[-1]
    return math.hypot(b.x - a.x, b.y - a.y)
