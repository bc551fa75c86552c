"""Shared test helpers: trajectory factories and hypothesis strategies."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from mousepara.records import CursorEvent, Trajectory


def make_trajectory(steps, submit_extra=0, page_id="q", t0=0):
    """Build a trajectory from (dt, dx, dy) steps starting at (t0, 500, 400)."""
    t, x, y = t0, 500, 400
    events = []
    for dt, dx, dy in steps:
        t, x, y = t + dt, x + dx, y + dy
        events.append(CursorEvent(t, x, y))
    submit = (events[-1].t_ms if events else 0) + submit_extra
    return Trajectory(page_id=page_id, events=tuple(events), submit_t_ms=submit)


def random_trajectory(rng: np.random.Generator, max_events: int = 40) -> Trajectory:
    """Random valid trajectory: strictly increasing times, moving events."""
    n = int(rng.integers(1, max_events + 1))
    t = int(rng.integers(0, 2000))
    x = int(rng.integers(-500, 1500))
    y = int(rng.integers(-500, 1500))
    events = [CursorEvent(t, x, y)]
    for _ in range(n - 1):
        t += int(rng.integers(1, 4000))
        dx, dy = 0, 0
        while dx == 0 and dy == 0:
            dx = int(rng.integers(-50, 51))
            dy = int(rng.integers(-50, 51))
        x += dx
        y += dy
        events.append(CursorEvent(t, x, y))
    submit = events[-1].t_ms + int(rng.integers(0, 5000))
    return Trajectory(page_id="q", events=tuple(events), submit_t_ms=submit)


@st.composite
def trajectories(draw, min_events=1, max_events=12):
    n = draw(st.integers(min_events, max_events))
    t = draw(st.integers(0, 1000))
    x = draw(st.integers(-200, 1200))
    y = draw(st.integers(-200, 1200))
    events = [CursorEvent(t, x, y)]
    for _ in range(n - 1):
        t += draw(st.integers(1, 3000))
        dx = draw(st.integers(-40, 40))
        dy = draw(st.integers(-40, 40))
        if dx == 0 and dy == 0:
            dx = 1
        x += dx
        y += dy
        events.append(CursorEvent(t, x, y))
    submit = events[-1].t_ms + draw(st.integers(0, 4000))
    return Trajectory(page_id="q", events=tuple(events), submit_t_ms=submit)
