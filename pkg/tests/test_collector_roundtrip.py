"""Cross-component round trip: collector wire output through the parser.

Drives the TypeScript collector's scripted 25-second session (built under
frontend/dist) and feeds the transmitted lines through the event-log
parser. Skipped when the frontend build is absent; `npm run build` in
frontend/ creates it.
"""

import json
import shutil
import subprocess
from pathlib import Path

import pytest

from mousepara.records import parse_event_log

FRONTEND = Path(__file__).resolve().parent.parent / "frontend"
SIMULATE = FRONTEND / "dist" / "scripts" / "simulate.js"

requires_build = pytest.mark.skipif(
    shutil.which("node") is None or not SIMULATE.exists(),
    reason="frontend build missing (run `npm install && npm run build` in frontend/)",
)


def run_simulation(*args: str) -> tuple[str, dict]:
    proc = subprocess.run(
        ["node", str(SIMULATE), *args],
        capture_output=True,
        text=True,
        timeout=60,
        check=True,
    )
    return proc.stdout, json.loads(proc.stderr.strip().splitlines()[-1])


@requires_build
def test_scripted_session_parses_with_zero_diagnostics():
    wire, summary = run_simulation()
    assert summary["transmissions"] >= 3
    log = parse_event_log(wire)
    assert not log.diagnostics
    events, reloaded = log.pages[("sim-respondent", "sim-question")]
    assert not reloaded
    assert len(events) == summary["scripted_events"]
    times = [e.t_ms for e in events]
    assert times == sorted(times)
    assert len(set(times)) == len(times)


@requires_build
def test_fault_injected_flush_loses_no_events():
    wire, summary = run_simulation("--fail-one-flush")
    assert summary["dropped_batches"] == 0
    log = parse_event_log(wire)
    assert not log.diagnostics
    events, _ = log.pages[("sim-respondent", "sim-question")]
    assert len(events) == summary["scripted_events"]
