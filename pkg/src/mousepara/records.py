"""Raw paradata records: event-log parsing, trajectory assembly, exclusions.

The wire format is line-delimited JSON, one object per collector batch:

    {"session":"<id>","page":"<id>","load_epoch":<int>,"events":[[t_ms,x,y],...]}

Batches for the same (session, page) are merged in timestamp order. A
question-metadata sidecar CSV supplies answers, demographics and the
submission time:

    respondent_id,question_id,is_target,condition,answer_position,n_options,age,gender,submit_t_ms

Timestamps are integer milliseconds since page load; coordinates are
integer CSS pixels.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence


class ParadataError(Exception):
    """Malformed input that cannot be represented as a diagnostic."""


@dataclass(frozen=True)
class CursorEvent:
    """One recorded cursor position, relative to page load."""

    t_ms: int
    x: int
    y: int


@dataclass(frozen=True)
class Trajectory:
    """Cursor path on one survey page, ending at response submission."""

    page_id: str
    events: tuple[CursorEvent, ...]
    submit_t_ms: int

    def validate(self) -> None:
        """Raise ParadataError on any violated trajectory invariant."""
        prev = None
        for ev in self.events:
            if ev.t_ms < 0:
                raise ParadataError(f"page {self.page_id}: negative timestamp {ev.t_ms}")
            if prev is not None:
                if ev.t_ms <= prev.t_ms:
                    raise ParadataError(
                        f"page {self.page_id}: timestamps not strictly increasing at t={ev.t_ms}"
                    )
                if (ev.x, ev.y) == (prev.x, prev.y):
                    raise ParadataError(
                        f"page {self.page_id}: consecutive events share position at t={ev.t_ms}"
                    )
            prev = ev
        if self.events and self.submit_t_ms < self.events[-1].t_ms:
            raise ParadataError(
                f"page {self.page_id}: submit at {self.submit_t_ms} precedes last event"
            )


@dataclass(frozen=True)
class QuestionRecord:
    """One (respondent, question) observation with its trajectory."""

    respondent_id: str
    question_id: str
    trajectory: Trajectory
    is_target: bool
    condition: int | None  # 0 = easy, 1 = difficult; None for baseline questions
    answer_position: int | None  # 1-based; None when no answer was given
    n_options: int
    age: float | None
    gender: int | None
    reloaded: bool = False


@dataclass(frozen=True)
class Diagnostic:
    """Non-fatal parse or assembly problem, tied to an input location."""

    line_no: int | None
    message: str

    def __str__(self) -> str:
        loc = f"line {self.line_no}: " if self.line_no is not None else ""
        return loc + self.message


# ---------------------------------------------------------------------------
# Event-log parsing


@dataclass
class _PageStream:
    events: list[tuple[int, int, int, int]] = field(default_factory=list)  # (t, x, y, arrival)
    load_epochs: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class ParsedEventLog:
    """Assembled per-page event streams plus parse diagnostics."""

    pages: dict[tuple[str, str], tuple[tuple[CursorEvent, ...], bool]]  # key -> (events, reloaded)
    diagnostics: tuple[Diagnostic, ...]


def parse_event_log(raw: bytes | str | io.IOBase | Path) -> ParsedEventLog:
    """Parse wire-format lines into merged per-(session, page) event streams.

    Malformed lines are collected as diagnostics and skipped, never
    silently dropped. Duplicate timestamps keep the last event seen (with
    a diagnostic); consecutive events at the same position are coalesced
    into the earlier one, preserving mousemove semantics. Empty input
    yields an empty result.
    """
    if isinstance(raw, Path):
        text = raw.read_text(encoding="utf-8")
    elif isinstance(raw, bytes):
        text = raw.decode("utf-8")
    elif isinstance(raw, str):
        text = raw
    else:
        data = raw.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    streams: dict[tuple[str, str], _PageStream] = {}
    diagnostics: list[Diagnostic] = []
    arrival = 0

    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            diagnostics.append(Diagnostic(line_no, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            diagnostics.append(Diagnostic(line_no, "batch is not an object"))
            continue
        missing = [k for k in ("session", "page", "load_epoch", "events") if k not in obj]
        if missing:
            diagnostics.append(Diagnostic(line_no, f"missing field(s): {', '.join(missing)}"))
            continue
        session = str(obj["session"])
        page = str(obj["page"])
        if not isinstance(obj["load_epoch"], int):
            diagnostics.append(Diagnostic(line_no, "load_epoch is not an integer"))
            continue
        if not isinstance(obj["events"], list):
            diagnostics.append(Diagnostic(line_no, "events is not a list"))
            continue

        parsed_events = []
        bad = False
        for ev in obj["events"]:
            if (
                not isinstance(ev, list)
                or len(ev) != 3
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in ev)
            ):
                diagnostics.append(Diagnostic(line_no, f"malformed event {ev!r}"))
                bad = True
                break
            t, x, y = (int(round(v)) for v in ev)
            if t < 0:
                diagnostics.append(Diagnostic(line_no, f"negative timestamp {t}"))
                bad = True
                break
            parsed_events.append((t, x, y))
        if bad:
            continue

        stream = streams.setdefault((session, page), _PageStream())
        stream.load_epochs.append(obj["load_epoch"])
        for t, x, y in parsed_events:
            stream.events.append((t, x, y, arrival))
            arrival += 1

    pages: dict[tuple[str, str], tuple[tuple[CursorEvent, ...], bool]] = {}
    for key, stream in streams.items():
        reloaded = any(
            later > earlier
            for earlier, later in zip(stream.load_epochs, stream.load_epochs[1:])
        )
        merged = sorted(stream.events, key=lambda e: (e[0], e[3]))
        deduped: list[tuple[int, int, int]] = []
        for t, x, y, _ in merged:
            if deduped and deduped[-1][0] == t:
                diagnostics.append(
                    Diagnostic(None, f"session {key[0]} page {key[1]}: duplicate timestamp {t}, kept last")
                )
                deduped[-1] = (t, x, y)
            else:
                deduped.append((t, x, y))
        coalesced: list[tuple[int, int, int]] = []
        for t, x, y in deduped:
            if coalesced and coalesced[-1][1:] == (x, y):
                continue  # stationary sample: fold into the earlier event
            coalesced.append((t, x, y))
        pages[key] = (tuple(CursorEvent(t, x, y) for t, x, y in coalesced), reloaded)

    return ParsedEventLog(pages=pages, diagnostics=tuple(diagnostics))


# ---------------------------------------------------------------------------
# Metadata sidecar

METADATA_COLUMNS = (
    "respondent_id",
    "question_id",
    "is_target",
    "condition",
    "answer_position",
    "n_options",
    "age",
    "gender",
    "submit_t_ms",
)


@dataclass(frozen=True)
class QuestionMeta:
    respondent_id: str
    question_id: str
    is_target: bool
    condition: int | None
    answer_position: int | None
    n_options: int
    age: float | None
    gender: int | None
    submit_t_ms: int


def _opt_int(value: str) -> int | None:
    return int(value) if value.strip() else None


def _opt_float(value: str) -> float | None:
    return float(value) if value.strip() else None


def load_metadata(raw: str | Path | io.IOBase) -> tuple[list[QuestionMeta], list[Diagnostic]]:
    """Read the question-metadata sidecar CSV."""
    if isinstance(raw, Path):
        text = raw.read_text(encoding="utf-8")
    elif isinstance(raw, str):
        text = raw
    else:
        data = raw.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    rows: list[QuestionMeta] = []
    diagnostics: list[Diagnostic] = []
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return rows, diagnostics
    missing_cols = set(METADATA_COLUMNS) - set(reader.fieldnames)
    if missing_cols:
        raise ParadataError(f"metadata missing columns: {sorted(missing_cols)}")

    for line_no, row in enumerate(reader, start=2):
        try:
            is_target = bool(int(row["is_target"]))
            condition = _opt_int(row["condition"])
            meta = QuestionMeta(
                respondent_id=row["respondent_id"],
                question_id=row["question_id"],
                is_target=is_target,
                condition=condition,
                answer_position=_opt_int(row["answer_position"]),
                n_options=int(row["n_options"]),
                age=_opt_float(row["age"]),
                gender=_opt_int(row["gender"]),
                submit_t_ms=int(row["submit_t_ms"]),
            )
        except (KeyError, ValueError) as exc:
            diagnostics.append(Diagnostic(line_no, f"bad metadata row: {exc}"))
            continue
        if meta.is_target != (meta.condition is not None):
            diagnostics.append(
                Diagnostic(line_no, "condition must be present exactly for target questions")
            )
            continue
        rows.append(meta)
    return rows, diagnostics


def build_records(
    log: ParsedEventLog, metadata: Sequence[QuestionMeta]
) -> tuple[list[QuestionRecord], list[Diagnostic]]:
    """Join parsed event streams with metadata into QuestionRecords.

    Metadata rows without any recorded events yield records with empty
    trajectories (excluded later as incomplete recordings). Events after
    the submission time are dropped with a diagnostic.
    """
    diagnostics: list[Diagnostic] = []
    records: list[QuestionRecord] = []
    for meta in metadata:
        key = (meta.respondent_id, meta.question_id)
        events, reloaded = log.pages.get(key, ((), False))
        kept = tuple(ev for ev in events if ev.t_ms <= meta.submit_t_ms)
        if len(kept) != len(events):
            diagnostics.append(
                Diagnostic(
                    None,
                    f"session {meta.respondent_id} page {meta.question_id}: "
                    f"dropped {len(events) - len(kept)} event(s) after submission",
                )
            )
        traj = Trajectory(page_id=meta.question_id, events=kept, submit_t_ms=meta.submit_t_ms)
        records.append(
            QuestionRecord(
                respondent_id=meta.respondent_id,
                question_id=meta.question_id,
                trajectory=traj,
                is_target=meta.is_target,
                condition=meta.condition,
                answer_position=meta.answer_position,
                n_options=meta.n_options,
                age=meta.age,
                gender=meta.gender,
                reloaded=reloaded,
            )
        )
    return records, diagnostics


def read_session_data(
    event_log: str | Path, metadata: str | Path
) -> tuple[list[QuestionRecord], list[Diagnostic]]:
    """Parse an event-log file and its metadata sidecar into records."""
    log = parse_event_log(Path(event_log))
    meta_rows, meta_diags = load_metadata(Path(metadata))
    records, join_diags = build_records(log, meta_rows)
    return records, list(log.diagnostics) + meta_diags + join_diags


# ---------------------------------------------------------------------------
# Exclusions

RULE_NO_ANSWER = "no_answer"
RULE_INCOMPLETE = "incomplete_recording"
RULE_RELOAD = "page_reload"
RULE_DEMOGRAPHICS = "missing_demographics"
RULE_RT_CAP = "rt_cap"

EXCLUSION_RULES = (
    RULE_NO_ANSWER,
    RULE_INCOMPLETE,
    RULE_RELOAD,
    RULE_DEMOGRAPHICS,
    RULE_RT_CAP,
)


@dataclass(frozen=True)
class ExclusionConfig:
    """Which filter rules apply, and the response-time cap (default 7 min)."""

    rt_cap_ms: int = 420_000
    exclude_no_answer: bool = True
    exclude_incomplete: bool = True
    exclude_reload: bool = True
    exclude_missing_demographics: bool = True
    exclude_rt_cap: bool = True
    # Optional heuristic: a recording with an internal gap longer than this
    # also counts as incomplete. None disables the gap check.
    incomplete_max_gap_ms: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExclusionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ParadataError(f"unknown exclusion config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ExclusionReport:
    """Per-rule hit counts plus the identity of every excluded record."""

    total: int
    retained: int
    counts: dict[str, int]
    excluded: tuple[tuple[str, str, str], ...]  # (respondent_id, question_id, rule)

    def __post_init__(self) -> None:
        if self.retained + len(self.excluded) != self.total:
            raise ParadataError("exclusion report does not partition the input")


def _violated_rule(rec: QuestionRecord, cfg: ExclusionConfig) -> str | None:
    if cfg.exclude_no_answer and rec.answer_position is None:
        return RULE_NO_ANSWER
    if cfg.exclude_incomplete:
        if not rec.trajectory.events:
            return RULE_INCOMPLETE
        if cfg.incomplete_max_gap_ms is not None:
            times = [ev.t_ms for ev in rec.trajectory.events] + [rec.trajectory.submit_t_ms]
            gaps = [b - a for a, b in zip(times, times[1:])]
            if gaps and max(gaps) > cfg.incomplete_max_gap_ms:
                return RULE_INCOMPLETE
    if cfg.exclude_reload and rec.reloaded:
        return RULE_RELOAD
    if cfg.exclude_missing_demographics and (rec.age is None or rec.gender is None):
        return RULE_DEMOGRAPHICS
    if cfg.exclude_rt_cap and rec.trajectory.submit_t_ms > cfg.rt_cap_ms:
        return RULE_RT_CAP
    return None


def apply_exclusions(
    records: Sequence[QuestionRecord], config: ExclusionConfig | None = None
) -> tuple[list[QuestionRecord], ExclusionReport]:
    """Filter records by the configured rules.

    Exclusion is total: nothing raises, the report carries everything. A
    record violating several rules is attributed to the first rule in
    EXCLUSION_RULES order, so per-rule counts sum to the exclusion total.
    """
    cfg = config or ExclusionConfig()
    retained: list[QuestionRecord] = []
    excluded: list[tuple[str, str, str]] = []
    counts = {rule: 0 for rule in EXCLUSION_RULES}
    for rec in records:
        rule = _violated_rule(rec, cfg)
        if rule is None:
            retained.append(rec)
        else:
            counts[rule] += 1
            excluded.append((rec.respondent_id, rec.question_id, rule))
    report = ExclusionReport(
        total=len(records),
        retained=len(retained),
        counts=counts,
        excluded=tuple(excluded),
    )
    return retained, report


# ---------------------------------------------------------------------------
# Serialization (the synthetic generator emits the same formats)


def format_batch_line(
    session: str, page: str, load_epoch: int, events: Iterable[tuple[int, int, int]]
) -> str:
    """One wire-format line, compact separators, fixed key order."""
    payload = {
        "session": session,
        "page": page,
        "load_epoch": load_epoch,
        "events": [[t, x, y] for t, x, y in events],
    }
    return json.dumps(payload, separators=(",", ":"))


def write_event_log(
    records: Sequence[QuestionRecord],
    path: str | Path,
    batch_ms: int | None = None,
) -> None:
    """Write records back to the wire format, one or more batches per page.

    With ``batch_ms`` set, events are split into collector-style windows
    of that duration (the live collector flushes every 10 s).
    """
    lines: list[str] = []
    for rec in records:
        events = [(ev.t_ms, ev.x, ev.y) for ev in rec.trajectory.events]
        if batch_ms is None or not events:
            batches = [events]
        else:
            horizon = max(rec.trajectory.submit_t_ms, events[-1][0])
            n_windows = horizon // batch_ms + 1
            batches = [
                [e for e in events if w * batch_ms <= e[0] < (w + 1) * batch_ms]
                for w in range(n_windows)
            ]
        for batch in batches:
            lines.append(
                format_batch_line(rec.respondent_id, rec.question_id, 0, batch)
            )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def write_metadata(records: Sequence[QuestionRecord], path: str | Path) -> None:
    """Write the question-metadata sidecar CSV for the given records."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METADATA_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    rec.respondent_id,
                    rec.question_id,
                    int(rec.is_target),
                    "" if rec.condition is None else rec.condition,
                    "" if rec.answer_position is None else rec.answer_position,
                    rec.n_options,
                    "" if rec.age is None else _format_number(rec.age),
                    "" if rec.gender is None else rec.gender,
                    rec.trajectory.submit_t_ms,
                ]
            )


def _format_number(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def strip_reload_flag(records: Sequence[QuestionRecord]) -> list[QuestionRecord]:
    """Clear reload flags (used when re-serializing retained records)."""
    return [replace(r, reloaded=False) for r in records]
