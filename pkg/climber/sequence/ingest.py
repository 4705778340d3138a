"""Event-log ingestion from tab-separated files."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from climber.errors import EventFormatError, VocabularyError

from .models import Action, Event, LifecycleSequence

logger = logging.getLogger(__name__)

HEADER = ("user_id", "item_id", "action", "timestamp", "scenario_id")
MAX_MALFORMED_FRACTION = 0.10


@dataclass(frozen=True)
class IngestReport:
    """Per-user sequences (first-seen user order) plus row accounting."""

    sequences: tuple[LifecycleSequence, ...]
    total_rows: int
    malformed_rows: int
    malformed_lines: tuple[int, ...] = field(default=(), repr=False)

    def by_user(self) -> dict[str, LifecycleSequence]:
        return {seq.user_id: seq for seq in self.sequences}


def _parse_row(fields: list[str], vocab_size: int | None, num_scenarios: int | None) -> tuple[str, Event]:
    if len(fields) not in (5, 6):
        raise ValueError(f"expected 5 or 6 columns, got {len(fields)}")
    user_id, item, action, timestamp, scenario = (f.strip() for f in fields[:5])
    if not user_id:
        raise ValueError("empty user_id")
    score = float(fields[5]) if len(fields) == 6 and fields[5].strip() else None
    event = Event(
        item_id=int(item),
        action=Action(action.lower()),
        timestamp=int(timestamp),
        scenario_id=int(scenario),
        score=score,
    )
    if vocab_size is not None and event.item_id >= vocab_size:
        raise VocabularyError(f"item_id {event.item_id} outside vocabulary of size {vocab_size}")
    if num_scenarios is not None and event.scenario_id >= num_scenarios:
        raise VocabularyError(f"scenario_id {event.scenario_id} outside {num_scenarios} scenarios")
    return user_id, event


def load_events(
    path: str | Path,
    *,
    vocab_size: int | None = None,
    num_scenarios: int | None = None,
    max_malformed_fraction: float = MAX_MALFORMED_FRACTION,
) -> IngestReport:
    """Read ``user\\titem\\taction\\ttimestamp\\tscenario[\\tscore]`` rows.

    A first line equal to the column names is skipped. Rows that fail to parse
    or reference ids outside the configured vocabulary count as malformed; more
    than ``max_malformed_fraction`` of them raises :class:`EventFormatError`.
    Events are sorted per user by timestamp, ties keeping file order.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise EventFormatError(f"{path} is not UTF-8 text: {exc.reason} at byte {exc.start}") from exc
    grouped: dict[str, list[Event]] = {}
    total = 0
    bad_lines: list[int] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if line_no == 1 and tuple(f.strip().lower() for f in fields[:5]) == HEADER:
            continue
        total += 1
        try:
            user_id, event = _parse_row(fields, vocab_size, num_scenarios)
        except ValueError as exc:
            bad_lines.append(line_no)
            logger.debug("malformed row at line %d: %s", line_no, exc)
            continue
        grouped.setdefault(user_id, []).append(event)

    if bad_lines:
        logger.warning("skipped %d malformed rows out of %d in %s", len(bad_lines), total, path)
    if total and len(bad_lines) / total > max_malformed_fraction:
        raise EventFormatError(
            f"{len(bad_lines)} of {total} rows in {path} are malformed "
            f"(limit {max_malformed_fraction:.0%}); first bad line {bad_lines[0]}"
        )

    sequences = tuple(
        LifecycleSequence(user_id=user_id, events=tuple(sorted(events, key=lambda e: e.timestamp)))
        for user_id, events in grouped.items()
    )
    return IngestReport(
        sequences=sequences,
        total_rows=total,
        malformed_rows=len(bad_lines),
        malformed_lines=tuple(bad_lines),
    )


def write_events(path: str | Path, sequences: list[LifecycleSequence] | tuple[LifecycleSequence, ...]) -> int:
    """Write sequences as a headed TSV; returns the number of event rows."""
    lines = ["\t".join(HEADER)]
    for seq in sequences:
        for event in seq.events:
            row = [seq.user_id, str(event.item_id), event.action.value, str(event.timestamp), str(event.scenario_id)]
            if event.score is not None:
                row.append(repr(event.score))
            lines.append("\t".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(lines) - 1
