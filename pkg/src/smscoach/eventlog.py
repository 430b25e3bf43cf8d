"""JSONL event log: one canonical JSON object per line, hash-chained.

Line 0 is the run manifest (``kind == "manifest"``), the last line of a
complete run is ``run_closed``. Every line carries ``digest``, the first 16
hex characters of ``sha256(previous_digest + line_without_digest)``, so any
edited byte breaks the chain from that line on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Union

from .core import CoachError

FORMAT = "smscoach-events"
FORMAT_VERSION = 1

EVENT_KINDS = frozenset(
    {
        "manifest",
        "patient_enrolled",
        "walk_session",
        "upload",
        "decision",
        "message_sent",
        "reward",
        "hba1c_measured",
        "weekly_summary",
        "mode_switch",
        "model_snapshot_ref",
        "run_closed",
    }
)


class LogError(CoachError):
    pass


class LogFormatError(LogError):
    """A line that is not a well-formed event."""


class IntegrityError(LogError):
    """Sequence gaps, broken digest chain, or a run that was never closed."""


@dataclass(slots=True)
class Event:
    seq: int
    day: int
    ts: int
    patient_id: Optional[str]
    kind: str
    payload: dict = field(default_factory=dict)


class EventSink:
    """In-memory append-only event buffer with monotone sequence numbers."""

    def __init__(self) -> None:
        self.events: list[Event] = []

    def emit(self, day: int, ts: int, patient_id: Optional[str], kind: str, payload: dict) -> Event:
        if kind not in EVENT_KINDS:
            raise LogError(f"unknown event kind {kind!r}")
        ev = Event(len(self.events), int(day), int(ts), patient_id, kind, payload)
        self.events.append(ev)
        return ev

    def __len__(self) -> int:
        return len(self.events)


def dumps(obj: Any) -> str:
    """Canonical JSON: sorted keys, no spaces, no NaN."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _body(ev: Event) -> str:
    return (
        f'{{"seq":{ev.seq},"day":{ev.day},"ts":{ev.ts},'
        f'"patient_id":{dumps(ev.patient_id)},"kind":{dumps(ev.kind)},'
        f'"payload":{dumps(ev.payload)}'
    )


def _chain(prev: str, body: str) -> str:
    return hashlib.sha256((prev + body).encode("utf-8")).hexdigest()[:16]


def encode_events(events: Iterable[Event]) -> Iterator[tuple[str, str]]:
    """Yield ``(line, digest)`` pairs for a chained log."""
    prev = ""
    for ev in events:
        body = _body(ev)
        prev = _chain(prev, body)
        yield f'{body},"digest":"{prev}"}}\n', prev


def write_log(path: Union[str, Path], events: Iterable[Event]) -> str:
    """Write events (manifest first) and return the final digest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    last = ""
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for line, last in encode_events(events):
            fh.write(line)
    return last


@dataclass
class EventLog:
    manifest: dict
    events: list[Event]
    path: Optional[Path] = None

    @property
    def closed(self) -> bool:
        return bool(self.events) and self.events[-1].kind == "run_closed"

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    @property
    def directory(self) -> Path:
        return self.path.parent if self.path else Path(".")


_KEYS = ("seq", "day", "ts", "patient_id", "kind", "payload", "digest")


def parse_lines(lines: Iterable[str], require_closed: bool = True) -> EventLog:
    prev = ""
    events: list[Event] = []
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            raise LogFormatError(f"line {lineno}: blank line")
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"line {lineno}: malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or tuple(obj) != _KEYS:
            raise LogFormatError(f"line {lineno}: keys must be {list(_KEYS)} in that order")
        if obj["seq"] != len(events):
            raise IntegrityError(
                f"line {lineno}: sequence gap, expected seq {len(events)} but found {obj['seq']}"
            )
        if obj["kind"] not in EVENT_KINDS:
            raise LogFormatError(f"line {lineno}: unknown kind {obj['kind']!r}")
        ev = Event(obj["seq"], obj["day"], obj["ts"], obj["patient_id"], obj["kind"], obj["payload"])
        digest = _chain(prev, _body(ev))
        if digest != obj["digest"]:
            raise IntegrityError(f"line {lineno}: digest mismatch at seq {ev.seq}")
        prev = digest
        events.append(ev)
    if not events:
        raise LogFormatError("log is empty")
    if events[0].kind != "manifest":
        raise LogFormatError("line 1: first event must be the manifest")
    manifest = events[0].payload
    if manifest.get("format") != FORMAT or manifest.get("format_version") != FORMAT_VERSION:
        raise LogFormatError("line 1: unsupported log format")
    log = EventLog(manifest=manifest, events=events[1:])
    if require_closed and not log.closed:
        raise IntegrityError(f"log ends at seq {events[-1].seq} without a run_closed event")
    return log


def read_log(path: Union[str, Path], require_closed: bool = True) -> EventLog:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise LogFormatError(f"{path} does not exist") from None
    except UnicodeDecodeError as exc:
        raise LogFormatError(f"{path}: not UTF-8 ({exc.reason})") from None
    if text and not text.endswith("\n"):
        raise IntegrityError(f"{path}: last line is truncated")
    log = parse_lines(text.splitlines(), require_closed=require_closed)
    log.path = path
    return log


def jsonl_text(records: Iterable[dict]) -> str:
    return "".join(dumps(rec) + "\n" for rec in records)


def write_jsonl(path: Union[str, Path], records: Iterable[dict]) -> str:
    """Plain canonical JSONL (model snapshots); returns the sha256 of the file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = jsonl_text(records)
    path.write_text(text, encoding="utf-8", newline="\n")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def read_jsonl(path: Union[str, Path]) -> list[dict]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"{path}: line {lineno}: {exc.msg}") from None
    return out


def file_sha256(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
