"""Line-delimited JSON event ingestion: parsing, admission and a TCP listener.

Wire records (one UTF-8 JSON object per ``\\n``-terminated line)::

    {"v":1,"type":"speaker","ts":<int>,"pid":"<id>","speaking":<bool>}
    {"v":1,"type":"transcript","ts_start":<int>,"ts_end":<int>,"pid":"<id>","text":"<utf8>"}
    {"v":1,"type":"pose","ts":<int>,"pid":"<id>","x":<float>,"y":<float>,"yaw_deg":<float>}
    {"v":1,"type":"action","ts":<int>,"pid":"<id>","label":"<vocab>","confidence":<float>}
    {"v":1,"type":"session","ts":<int>,"op":"start"|"end"}

Unknown extra fields are ignored.
"""

from __future__ import annotations

import asyncio
import enum
import json
import logging
import math
import socket
import threading
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

from .domain import (
    ActionLabel,
    FeatureEvent,
    PoseSample,
    SessionConfig,
    SessionControl,
    SpeakerLabel,
    TranscriptSegment,
    event_key,
)
from .errors import EventBeforeSession, MalformedLine, SchemaViolation, UnknownParticipant, UnknownType

logger = logging.getLogger(__name__)

DEFAULT_PORT = 7431
WIRE_VERSION = 1


def _field(obj: dict, name: str, kind) -> object:
    if name not in obj:
        raise SchemaViolation(name, "missing")
    value = obj[name]
    if kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaViolation(name, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def parse_event(line: bytes | str) -> FeatureEvent:
    """Decode one wire line into a validated event."""
    try:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        obj = json.loads(line)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedLine(str(exc)) from exc
    if not isinstance(obj, dict):
        raise MalformedLine("record is not a JSON object")

    v = _field(obj, "v", int)
    if v != WIRE_VERSION:
        raise SchemaViolation("v", f"unsupported version {v}")
    kind = _field(obj, "type", str)

    if kind == "session":
        op = _field(obj, "op", str)
        if op not in ("start", "end"):
            raise SchemaViolation("op", f"unknown op {op!r}")
        return SessionControl(ts=_field(obj, "ts", int), op=op)

    if kind not in ("speaker", "transcript", "pose", "action"):
        raise UnknownType(f"unknown event type {kind!r}")
    pid = _field(obj, "pid", str)

    if kind == "speaker":
        return SpeakerLabel(ts=_field(obj, "ts", int), pid=pid, speaking=_field(obj, "speaking", bool))
    if kind == "transcript":
        ts_start = _field(obj, "ts_start", int)
        ts_end = _field(obj, "ts_end", int)
        if ts_start >= ts_end:
            raise SchemaViolation("ts_end", "must exceed ts_start")
        return TranscriptSegment(ts_start=ts_start, ts_end=ts_end, pid=pid, text=_field(obj, "text", str))
    if kind == "pose":
        yaw = float(_field(obj, "yaw_deg", float))
        if not 0.0 <= yaw < 360.0:
            raise SchemaViolation("yaw_deg", "must lie in [0, 360)")
        return PoseSample(
            ts=_field(obj, "ts", int),
            pid=pid,
            x=float(_field(obj, "x", float)),
            y=float(_field(obj, "y", float)),
            yaw_deg=yaw,
        )
    confidence = float(_field(obj, "confidence", float))
    if not 0.0 <= confidence <= 1.0:
        raise SchemaViolation("confidence", "must lie in [0, 1]")
    return ActionLabel(ts=_field(obj, "ts", int), pid=pid, label=_field(obj, "label", str), confidence=confidence)


def serialize_event(event: FeatureEvent) -> str:
    """Encode an event as one wire line, without the trailing newline."""
    body = {"v": WIRE_VERSION, "type": event.kind}
    fields = asdict(event)
    if event.kind == "session":
        body.update(ts=fields["ts"], op=fields["op"])
    else:
        body.update(fields)
    return json.dumps(body, ensure_ascii=False, separators=(",", ":"))


def write_ndjson(events: Iterable[FeatureEvent], fp) -> int:
    n = 0
    for ev in events:
        fp.write(serialize_event(ev) + "\n")
        n += 1
    return n


# -- admission -------------------------------------------------------------


class Admission(enum.Enum):
    ADMITTED = "admitted"
    DUPLICATE = "duplicate"
    LATE = "late"


@dataclass
class IngestStats:
    accepted: int = 0
    malformed_lines: int = 0
    unknown_type: int = 0
    dropped_late: int = 0
    duplicates: int = 0
    watermark: int | None = None

    @property
    def total(self) -> int:
        return self.accepted + self.malformed_lines + self.unknown_type + self.dropped_late + self.duplicates

    def summary(self) -> str:
        return (
            f"accepted={self.accepted} malformed={self.malformed_lines} unknown_type={self.unknown_type} "
            f"late={self.dropped_late} duplicates={self.duplicates} watermark={self.watermark}"
        )


class Ingestor:
    """Serialized admission stage: validation, dedupe and watermark tracking.

    ``process_line`` is the single entry point for raw lines and keeps the
    counters reconciled with the number of lines seen. Admitted events are
    returned to the caller; rejected lines return ``None``.
    """

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self.stats = IngestStats()
        self._seen: set[tuple] = set()

    def admit(self, event: FeatureEvent) -> Admission:
        if event.pid not in self.cfg.participants:
            raise UnknownParticipant(f"participant {event.pid!r} is not in the roster")
        if self.cfg.start_ts is None:
            raise EventBeforeSession("data event received before the session start is known")
        if event.ts < self.cfg.start_ts:
            raise EventBeforeSession(f"ts {event.ts} precedes session start {self.cfg.start_ts}")
        key = event_key(event)
        if key in self._seen:
            self.stats.duplicates += 1
            return Admission.DUPLICATE
        wm = self.stats.watermark
        if wm is not None and event.ts < wm - self.cfg.late_tolerance_ms:
            self.stats.dropped_late += 1
            return Admission.LATE
        self._seen.add(key)
        self.stats.accepted += 1
        self.stats.watermark = event.ts if wm is None else max(wm, event.ts)
        return Admission.ADMITTED

    def control(self, event: SessionControl) -> None:
        if event.op == "start":
            self.stats = IngestStats()
            self._seen.clear()
            if self.cfg.start_ts is None:
                self.cfg = self.cfg.with_start(event.ts)
        self.stats.accepted += 1

    def process_line(self, line: bytes | str) -> FeatureEvent | None:
        if isinstance(line, (bytes, str)) and not line.strip():
            self.stats.malformed_lines += 1
            return None
        try:
            event = parse_event(line)
        except UnknownType:
            self.stats.unknown_type += 1
            return None
        except MalformedLine as exc:
            logger.debug("malformed line: %s", exc)
            self.stats.malformed_lines += 1
            return None
        if isinstance(event, SessionControl):
            self.control(event)
            return event
        try:
            verdict = self.admit(event)
        except (UnknownParticipant, EventBeforeSession) as exc:
            logger.debug("rejected event: %s", exc)
            self.stats.malformed_lines += 1
            return None
        return event if verdict is Admission.ADMITTED else None


# -- TCP listener ------------------------------------------------------------


def serve_lines(
    on_line: Callable[[bytes], bool],
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    ready: Callable[[int], None] | None = None,
) -> None:
    """Accept connections and feed each received line to ``on_line``.

    Lines from all connections pass through ``on_line`` one at a time on the
    event loop thread. The server stops once ``on_line`` returns ``True``
    (the session-end control was seen). ``ready`` receives the bound port.
    """

    async def main():
        done = asyncio.Event()

        async def handle(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
            try:
                while not done.is_set():
                    line = await reader.readline()
                    if not line:
                        break
                    if on_line(line.rstrip(b"\r\n")):
                        done.set()
            finally:
                writer.close()

        server = await asyncio.start_server(handle, host, port, limit=1 << 20)
        bound = server.sockets[0].getsockname()[1]
        if ready is not None:
            ready(bound)
        async with server:
            await done.wait()

    asyncio.run(main())


def stream_lines(lines: Iterable[str], host: str, port: int, timeout: float = 30.0) -> int:
    """Send lines to a listener over one TCP connection; returns the count sent."""
    n = 0
    with socket.create_connection((host, port), timeout=timeout) as sock:
        buf = []
        for line in lines:
            buf.append(line.rstrip("\n") + "\n")
            n += 1
            if len(buf) >= 512:
                sock.sendall("".join(buf).encode("utf-8"))
                buf.clear()
        if buf:
            sock.sendall("".join(buf).encode("utf-8"))
    return n


class ThreadedListener:
    """Run :func:`serve_lines` on a background thread (used by tests and demos)."""

    def __init__(self, on_line: Callable[[bytes], bool], host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self.port: int | None = None
        self.error: BaseException | None = None
        self._ready = threading.Event()

        def run():
            try:
                serve_lines(on_line, host, port, ready=self._on_ready)
            except BaseException as exc:
                self.error = exc
                self._ready.set()

        self._thread = threading.Thread(target=run, daemon=True)

    def _on_ready(self, port: int) -> None:
        self.port = port
        self._ready.set()

    def start(self, timeout: float = 10.0) -> int:
        self._thread.start()
        self._ready.wait(timeout)
        if self.error is not None:
            raise self.error
        return self.port

    def join(self, timeout: float | None = None) -> None:
        self._thread.join(timeout)
