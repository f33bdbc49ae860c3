"""Append-only session log with CRC-protected, length-prefixed records.

Frame layout (bit-exact)::

    +----------------+---------------------------+----------------+
    | length: u32 BE | payload: `length` bytes   | crc32: u32 BE  |
    +----------------+---------------------------+----------------+

The payload is canonical JSON (sorted keys, no whitespace, UTF-8) of
``{"kind": ..., "bucket_index": ..., "payload": ...}``; ``bucket_index`` is
omitted for the manifest. The CRC covers the payload bytes only. A frame cut
short by a crash is ignored on read; a complete frame with a bad CRC raises
:class:`ChecksumMismatch`.
"""

from __future__ import annotations

import json
import os
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

from .domain import DEFAULT_VOCAB, BehaviorPattern, SessionConfig, TimeBucket
from .errors import ChecksumMismatch, OrderViolation, StorageError
from .insight import NarrativeAnalysis

HEADER = struct.Struct(">I")
RECORD_KINDS = ("manifest", "bucket", "pattern", "analysis")
LOG_SUFFIX = ".blog"


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")


@dataclass(frozen=True)
class SessionLogRecord:
    record_kind: str
    bucket_index: int | None
    payload: dict

    def __post_init__(self):
        if self.record_kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {self.record_kind!r}")
        if (self.record_kind == "manifest") != (self.bucket_index is None):
            raise ValueError("bucket_index is required for all records except the manifest")

    def encode(self) -> bytes:
        body = {"kind": self.record_kind, "payload": self.payload}
        if self.bucket_index is not None:
            body["bucket_index"] = self.bucket_index
        data = canonical_json(body)
        return HEADER.pack(len(data)) + data + HEADER.pack(zlib.crc32(data))

    @classmethod
    def decode_payload(cls, data: bytes) -> SessionLogRecord:
        body = json.loads(data.decode("utf-8"))
        return cls(body["kind"], body.get("bucket_index"), body["payload"])


def log_path_for(out: str | Path, session_id: str) -> Path:
    """``out`` may be a directory (``<session_id>.blog`` inside it) or a file path."""
    out = Path(out)
    if out.is_dir() or (not out.suffix and not out.exists()):
        return out / f"{session_id}{LOG_SUFFIX}"
    return out


def iter_frames(data: bytes) -> Iterator[tuple[int, SessionLogRecord]]:
    """Yield ``(offset, record)`` for each complete frame; stop at a torn tail."""
    pos, n = 0, len(data)
    while pos + HEADER.size <= n:
        (length,) = HEADER.unpack_from(data, pos)
        end = pos + HEADER.size + length + HEADER.size
        if end > n:
            break
        payload = data[pos + HEADER.size : pos + HEADER.size + length]
        (crc,) = HEADER.unpack_from(data, end - HEADER.size)
        if zlib.crc32(payload) != crc:
            raise ChecksumMismatch(f"CRC mismatch in record at byte {pos}")
        try:
            record = SessionLogRecord.decode_payload(payload)
        except (ValueError, KeyError) as exc:
            raise StorageError(f"undecodable record at byte {pos}: {exc}") from exc
        yield pos, record
        pos = end


class SessionLog:
    """Single-writer append-only log file.

    Readers open the file independently and only ever see complete frames.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fp = None
        self._last: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def create(cls, path: str | Path) -> SessionLog:
        log = cls(path)
        try:
            log.path.parent.mkdir(parents=True, exist_ok=True)
            log._fp = open(log.path, "wb")
        except OSError as exc:
            raise StorageError(f"cannot open {path} for writing: {exc}") from exc
        return log

    def append(self, record: SessionLogRecord) -> None:
        if self._fp is None:
            raise StorageError("log is not open for writing")
        with self._lock:
            kind = record.record_kind
            if record.bucket_index is not None:
                last = self._last.get(kind)
                if last is not None and record.bucket_index < last:
                    raise OrderViolation(f"{kind} record for bucket {record.bucket_index} after bucket {last}")
                self._last[kind] = record.bucket_index
            elif kind in self._last:
                raise OrderViolation("manifest written twice")
            else:
                self._last[kind] = -1
            try:
                self._fp.write(record.encode())
                self._fp.flush()
            except OSError as exc:
                raise StorageError(f"write to {self.path} failed: {exc}") from exc

    def sync(self) -> None:
        if self._fp is not None:
            self._fp.flush()
            os.fsync(self._fp.fileno())

    def close(self) -> None:
        if self._fp is not None:
            self.sync()
            self._fp.close()
            self._fp = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # convenience writers

    def write_manifest(self, cfg: SessionConfig, **extra) -> None:
        self.append(SessionLogRecord("manifest", None, {"config": cfg.to_dict(), **extra}))

    def write_bucket(self, bucket: TimeBucket) -> None:
        self.append(SessionLogRecord("bucket", bucket.index, bucket.to_dict()))

    def write_pattern(self, pattern: BehaviorPattern) -> None:
        self.append(SessionLogRecord("pattern", pattern.bucket_index, pattern.to_dict()))

    def write_analysis(self, analysis: NarrativeAnalysis) -> None:
        self.append(SessionLogRecord("analysis", analysis.bucket_index, analysis.to_dict()))


def read_records(path: str | Path) -> list[SessionLogRecord]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    return [rec for _, rec in iter_frames(data)]


@dataclass
class SessionContents:
    config: SessionConfig | None
    manifest: dict | None
    buckets: dict[int, TimeBucket]
    patterns: dict[int, list[BehaviorPattern]]
    analyses: dict[int, NarrativeAnalysis]


def load_session(path: str | Path) -> SessionContents:
    manifest, cfg = None, None
    buckets, patterns, analyses = {}, {}, {}
    for rec in read_records(path):
        if rec.record_kind == "manifest":
            manifest = rec.payload
            cfg = SessionConfig.from_dict(rec.payload["config"])
        elif rec.record_kind == "bucket":
            buckets[rec.bucket_index] = TimeBucket.from_dict(rec.payload)
        elif rec.record_kind == "pattern":
            vocab = cfg.vocab if cfg is not None else DEFAULT_VOCAB
            patterns.setdefault(rec.bucket_index, []).append(BehaviorPattern.from_dict(rec.payload, vocab))
        else:
            analyses[rec.bucket_index] = NarrativeAnalysis.from_dict(rec.payload)
    return SessionContents(cfg, manifest, buckets, patterns, analyses)


def query(
    path: str | Path,
    time_range: tuple[int, int] | None = None,
    pid: str | None = None,
) -> list[tuple[TimeBucket, list[BehaviorPattern], NarrativeAnalysis | None]]:
    """Finalized buckets whose window intersects ``[from, to)``, in index order."""
    contents = load_session(path)
    out = []
    for idx in sorted(contents.buckets):
        bucket = contents.buckets[idx]
        if time_range is not None:
            lo, hi = time_range
            if not (bucket.window_start < hi and bucket.window_end > lo):
                continue
        pats = contents.patterns.get(idx, [])
        analysis = contents.analyses.get(idx)
        if pid is not None:
            bucket = bucket.project([pid])
            pats = [p for p in pats if p.pid == pid]
            analysis = analysis.project([pid]) if analysis is not None else None
        out.append((bucket, pats, analysis))
    return out
