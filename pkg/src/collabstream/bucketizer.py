"""Overlapping time buckets: routing, watermark-driven finalization, aggregation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .domain import (
    ActionLabel,
    FeatureEvent,
    ModalityAggregate,
    PoseSample,
    SessionConfig,
    SpeakerLabel,
    TimeBucket,
    TranscriptSegment,
    bucket_count,
    windows_containing,
    windows_overlapping,
)
from .errors import RoutedLate


@dataclass
class _OpenBucket:
    index: int
    window_start: int
    window_end: int
    events: dict[str, list[FeatureEvent]] = field(default_factory=dict)


class OpenBucketSet:
    """Buckets that can still receive events, keyed by index.

    Buckets are created lazily on the first routed event and finalized in
    strictly increasing index order; indices with no events are still
    emitted (as empty buckets) so downstream indices stay dense.
    """

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self.open: dict[int, _OpenBucket] = {}
        self.next_to_finalize = 0
        self.routed_late = 0

    def _bucket(self, index: int) -> _OpenBucket:
        b = self.open.get(index)
        if b is None:
            start, end = self.cfg.window(index)
            b = self.open[index] = _OpenBucket(index, start, end)
        return b

    def route(self, event: FeatureEvent) -> list[int]:
        """Append ``event`` to every open bucket whose window it touches.

        Returns the indices it was added to. Raises :class:`RoutedLate` when
        every target bucket was already finalized.
        """
        if isinstance(event, TranscriptSegment):
            targets = windows_overlapping(event.ts_start, event.ts_end, self.cfg)
        else:
            targets = windows_containing(event.ts, self.cfg)
        live = [k for k in targets if k >= self.next_to_finalize]
        if not live:
            self.routed_late += 1
            raise RoutedLate(f"{event.kind} event at {event.ts} targets finalized buckets {targets}")
        for k in live:
            self._bucket(k).events.setdefault(event.pid, []).append(event)
        return live

    def finalize_ready(self, watermark: int | None) -> list[TimeBucket]:
        """Finalize, in index order, every bucket with ``end <= watermark - late_tolerance``."""
        if watermark is None:
            return []
        limit = watermark - self.cfg.late_tolerance_ms
        out = []
        while self.cfg.window(self.next_to_finalize)[1] <= limit:
            out.append(self._finalize_next())
        return out

    def flush(self, end_ts: int | None = None, watermark: int | None = None) -> list[TimeBucket]:
        """Finalize everything left at session end, regardless of the watermark.

        Buckets are emitted up to the last window that fits inside the
        session; windows running past the end are incomplete and dropped.
        Without an explicit end control the session is taken to end just
        after the watermark.
        """
        if end_ts is None:
            end_ts = None if watermark is None else watermark + 1
        out = []
        if end_ts is not None and self.cfg.start_ts is not None:
            n = bucket_count(end_ts - self.cfg.start_ts, self.cfg)
            while self.next_to_finalize < n:
                out.append(self._finalize_next())
        self.open.clear()
        return out

    def _finalize_next(self) -> TimeBucket:
        k = self.next_to_finalize
        b = self.open.pop(k, None)
        if b is None:
            b = _OpenBucket(k, *self.cfg.window(k))
        self.next_to_finalize += 1
        return finalize_bucket(b, self.cfg)


def finalize_bucket(bucket: _OpenBucket, cfg: SessionConfig) -> TimeBucket:
    per = {pid: aggregate(bucket.events.get(pid, ()), cfg) for pid in cfg.participants}
    return TimeBucket(bucket.index, bucket.window_start, bucket.window_end, per, finalized=True)


def _count_runs(flags) -> int:
    runs, prev = 0, False
    for f in flags:
        if f and not prev:
            runs += 1
        prev = f
    return runs


def aggregate(events, cfg: SessionConfig) -> ModalityAggregate:
    """Per-participant modality aggregate; independent of arrival order."""
    speaker = sorted((e.ts, e.speaking) for e in events if isinstance(e, SpeakerLabel))
    transcripts = sorted(
        (e.ts_start, e.ts_end, e.text) for e in events if isinstance(e, TranscriptSegment)
    )
    poses = sorted((e.ts, e.x, e.y, e.yaw_deg) for e in events if isinstance(e, PoseSample))
    actions = sorted((e.ts, e.label, e.confidence) for e in events if isinstance(e, ActionLabel))

    flags = [sp for _, sp in speaker]
    ratio = sum(flags) / len(flags) if flags else 0.0

    counts = Counter(label for _, label, conf in actions if conf >= cfg.min_action_confidence)
    if counts:
        top = max(counts.values())
        dominant = min(label for label, n in counts.items() if n == top)
    else:
        dominant = "idle"

    return ModalityAggregate(
        speaker_samples=tuple(speaker),
        speaking_ratio=ratio,
        turn_count=_count_runs(flags),
        transcript=" ".join(text for _, _, text in transcripts if text),
        pose_samples=tuple(poses),
        action_labels=tuple((ts, label) for ts, label, _ in actions),
        dominant_action=dominant,
    )
