"""Core value types, window geometry and session configuration.

All timestamps are integral milliseconds. Buckets are half-open windows
``[start_ts + k*hop_ms, start_ts + k*hop_ms + bucket_len_ms)`` indexed by hop.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any, Union

import numpy as np

from .errors import ConfigError, DimensionMismatch, EventBeforeSession

ParticipantId = str


@dataclass(frozen=True)
class IndicatorVocabulary:
    """Ordered categorical vocabularies; block layouts follow from these."""

    speaking_states: tuple[str, ...] = ("silent", "low", "moderate", "high")
    speech_acts: tuple[str, ...] = ("question", "statement", "affirmation", "disagreement", "none")
    proximity_states: tuple[str, ...] = ("close", "social", "far")
    actions: tuple[str, ...] = ("writing", "gesturing", "manipulating_object", "idle", "other")

    def __post_init__(self):
        # Rule tables map onto positions, so only the action list may change length.
        fixed = {"speaking_states": 4, "speech_acts": 5, "proximity_states": 3}
        for name, n in fixed.items():
            values = getattr(self, name)
            if len(values) != n:
                raise ConfigError(f"vocab {name} needs exactly {n} entries, got {len(values)}")
        for f in fields(self):
            values = getattr(self, f.name)
            if len(set(values)) != len(values):
                raise ConfigError(f"vocab {f.name} has duplicate entries")
        for required in ("idle", "other"):
            if required not in self.actions:
                raise ConfigError(f"vocab actions must contain {required!r}")

    @property
    def d_s(self) -> int:
        return 2 + len(self.speaking_states)

    @property
    def d_c(self) -> int:
        return len(self.speech_acts)

    @property
    def d_p(self) -> int:
        return 3 + len(self.proximity_states)

    @property
    def d_a(self) -> int:
        return len(self.actions)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.d_s, self.d_c, self.d_p, self.d_a)


DEFAULT_VOCAB = IndicatorVocabulary()


@dataclass(frozen=True)
class SessionConfig:
    session_id: str
    start_ts: int | None
    participants: tuple[ParticipantId, ...]
    bucket_len_ms: int = 60_000
    hop_ms: int = 30_000
    late_tolerance_ms: int = 5_000
    proximity_close_m: float = 1.0
    proximity_social_m: float = 2.5
    facing_threshold_deg: float = 30.0
    speaking_low: float = 0.2
    speaking_high: float = 0.6
    min_action_confidence: float = 0.2
    turn_cap: int = 10
    distance_cap_m: float = 5.0
    insight_timeout_ms: int = 10_000
    insight_parallelism: int = 2
    few_shot_k: int = 2
    vocab: IndicatorVocabulary = field(default_factory=IndicatorVocabulary)

    def __post_init__(self):
        object.__setattr__(self, "participants", tuple(self.participants))
        if self.bucket_len_ms <= 0 or self.hop_ms <= 0:
            raise ConfigError("bucket_len_ms and hop_ms must be positive")
        if self.hop_ms > self.bucket_len_ms:
            raise ConfigError("hop_ms must not exceed bucket_len_ms")
        if self.late_tolerance_ms < 0:
            raise ConfigError("late_tolerance_ms must be non-negative")
        if not self.participants:
            raise ConfigError("participant roster is empty")
        if len(set(self.participants)) != len(self.participants):
            raise ConfigError("participant ids must be unique")
        if not 0 < self.speaking_low < self.speaking_high < 1:
            raise ConfigError("need 0 < speaking_low < speaking_high < 1")
        if not 0 < self.proximity_close_m < self.proximity_social_m:
            raise ConfigError("need 0 < proximity_close_m < proximity_social_m")
        if not 0 <= self.facing_threshold_deg <= 180:
            raise ConfigError("facing_threshold_deg must lie in [0, 180]")
        if self.turn_cap <= 0 or self.distance_cap_m <= 0:
            raise ConfigError("normalization caps must be positive")
        if self.insight_timeout_ms <= 0 or self.insight_parallelism <= 0:
            raise ConfigError("insight timeout and parallelism must be positive")
        if self.few_shot_k < 0:
            raise ConfigError("few_shot_k must be non-negative")

    @property
    def proximity_thresholds_m(self) -> tuple[float, float]:
        return (self.proximity_close_m, self.proximity_social_m)

    @property
    def speaking_thresholds(self) -> tuple[float, float]:
        return (self.speaking_low, self.speaking_high)

    def with_start(self, start_ts: int) -> SessionConfig:
        return replace(self, start_ts=int(start_ts))

    def window(self, index: int) -> tuple[int, int]:
        start = self._start() + index * self.hop_ms
        return start, start + self.bucket_len_ms

    def _start(self) -> int:
        if self.start_ts is None:
            raise ConfigError("session start_ts is not known yet")
        return self.start_ts

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "vocab"}
        out["participants"] = list(self.participants)
        out["vocab"] = {f.name: list(getattr(self.vocab, f.name)) for f in fields(self.vocab)}
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SessionConfig:
        data = dict(data)
        vocab = data.pop("vocab", None)
        if vocab is not None:
            data["vocab"] = IndicatorVocabulary(**{k: tuple(v) for k, v in vocab.items()})
        data["participants"] = tuple(data["participants"])
        return cls(**data)


# -- feature events ---------------------------------------------------------

KIND_ORDER = {"session": 0, "speaker": 1, "pose": 2, "action": 3, "transcript": 4}


@dataclass(frozen=True)
class SpeakerLabel:
    ts: int
    pid: ParticipantId
    speaking: bool
    kind = "speaker"


@dataclass(frozen=True)
class TranscriptSegment:
    ts_start: int
    ts_end: int
    pid: ParticipantId
    text: str
    kind = "transcript"

    @property
    def ts(self) -> int:
        return self.ts_start


@dataclass(frozen=True)
class PoseSample:
    ts: int
    pid: ParticipantId
    x: float
    y: float
    yaw_deg: float
    kind = "pose"


@dataclass(frozen=True)
class ActionLabel:
    ts: int
    pid: ParticipantId
    label: str
    confidence: float
    kind = "action"


@dataclass(frozen=True)
class SessionControl:
    ts: int
    op: str  # "start" | "end"
    kind = "session"
    pid = None


FeatureEvent = Union[SpeakerLabel, TranscriptSegment, PoseSample, ActionLabel, SessionControl]


def event_key(event: FeatureEvent) -> tuple[str, int, ParticipantId | None]:
    """Idempotency key ``(kind, ts, pid)``; transcripts key on ``ts_start``."""
    return (event.kind, event.ts, event.pid)


def event_sort_key(event: FeatureEvent) -> tuple:
    return (event.ts, KIND_ORDER[event.kind], event.pid or "")


# -- window geometry ---------------------------------------------------------


def windows_containing(ts: int, cfg: SessionConfig) -> list[int]:
    """All bucket indices whose half-open window contains ``ts``, ascending."""
    start = cfg._start()
    if ts < start:
        raise EventBeforeSession(f"ts {ts} precedes session start {start}")
    offset = ts - start
    last = offset // cfg.hop_ms
    # smallest k with k*hop + len > offset
    first = max(0, (offset - cfg.bucket_len_ms) // cfg.hop_ms + 1)
    return list(range(first, last + 1))


def windows_overlapping(ts_start: int, ts_end: int, cfg: SessionConfig) -> list[int]:
    """Bucket indices whose window intersects the interval ``[ts_start, ts_end)``."""
    if ts_end <= ts_start:
        return []
    start = cfg._start()
    if ts_start < start:
        raise EventBeforeSession(f"ts {ts_start} precedes session start {start}")
    first = max(0, (ts_start - start - cfg.bucket_len_ms) // cfg.hop_ms + 1)
    last = (ts_end - 1 - start) // cfg.hop_ms
    return list(range(first, last + 1))


def bucket_count(session_len_ms: int, cfg: SessionConfig) -> int:
    """Number of complete windows in a session; 0 when shorter than one bucket."""
    if session_len_ms < cfg.bucket_len_ms:
        return 0
    return (session_len_ms - cfg.bucket_len_ms) // cfg.hop_ms + 1


# -- aggregates and buckets -------------------------------------------------


@dataclass(frozen=True)
class ModalityAggregate:
    speaker_samples: tuple[tuple[int, bool], ...] = ()
    speaking_ratio: float = 0.0
    turn_count: int = 0
    transcript: str = ""
    pose_samples: tuple[tuple[int, float, float, float], ...] = ()
    action_labels: tuple[tuple[int, str], ...] = ()
    dominant_action: str = "idle"

    def is_empty(self) -> bool:
        return not (self.speaker_samples or self.transcript or self.pose_samples or self.action_labels)

    def to_dict(self) -> dict[str, Any]:
        return {
            "speaker_samples": [[ts, sp] for ts, sp in self.speaker_samples],
            "speaking_ratio": self.speaking_ratio,
            "turn_count": self.turn_count,
            "transcript": self.transcript,
            "pose_samples": [list(p) for p in self.pose_samples],
            "action_labels": [list(a) for a in self.action_labels],
            "dominant_action": self.dominant_action,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ModalityAggregate:
        return cls(
            speaker_samples=tuple((int(ts), bool(sp)) for ts, sp in d["speaker_samples"]),
            speaking_ratio=float(d["speaking_ratio"]),
            turn_count=int(d["turn_count"]),
            transcript=d["transcript"],
            pose_samples=tuple((int(t), float(x), float(y), float(yaw)) for t, x, y, yaw in d["pose_samples"]),
            action_labels=tuple((int(t), str(lab)) for t, lab in d["action_labels"]),
            dominant_action=d["dominant_action"],
        )


@dataclass(frozen=True)
class TimeBucket:
    index: int
    window_start: int
    window_end: int
    per_participant: dict[ParticipantId, ModalityAggregate]
    finalized: bool = True

    @property
    def window(self) -> tuple[int, int]:
        return (self.window_start, self.window_end)

    def is_empty(self) -> bool:
        return all(agg.is_empty() for agg in self.per_participant.values())

    def project(self, pids) -> TimeBucket:
        keep = {p: a for p, a in self.per_participant.items() if p in set(pids)}
        return replace(self, per_participant=keep)

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "window": [self.window_start, self.window_end],
            "finalized": self.finalized,
            "per_participant": [[pid, agg.to_dict()] for pid, agg in self.per_participant.items()],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TimeBucket:
        return cls(
            index=int(d["index"]),
            window_start=int(d["window"][0]),
            window_end=int(d["window"][1]),
            per_participant={pid: ModalityAggregate.from_dict(a) for pid, a in d["per_participant"]},
            finalized=bool(d["finalized"]),
        )


@dataclass(frozen=True, eq=False)
class BehaviorPattern:
    """Per-participant indicator vector; ``P`` is ``s ‖ c ‖ p ‖ a``."""

    pid: ParticipantId
    bucket_index: int
    s: np.ndarray
    c: np.ndarray
    p: np.ndarray
    a: np.ndarray
    P: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, BehaviorPattern):
            return NotImplemented
        return (
            self.pid == other.pid
            and self.bucket_index == other.bucket_index
            and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in "scpaP")
        )

    __hash__ = None

    def to_dict(self) -> dict[str, Any]:
        # P is derived; storing the blocks is enough for a bijective encoding.
        return {
            "pid": self.pid,
            "bucket_index": self.bucket_index,
            "s": self.s.tolist(),
            "c": self.c.tolist(),
            "p": self.p.tolist(),
            "a": self.a.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any], vocab: IndicatorVocabulary = DEFAULT_VOCAB) -> BehaviorPattern:
        return build_pattern(d["pid"], d["bucket_index"], d["s"], d["c"], d["p"], d["a"], vocab)


def build_pattern(pid, bucket_index, s, c, p, a, vocab: IndicatorVocabulary = DEFAULT_VOCAB) -> BehaviorPattern:
    blocks = [np.asarray(b, dtype=np.float64).reshape(-1) for b in (s, c, p, a)]
    for name, block, want in zip("scpa", blocks, vocab.dims):
        if block.shape[0] != want:
            raise DimensionMismatch(f"block {name} has dimension {block.shape[0]}, expected {want}")
    for block in blocks:
        block.setflags(write=False)
    full = np.concatenate(blocks)
    full.setflags(write=False)
    return BehaviorPattern(pid, int(bucket_index), *blocks, full)

