"""Stream engine for multimodal collaboration analytics.

Timestamped sensor-derived events (speaker labels, transcripts, poses, action
labels) are grouped into overlapping time buckets, encoded into
per-participant behavior-pattern vectors, and interpreted by a pluggable
insight backend into narrative analyses grounded in a learning construct.
"""

from .domain import (
    ActionLabel,
    BehaviorPattern,
    IndicatorVocabulary,
    ModalityAggregate,
    PoseSample,
    SessionConfig,
    SessionControl,
    SpeakerLabel,
    TimeBucket,
    TranscriptSegment,
    bucket_count,
    build_pattern,
    windows_containing,
)
from .insight import CPS_CONSTRUCT, MockBackend, NarrativeAnalysis
from .pipeline import SessionPipeline

__version__ = "0.1.0"

__all__ = [
    "ActionLabel",
    "BehaviorPattern",
    "CPS_CONSTRUCT",
    "IndicatorVocabulary",
    "MockBackend",
    "ModalityAggregate",
    "NarrativeAnalysis",
    "PoseSample",
    "SessionConfig",
    "SessionControl",
    "SessionPipeline",
    "SpeakerLabel",
    "TimeBucket",
    "TranscriptSegment",
    "bucket_count",
    "build_pattern",
    "windows_containing",
]
