"""Categorical indicator encoding of bucket aggregates into behavior patterns.

Block layouts (default vocabulary)::

    s (6) = [speaking_ratio, turns/turn_cap, onehot(silent, low, moderate, high)]
    c (5) = onehot(question, statement, affirmation, disagreement, none)
    p (6) = [distance/distance_cap, onehot(close, social, far), facing/3, mutual]
    a (5) = onehot(writing, gesturing, manipulating_object, idle, other)
"""

from __future__ import annotations

import math
import re

import numpy as np

from .domain import DEFAULT_VOCAB, BehaviorPattern, IndicatorVocabulary, ModalityAggregate, SessionConfig, TimeBucket, build_pattern
from .spatial import SpatialSummary, summarize

INTERROGATIVES = frozenset(
    {"what", "why", "how", "where", "when", "who", "which", "do", "does", "can", "could", "should"}
)
DISAGREEMENT_CUES = (("no",), ("not",), ("disagree",), ("but", "i", "think"))
AFFIRMATION_CUES = (("yes",), ("yeah",), ("right",), ("agree",), ("exactly",), ("ok",))

# speech-act positions in the vocabulary
QUESTION, STATEMENT, AFFIRMATION, DISAGREEMENT, NONE = range(5)
# majority ties resolve to the act whose rule fires first
RULE_PRECEDENCE = (QUESTION, DISAGREEMENT, AFFIRMATION, STATEMENT)

FACING_CAP = 3

_SENTENCE = re.compile(r"[^.?!]+[.?!]*")
_WORD = re.compile(r"[a-z0-9']+")


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


def speaking_state(ratio: float, cfg: SessionConfig) -> int:
    if ratio <= 0.0:
        return 0
    if ratio < cfg.speaking_low:
        return 1
    if ratio < cfg.speaking_high:
        return 2
    return 3


def encode_speaking(agg: ModalityAggregate, cfg: SessionConfig) -> np.ndarray:
    head = [agg.speaking_ratio, min(agg.turn_count, cfg.turn_cap) / cfg.turn_cap]
    return np.concatenate([head, one_hot(speaking_state(agg.speaking_ratio, cfg), 4)])


def _contains(words: list[str], phrase: tuple[str, ...]) -> bool:
    n = len(phrase)
    return any(tuple(words[k : k + n]) == phrase for k in range(len(words) - n + 1))


def classify_sentence(sentence: str) -> int:
    sentence = sentence.strip()
    words = _WORD.findall(sentence.lower())
    if sentence.endswith("?") or (words and words[0] in INTERROGATIVES):
        return QUESTION
    if any(_contains(words, cue) for cue in DISAGREEMENT_CUES):
        return DISAGREEMENT
    if any(_contains(words, cue) for cue in AFFIRMATION_CUES):
        return AFFIRMATION
    return STATEMENT


def split_sentences(text: str) -> list[str]:
    return [m.group().strip() for m in _SENTENCE.finditer(text) if m.group().strip(" .?!\t\n")]


def speech_act(transcript: str) -> int:
    """Dominant speech act by per-sentence majority vote."""
    sentences = split_sentences(transcript)
    if not sentences:
        return NONE
    votes = [0] * 5
    for s in sentences:
        votes[classify_sentence(s)] += 1
    top = max(votes)
    return next(act for act in RULE_PRECEDENCE if votes[act] == top)


def encode_content(transcript: str) -> np.ndarray:
    return one_hot(speech_act(transcript), 5)


def encode_proximity(summary: SpatialSummary, cfg: SessionConfig) -> np.ndarray:
    d = summary.mean_min_distance_m
    dist_term = 1.0 if math.isinf(d) else min(max(d / cfg.distance_cap_m, 0.0), 1.0)
    cls = "far" if math.isinf(d) else summary.proximity_class
    return np.concatenate(
        [
            [dist_term],
            one_hot(("close", "social", "far").index(cls), 3),
            [min(summary.facing_count, FACING_CAP) / FACING_CAP, float(summary.mutual_facing)],
        ]
    )


def encode_action(agg: ModalityAggregate, vocab: IndicatorVocabulary = DEFAULT_VOCAB) -> np.ndarray:
    label = agg.dominant_action if agg.dominant_action in vocab.actions else "other"
    return one_hot(vocab.actions.index(label), len(vocab.actions))


def encode_bucket(bucket: TimeBucket, cfg: SessionConfig) -> list[BehaviorPattern]:
    """Behavior patterns for every roster participant, in roster order."""
    spatial = summarize(bucket, cfg)
    patterns = []
    for pid in cfg.participants:
        agg = bucket.per_participant[pid]
        patterns.append(
            build_pattern(
                pid,
                bucket.index,
                encode_speaking(agg, cfg),
                encode_content(agg.transcript),
                encode_proximity(spatial[pid], cfg),
                encode_action(agg, cfg.vocab),
                cfg.vocab,
            )
        )
    return patterns


def decode_pattern(pattern: BehaviorPattern, cfg: SessionConfig) -> dict:
    """Indicator names and scalar slots recovered from a pattern vector."""
    vocab = cfg.vocab
    s, c, p, a = pattern.s, pattern.c, pattern.p, pattern.a
    return {
        "speaking": vocab.speaking_states[int(np.argmax(s[2:]))],
        "speaking_ratio": float(s[0]),
        "turns": int(round(s[1] * cfg.turn_cap)),
        "content": vocab.speech_acts[int(np.argmax(c))],
        "proximity": vocab.proximity_states[int(np.argmax(p[1:4]))],
        "distance_m": float(p[0]) * cfg.distance_cap_m,
        "facing": int(round(p[4] * FACING_CAP)),
        "mutual_facing": bool(p[5] >= 0.5),
        "action": vocab.actions[int(np.argmax(a))],
    }
