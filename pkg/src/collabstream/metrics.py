"""Evaluation metrics for upstream feature pipelines: WER, DER, label alignment."""

from __future__ import annotations

import csv
import string
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import UndefinedMetric


@dataclass(frozen=True)
class RefSegment:
    speaker: str
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"segment needs start < end, got [{self.start}, {self.end}]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding punctuation."""
    words = (w.strip(string.punctuation) for w in text.lower().split())
    return [w for w in words if w]


def edit_distance(ref: Sequence, hyp: Sequence) -> int:
    """Levenshtein distance with unit costs over token sequences."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        left = i
        for j, h in enumerate(hyp):
            best = prev[j] + (r != h)
            up = prev[j + 1] + 1
            if up < best:
                best = up
            left += 1
            if best < left:
                left = best
            cur.append(left)
        prev = cur
    return prev[-1]


def wer(reference, hypothesis) -> float:
    """(S + D + I) / N over a minimum edit alignment; strings are tokenized first."""
    ref = tokenize(reference) if isinstance(reference, str) else list(reference)
    hyp = tokenize(hypothesis) if isinstance(hypothesis, str) else list(hypothesis)
    if not ref:
        raise UndefinedMetric("WER is undefined for an empty reference")
    return edit_distance(ref, hyp) / len(ref)


def _check_segments(segments: Iterable[RefSegment], label: str) -> list[RefSegment]:
    segments = list(segments)
    by_spk = defaultdict(list)
    for s in segments:
        by_spk[s.speaker].append(s)
    for spk, segs in by_spk.items():
        segs.sort(key=lambda s: s.start)
        for a, b in zip(segs, segs[1:]):
            if b.start < a.end:
                raise ValueError(f"{label} speaker {spk!r} has overlapping segments")
    return segments


def _collar_zones(reference: list[RefSegment], collar: float) -> list[tuple[float, float]]:
    if collar <= 0:
        return []
    zones = []
    for s in reference:
        zones += [(s.start - collar, s.start + collar), (s.end - collar, s.end + collar)]
    return zones


def _elementary_intervals(reference, hypothesis, zones):
    """Elementary intervals with active reference/hypothesis speakers, collar zones removed."""
    points = {s.start for s in reference} | {s.end for s in reference}
    points |= {s.start for s in hypothesis} | {s.end for s in hypothesis}
    for a, b in zones:
        points |= {a, b}
    points = sorted(points)
    for lo, hi in zip(points, points[1:]):
        mid = 0.5 * (lo + hi)
        if any(a <= mid < b for a, b in zones):
            continue
        ref_spk = {s.speaker for s in reference if s.start <= mid < s.end}
        hyp_spk = {s.speaker for s in hypothesis if s.start <= mid < s.end}
        yield hi - lo, ref_spk, hyp_spk


def der(reference: Iterable[RefSegment], hypothesis: Iterable[RefSegment], collar: float = 0.0) -> float:
    """(missed + false alarm + confusion) / reference speech time.

    The reference-to-hypothesis speaker mapping maximizes total mapped overlap
    (equivalently, minimizes confusion) by exact assignment.
    """
    reference = _check_segments(reference, "reference")
    hypothesis = _check_segments(hypothesis, "hypothesis")
    zones = _collar_zones(reference, collar)
    intervals = list(_elementary_intervals(reference, hypothesis, zones))

    total_ref = sum(dur * len(r) for dur, r, _ in intervals)
    if total_ref <= 0:
        raise UndefinedMetric("DER is undefined without reference speech")

    ref_ids = sorted({s.speaker for s in reference})
    hyp_ids = sorted({s.speaker for s in hypothesis})
    overlap = np.zeros((len(ref_ids), len(hyp_ids)))
    ri = {s: n for n, s in enumerate(ref_ids)}
    hi = {s: n for n, s in enumerate(hyp_ids)}
    for dur, r, h in intervals:
        for a in r:
            for b in h:
                overlap[ri[a], hi[b]] += dur
    mapping = {}
    if overlap.size:
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        mapping = {ref_ids[r]: hyp_ids[c] for r, c in zip(rows, cols)}

    missed = false_alarm = confusion = 0.0
    for dur, r, h in intervals:
        n_ref, n_hyp = len(r), len(h)
        correct = sum(1 for a in r if mapping.get(a) in h)
        missed += dur * max(0, n_ref - n_hyp)
        false_alarm += dur * max(0, n_hyp - n_ref)
        confusion += dur * (min(n_ref, n_hyp) - correct)
    return (missed + false_alarm + confusion) / total_ref


def alignment_rate(matches: int, total: int) -> float:
    if total <= 0:
        raise UndefinedMetric("alignment rate needs at least one prediction")
    if not 0 <= matches <= total:
        raise ValueError(f"matches must lie in [0, {total}], got {matches}")
    return matches / total


def read_segments_csv(path) -> list[RefSegment]:
    """Read ``speaker,start_s,end_s`` rows; a header row is skipped if present."""
    out = []
    with open(path, newline="", encoding="utf-8") as fp:
        for row in csv.reader(fp):
            if not row or row[0].startswith("#"):
                continue
            try:
                out.append(RefSegment(row[0].strip(), float(row[1]), float(row[2])))
            except ValueError:
                if not out and row[0].strip().lower() == "speaker":
                    continue
                raise
    return out
