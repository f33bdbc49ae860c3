"""Few-shot prompt assembly and narrative analysis through pluggable backends."""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
import urllib.request
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .domain import BehaviorPattern, SessionConfig, TimeBucket
from .encoder import decode_pattern
from .errors import BackendError, DimensionMismatch, InsufficientExamples, TimeoutExceeded

logger = logging.getLogger(__name__)

TRANSCRIPT_EXCERPT_CHARS = 500
ELLIPSIS = "…"
INSUFFICIENT_DATA = "insufficient data"


@dataclass(frozen=True)
class ConstructDefinition:
    name: str
    description: str
    facets: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "facets", tuple(tuple(f) for f in self.facets))
        names = self.facet_names
        if not names:
            raise ValueError("a construct needs at least one facet")
        if len(set(names)) != len(names):
            raise ValueError("facet names must be unique")

    @property
    def facet_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.facets)


CPS_CONSTRUCT = ConstructDefinition(
    name="collaborative problem solving",
    description=(
        "How a small group jointly works toward a solution: sharing what they know, "
        "agreeing on how to proceed, and keeping the group working together."
    ),
    facets=(
        (
            "constructing shared knowledge",
            "members contribute ideas, ask for and give explanations, and build a common understanding",
        ),
        (
            "negotiation and coordination",
            "members surface disagreements, weigh alternatives, and agree on who does what",
        ),
        (
            "maintaining team function",
            "members stay oriented to each other, encourage participation, and keep the group on task",
        ),
    ),
)


@dataclass(frozen=True)
class FewShotExample:
    pattern_digest: str
    assessment: str

    def __post_init__(self):
        if not self.pattern_digest.strip() or not self.assessment.strip():
            raise ValueError("few-shot examples need a non-empty digest and assessment")


DEFAULT_EXAMPLES: tuple[FewShotExample, ...] = (
    FewShotExample(
        "A | speaking: moderate | content: question | proximity: close | facing: 1 | mutual facing: yes | action: manipulating_object\n"
        "B | speaking: moderate | content: statement | proximity: close | facing: 1 | mutual facing: yes | action: gesturing",
        "SUMMARY: A asks how the parts fit while B explains and points at the model; the pair face each other over the task.\n"
        "PARTICIPANT A: seeks information while handling the parts.\n"
        "PARTICIPANT B: supplies explanations backed by gestures.\n"
        "FACETS: constructing shared knowledge; maintaining team function",
    ),
    FewShotExample(
        "A | speaking: high | content: disagreement | proximity: social | facing: 0 | mutual facing: no | action: gesturing\n"
        "B | speaking: moderate | content: disagreement | proximity: social | facing: 1 | mutual facing: no | action: writing",
        "SUMMARY: Both members talk a lot and push back on each other's plan; B keeps notes while A argues for a different approach.\n"
        "PARTICIPANT A: contests the current plan at length.\n"
        "PARTICIPANT B: objects while recording options.\n"
        "FACETS: negotiation and coordination",
    ),
    FewShotExample(
        "A | speaking: silent | content: none | proximity: far | facing: 0 | mutual facing: no | action: idle\n"
        "B | speaking: silent | content: none | proximity: far | facing: 0 | mutual facing: no | action: idle",
        "SUMMARY: insufficient data\n"
        "PARTICIPANT A: no observable activity.\n"
        "PARTICIPANT B: no observable activity.\n"
        "FACETS:",
    ),
    FewShotExample(
        "A | speaking: low | content: affirmation | proximity: close | facing: 1 | mutual facing: yes | action: writing\n"
        "B | speaking: high | content: statement | proximity: close | facing: 1 | mutual facing: yes | action: manipulating_object",
        "SUMMARY: B leads the build and narrates each step; A agrees briefly and writes things down, staying turned toward B.\n"
        "PARTICIPANT A: supports the partner with short acknowledgements.\n"
        "PARTICIPANT B: drives the task and explains choices aloud.\n"
        "FACETS: maintaining team function",
    ),
    FewShotExample(
        "A | speaking: moderate | content: statement | proximity: social | facing: 0 | mutual facing: no | action: writing\n"
        "B | speaking: low | content: question | proximity: social | facing: 0 | mutual facing: no | action: idle",
        "SUMMARY: A works through the calculation aloud; B occasionally asks what a value means.\n"
        "PARTICIPANT A: externalizes reasoning while writing.\n"
        "PARTICIPANT B: asks clarifying questions without taking on a task.\n"
        "FACETS: constructing shared knowledge",
    ),
    FewShotExample(
        "A | speaking: low | content: statement | proximity: far | facing: 0 | mutual facing: no | action: manipulating_object\n"
        "B | speaking: silent | content: none | proximity: far | facing: 0 | mutual facing: no | action: writing",
        "SUMMARY: The members work in parallel on separate parts with little talk between them.\n"
        "PARTICIPANT A: works on the apparatus with occasional remarks.\n"
        "PARTICIPANT B: writes independently.\n"
        "FACETS:",
    ),
)

SYSTEM_PREAMBLE = (
    "You analyze small-group collaboration from sensor-derived behavior indicators. "
    "Each time bucket covers one minute of activity. Indicators are categorical: speaking "
    "level, dominant speech act, proximity class, how many partners a person faces, whether "
    "facing is mutual, and dominant action. Ground every statement in the indicators given."
)

REQUEST_INSTRUCTION = (
    "Describe the group's interaction in this bucket and relate individual behavior to the "
    "construct facets. Answer in exactly this format:\n"
    "SUMMARY: <one or two sentences about the group>\n"
    "PARTICIPANT <id>: <one sentence per participant>\n"
    "FACETS: <semicolon-separated facet names that the evidence supports, or nothing>"
)


@dataclass(frozen=True)
class PromptBundle:
    system_preamble: str
    construct_context: str
    examples: tuple[FewShotExample, ...]
    bucket_rendering: str
    request_instruction: str

    def render(self) -> str:
        parts = [self.system_preamble, "", "## Construct", self.construct_context, ""]
        if self.examples:
            parts.append("## Examples")
            for n, ex in enumerate(self.examples, 1):
                parts += [f"### Example {n}", "Indicators:", ex.pattern_digest, "Assessment:", ex.assessment, ""]
        parts += ["## Current time bucket", self.bucket_rendering, "", "## Task", self.request_instruction]
        return "\n".join(parts) + "\n"


@dataclass(frozen=True)
class NarrativeAnalysis:
    bucket_index: int
    group_summary: str
    per_participant: dict[str, str]
    facet_tags: tuple[str, ...]
    backend_id: str
    # wall-clock, so kept out of equality and of the persisted form
    latency_ms: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return {
            "bucket_index": self.bucket_index,
            "group_summary": self.group_summary,
            "per_participant": [[pid, text] for pid, text in self.per_participant.items()],
            "facet_tags": list(self.facet_tags),
            "backend_id": self.backend_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> NarrativeAnalysis:
        return cls(
            bucket_index=int(d["bucket_index"]),
            group_summary=d["group_summary"],
            per_participant={pid: text for pid, text in d["per_participant"]},
            facet_tags=tuple(d["facet_tags"]),
            backend_id=d["backend_id"],
        )

    def project(self, pids) -> NarrativeAnalysis:
        keep = {p: t for p, t in self.per_participant.items() if p in set(pids)}
        return NarrativeAnalysis(
            self.bucket_index, self.group_summary, keep, self.facet_tags, self.backend_id, self.latency_ms
        )


# -- prompt assembly -------------------------------------------------------


def construct_context(construct: ConstructDefinition) -> str:
    lines = [f"{construct.name}: {construct.description}", "Facets:"]
    lines += [f"- {name}: {desc}" for name, desc in construct.facets]
    return "\n".join(lines)


def _excerpt(text: str) -> str:
    text = " ".join(text.split())
    if len(text) > TRANSCRIPT_EXCERPT_CHARS:
        return text[:TRANSCRIPT_EXCERPT_CHARS] + ELLIPSIS
    return text


def render_participant(pattern: BehaviorPattern, transcript: str, cfg: SessionConfig) -> str:
    d = decode_pattern(pattern, cfg)
    dist = f">= {cfg.distance_cap_m:.2f} m" if d["distance_m"] >= cfg.distance_cap_m else f"{d['distance_m']:.2f} m"
    fields = [
        pattern.pid,
        f"speaking: {d['speaking']} (ratio {d['speaking_ratio']:.2f}, turns {d['turns']})",
        f"content: {d['content']}",
        f"proximity: {d['proximity']} ({dist})",
        f"facing: {d['facing']}",
        f"mutual facing: {'yes' if d['mutual_facing'] else 'no'}",
        f"action: {d['action']}",
        f"transcript: {json.dumps(_excerpt(transcript), ensure_ascii=False)}",
    ]
    return " | ".join(fields)


def render_bucket(
    patterns: Sequence[BehaviorPattern],
    transcripts: dict[str, str],
    cfg: SessionConfig,
) -> str:
    """One indicator line per participant, in roster order."""
    indices = {p.bucket_index for p in patterns}
    if len(indices) > 1:
        raise DimensionMismatch(f"patterns from several buckets: {sorted(indices)}")
    rank = {pid: n for n, pid in enumerate(cfg.participants)}
    ordered = sorted(patterns, key=lambda p: rank.get(p.pid, len(rank)))
    return "\n".join(render_participant(p, transcripts.get(p.pid, ""), cfg) for p in ordered)


def sample_prompt(
    bucket_rendering: str,
    construct: ConstructDefinition,
    pool: Sequence[FewShotExample],
    k: int,
    seed: int,
) -> PromptBundle:
    """Seeded sampling of ``k`` few-shot examples without replacement."""
    if k < 0 or k > len(pool):
        raise InsufficientExamples(f"requested {k} examples from a pool of {len(pool)}")
    chosen = random.Random(seed).sample(list(pool), k)
    return PromptBundle(
        system_preamble=SYSTEM_PREAMBLE,
        construct_context=construct_context(construct),
        examples=tuple(chosen),
        bucket_rendering=bucket_rendering,
        request_instruction=REQUEST_INSTRUCTION,
    )


def bucket_seed(seed: int, bucket_index: int) -> int:
    return seed * 1_000_003 + bucket_index


# -- backends ----------------------------------------------------------------


class InsightBackend(Protocol):
    backend_id: str

    def complete(self, bundle: PromptBundle, cancel: threading.Event) -> str:
        """Return narrative text for ``bundle``; should stop early once ``cancel`` is set."""


class ScoringBackend(Protocol):
    """Numeric construct scoring. Declared for adapters; no implementation ships."""

    backend_id: str

    def score(self, bundle: PromptBundle, cancel: threading.Event) -> dict[str, float]: ...


_SPEAKING_PHRASE = {
    "silent": "stays silent",
    "low": "speaks briefly",
    "moderate": "takes an active share of the talk",
    "high": "dominates the talk",
}
_ACTION_PHRASE = {
    "writing": "while writing",
    "gesturing": "while gesturing",
    "manipulating_object": "while handling task materials",
    "idle": "with no visible task action",
}


def parse_rendering(rendering: str) -> list[dict[str, str]]:
    """Recover per-participant indicator fields from :func:`render_bucket` output."""
    rows = []
    for line in rendering.splitlines():
        parts = line.split(" | ", 7)
        if len(parts) < 2:
            continue
        row = {"pid": parts[0].strip()}
        for part in parts[1:]:
            key, _, value = part.partition(": ")
            row[key.strip()] = value.strip()
        for key in ("speaking", "proximity"):
            if key in row:
                row[key] = row[key].split(" ", 1)[0]
        rows.append(row)
    return rows


class MockBackend:
    """Deterministic rule-based stand-in for a language model."""

    backend_id = "mock-v1"

    def complete(self, bundle: PromptBundle, cancel: threading.Event | None = None) -> str:
        return mock_narrative(bundle)


def mock_narrative(bundle: PromptBundle) -> str:
    rows = parse_rendering(bundle.bucket_rendering)
    clauses = []
    for r in rows:
        speaking, action = r.get("speaking", "silent"), r.get("action", "idle")
        clause = f"{r['pid']} {_SPEAKING_PHRASE.get(speaking, 'speaks')} {_ACTION_PHRASE.get(action, 'while doing ' + action)}"
        if r.get("mutual facing") == "yes":
            clause += ", in mutual orientation with a partner"
        clauses.append((r["pid"], clause + "."))

    contents = [r.get("content") for r in rows]
    active = [r for r in rows if r.get("speaking") in ("moderate", "high")]
    facets = []
    if "question" in contents and "statement" in contents and len(rows) >= 2:
        facets.append("constructing shared knowledge")
    if "disagreement" in contents and len(active) >= 2:
        facets.append("negotiation and coordination")
    if any(r.get("mutual facing") == "yes" for r in rows):
        facets.append("maintaining team function")

    quiet = all(r.get("speaking") == "silent" and r.get("action") == "idle" for r in rows)
    if quiet:
        summary = INSUFFICIENT_DATA
        facets = []
    else:
        talking = sum(r.get("speaking") != "silent" for r in rows)
        acts = sorted({c for c in contents if c and c != "none"})
        summary = f"{talking} of {len(rows)} participants contribute talk"
        summary += f" ({', '.join(acts)})." if acts else "."
        if facets:
            summary += " Evidence points to " + " and ".join(facets) + "."

    lines = [f"SUMMARY: {summary}"]
    lines += [f"PARTICIPANT {pid}: {text}" for pid, text in clauses]
    lines.append("FACETS: " + "; ".join(facets))
    return "\n".join(lines) + "\n"


class RemoteBackend:
    """Thin adapter for an OpenAI-style chat completion endpoint.

    Configured from ``INSIGHT_ENDPOINT``, ``INSIGHT_API_KEY`` and
    ``INSIGHT_MODEL``.
    """

    def __init__(self, endpoint: str, api_key: str | None = None, model: str | None = None, http_timeout: float = 30.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model or "default"
        self.http_timeout = http_timeout
        self.backend_id = f"remote:{self.model}"

    @classmethod
    def from_env(cls, environ=os.environ) -> RemoteBackend:
        endpoint = environ.get("INSIGHT_ENDPOINT")
        if not endpoint:
            raise BackendError("INSIGHT_ENDPOINT is not set")
        return cls(endpoint, environ.get("INSIGHT_API_KEY"), environ.get("INSIGHT_MODEL"))

    def complete(self, bundle: PromptBundle, cancel: threading.Event | None = None) -> str:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": bundle.system_preamble},
                {"role": "user", "content": bundle.render()},
            ],
        }
        req = urllib.request.Request(
            self.endpoint,
            data=json.dumps(body).encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        if self.api_key:
            req.add_header("Authorization", f"Bearer {self.api_key}")
        try:
            with urllib.request.urlopen(req, timeout=self.http_timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except Exception as exc:
            raise BackendError(f"remote request failed: {exc}") from exc
        try:
            if "choices" in payload:
                return payload["choices"][0]["message"]["content"]
            return payload["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected response shape: {exc}") from exc


# -- interpretation ----------------------------------------------------------

_LINE = re.compile(r"^(SUMMARY|PARTICIPANT\s+(\S+?)|FACETS):\s?(.*)$")


def parse_narrative(text: str, construct: ConstructDefinition, roster: Sequence[str]):
    """Split backend text into (summary, per-participant map, facet tags).

    Text that ignores the requested format becomes the summary, and facets
    are then found by name anywhere in it.
    """
    summary, per, facets, structured = None, {}, None, False
    for line in text.splitlines():
        m = _LINE.match(line.strip())
        if not m:
            continue
        structured = True
        head, pid, rest = m.group(1), m.group(2), m.group(3).strip()
        if head == "SUMMARY":
            summary = rest
        elif head == "FACETS":
            facets = [f.strip().lower() for f in rest.split(";") if f.strip()]
        elif pid in roster:
            per[pid] = rest
    if not structured:
        summary = text.strip()
        lowered = text.lower()
        facets = [name for name in construct.facet_names if name in lowered]
    valid = [name for name in construct.facet_names if name in (facets or [])]
    ordered = {pid: per[pid] for pid in roster if pid in per}
    return summary or "", ordered, tuple(valid)


def call_with_timeout(backend: InsightBackend, bundle: PromptBundle, timeout_ms: float) -> tuple[str, float]:
    """Run the backend on a worker thread; returns (text, latency_ms)."""
    cancel = threading.Event()
    box: dict = {}

    def run():
        try:
            box["text"] = backend.complete(bundle, cancel)
        except BaseException as exc:
            box["error"] = exc

    worker = threading.Thread(target=run, name="insight-backend", daemon=True)
    t0 = time.perf_counter()
    worker.start()
    worker.join(timeout_ms / 1000.0)
    latency = (time.perf_counter() - t0) * 1000.0
    if worker.is_alive() or latency > timeout_ms:
        cancel.set()
        raise TimeoutExceeded(f"backend {backend.backend_id} exceeded {timeout_ms:.0f} ms")
    if "error" in box:
        err = box["error"]
        if isinstance(err, BackendError):
            raise err
        raise BackendError(f"{type(err).__name__}: {err}") from err
    text = box.get("text")
    if not isinstance(text, str):
        raise BackendError("backend returned no text")
    return text, latency


def prepare_bundle(
    bucket: TimeBucket,
    patterns: Sequence[BehaviorPattern],
    construct: ConstructDefinition,
    cfg: SessionConfig,
    pool: Sequence[FewShotExample] = DEFAULT_EXAMPLES,
    seed: int = 0,
    k: int | None = None,
) -> PromptBundle:
    transcripts = {pid: agg.transcript for pid, agg in bucket.per_participant.items()}
    rendering = render_bucket(patterns, transcripts, cfg)
    k = cfg.few_shot_k if k is None else k
    return sample_prompt(rendering, construct, pool, min(k, len(pool)), bucket_seed(seed, bucket.index))


def interpret(
    bucket: TimeBucket,
    patterns: Sequence[BehaviorPattern],
    construct: ConstructDefinition,
    backend: InsightBackend,
    cfg: SessionConfig,
    pool: Sequence[FewShotExample] = DEFAULT_EXAMPLES,
    seed: int = 0,
    bundle: PromptBundle | None = None,
) -> NarrativeAnalysis:
    if bundle is None:
        bundle = prepare_bundle(bucket, patterns, construct, cfg, pool, seed)
    text, latency = call_with_timeout(backend, bundle, cfg.insight_timeout_ms)
    summary, per, facets = parse_narrative(text, construct, cfg.participants)
    return NarrativeAnalysis(
        bucket_index=bucket.index,
        group_summary=summary,
        per_participant=per,
        facet_tags=facets,
        backend_id=backend.backend_id,
        latency_ms=latency,
    )


@dataclass
class InsightResult:
    bucket: TimeBucket
    patterns: list[BehaviorPattern]
    analysis: NarrativeAnalysis | None
    error: Exception | None = None


class InsightStage:
    """Bounded-parallel interpretation with in-order emission.

    Up to ``cfg.insight_parallelism`` backend calls run at once; results are
    released strictly in submission (bucket-index) order. A failed or timed
    out bucket is released with ``analysis=None`` and the error attached.
    """

    def __init__(
        self,
        backend: InsightBackend,
        cfg: SessionConfig,
        construct: ConstructDefinition = CPS_CONSTRUCT,
        pool: Sequence[FewShotExample] = DEFAULT_EXAMPLES,
        seed: int = 0,
        on_prompt: Callable[[int, PromptBundle], None] | None = None,
    ):
        self.backend = backend
        self.cfg = cfg
        self.construct = construct
        self.pool = tuple(pool)
        self.seed = seed
        self.on_prompt = on_prompt
        self._pool = ThreadPoolExecutor(max_workers=cfg.insight_parallelism, thread_name_prefix="insight")
        self._pending: deque[tuple[TimeBucket, list[BehaviorPattern], Future]] = deque()

    def submit(self, bucket: TimeBucket, patterns: list[BehaviorPattern]) -> None:
        bundle = prepare_bundle(bucket, patterns, self.construct, self.cfg, self.pool, self.seed)
        if self.on_prompt is not None:
            self.on_prompt(bucket.index, bundle)
        fut = self._pool.submit(
            interpret, bucket, patterns, self.construct, self.backend, self.cfg, self.pool, self.seed, bundle
        )
        self._pending.append((bucket, patterns, fut))

    def _release(self) -> InsightResult:
        bucket, patterns, fut = self._pending.popleft()
        try:
            return InsightResult(bucket, patterns, fut.result())
        except (TimeoutExceeded, BackendError) as exc:
            logger.warning("bucket %d left unanalyzed: %s", bucket.index, exc)
            return InsightResult(bucket, patterns, None, exc)

    def ready(self) -> list[InsightResult]:
        """Completed results at the head of the queue, without blocking."""
        out = []
        while self._pending and self._pending[0][2].done():
            out.append(self._release())
        # keep memory bounded when the producer outpaces the backend
        while len(self._pending) > 4 * self.cfg.insight_parallelism:
            out.append(self._release())
        return out

    def drain(self) -> list[InsightResult]:
        out = []
        while self._pending:
            out.append(self._release())
        return out

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
