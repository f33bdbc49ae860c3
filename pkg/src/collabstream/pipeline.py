"""End-to-end session pipeline: ingest → buckets → patterns → insight → log."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .bucketizer import OpenBucketSet
from .domain import FeatureEvent, SessionConfig, SessionControl, TimeBucket
from .encoder import encode_bucket
from .errors import EventBeforeSession, RoutedLate, UnknownParticipant
from .ingest import Admission, Ingestor, IngestStats
from .insight import (
    CPS_CONSTRUCT,
    DEFAULT_EXAMPLES,
    ConstructDefinition,
    FewShotExample,
    InsightBackend,
    InsightResult,
    InsightStage,
    NarrativeAnalysis,
    PromptBundle,
)
from .store import SessionLog

logger = logging.getLogger(__name__)

LOG_FORMAT_VERSION = 1


@dataclass
class PipelineReport:
    stats: IngestStats
    buckets: int = 0
    analyses: list[NarrativeAnalysis] = field(default_factory=list)
    unanalyzed: list[int] = field(default_factory=list)
    routed_late: int = 0


class SessionPipeline:
    """One session's processing chain.

    Finalized buckets are encoded immediately and handed to the insight stage;
    bucket, pattern and analysis records are written to the log together, in
    bucket order, as soon as that bucket's analysis resolves. Record order is
    therefore independent of backend timing.
    """

    def __init__(
        self,
        cfg: SessionConfig,
        backend: InsightBackend,
        log: SessionLog | None = None,
        *,
        construct: ConstructDefinition = CPS_CONSTRUCT,
        pool: Sequence[FewShotExample] = DEFAULT_EXAMPLES,
        seed: int = 0,
        on_prompt: Callable[[int, PromptBundle], None] | None = None,
        on_result: Callable[[InsightResult], None] | None = None,
    ):
        self.ingestor = Ingestor(cfg)
        self.backend = backend
        self.log = log
        self.construct = construct
        self.pool = tuple(pool)
        self.seed = seed
        self.on_result = on_result
        self.insight = InsightStage(backend, cfg, construct, self.pool, seed, on_prompt=on_prompt)
        self.report = PipelineReport(stats=self.ingestor.stats)
        self.finished = False
        self._buckets: OpenBucketSet | None = None
        self._manifest_written = False

    @property
    def cfg(self) -> SessionConfig:
        return self.ingestor.cfg

    def _bucket_set(self) -> OpenBucketSet:
        if self._buckets is None:
            self._buckets = OpenBucketSet(self.cfg)
            self.insight.cfg = self.cfg
        return self._buckets

    # -- input

    def feed_line(self, line: bytes | str) -> bool:
        """Process one wire line; returns True once the session has ended."""
        if self.finished:
            return True
        event = self.ingestor.process_line(line)
        self.report.stats = self.ingestor.stats
        if event is not None:
            self._handle(event)
        return self.finished

    def feed_event(self, event: FeatureEvent) -> bool:
        if self.finished:
            return True
        if isinstance(event, SessionControl):
            self.ingestor.control(event)
            self.report.stats = self.ingestor.stats
            self._handle(event)
            return self.finished
        try:
            verdict = self.ingestor.admit(event)
        except (UnknownParticipant, EventBeforeSession):
            self.ingestor.stats.malformed_lines += 1
            return False
        if verdict is Admission.ADMITTED:
            self._handle(event)
        return self.finished

    def run_lines(self, lines: Iterable[bytes | str]) -> PipelineReport:
        for line in lines:
            if self.feed_line(line):
                break
        return self.finish()

    def run_events(self, events: Iterable[FeatureEvent]) -> PipelineReport:
        for ev in events:
            if self.feed_event(ev):
                break
        return self.finish()

    def _handle(self, event: FeatureEvent) -> None:
        if isinstance(event, SessionControl):
            if event.op == "end":
                self.finish(end_ts=event.ts)
            return
        buckets = self._bucket_set()
        try:
            buckets.route(event)
        except RoutedLate as exc:
            logger.debug("%s", exc)
            self.report.routed_late += 1
        self._submit(buckets.finalize_ready(self.ingestor.stats.watermark))
        self._emit(self.insight.ready())

    # -- output

    def _submit(self, finalized: list[TimeBucket]) -> None:
        for bucket in finalized:
            self.insight.submit(bucket, encode_bucket(bucket, self.cfg))

    def _write_manifest(self) -> None:
        if self._manifest_written or self.log is None:
            self._manifest_written = True
            return
        self.log.write_manifest(
            self.cfg,
            format_version=LOG_FORMAT_VERSION,
            backend_id=self.backend.backend_id,
            seed=self.seed,
            construct=self.construct.name,
            example_pool_size=len(self.pool),
        )
        self._manifest_written = True

    def _emit(self, results: list[InsightResult]) -> None:
        for res in results:
            self._write_manifest()
            if self.log is not None:
                self.log.write_bucket(res.bucket)
                for pattern in res.patterns:
                    self.log.write_pattern(pattern)
                if res.analysis is not None:
                    self.log.write_analysis(res.analysis)
            self.report.buckets += 1
            if res.analysis is None:
                self.report.unanalyzed.append(res.bucket.index)
            else:
                self.report.analyses.append(res.analysis)
            if self.on_result is not None:
                self.on_result(res)

    def finish(self, end_ts: int | None = None) -> PipelineReport:
        """Flush all open buckets and drain the insight stage (idempotent)."""
        if self.finished:
            return self.report
        self.finished = True
        if self.cfg.start_ts is not None:
            self._submit(self._bucket_set().flush(end_ts=end_ts, watermark=self.ingestor.stats.watermark))
        self._emit(self.insight.drain())
        self._write_manifest()
        self.insight.close()
        self.report.stats = self.ingestor.stats
        if self.log is not None:
            self.log.close()
        return self.report
