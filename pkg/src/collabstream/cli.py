"""Command-line entry points.

    collabstream serve     --config C [--port 7431] --out LOG [--backend mock|remote] [--seed N]
    collabstream simulate  [--script S] [--seed N] (--out FILE | --host H --port P)
    collabstream analyze   --in EVENTS --config C --out LOG [--backend mock|remote] [--seed N]
    collabstream report    --log LOG [--from MS] [--to MS] [--pid ID] [--format text|json]
    collabstream eval      --task wer|der|alignment ...

Exit codes: 0 success, 1 usage error, 2 runtime error.

Text reports print one block per bucket::

    bucket 3 [90000, 150000)
      P1  speaking=moderate content=question proximity=social facing=1 mutual=yes action=writing
      summary: <group summary>
      P1: <participant narrative>
      facets: <facet>; <facet>

JSON reports print one canonical JSON object per line with keys ``bucket``,
``patterns`` and ``analysis`` (null when the bucket went unanalyzed), using
the session log's serialization.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import metrics
from .config import dump_config, load_config
from .domain import SessionConfig
from .encoder import decode_pattern
from .errors import BackendError, CollabStreamError
from .ingest import DEFAULT_PORT, serialize_event, serve_lines, stream_lines
from .insight import MockBackend, PromptBundle, RemoteBackend
from .pipeline import SessionPipeline
from .simgen import generate, inject_malformed, load_script, perturb, pilot_script
from .store import SessionLog, canonical_json, load_session, log_path_for, query

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

logger = logging.getLogger("collabstream")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _backend(name: str):
    if name == "mock":
        return MockBackend()
    try:
        return RemoteBackend.from_env()
    except BackendError as exc:
        raise UsageError(f"--backend remote: {exc}") from exc


def _prompt_dumper(path: str | None):
    if path is None:
        return None, None
    fp = open(path, "w", encoding="utf-8")

    def dump(index: int, bundle: PromptBundle) -> None:
        fp.write(f"===== bucket {index} =====\n")
        fp.write(bundle.render())

    return dump, fp


def _open_log(out: str, cfg: SessionConfig) -> SessionLog:
    return SessionLog.create(log_path_for(out, cfg.session_id))


def _print_summary(report, log: SessionLog | None) -> None:
    print(f"ingest: {report.stats.summary()}")
    print(
        f"buckets={report.buckets} analyses={len(report.analyses)} "
        f"unanalyzed={len(report.unanalyzed)} routed_late={report.routed_late}"
    )
    if log is not None:
        print(f"log: {log.path}")


def cmd_serve(args) -> int:
    cfg = load_config(args.config)
    backend = _backend(args.backend)
    log = _open_log(args.out, cfg)
    dump, dump_fp = _prompt_dumper(args.dump_prompts)
    pipe = SessionPipeline(cfg, backend, log, seed=args.seed, on_prompt=dump)

    def ready(port):
        print(f"listening on {args.host}:{port}", flush=True)

    try:
        serve_lines(pipe.feed_line, args.host, args.port, ready=ready)
    except OSError as exc:
        log.close()
        if dump_fp:
            dump_fp.close()
        raise CollabStreamError(f"cannot listen on {args.host}:{args.port}: {exc}") from exc
    except KeyboardInterrupt:
        logger.warning("interrupted; flushing open buckets")
    report = pipe.finish()
    if dump_fp:
        dump_fp.close()
    _print_summary(report, log)
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    backend = _backend(args.backend)
    try:
        fp = open(args.input, "rb")
    except OSError as exc:
        raise CollabStreamError(f"cannot read {args.input}: {exc}") from exc
    log = _open_log(args.out, cfg)
    dump, dump_fp = _prompt_dumper(args.dump_prompts)
    try:
        with fp:
            pipe = SessionPipeline(cfg, backend, log, seed=args.seed, on_prompt=dump)
            report = pipe.run_lines(line.rstrip(b"\r\n") for line in fp)
    finally:
        if dump_fp:
            dump_fp.close()
    _print_summary(report, log)
    return EXIT_OK


def cmd_simulate(args) -> int:
    script = load_script(args.script) if args.script else pilot_script()
    events = generate(script, args.seed, start_ts=args.start_ts)
    if args.dup_rate or args.reorder_ms or args.late_rate:
        events = perturb(events, args.seed, args.dup_rate, args.reorder_ms, args.late_rate)
    lines = [serialize_event(ev) for ev in events]
    if args.malformed_rate:
        lines = inject_malformed(lines, args.malformed_rate, args.seed)

    if args.write_config:
        cfg = SessionConfig(args.session_id, args.start_ts, script.participants)
        Path(args.write_config).write_text(dump_config(cfg), encoding="utf-8")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fp:
            for line in lines:
                fp.write(line + "\n")
        print(f"wrote {len(lines)} lines to {args.out}")
    else:
        if args.realtime:
            lines = _paced(lines, events, args.start_ts)
        n = stream_lines(lines, args.host, args.port)
        print(f"streamed {n} lines to {args.host}:{args.port}")
    return EXIT_OK


def _paced(lines, events, start_ts):
    t0 = time.monotonic()
    by_line = {serialize_event(ev): ev.ts for ev in events}
    for line in lines:
        ts = by_line.get(line)
        if ts is not None:
            delay = (ts - start_ts) / 1000.0 - (time.monotonic() - t0)
            if delay > 0:
                time.sleep(delay)
        yield line


def _report_rows(args):
    lo = args.from_ms
    hi = args.to_ms
    time_range = None if lo is None and hi is None else (lo if lo is not None else -(2**62), hi if hi is not None else 2**62)
    return query(args.log, time_range, args.pid)


def cmd_report(args) -> int:
    if args.from_ms is not None and args.to_ms is not None and args.from_ms > args.to_ms:
        raise UsageError("--from must not exceed --to")
    rows = _report_rows(args)
    cfg = load_session(args.log).config
    if cfg is None:
        # Log cut short before its manifest; decoding only needs the default vocabulary.
        pids = sorted({p.pid for _, pats, _ in rows for p in pats}) or ["?"]
        cfg = SessionConfig("unknown", None, tuple(pids))
    out = sys.stdout
    for bucket, patterns, analysis in rows:
        if args.format == "json":
            record = {
                "bucket": bucket.to_dict(),
                "patterns": [p.to_dict() for p in patterns],
                "analysis": analysis.to_dict() if analysis is not None else None,
            }
            out.write(canonical_json(record).decode("utf-8") + "\n")
            continue
        out.write(f"bucket {bucket.index} [{bucket.window_start}, {bucket.window_end})\n")
        for p in patterns:
            d = decode_pattern(p, cfg)
            out.write(
                f"  {p.pid}  speaking={d['speaking']} content={d['content']} proximity={d['proximity']} "
                f"facing={d['facing']} mutual={'yes' if d['mutual_facing'] else 'no'} action={d['action']}\n"
            )
        if analysis is None:
            out.write("  summary: (unanalyzed)\n")
            continue
        out.write(f"  summary: {analysis.group_summary}\n")
        for pid, text in analysis.per_participant.items():
            out.write(f"  {pid}: {text}\n")
        out.write(f"  facets: {'; '.join(analysis.facet_tags)}\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.task == "alignment":
        if args.matches is None or args.total is None:
            raise UsageError("alignment needs --matches and --total")
        value = metrics.alignment_rate(args.matches, args.total)
    else:
        if not args.ref or not args.hyp:
            raise UsageError(f"{args.task} needs --ref and --hyp")
        try:
            if args.task == "wer":
                ref = Path(args.ref).read_text(encoding="utf-8")
                hyp = Path(args.hyp).read_text(encoding="utf-8")
                value = metrics.wer(ref, hyp)
            else:
                value = metrics.der(
                    metrics.read_segments_csv(args.ref), metrics.read_segments_csv(args.hyp), collar=args.collar
                )
        except OSError as exc:
            raise CollabStreamError(str(exc)) from exc
    print(f"{value:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="collabstream", description=__doc__.split("\n\n")[0] if __doc__ else None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def pipeline_flags(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True, help="log file, or directory for <session_id>.blog")
        p.add_argument("--backend", choices=("mock", "remote"), default="mock")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dump-prompts", metavar="PATH", help="write every prompt bundle as plain text")

    p = sub.add_parser("serve", help="ingest a live session over TCP")
    pipeline_flags(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("analyze", help="run the pipeline over an NDJSON event file")
    pipeline_flags(p)
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="generate a synthetic session")
    p.add_argument("--script", help="script file (default: bundled 43-minute pilot)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start-ts", type=int, default=0)
    p.add_argument("--session-id", default="pilot")
    p.add_argument("--out", help="write NDJSON here instead of streaming")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--realtime", action="store_true", help="pace streaming at event time")
    p.add_argument("--dup-rate", type=float, default=0.0)
    p.add_argument("--reorder-ms", type=int, default=0)
    p.add_argument("--late-rate", type=float, default=0.0)
    p.add_argument("--malformed-rate", type=float, default=0.0)
    p.add_argument("--write-config", metavar="PATH", help="also write a matching session config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="list buckets and analyses from a session log")
    p.add_argument("--log", required=True)
    p.add_argument("--from", dest="from_ms", type=int)
    p.add_argument("--to", dest="to_ms", type=int)
    p.add_argument("--pid")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval", help="score feature pipelines against ground truth")
    p.add_argument("--task", choices=("wer", "der", "alignment"), required=True)
    p.add_argument("--ref", help="reference transcript (wer) or speaker,start_s,end_s CSV (der)")
    p.add_argument("--hyp", help="hypothesis file, same format as --ref")
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--matches", type=int)
    p.add_argument("--total", type=int)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"collabstream: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CollabStreamError, OSError, ValueError) as exc:
        print(f"collabstream: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
