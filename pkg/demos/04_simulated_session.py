# %% [markdown]
# # A simulated 43-minute session, end to end
# The bundled pilot script is turned into a seeded event stream, noise is
# added (duplicates, bounded reordering, malformed lines), and both streams
# go through the pipeline with the deterministic mock backend.

# %%
import tempfile
from pathlib import Path

from collabstream.domain import SessionConfig
from collabstream.ingest import serialize_event
from collabstream.insight import MockBackend
from collabstream.pipeline import SessionPipeline
from collabstream.simgen import generate, inject_malformed, perturb, pilot_script
from collabstream.store import SessionLog, query

cfg = SessionConfig("pilot", 0, ("P1", "P2"))
events = generate(pilot_script(), seed=7)
print(len(events), "events, first:", events[1])

# %%
def run(lines, path=None):
    buckets = []
    log = SessionLog.create(path) if path else None
    pipe = SessionPipeline(cfg, MockBackend(), log, seed=7, on_result=lambda r: buckets.append(r.bucket))
    return pipe.run_lines(lines), buckets

out = Path(tempfile.mkdtemp()) / "pilot.blog"
clean_report, clean = run([serialize_event(e) for e in events], out)
print("clean:", clean_report.stats.summary(), "buckets:", clean_report.buckets)

noisy_lines = inject_malformed([serialize_event(e) for e in perturb(events, 1, dup_rate=0.05, reorder_window_ms=5_000)], 0.01, 1)
noisy_report, noisy = run(noisy_lines)
print("noisy:", noisy_report.stats.summary())
print("same buckets despite the noise:", noisy == clean)

# %% [markdown]
# The log can be queried by time range and participant.

# %%
for bucket, patterns, analysis in query(out, (600_000, 660_000), "P1"):
    print(bucket.index, bucket.window, [p.P.tolist() for p in patterns])
    print("   ", analysis.group_summary)
    print("   ", analysis.facet_tags)
