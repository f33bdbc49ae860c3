import pytest

from collabstream import SessionConfig
from collabstream.ingest import serialize_event
from collabstream.insight import MockBackend
from collabstream.pipeline import SessionPipeline
from collabstream.simgen import generate, pilot_script
from collabstream.store import SessionLog

PILOT_LEN_MS = 2_580_000


@pytest.fixture
def cfg():
    return SessionConfig("s1", 0, ("P1", "P2"))


@pytest.fixture(scope="session")
def pilot_events():
    return generate(pilot_script(), seed=7)


@pytest.fixture(scope="session")
def pilot_lines(pilot_events):
    return [serialize_event(ev) for ev in pilot_events]


def run_to_log(lines, path, cfg=None, seed=7, backend=None):
    """Run the pipeline over wire lines into ``path``; returns the report."""
    cfg = cfg or SessionConfig("pilot", 0, ("P1", "P2"))
    log = SessionLog.create(path)
    pipe = SessionPipeline(cfg, backend or MockBackend(), log, seed=seed)
    return pipe.run_lines(lines)


@pytest.fixture(scope="session")
def pilot_log(tmp_path_factory, pilot_lines):
    path = tmp_path_factory.mktemp("pilot") / "pilot.blog"
    report = run_to_log(pilot_lines, path)
    return path, report


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts at the end of the run, one line each."""
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
