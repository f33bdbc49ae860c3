"""Deterministic synthetic collaboration sessions.

Script files hold one directive per line; ``#`` starts a comment::

    duration_ms 2580000
    participants P1 P2
    scene 0
    P1 speak 9000 6000          # on/off run lengths in ms; "P1 silent" stops talk
    P1 say Where does this gear go?
    P1 path 0,0 1.5,0           # waypoints (m), traversed at even time steps
    P1 yaw 90                   # fixed heading, or "P1 face P2"
    P1 action writing 0.9       # label and optional confidence
    scene 600000
    ...

Scenes start at the given offset and run until the next scene (the first
must start at 0). A participant keeps its previous directives in a new scene
unless they are restated; ``say`` lines in a scene replace the utterance pool.

Cadences: speaker labels every 3 s, poses every 1 s, actions every 30 s, all
on ticks ``0, c, 2c, ... < duration`` from session start. Each maximal
speaking run becomes one transcript segment.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .domain import (
    ActionLabel,
    FeatureEvent,
    PoseSample,
    SessionControl,
    SpeakerLabel,
    TranscriptSegment,
    event_key,
    event_sort_key,
)
from .errors import ScriptError

SPEAKER_CADENCE_MS = 3_000
POSE_CADENCE_MS = 1_000
ACTION_CADENCE_MS = 30_000
INAUDIBLE = "(inaudible)"


@dataclass(frozen=True)
class Directive:
    speak_on_ms: int = 0
    speak_off_ms: int = 0
    utterances: tuple[str, ...] = ()
    path: tuple[tuple[float, float], ...] = ()
    yaw_deg: float = 0.0
    face: str | None = None
    action: str | None = None
    action_confidence: float = 0.9


@dataclass(frozen=True)
class Scene:
    start_offset_ms: int
    directives: dict[str, Directive]


@dataclass(frozen=True)
class SessionScript:
    duration_ms: int
    participants: tuple[str, ...]
    scenes: tuple[Scene, ...]

    def validate(self) -> None:
        if self.duration_ms <= 0:
            raise ScriptError("duration_ms must be positive")
        if not self.participants or len(set(self.participants)) != len(self.participants):
            raise ScriptError("participants must be a non-empty list of unique ids")
        if not self.scenes or self.scenes[0].start_offset_ms != 0:
            raise ScriptError("the first scene must start at offset 0")
        starts = [s.start_offset_ms for s in self.scenes]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ScriptError("scenes must be sorted and non-overlapping")
        if starts[-1] >= self.duration_ms:
            raise ScriptError("a scene starts at or after the session end")
        for scene in self.scenes:
            for pid, d in scene.directives.items():
                if pid not in self.participants:
                    raise ScriptError(f"scene {scene.start_offset_ms}: unknown participant {pid!r}")
                if d.speak_on_ms < 0 or d.speak_off_ms < 0:
                    raise ScriptError("speaking run lengths must be non-negative")
                if d.face is not None and (d.face not in self.participants or d.face == pid):
                    raise ScriptError(f"{pid} cannot face {d.face!r}")
                if not 0.0 <= d.action_confidence <= 1.0:
                    raise ScriptError("action confidence must lie in [0, 1]")

    def scene_bounds(self) -> list[tuple[int, int, Scene]]:
        ends = [s.start_offset_ms for s in self.scenes[1:]] + [self.duration_ms]
        return [(s.start_offset_ms, e, s) for s, e in zip(self.scenes, ends)]


# -- script text format ------------------------------------------------------


def parse_script(text: str) -> SessionScript:
    duration, participants = None, None
    scenes: list[tuple[int, dict[str, Directive]]] = []
    current: dict[str, Directive] = {}
    said: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "duration_ms":
                duration = int(rest[0])
            elif head == "participants":
                participants = tuple(rest)
                current = {pid: Directive() for pid in participants}
            elif head == "scene":
                if participants is None:
                    raise ScriptError("participants must be declared before scenes")
                said = set()
                current = dict(current)
                scenes.append((int(rest[0]), current))
            else:
                if not scenes:
                    raise ScriptError("directive outside of a scene")
                pid, verb, args = head, rest[0], rest[1:]
                if pid not in current:
                    raise ScriptError(f"unknown participant {pid!r}")
                d = current[pid]
                if verb == "speak":
                    d = replace(d, speak_on_ms=int(args[0]), speak_off_ms=int(args[1]))
                elif verb == "silent":
                    d = replace(d, speak_on_ms=0, speak_off_ms=0)
                elif verb == "say":
                    utterance = line.split(None, 2)[2] if len(line.split(None, 2)) > 2 else ""
                    pool = d.utterances if pid in said else ()
                    said.add(pid)
                    d = replace(d, utterances=pool + (utterance,))
                elif verb == "path":
                    d = replace(d, path=tuple(tuple(float(v) for v in p.split(",")) for p in args))
                elif verb == "yaw":
                    d = replace(d, yaw_deg=float(args[0]), face=None)
                elif verb == "face":
                    d = replace(d, face=args[0])
                elif verb == "action":
                    conf = float(args[1]) if len(args) > 1 else 0.9
                    d = replace(d, action=None if args[0] == "none" else args[0], action_confidence=conf)
                else:
                    raise ScriptError(f"unknown directive {verb!r}")
                current[pid] = d
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ScriptError):
                raise ScriptError(f"line {lineno}: {exc}") from None
            raise ScriptError(f"line {lineno}: cannot parse {raw.strip()!r}") from exc

    if duration is None or participants is None:
        raise ScriptError("script needs duration_ms and participants")
    script = SessionScript(duration, participants, tuple(Scene(s, d) for s, d in scenes))
    script.validate()
    return script


def load_script(path: str | Path) -> SessionScript:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScriptError(f"cannot read script {path}: {exc}") from exc
    return parse_script(text)


def pilot_script() -> SessionScript:
    """Bundled 43-minute two-person problem-solving session."""
    text = resources.files("collabstream").joinpath("data/pilot_43min.script").read_text(encoding="utf-8")
    return parse_script(text)


# -- generation ------------------------------------------------------------


def _speaking_runs(script: SessionScript, pid: str) -> list[tuple[int, int, tuple[str, ...]]]:
    runs: list[list] = []
    for start, end, scene in script.scene_bounds():
        d = scene.directives.get(pid, Directive())
        if d.speak_on_ms <= 0:
            continue
        period = d.speak_on_ms + d.speak_off_ms
        a = start
        while a < end:
            b = min(a + d.speak_on_ms, end)
            if runs and runs[-1][1] == a:
                runs[-1][1] = b
            else:
                runs.append([a, b, d.utterances])
            if d.speak_off_ms == 0:
                break
            a += period
    return [(a, b, pool) for a, b, pool in runs]


def _position(d: Directive, start: int, end: int, t: int) -> tuple[float, float] | None:
    if not d.path:
        return None
    if len(d.path) == 1:
        return d.path[0]
    f = (t - start) / (end - start) * (len(d.path) - 1)
    k = min(int(f), len(d.path) - 2)
    w = f - k
    (x0, y0), (x1, y1) = d.path[k], d.path[k + 1]
    return (x0 + w * (x1 - x0), y0 + w * (y1 - y0))


def _norm_yaw(yaw: float) -> float:
    yaw = yaw % 360.0
    return 0.0 if yaw >= 360.0 else yaw


def generate(script: SessionScript, seed: int, start_ts: int = 0) -> list[FeatureEvent]:
    """Full ordered event stream for ``script``, including start/end controls."""
    script.validate()
    rng = random.Random(seed)
    events: list[FeatureEvent] = [
        SessionControl(ts=start_ts, op="start"),
        SessionControl(ts=start_ts + script.duration_ms, op="end"),
    ]
    bounds = script.scene_bounds()
    scene_starts = [s for s, _, _ in bounds]

    def scene_at(t: int):
        return bounds[bisect.bisect_right(scene_starts, t) - 1]

    runs = {pid: _speaking_runs(script, pid) for pid in script.participants}
    for pid, pid_runs in runs.items():
        run_starts = [a for a, _, _ in pid_runs]
        for t in range(0, script.duration_ms, SPEAKER_CADENCE_MS):
            k = bisect.bisect_right(run_starts, t) - 1
            speaking = k >= 0 and t < pid_runs[k][1]
            events.append(SpeakerLabel(ts=start_ts + t, pid=pid, speaking=speaking))

    # draw utterances in a fixed (time, roster) order so the seed fully determines text
    drawn = sorted((a, script.participants.index(pid), pid, b, pool) for pid, rs in runs.items() for a, b, pool in rs)
    for a, _, pid, b, pool in drawn:
        text = rng.choice(pool) if pool else INAUDIBLE
        events.append(TranscriptSegment(ts_start=start_ts + a, ts_end=start_ts + b, pid=pid, text=text))

    for t in range(0, script.duration_ms, POSE_CADENCE_MS):
        s, e, scene = scene_at(t)
        positions = {
            pid: _position(scene.directives.get(pid, Directive()), s, e, t) for pid in script.participants
        }
        for pid in script.participants:
            pos = positions[pid]
            if pos is None:
                continue
            d = scene.directives.get(pid, Directive())
            yaw = d.yaw_deg
            target = positions.get(d.face) if d.face else None
            if target is not None and target != pos:
                yaw = math.degrees(math.atan2(target[1] - pos[1], target[0] - pos[0]))
            events.append(PoseSample(ts=start_ts + t, pid=pid, x=float(pos[0]), y=float(pos[1]), yaw_deg=_norm_yaw(yaw)))

    for t in range(0, script.duration_ms, ACTION_CADENCE_MS):
        _, _, scene = scene_at(t)
        for pid in script.participants:
            d = scene.directives.get(pid, Directive())
            if d.action is not None:
                events.append(ActionLabel(ts=start_ts + t, pid=pid, label=d.action, confidence=d.action_confidence))

    events.sort(key=event_sort_key)
    return events


def random_script(
    seed: int,
    duration_ms: int,
    n_participants: int = 3,
    n_scenes: int = 4,
    actions: Sequence[str] = ("writing", "gesturing", "manipulating_object", "pointing", "idle"),
) -> SessionScript:
    """Randomized script for property tests and load replay."""
    rng = random.Random(seed)
    pids = tuple(f"P{k + 1}" for k in range(n_participants))
    offsets = sorted({0} | {rng.randrange(1, duration_ms) // 1000 * 1000 for _ in range(n_scenes - 1)})
    offsets = [o for o in offsets if o < duration_ms]
    words = ["gear", "axle", "lever", "here", "this", "that", "weight", "force", "plan", "it"]
    openers = ["What about", "Why is", "Yes,", "No,", "I think", "We should move", "Okay,", "But I think", "Right,", "Does"]
    scenes = []
    for off in offsets:
        directives = {}
        for pid in pids:
            on = rng.choice([0, 0, 3_000, 6_000, 12_000, 30_000])
            off_ms = rng.choice([0, 3_000, 9_000, 20_000])
            pool = tuple(
                f"{rng.choice(openers)} {' '.join(rng.choices(words, k=rng.randint(1, 5)))}{rng.choice(['.', '?', '!', ''])}"
                for _ in range(rng.randint(0, 3))
            )
            path = tuple(
                (round(rng.uniform(-3, 3), 3), round(rng.uniform(-3, 3), 3)) for _ in range(rng.randint(0, 3))
            )
            others = [p for p in pids if p != pid]
            face = rng.choice(others) if others and rng.random() < 0.4 else None
            directives[pid] = Directive(
                speak_on_ms=on,
                speak_off_ms=off_ms,
                utterances=pool,
                path=path,
                yaw_deg=round(rng.uniform(0, 360), 2),
                face=face,
                action=rng.choice(list(actions) + [None]),
                action_confidence=round(rng.uniform(0.0, 1.0), 2),
            )
        scenes.append(Scene(off, directives))
    return SessionScript(duration_ms, pids, tuple(scenes))


# -- perturbation ----------------------------------------------------------


def perturb(
    stream: Sequence[FeatureEvent],
    seed: int,
    dup_rate: float = 0.0,
    reorder_window_ms: int = 0,
    late_rate: float = 0.0,
    late_delay_ms: int = 60_000,
) -> list[FeatureEvent]:
    """Inject duplicates, bounded reordering and late deliveries.

    Each data event is re-delivered at ``ts + U[0, reorder_window_ms]``
    (plus ``late_delay_ms`` when chosen as late), so no event is overtaken
    by more than the window. Session controls keep their first/last place.
    The set of unique ``(kind, ts, pid)`` keys is unchanged.
    """
    for name, rate in (("dup_rate", dup_rate), ("late_rate", late_rate)):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    if reorder_window_ms < 0:
        raise ValueError("reorder_window_ms must be non-negative")
    rng = random.Random(seed)
    head = [ev for ev in stream[:1] if isinstance(ev, SessionControl)]
    tail = [ev for ev in stream[len(head):] if isinstance(ev, SessionControl) and ev.op == "end"]
    body = [ev for ev in stream[len(head):] if not (isinstance(ev, SessionControl) and ev.op == "end")]

    keyed = []
    for pos, ev in enumerate(body):
        copies = 2 if rng.random() < dup_rate else 1
        late = rng.random() < late_rate
        for c in range(copies):
            delay = rng.randint(0, reorder_window_ms) if reorder_window_ms else 0
            if late and c == 0:
                delay += late_delay_ms
            keyed.append((ev.ts + delay, pos, c, ev))
    keyed.sort(key=lambda item: item[:3])
    return head + [ev for *_, ev in keyed] + tail


def unique_keys(stream: Iterable[FeatureEvent]) -> set:
    return {event_key(ev) for ev in stream}


_GARBAGE = (
    "{not json",
    '{"v":2,"type":"speaker","ts":0,"pid":"P1","speaking":true}',
    '{"v":1,"type":"telepathy","ts":0,"pid":"P1"}',
    '{"v":1,"type":"pose","ts":0,"pid":"P1","x":"far"}',
    "[1, 2, 3]",
    '"just a string"',
    "",
)


def inject_malformed(lines: Sequence[str], rate: float, seed: int) -> list[str]:
    """Insert invalid wire lines after the first line with probability ``rate`` each."""
    rng = random.Random(seed)
    out = list(lines[:1])
    for line in lines[1:]:
        if rng.random() < rate:
            out.append(rng.choice(_GARBAGE))
        out.append(line)
    return out
