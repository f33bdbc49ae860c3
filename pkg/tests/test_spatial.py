import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collabstream.domain import ModalityAggregate, SessionConfig, TimeBucket
from collabstream.errors import DegenerateGeometry, InvalidDistance, InvalidPose
from collabstream.spatial import distance, facing_angle, is_facing, proximity_class, summarize

CFG = SessionConfig("s", 0, ("P1", "P2", "P3"))


@pytest.mark.parametrize("a,b,d", [((0, 0), (3, 4), 5.0), ((2.5, -1), (2.5, -1), 0.0), ((-1, -1), (2, 3), 5.0)])
def test_distance_examples(a, b, d):
    assert distance(a, b) == d


def test_distance_rejects_non_finite():
    with pytest.raises(InvalidPose):
        distance((0, math.nan), (1, 1))
    with pytest.raises(InvalidPose):
        facing_angle((0, 0), math.inf, (1, 1))


@pytest.mark.parametrize("yaw,j,angle", [(0, (2, 0), 0.0), (0, (0, 2), 90.0), (45, (1, 1), 0.0), (0, (-1, 0), 180.0), (350, (1, 0), 10.0)])
def test_facing_angle_examples(yaw, j, angle):
    assert facing_angle((0, 0), yaw, j) == pytest.approx(angle, abs=1e-12)


def test_facing_angle_degenerate():
    with pytest.raises(DegenerateGeometry):
        facing_angle((1, 1), 0, (1, 1))


def test_is_facing_threshold_inclusive():
    assert is_facing((0, 0), 0, (1, 0), 30)
    assert is_facing((0, 0), 30, (1, 0), 30)
    assert not is_facing((0, 0), 31, (1, 0), 30)
    assert not is_facing((0, 0), 330.5, (1, 0), 29.5)


@pytest.mark.parametrize("d,cls", [(0.5, "close"), (1.0, "social"), (2.49, "social"), (2.5, "far"), (3.2, "far"), (0.0, "close")])
def test_proximity_examples(d, cls):
    assert proximity_class(d, CFG) == cls


def test_proximity_rejects_negative():
    with pytest.raises(InvalidDistance):
        proximity_class(-0.1, CFG)


@given(st.floats(0, 100), st.floats(0, 100))
def test_proximity_monotone(a, b):
    order = ["close", "social", "far"]
    lo, hi = sorted((a, b))
    assert order.index(proximity_class(lo, CFG)) <= order.index(proximity_class(hi, CFG))


coord = st.floats(-1e3, 1e3)
point = st.tuples(coord, coord)


@given(point, point, point)
def test_distance_axioms(a, b, c):
    assert distance(a, b) == distance(b, a)
    assert (distance(a, b) == 0) == (a == b)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9


@given(point, st.floats(0, 360, exclude_max=True), point, st.floats(-720, 720))
def test_facing_rotation_invariance(pi, yaw, pj, theta):
    if math.hypot(pj[0] - pi[0], pj[1] - pi[1]) < 1e-6:
        return
    t = math.radians(theta)
    rot = lambda p: (p[0] * math.cos(t) - p[1] * math.sin(t), p[0] * math.sin(t) + p[1] * math.cos(t))
    a = facing_angle(pi, yaw, pj)
    b = facing_angle(rot(pi), (yaw + theta) % 360, rot(pj))
    assert 0 <= a <= 180
    assert abs(a - b) <= 1e-9 * max(1.0, 1e3 / math.hypot(pj[0] - pi[0], pj[1] - pi[1]))


def bucket_with(poses):
    per = {pid: ModalityAggregate(pose_samples=tuple(samples)) for pid, samples in poses.items()}
    return TimeBucket(0, 0, 60_000, per)


def test_summarize_face_to_face_example():
    cfg = SessionConfig("s", 0, ("P1", "P2"))
    b = bucket_with({"P1": [(0, 0.0, 0.0, 0.0)], "P2": [(0, 1.0, 0.0, 180.0)]})
    out = summarize(b, cfg)
    for pid in ("P1", "P2"):
        assert out[pid].mean_min_distance_m == 1.0
        assert out[pid].proximity_class == "social"
        assert out[pid].mutual_facing
        assert out[pid].facing_count == 1


def test_summarize_single_participant():
    cfg = SessionConfig("s", 0, ("P1",))
    out = summarize(bucket_with({"P1": [(0, 0.0, 0.0, 0.0)]}), cfg)
    assert out["P1"].proximity_class == "far"
    assert out["P1"].facing_count == 0
    assert math.isinf(out["P1"].mean_min_distance_m)


def test_summarize_missing_poses():
    cfg = SessionConfig("s", 0, ("P1", "P2", "P3"))
    b = bucket_with({"P1": [(0, 0.0, 0.0, 0.0)], "P2": [(0, 0.5, 0.0, 180.0)], "P3": []})
    out = summarize(b, cfg)
    assert (out["P3"].proximity_class, out["P3"].facing_count, out["P3"].mutual_facing) == ("far", 0, False)
    assert out["P1"].proximity_class == "close"


def test_summarize_carries_last_observation_forward():
    cfg = SessionConfig("s", 0, ("P1", "P2"))
    # P2 walks away at 30 s; P1 only ever reports once at 0.
    b = bucket_with({"P1": [(0, 0.0, 0.0, 90.0)], "P2": [(0, 1.0, 0.0, 0.0), (30_000, 3.0, 0.0, 0.0)]})
    out = summarize(b, cfg)
    assert out["P1"].mean_min_distance_m == pytest.approx((30 * 1.0 + 30 * 3.0) / 60)
    assert out["P1"].facing_count == 0


def oracle_summary(poses, window_start, window_end, threshold, close, social):
    """Loop-based restatement of the per-tick LOCF pairing rules."""
    pids = list(poses)

    def state_at(pid, t):
        best = None
        for s in poses[pid]:
            if s[0] <= t and (best is None or s[0] >= best[0]):
                best = s
        return best

    ticks = list(range(window_start, window_end, 1000))
    out = {}
    for pid in pids:
        mins = []
        for t in ticks:
            me = state_at(pid, t)
            if me is None:
                continue
            ds = [math.dist(me[1:3], o[1:3]) for q in pids if q != pid for o in [state_at(q, t)] if o is not None]
            if ds:
                mins.append(min(ds))
        out[pid] = sum(mins) / len(mins) if mins else math.inf

    last = {pid: state_at(pid, ticks[-1]) for pid in pids}

    def faces(i, j):
        a, b = last[i], last[j]
        if a is None or b is None or (a[1], a[2]) == (b[1], b[2]):
            return False
        heading = math.atan2(b[2] - a[2], b[1] - a[1])
        diff = abs(math.degrees(heading) - a[3]) % 360
        return min(diff, 360 - diff) <= threshold

    result = {}
    for pid in pids:
        d = out[pid]
        cls = "far" if d == math.inf else ("close" if d < close else "social" if d < social else "far")
        facing = [q for q in pids if q != pid and faces(pid, q)]
        mutual = any(faces(q, pid) for q in facing)
        result[pid] = (d, cls, len(facing), mutual)
    return result


sample = st.tuples(
    st.integers(0, 59_999), st.floats(-4, 4).map(lambda v: round(v, 2)), st.floats(-4, 4).map(lambda v: round(v, 2)), st.floats(0, 359).map(lambda v: round(v, 1))
)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.lists(sample, max_size=6, unique_by=lambda s: s[0]), min_size=1, max_size=4))
def test_summarize_matches_oracle(per):
    pids = tuple(f"P{k}" for k in range(len(per)))
    cfg = SessionConfig("s", 0, pids)
    poses = {pid: sorted(samples) for pid, samples in zip(pids, per)}
    got = summarize(bucket_with(poses), cfg)
    want = oracle_summary(poses, 0, 60_000, cfg.facing_threshold_deg, 1.0, 2.5)
    for pid in pids:
        g = got[pid]
        d, cls, n_face, mutual = want[pid]
        if math.isinf(d):
            assert math.isinf(g.mean_min_distance_m)
        else:
            assert g.mean_min_distance_m == pytest.approx(d, abs=1e-9)
        assert g.proximity_class == cls or abs(d - 1.0) < 1e-9 or abs(d - 2.5) < 1e-9
        assert (g.facing_count, g.mutual_facing) == (n_face, mutual)
        assert not g.mutual_facing or g.facing_count >= 1
