"""Planar inter-person geometry: distances, facing angles, proximity classes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import SessionConfig, TimeBucket
from .errors import DegenerateGeometry, InvalidDistance, InvalidPose

POSE_TICK_MS = 1000


@dataclass(frozen=True)
class SpatialSummary:
    pid: str
    mean_min_distance_m: float  # math.inf when never paired with anyone
    proximity_class: str
    facing_count: int
    mutual_facing: bool


def _check_finite(*coords: float) -> None:
    if not all(math.isfinite(c) for c in coords):
        raise InvalidPose(f"non-finite coordinate in {coords}")


def distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    _check_finite(*a, *b)
    return math.hypot(b[0] - a[0], b[1] - a[1])


def facing_angle(pos_i, yaw_i_deg: float, pos_j) -> float:
    """Unsigned angle in degrees between i's heading and the direction i→j.

    Yaw 0° points along +x and increases counterclockwise.
    """
    _check_finite(*pos_i, yaw_i_deg, *pos_j)
    vx, vy = pos_j[0] - pos_i[0], pos_j[1] - pos_i[1]
    if vx == 0.0 and vy == 0.0:
        raise DegenerateGeometry("facing angle undefined for coincident positions")
    rel = math.atan2(vy, vx) - math.radians(yaw_i_deg)
    # wrap into (-pi, pi] through atan2 of the unit vector
    return abs(math.degrees(math.atan2(math.sin(rel), math.cos(rel))))


def is_facing(pos_i, yaw_i_deg: float, pos_j, threshold_deg: float) -> bool:
    return facing_angle(pos_i, yaw_i_deg, pos_j) <= threshold_deg


def proximity_class(d: float, cfg: SessionConfig) -> str:
    if math.isnan(d) or d < 0:
        raise InvalidDistance(f"distance must be non-negative, got {d}")
    if d < cfg.proximity_close_m:
        return "close"
    if d < cfg.proximity_social_m:
        return "social"
    return "far"


def _locf(pose_samples, ticks: np.ndarray) -> np.ndarray:
    """Positions and yaw at each tick from the latest sample at or before it (NaN if none)."""
    out = np.full((len(ticks), 3), np.nan)
    if not pose_samples:
        return out
    arr = np.asarray(pose_samples, dtype=np.float64)
    idx = np.searchsorted(arr[:, 0], ticks, side="right") - 1
    have = idx >= 0
    out[have] = arr[idx[have], 1:4]
    return out


def summarize(bucket: TimeBucket, cfg: SessionConfig) -> dict[str, SpatialSummary]:
    """Per-participant spatial summary over the bucket's 1 s evaluation grid."""
    pids = [p for p in cfg.participants if p in bucket.per_participant]
    ticks = np.arange(bucket.window_start, bucket.window_end, POSE_TICK_MS, dtype=np.float64)
    states = np.stack([_locf(bucket.per_participant[p].pose_samples, ticks) for p in pids])
    n = len(pids)

    xy = states[:, :, :2]
    # pairwise distances per tick, shape (n, n, T); NaN where either side is absent
    diff = xy[:, None, :, :] - xy[None, :, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    dist[np.arange(n), np.arange(n), :] = np.nan

    mean_min = {}
    for i, pid in enumerate(pids):
        row = dist[i]
        valid = ~np.all(np.isnan(row), axis=0)
        if valid.any():
            mean_min[pid] = float(np.mean(np.nanmin(row[:, valid], axis=0)))
        else:
            mean_min[pid] = math.inf

    # facing relations at the last grid tick
    last = states[:, -1, :]
    present = [i for i in range(n) if not np.isnan(last[i, 0])]
    faces = {i: set() for i in range(n)}
    for i in present:
        for j in present:
            if i == j:
                continue
            pos_i, pos_j = (last[i, 0], last[i, 1]), (last[j, 0], last[j, 1])
            if pos_i == pos_j:
                continue
            if is_facing(pos_i, last[i, 2], pos_j, cfg.facing_threshold_deg):
                faces[i].add(j)

    out = {}
    for i, pid in enumerate(pids):
        d = mean_min[pid]
        out[pid] = SpatialSummary(
            pid=pid,
            mean_min_distance_m=d,
            proximity_class="far" if math.isinf(d) else proximity_class(d, cfg),
            facing_count=len(faces[i]),
            mutual_facing=any(i in faces[j] for j in faces[i]),
        )
    return out
