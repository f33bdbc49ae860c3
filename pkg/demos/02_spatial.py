# %% [markdown]
# # Distance, facing and proximity
# Positions are in metres on the floor plane; yaw is in degrees,
# counter-clockwise from the +x axis.

# %%
import numpy as np

from collabstream.domain import ModalityAggregate, SessionConfig, TimeBucket
from collabstream.spatial import distance, facing_angle, is_facing, proximity_class, summarize

cfg = SessionConfig("demo", 0, ("P1", "P2", "P3"))
a, b = (0.0, 0.0), (1.0, 1.0)
print("distance:", distance(a, b))
print("angle from P1 (yaw 45) to P2:", facing_angle(a, 45.0, b))
print("P1 facing P2 at yaw 45:", is_facing(a, 45.0, b, cfg.facing_threshold_deg))
print("P1 facing P2 at yaw 120:", is_facing(a, 120.0, b, cfg.facing_threshold_deg))

# %%
for d in (0.3, 0.9, 2.0, 5.0):
    print(f"{d} m -> {proximity_class(d, cfg)}")

# %% [markdown]
# Rotating the whole scene leaves every facing angle unchanged.

# %%
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(1000):
    p, q = rng.uniform(-5, 5, 2), rng.uniform(-5, 5, 2)
    yaw, theta = rng.uniform(0, 360), rng.uniform(0, 360)
    c, s = np.cos(np.radians(theta)), np.sin(np.radians(theta))
    R = np.array([[c, -s], [s, c]])
    worst = max(worst, abs(facing_angle(tuple(p), yaw, tuple(q)) - facing_angle(tuple(R @ p), (yaw + theta) % 360, tuple(R @ q))))
print("largest change under rotation:", worst)

# %% [markdown]
# A bucket summary: P1 and P2 face each other at conversational distance,
# P3 stands apart looking away.

# %%
poses = {"P1": (0, 0.0, 0.0, 0.0), "P2": (0, 1.0, 0.0, 180.0), "P3": (0, 4.0, 3.0, 90.0)}
bucket = TimeBucket(0, 0, 60_000, {pid: ModalityAggregate(pose_samples=(p,)) for pid, p in poses.items()})
for pid, summary in summarize(bucket, cfg).items():
    print(summary)
