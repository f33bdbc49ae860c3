# %% [markdown]
# # Sliding windows
# Events are grouped into 60 s windows that start every 30 s, so every
# timestamp away from the session edges belongs to exactly two windows.

# %%
from collabstream.domain import SessionConfig, bucket_count, windows_containing, windows_overlapping

cfg = SessionConfig("demo", start_ts=0, participants=("P1", "P2"))
print("window 0:", cfg.window(0), " window 1:", cfg.window(1), " window 2:", cfg.window(2))

# %%
for ts in (0, 29_999, 30_000, 59_999, 60_000, 95_000):
    print(f"ts={ts:>6}  windows={windows_containing(ts, cfg)}")

# %% [markdown]
# A transcript spans an interval, so it goes to every window it overlaps.

# %%
print("transcript [50 s, 70 s) ->", windows_overlapping(50_000, 70_000, cfg))

# %% [markdown]
# Only whole windows are kept at the end of a session. A 43-minute session
# therefore yields 85 buckets.

# %%
for minutes in (1, 2, 10, 43):
    print(f"{minutes:>2} min -> {bucket_count(minutes * 60_000, cfg)} buckets")
