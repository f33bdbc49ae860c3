# %% [markdown]
# # Behavior pattern vectors
# Each participant in a bucket gets a 22-slot vector built from four blocks:
# speaking, content, proximity and action.

# %%
from collabstream.domain import ModalityAggregate, SessionConfig, TimeBucket
from collabstream.encoder import decode_pattern, encode_bucket, speech_act

cfg = SessionConfig("demo", 0, ("P1", "P2"))
for text in ("What if we move the gear?", "No, that will not work.", "Yes, exactly.", "I think it goes here.", "(inaudible)"):
    act = speech_act(text)
    print(f"{text!r:35} -> {cfg.vocab.speech_acts[act] if act is not None else 'none'}")

# %% [markdown]
# Text with no cue words still counts as a statement; only an empty
# transcript is "none". Actions outside the vocabulary, like pointing below,
# land in the "other" slot.

# %%
p1 = ModalityAggregate(
    speaker_samples=tuple((t, t < 30_000) for t in range(0, 60_000, 3_000)),
    speaking_ratio=0.5,
    turn_count=1,
    transcript="What if we move the gear? I think it goes here.",
    pose_samples=((0, 0.0, 0.0, 0.0),),
    action_labels=((10_000, "pointing"),),
    dominant_action="pointing",
)
p2 = ModalityAggregate(pose_samples=((0, 1.0, 0.0, 180.0),), action_labels=((5_000, "writing"),), dominant_action="writing")
bucket = TimeBucket(0, 0, 60_000, {"P1": p1, "P2": p2})

for pattern in encode_bucket(bucket, cfg):
    print(pattern.pid, pattern.P.round(3).tolist())
    print("   ", decode_pattern(pattern, cfg))
