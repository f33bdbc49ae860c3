# %% [markdown]
# # Scoring upstream feature pipelines
# Word error rate for transcripts, diarization error rate for speaker
# labels, and a plain agreement rate for annotation alignment.

# %%
from collabstream.metrics import RefSegment, alignment_rate, der, wer

print("wer:", wer("we should move the gear", "we should move a gear there"))

# %%
reference = [RefSegment("A", 0.0, 5.0), RefSegment("B", 5.0, 10.0)]
hypothesis = [RefSegment("spk1", 0.0, 6.0), RefSegment("spk2", 6.0, 10.0)]
print("der, no collar:", der(reference, hypothesis))
print("der, 0.5 s collar:", der(reference, hypothesis, collar=0.5))

# %% [markdown]
# Speaker names in the hypothesis are arbitrary; the best one-to-one mapping
# is found before scoring, so renaming them changes nothing.

# %%
renamed = [RefSegment("zz", 0.0, 6.0), RefSegment("aa", 6.0, 10.0)]
print("renamed:", der(reference, renamed))

# %%
print(f"alignment: {alignment_rate(161, 176):.6f}")
