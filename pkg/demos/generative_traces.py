"""Learn a generative model of a sensor trace and check it with DTW.

A VAE is trained on one occupant's per-minute channels, a synthetic day is
sampled, and a DTW permutation test compares it with the real day.

Run: python demos/generative_traces.py
"""
import datetime as dt

import numpy as np

from seqchoice.data import Memoryless, SynthConfig, synth_generate
from seqchoice.generative import (
    VAEConfig, dtw_distance, permutation_test_dtw, trace_channels, traces_to_dataset, vae_generate, vae_train,
)

print("DTW of [1,2,3] and [1,3]:", dtw_distance([1, 2, 3], [1, 3]).score)

ds = synth_generate(SynthConfig(occupants=1, days=2, planted_signal=Memoryless("ext_humidity_pct", 70.0), seed=4))
X, channels = trace_channels(ds)
model, report = vae_train(X, 4, VAEConfig(epochs=20, seed=1), channels.binary)
print(f"VAE loss: first epoch {report.losses[0]:.3f}, last epoch {report.losses[-1]:.3f}")

S = vae_generate(model, 1440, seed=2)
fake = traces_to_dataset(S, channels, dt.datetime(2018, 2, 19), occupant="generated")
print(f"generated {len(fake)} minutes on channels {', '.join(channels.names)}")

temp = channels.names.index("ext_temp_c")
res = permutation_test_dtw(X[:1440, temp], S[:, temp], n_perm=99, seed=3, segment_len=120)
print(f"outdoor temperature: DTW {res.observed:.1f}, permutation p = {res.p_value:.2f}")
print("real vs generated mean of the standardized temperature: %.2f vs %.2f" % (np.mean(X[:1440, temp]), np.mean(S[:, temp])))
