#!/usr/bin/env python3
"""Fuse multi-scale backbone features into one token sequence.

Every pyramid level is projected to a common width and compressed along
time; the deepest level then queries the shallow ones with cross-attention
and refines itself with self-attention. Two zero-initialized gates scale
the refinements, so an untrained aggregator passes the deepest level
through unchanged -- watch the output move as the gates open.
"""

import numpy as np

from physkit import FeaturePyramid, ParamStore, aggregate, gen_clip, init_aggregator

clip = gen_clip(hr_bpm=90.0, fs=30.0, n_samples=128, snr_db=10.0, seed=3)
pyr = FeaturePyramid([level[None] for level in clip.pyramid])  # batch of one

store = ParamStore()
params = init_aggregator(
    store, "va", level_shapes=((8, 8), (6, 6), (4, 4)), chunk_len=128,
    target_len=32, dim=64, heads=4, rng=np.random.default_rng(0),
)

fused_closed = aggregate(pyr, params).data
params.gate_outer.value[:] = 0.5
params.gate_inner.value[:] = 0.5
fused_open = aggregate(pyr, params).data

print("token shape:", fused_closed.shape, "(batch, compressed length, width)")
print("gates closed: fused equals the projected deepest level")
print("gates open:   mean |delta| =", f"{np.abs(fused_open - fused_closed).mean():.4f}")
