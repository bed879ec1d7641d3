"""
Codebook, EMA updates and the two regularizers
===============================================
"""
import numpy as np

from trfvq import vq
from trfvq.autodiff import Tensor

rng = np.random.default_rng(0)
means = np.array([[-3.0, 1.0], [4.0, -2.0]])

# the codebook starts far from the data and is pulled toward the cluster means
cb = vq.Codebook(np.array([[-1.0, 0.0], [1.0, 0.0]]), decay=0.99)
for step in range(1, 201):
    Z = means[rng.integers(0, 2, 256)] + 0.3 * rng.standard_normal((256, 2))
    vq.ema_update(cb, Z, vq.nearest_codes(Z, cb))
    if step in (1, 10, 50, 200):
        print(f"update {step:3d}: distance to means {np.linalg.norm(cb.vectors - means, axis=1)}")

# quantization copies gradients straight through to the encoder output
Z = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
res = vq.quantize_sequence(Z, cb)
res.quantized.sum().backward()
print("codes", res.indices, "commitment", float(res.commitment.values), "grad", Z.grad[0])

# smoothing penalizes frame-to-frame movement
steady = Tensor(np.tile([1.0, 2.0], (10, 1)))
wobbly = Tensor(rng.standard_normal((10, 2)))
print("smoothing: steady", float(vq.temporal_smoothing_loss(steady).values),
      "wobbly", round(float(vq.temporal_smoothing_loss(wobbly).values), 3))

# jitter swaps codes with a neighbour; with distinct codes about 2p of frames move
codes = np.arange(20)
print("jittered:", vq.temporal_jitter(codes, 0.2, rng))
big = np.arange(100_000)
print("changed fraction at p=0.05:", np.mean(vq.temporal_jitter(big, 0.05, 1) != big))
