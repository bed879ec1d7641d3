"""
Scoring unit inventories
========================
"""
import numpy as np

from trfvq import evaluation as ev

# bitrate is symbol rate times empirical entropy: 100 symbols/s at 2 bits each
streams = [[0, 1, 2, 3] * 10, [3, 2, 1, 0] * 15]
print("bitrate", ev.bitrate(streams, [0.25, 0.25]).bitrate)
usage = ev.codebook_usage(streams, K=64)
print("perplexity", usage.perplexity, "dead codes", usage.dead_codes)

# ABX: is X closer (under DTW) to the item of its own category?
rng = np.random.default_rng(0)
protos = np.eye(3)
items = [np.tile(protos[c], (4, 1)) + 0.05 * rng.random((4, 3)) for c in range(3) for _ in range(40)]
labels = [c for c in range(3) for _ in range(40)]
right = ev.make_triplets(labels, rng, 1000)
wrong = ev.make_triplets(rng.permutation(labels), rng, 1000)
print("ABX separable", ev.abx_error_rate(right, embed=lambda i: items[i]))
print("ABX shuffled labels", ev.abx_error_rate(wrong, embed=lambda i: items[i]))
