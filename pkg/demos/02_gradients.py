"""
Checking the autodiff engine
============================

Every primitive and a full transformer block are compared against central
differences in float64.
"""
import numpy as np

from trfvq import autodiff as ad
from trfvq.autodiff.params import add_transformer_block

rng = np.random.default_rng(0)

# a single softmax row: the Jacobian-vector product by hand and by the engine
x = ad.Tensor(rng.standard_normal(5), requires_grad=True)
w = rng.standard_normal(5)
(ad.softmax(x) * w).sum().backward()
s = np.exp(x.values) / np.exp(x.values).sum()
print("softmax grad matches:", np.allclose(x.grad, s * (w - s @ w)))

# a pre-norm transformer block on a random 6 x 8 sequence
params = ad.ParameterTree()
add_transformer_block(params, "blk", 8, 16, rng, np.float64)
params.add("x", rng.standard_normal((6, 8)))
probe = rng.standard_normal((6, 8))


def loss(p):
    out = ad.transformer_block(p["x"], p.view("blk"), heads=2)
    return (out * probe).sum()


err = ad.finite_difference_check(loss, params, h=1e-3)
print(f"transformer block: max relative error {err:.2e}")

# Adam on a quadratic bowl
q = ad.ParameterTree()
q.add("v", np.array([3.0, -2.0]))
adam = ad.AdamState(lr=0.1)
for step in range(200):
    q.zero_grad()
    (q["v"] * q["v"]).sum().backward()
    ad.adam_step(q, adam)
print("after 200 Adam steps:", np.round(q["v"].values, 4))
