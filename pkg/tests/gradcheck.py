"""Random float64 instances for finite-difference checks.

Each builder takes a Generator and returns ``(tree, f)`` where ``f(tree)`` is a
scalar :class:`Tensor`. Instances are kept away from the places where a
central difference with step ``H`` stops being a faithful oracle: ReLU
pre-activations and norm residuals stay at least ``KINK_MARGIN`` from zero, and every row entering
a layer norm has standard deviation at least ``MIN_LN_STD`` (the normalizer's
curvature grows like 1/std^3).
"""
import numpy as np

from trfvq import autodiff as ad
from trfvq.autodiff.params import add_transformer_block
from trfvq.models import inverter_loss, vqvae_loss
from trfvq.vq import nearest_codes

H = 1e-3
TOL = 1e-4
KINK_MARGIN = 0.02
MIN_LN_STD = 0.5


def _tree(rng, **shapes):
    t = ad.ParameterTree()
    for name, shape in shapes.items():
        t.add(name, rng.standard_normal(shape))
    return t


def _probe(out, rng):
    """Fixed random weighting turns any output into a scalar."""
    return (out * rng.standard_normal(out.shape)).sum()


def _away_from_zero(rng, shape):
    u = rng.uniform(KINK_MARGIN + 0.05, 1.5, shape)
    return u * rng.choice([-1.0, 1.0], shape)


def case_arithmetic(rng):
    n, m = rng.integers(1, 5, size=2)
    t = _tree(rng, a=(n, m), b=(m,))
    t["b"].values = rng.uniform(1.0, 2.0, m)
    w = rng.standard_normal((n, m))
    return t, lambda p: ((p["a"] * p["b"] + p["a"] / p["b"] - 2.0 / p["b"] - p["a"]) * w).sum()


def case_pow(rng):
    t = ad.ParameterTree()
    t.add("x", rng.uniform(0.5, 2.0, (rng.integers(1, 6),)))
    return t, lambda p: (p["x"] ** 3).sum() + (p["x"] ** 0.5).sum()


def case_matmul(rng):
    b, n, k, m = rng.integers(1, 4, size=4)
    t = _tree(rng, a=(b, n, k), w=(k, m))
    return t, lambda p: _probe(p["a"] @ p["w"], np.random.default_rng(1))


def case_reductions(rng):
    n, m = rng.integers(2, 5, size=2)
    t = _tree(rng, x=(n, m))
    w = rng.standard_normal((m, n))

    def f(p):
        x = p["x"]
        y = (x.T * w).sum(axis=0) + x.mean(axis=1, keepdims=True).reshape(-1)
        y = y.sum() + (x[1:, ::2] ** 2).sum() + x.swapaxes(0, 1).reshape(-1)[0]
        return y + (x.sum(axis=0, keepdims=True).broadcast_to((3, m)) * 0.5).mean()
    return t, f


def case_exp_log_sqrt(rng):
    t = ad.ParameterTree()
    t.add("x", rng.uniform(0.5, 2.0, (rng.integers(1, 4), rng.integers(1, 4))))
    w = rng.standard_normal(t["x"].shape)
    return t, lambda p: ((ad.exp(p["x"]) + ad.log(p["x"]) + ad.sqrt(p["x"])) * w).sum()


def case_relu_softplus(rng):
    t = ad.ParameterTree()
    t.add("x", _away_from_zero(rng, (rng.integers(1, 6), 3)))
    w = rng.standard_normal(t["x"].shape)
    return t, lambda p: ((ad.relu(p["x"]) + ad.softplus(p["x"] * 2.0)) * w).sum()


def case_norms(rng):
    t = _tree(rng, x=(rng.integers(1, 5), rng.integers(1, 5)))
    return t, lambda p: ad.square_sum(p["x"]) * 0.3 + ad.l2_norm(p["x"])


def case_concat(rng):
    n = rng.integers(1, 4)
    t = _tree(rng, a=(n, 2), b=(n, 3))
    w = rng.standard_normal((n, 5))
    return t, lambda p: (ad.concat([p["a"], p["b"]], axis=-1) * w).sum()


def case_softmax(rng):
    t = _tree(rng, x=(rng.integers(1, 4), rng.integers(1, 6)))
    w = rng.standard_normal(t["x"].shape)
    return t, lambda p: (ad.softmax(p["x"] * 2.0) * w).sum()


def _well_spread(rows) -> bool:
    return bool(np.all(np.asarray(rows).std(axis=-1) >= MIN_LN_STD))


def case_layer_norm(rng):
    n, d = rng.integers(1, 4), rng.integers(3, 7)
    t = _tree(rng, x=(n, d), g=(d,), b=(d,))
    while not _well_spread(t["x"].values):
        t["x"].values = rng.standard_normal((n, d))
    w = rng.standard_normal((n, d))
    return t, lambda p: (ad.layer_norm(p["x"], p["g"], p["b"]) * w).sum()


def case_linear(rng):
    n, i, o = rng.integers(1, 5, size=3)
    t = _tree(rng, x=(n, i), w=(i, o), b=(o,))
    w = rng.standard_normal((n, o))
    return t, lambda p: (ad.linear(p["x"], p["w"], p["b"]) * w).sum()


def case_attention(rng):
    s, s2, d, dv = rng.integers(1, 5, size=4)
    t = _tree(rng, q=(s, d), k=(s2, d), v=(s2, dv))
    w = rng.standard_normal((s, dv))
    return t, lambda p: (ad.scaled_dot_attention(p["q"], p["k"], p["v"]) * w).sum()


def case_multi_head_attention(rng):
    heads = int(rng.choice([1, 2]))
    d = heads * int(rng.integers(1, 4))
    s = rng.integers(1, 4)
    t = ad.ParameterTree()
    t.add("x", rng.standard_normal((s, d)))
    for k in ("wq", "wk", "wv", "wo"):
        t.add(f"m/{k}", rng.standard_normal((d, d)) / np.sqrt(d))
    w = rng.standard_normal((s, d))
    return t, lambda p: (ad.multi_head_attention(p["x"], p.view("m"), heads) * w).sum()


def case_conv1d(rng):
    k = int(rng.integers(1, 5))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    T = int(rng.integers(k, k + 5))
    ci, co = rng.integers(1, 4, size=2)
    lead = () if rng.random() < 0.5 else (2,)
    t = _tree(rng, x=lead + (T, ci), k=(co, ci, k), b=(co,))
    t_out = (T + 2 * pad - k) // stride + 1
    w = rng.standard_normal(lead + (t_out, co))
    return t, lambda p: (ad.conv1d(p["x"], p["k"], p["b"], stride, pad) * w).sum()


def case_upsample(rng):
    T, d, r = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 5))
    t = _tree(rng, x=(T, d))
    w = rng.standard_normal((T * r, d))
    return t, lambda p: (ad.upsample_repeat(p["x"], r) * w).sum()


def transformer_instance(rng):
    """Random pre-norm block drawn until both layer-norm inputs are well spread
    and no FFN pre-activation is near the ReLU kink."""
    while True:
        heads = int(rng.choice([1, 2]))
        d = int(rng.choice([4, 8]))
        S = int(rng.integers(2, 5))
        t = ad.ParameterTree()
        add_transformer_block(t, "b", d, 2 * d, rng, np.float64)
        for name in t:
            t[name].values = t[name].values + 0.1 * rng.standard_normal(t[name].shape)
        t.add("x", rng.standard_normal((S, d)))
        v = t.view("b")
        x = t["x"]
        y = x + ad.multi_head_attention(ad.layer_norm(x, v["ln1.gain"], v["ln1.bias"]), v, heads)
        pre = ad.linear(ad.layer_norm(y, v["ln2.gain"], v["ln2.bias"]), v["w1"], v["b1"]).values
        if (np.abs(pre).min() >= KINK_MARGIN and _well_spread(x.values)
                and _well_spread(y.values)):
            break
    w = rng.standard_normal((S, d))
    return t, lambda p: (ad.transformer_block(p["x"], p.view("b"), heads) * w).sum()


def vqvae_loss_instance(rng):
    """Loss w.r.t. reconstruction and latents, assignments held fixed."""
    B, T, D = (int(v) for v in rng.integers(1, 4, size=3))
    Te, De, K = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 6))
    t = ad.ParameterTree()
    t.add("x_hat", rng.standard_normal((B, T, D)))
    t.add("Z", rng.standard_normal((B, Te, De)))
    x = rng.standard_normal((B, T, D))
    E = rng.standard_normal((K, De))
    idx = nearest_codes(t["Z"].values, E)
    lam = float(rng.uniform(0, 1))
    return t, lambda p: vqvae_loss(x, p["x_hat"], p["Z"], E, idx, 0.25, lam)[0]


def inverter_loss_instance(rng):
    lead = () if rng.random() < 0.5 else (int(rng.integers(2, 4)),)
    shape = lead + tuple(int(v) for v in rng.integers(1, 6, size=2))
    t = _tree(rng, pred=shape)
    target = rng.standard_normal(shape)
    # the norm has a kink where an item's residual vanishes
    while np.linalg.norm((t["pred"].values - target).reshape(-1, *shape[-2:]), axis=(1, 2)).min() \
            < KINK_MARGIN:
        target = rng.standard_normal(shape)
    return t, lambda p: inverter_loss(p["pred"], target)


PRIMITIVES = {
    "arithmetic": case_arithmetic,
    "pow": case_pow,
    "matmul": case_matmul,
    "reductions": case_reductions,
    "exp_log_sqrt": case_exp_log_sqrt,
    "relu_softplus": case_relu_softplus,
    "norms": case_norms,
    "concat": case_concat,
    "softmax": case_softmax,
    "layer_norm": case_layer_norm,
    "linear": case_linear,
    "attention": case_attention,
    "multi_head_attention": case_multi_head_attention,
    "conv1d": case_conv1d,
    "upsample": case_upsample,
}

COMPOSED = {
    "transformer_block": transformer_instance,
    "vqvae_loss": vqvae_loss_instance,
    "inverter_loss": inverter_loss_instance,
}


def max_error(builder, seed: int) -> float:
    tree, f = builder(np.random.default_rng(seed))
    return ad.finite_difference_check(f, tree, h=H)
