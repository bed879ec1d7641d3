"""Differentiable network primitives.

Sequence tensors are time-major with an optional leading batch axis:
``(..., T, C)``.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, ensure_tensor


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.values)
    return Tensor._make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    v = x.values
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(v)
    return Tensor._make(out, (x,), lambda g: (g / v,), "log")


def sqrt(x: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.values)
    return Tensor._make(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0
    return Tensor._make(np.where(mask, x.values, 0.0).astype(x.dtype), (x,),
                        lambda g: (g * mask,), "relu")


def softplus(x: Tensor) -> Tensor:
    v = x.values
    sig = np.exp(-np.logaddexp(0.0, -v)).astype(x.dtype)
    return Tensor._make(np.logaddexp(0.0, v).astype(x.dtype), (x,),
                        lambda g: (g * sig,), "softplus")


def square_sum(x: Tensor) -> Tensor:
    """Sum of squares of all entries."""
    v = x.values
    return Tensor._make(np.sum(v * v), (x,), lambda g: (2.0 * g * v,), "square_sum")


def l2_norm(x: Tensor) -> Tensor:
    """Frobenius norm of all entries; the subgradient at zero is taken as zero."""
    v = x.values
    n = np.sqrt(np.sum(v * v))

    def backward(g):
        if n == 0:
            return (np.zeros_like(v),)
        return (g * v / n,)

    return Tensor._make(n, (x,), backward, "l2_norm")


def stop_gradient(x: Tensor) -> Tensor:
    """Identity in the forward pass; sends a zero gradient to ``x``."""
    x = ensure_tensor(x)
    return Tensor._make(x.values.copy(), (x,), lambda g: (np.zeros_like(g),), "stop_gradient")


def straight_through(z: Tensor, quantized: np.ndarray) -> Tensor:
    """Forward value ``quantized`` exactly; gradient copied unchanged to ``z``."""
    q = np.asarray(quantized, dtype=z.dtype)
    if q.shape != z.shape:
        raise ValueError(f"quantized shape {q.shape} does not match {z.shape}")
    return Tensor._make(q.copy(), (z,), lambda g: (g,), "straight_through")


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [ensure_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.values for t in tensors], axis=axis),
                        tuple(tensors), backward, "concat")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max-subtracted)."""
    if x.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    shifted = x.values - np.max(x.values, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return Tensor._make(y, (x,), backward, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then apply an affine map."""
    gain, bias = ensure_tensor(gain, x.dtype), ensure_tensor(bias, x.dtype)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm gain/bias must have shape ({d},)")
    v = x.values
    mu = v.mean(axis=-1, keepdims=True)
    var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (v - mu) * inv
    out = xhat * gain.values + bias.values
    lead = tuple(range(v.ndim - 1))

    def backward(g):
        gh = g * gain.values
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._make(out, (x, gain, bias), backward, "layer_norm")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight (+ bias)``; weight has shape (in, out)."""
    y = x @ weight
    return y if bias is None else y + bias


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """``softmax(Q K^T / sqrt(d_k)) V`` over the last two axes, no masking."""
    if q.shape[-1] != k.shape[-1]:
        raise ValueError("query and key widths differ")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError("key and value lengths differ")
    d_k = q.shape[-1]
    scores = (q @ k.T) * (1.0 / np.sqrt(d_k))
    return softmax(scores, axis=-1) @ v


def head_dim(d_mdl: int, heads: int) -> int:
    """Per-head width ``d_k = d_mdl / heads``."""
    if heads < 1 or d_mdl % heads:
        raise ValueError(f"d_mdl={d_mdl} is not divisible by {heads} heads")
    return d_mdl // heads


def multi_head_attention(x: Tensor, p, heads: int) -> Tensor:
    """Multi-head self-attention.

    ``p`` maps ``wq``, ``wk``, ``wv`` (d_mdl x d_mdl, one d_k column block per
    head) and ``wo`` (d_mdl x d_mdl).
    """
    d = x.shape[-1]
    d_k = head_dim(d, heads)
    lead, S = x.shape[:-2], x.shape[-2]
    nl = len(lead)

    def split(t):
        # (..., S, P*d_k) -> (..., P, S, d_k)
        t = t.reshape(*lead, S, heads, d_k)
        axes = tuple(range(nl)) + (nl + 1, nl, nl + 2)
        return t.transpose(axes)

    q, k, v = split(x @ p["wq"]), split(x @ p["wk"]), split(x @ p["wv"])
    h = scaled_dot_attention(q, k, v)
    axes = tuple(range(nl)) + (nl + 1, nl, nl + 2)
    h = h.transpose(axes).reshape(*lead, S, d)
    return h @ p["wo"]


def feed_forward(x: Tensor, p) -> Tensor:
    return linear(relu(linear(x, p["w1"], p["b1"])), p["w2"], p["b2"])


def transformer_block(x: Tensor, p, heads: int) -> Tensor:
    """Pre-norm block: ``y = x + MHA(LN(x))``, ``z = y + FFN(LN(y))``."""
    y = x + multi_head_attention(layer_norm(x, p["ln1.gain"], p["ln1.bias"]), p, heads)
    return y + feed_forward(layer_norm(y, p["ln2.gain"], p["ln2.bias"]), p)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """1-D cross-correlation over time with zero padding.

    Parameters
    ----------
    x : Tensor
        Input of shape (..., T, C_in).
    kernel : Tensor
        Weights of shape (C_out, C_in, k).
    """
    kernel = ensure_tensor(kernel, x.dtype)
    c_out, c_in, k = kernel.shape
    if k < 1 or stride < 1:
        raise ValueError("kernel size and stride must be >= 1")
    if x.shape[-1] != c_in:
        raise ValueError(f"input has {x.shape[-1]} channels, kernel expects {c_in}")
    T = x.shape[-2]
    t_out = (T + 2 * padding - k) // stride + 1
    if t_out < 1:
        raise ValueError("sequence too short")
    pad = [(0, 0)] * (x.ndim - 2) + [(padding, padding), (0, 0)]
    xp = np.pad(x.values, pad)
    w = np.transpose(kernel.values, (2, 1, 0))  # (k, C_in, C_out)
    span = stride * (t_out - 1) + 1
    taps = [xp[..., j:j + span:stride, :] for j in range(k)]
    out = sum(taps[j] @ w[j] for j in range(k))
    if bias is not None:
        bias = ensure_tensor(bias, x.dtype)
        out = out + bias.values
    lead = tuple(range(x.ndim - 2))

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w)
        for j in range(k):
            gxp[..., j:j + span:stride, :] += g @ w[j].T
            gw[j] = np.tensordot(taps[j], g, axes=(lead + (x.ndim - 2,), lead + (x.ndim - 2,)))
        gx = gxp[..., padding:padding + T, :]
        grads = (gx, np.transpose(gw, (2, 1, 0)))
        if bias is not None:
            grads += (g.sum(axis=lead + (x.ndim - 2,)),)
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._make(out, parents, backward, "conv1d")


def upsample_repeat(x: Tensor, r: int) -> Tensor:
    """Repeat every frame ``r`` times consecutively along the time axis."""
    if r < 1:
        raise ValueError("upsampling factor must be >= 1")
    shape = x.shape

    def backward(g):
        g = g.reshape(*shape[:-2], shape[-2], r, shape[-1])
        return (g.sum(axis=-2),)

    return Tensor._make(np.repeat(x.values, r, axis=-2), (x,), backward, "upsample")


def sinusoidal_positional_encoding(S: int, d_mdl: int, dtype=np.float64) -> np.ndarray:
    """``PE[t, 2i] = sin(t / 10000^(2i/d))``, ``PE[t, 2i+1] = cos(...)``."""
    if d_mdl % 2:
        raise ValueError("positional encoding needs an even model width")
    t = np.arange(S, dtype=np.float64)[:, None]
    rate = 10000.0 ** (np.arange(0, d_mdl, 2, dtype=np.float64) / d_mdl)
    pe = np.empty((S, d_mdl))
    pe[:, 0::2] = np.sin(t / rate)
    pe[:, 1::2] = np.cos(t / rate)
    return pe.astype(dtype)
