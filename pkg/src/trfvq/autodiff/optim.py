"""Adam optimizer and a central-difference gradient checker."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParameterTree


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParameterTree, state: AdamState) -> AdamState:
    """Apply one bias-corrected Adam update in place using each parameter's ``grad``."""
    missing = [k for k, t in params.items() if t.grad is None]
    if missing:
        raise ValueError(f"parameters without gradients: {missing}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.values)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.values)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.values = (p.values - update).astype(p.dtype)
    return state


def finite_difference_check(f, params: ParameterTree, h: float = 1e-3,
                            floor: float = 1e-8) -> float:
    """Largest elementwise relative gap between reverse-mode and central-difference gradients.

    ``f`` takes the tree and returns a scalar :class:`Tensor`. The relative error
    for each entry is ``|a - n| / max(|a|, |n|, floor)``.
    """
    params.zero_grad()
    out = f(params)
    if not np.isfinite(out.values).all():
        raise FloatingPointError("objective is not finite")
    out.backward()
    analytic = {name: np.zeros_like(p.values) if p.grad is None else p.grad.copy()
                for name, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        p.values = np.ascontiguousarray(p.values)
        flat = p.values.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(params).values)
            flat[i] = orig - h
            fm = float(f(params).values)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"objective is not finite near {name}[{i}]")
            numeric = (fp - fm) / (2.0 * h)
            a = float(grad[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, rel)
    params.zero_grad()
    return worst
