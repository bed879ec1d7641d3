"""Named parameter collections and initializers."""
from __future__ import annotations

from collections.abc import Iterator, Mapping

import numpy as np

from .tensor import Tensor


class ParameterTree(Mapping):
    """Ordered mapping from slash-separated paths to trainable tensors.

    Iteration follows insertion order, which the model builders keep fixed.
    """

    def __init__(self, items=None):
        self._items: dict[str, Tensor] = {}
        for name, value in (items or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Tensor:
        if name in self._items:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(np.array(value), requires_grad=True)
        t.requires_grad = True
        self._items[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def view(self, prefix: str) -> "_PrefixView":
        return _PrefixView(self, prefix.rstrip("/") + "/")

    def zero_grad(self):
        for t in self._items.values():
            t.grad = None

    def num_parameters(self) -> int:
        return sum(t.values.size for t in self._items.values())

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.values for k, t in self._items.items()}

    def load_state(self, state: Mapping[str, np.ndarray]):
        missing = set(self._items) - set(state)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)}")
        for k, t in self._items.items():
            arr = np.asarray(state[k])
            if arr.shape != t.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {t.shape}")
            t.values = arr.astype(t.dtype).copy()

    def astype(self, dtype):
        for t in self._items.values():
            t.values = t.values.astype(dtype)
        return self


class _PrefixView(Mapping):
    def __init__(self, tree: ParameterTree, prefix: str):
        self._tree, self._prefix = tree, prefix

    def __getitem__(self, key):
        return self._tree[self._prefix + key]

    def __iter__(self):
        n = len(self._prefix)
        return (k[n:] for k in self._tree if k.startswith(self._prefix))

    def __len__(self):
        return sum(1 for _ in self)


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def add_linear(tree: ParameterTree, name: str, d_in: int, d_out: int, rng, dtype,
               bias: bool = True):
    tree.add(f"{name}/weight", uniform_fan_in(rng, (d_in, d_out), d_in, dtype))
    if bias:
        tree.add(f"{name}/bias", np.zeros(d_out, dtype=dtype))


def add_conv(tree: ParameterTree, name: str, c_in: int, c_out: int, k: int, rng, dtype):
    tree.add(f"{name}/kernel", uniform_fan_in(rng, (c_out, c_in, k), c_in * k, dtype))
    tree.add(f"{name}/bias", np.zeros(c_out, dtype=dtype))


def add_transformer_block(tree: ParameterTree, name: str, d_mdl: int, d_ff: int, rng, dtype):
    """Parameters consumed by :func:`~trfvq.autodiff.functional.transformer_block`."""
    tree.add(f"{name}/ln1.gain", np.ones(d_mdl, dtype=dtype))
    tree.add(f"{name}/ln1.bias", np.zeros(d_mdl, dtype=dtype))
    for w in ("wq", "wk", "wv", "wo"):
        tree.add(f"{name}/{w}", uniform_fan_in(rng, (d_mdl, d_mdl), d_mdl, dtype))
    tree.add(f"{name}/ln2.gain", np.ones(d_mdl, dtype=dtype))
    tree.add(f"{name}/ln2.bias", np.zeros(d_mdl, dtype=dtype))
    tree.add(f"{name}/w1", uniform_fan_in(rng, (d_mdl, d_ff), d_mdl, dtype))
    tree.add(f"{name}/b1", np.zeros(d_ff, dtype=dtype))
    tree.add(f"{name}/w2", uniform_fan_in(rng, (d_ff, d_mdl), d_ff, dtype))
    tree.add(f"{name}/b2", np.zeros(d_mdl, dtype=dtype))
