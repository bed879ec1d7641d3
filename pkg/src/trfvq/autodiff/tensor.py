"""Reverse-mode differentiable tensors backed by numpy arrays."""
from __future__ import annotations

import numpy as np


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


def _as_array(x, dtype=None):
    if isinstance(x, Tensor):
        return x.values
    arr = np.asarray(x)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A node in a dynamically built computation graph.

    ``backward`` accumulates gradients into every upstream tensor created with
    ``requires_grad=True``. Operations raise :class:`NonFiniteError` as soon as
    they produce a non-finite value.
    """

    __array_priority__ = 100

    def __init__(self, values, requires_grad: bool = False, *, dtype=None,
                 _parents: tuple = (), _backward=None, op: str = ""):
        self.values = np.array(_as_array(values), dtype=dtype) if dtype is not None \
            else _as_array(values)
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError(f"non-finite values produced by {op or 'input'}")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward
        self.op = op

    # -- basic properties -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def T(self) -> "Tensor":
        return self.swapaxes(-1, -2)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else \
            float(self.values)

    def zero_grad(self):
        self.grad = None

    # -- graph construction ----------------------------------------------------
    @staticmethod
    def _make(values, parents, backward, op):
        requires = any(p.requires_grad for p in parents)
        return Tensor(values, requires, _parents=parents if requires else (),
                      _backward=backward if requires else None, op=op)

    def backward(self, grad=None):
        """Back-propagate from this tensor (defaults to d(self)/d(self) = 1)."""
        if not self.requires_grad:
            return
        if grad is None:
            if self.values.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.values)
        order = _topological_order(self)
        grads = {id(self): np.asarray(grad, dtype=self.values.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic --------------------------------------------------------------
    def __add__(self, other):
        other = ensure_tensor(other, self.dtype)
        a, b = self, other
        return Tensor._make(a.values + b.values, (a, b),
                            lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)), "add")

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.values, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        return self + (-ensure_tensor(other, self.dtype))

    def __rsub__(self, other):
        return ensure_tensor(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = ensure_tensor(other, self.dtype)
        a, b = self, other
        return Tensor._make(
            a.values * b.values, (a, b),
            lambda g: (unbroadcast(g * b.values, a.shape), unbroadcast(g * a.values, b.shape)),
            "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = ensure_tensor(other, self.dtype)
        a, b = self, other
        out = a.values / b.values
        return Tensor._make(
            out, (a, b),
            lambda g: (unbroadcast(g / b.values, a.shape),
                       unbroadcast(-g * out / b.values, b.shape)),
            "div")

    def __rtruediv__(self, other):
        return ensure_tensor(other, self.dtype) / self

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        x = self.values
        return Tensor._make(x ** exponent, (self,),
                            lambda g: (g * exponent * x ** (exponent - 1),), "pow")

    def __matmul__(self, other):
        other = ensure_tensor(other, self.dtype)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")

        def backward(g):
            ga = g @ np.swapaxes(b.values, -1, -2)
            gb = np.swapaxes(a.values, -1, -2) @ g
            return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

        return Tensor._make(a.values @ b.values, (a, b), backward, "matmul")

    def __rmatmul__(self, other):
        return ensure_tensor(other, self.dtype) @ self

    # -- reductions and shape ops ------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.values.sum(axis=axis, keepdims=keepdims), (self,),
                            backward, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        n = self.values.size if axis is None else np.prod(
            [self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._make(self.values.reshape(shape), (self,),
                            lambda g: (g.reshape(old),), "reshape")

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(np.argsort(axes))
        return Tensor._make(self.values.transpose(axes), (self,),
                            lambda g: (g.transpose(inverse),), "transpose")

    def swapaxes(self, a: int, b: int):
        return Tensor._make(np.swapaxes(self.values, a, b), (self,),
                            lambda g: (np.swapaxes(g, a, b),), "swapaxes")

    def broadcast_to(self, shape):
        old = self.shape
        return Tensor._make(np.broadcast_to(self.values, shape).copy(), (self,),
                            lambda g: (unbroadcast(g, old),), "broadcast")

    def __getitem__(self, index):
        if isinstance(index, Tensor):
            raise TypeError("index with arrays, not tensors")
        shape, dtype = self.shape, self.dtype

        def backward(g):
            out = np.zeros(shape, dtype=dtype)
            np.add.at(out, index, g)
            return (out,)

        return Tensor._make(self.values[index], (self,), backward, "getitem")


def ensure_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is not None and (arr.ndim == 0 or not np.issubdtype(arr.dtype, np.floating)):
        arr = arr.astype(dtype)
    return Tensor(arr)


def _topological_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order
