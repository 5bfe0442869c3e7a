"""A small reverse-mode automatic differentiation engine over numpy arrays.

Backward rules are written with Tensor operations, so a gradient computed
with ``create_graph=True`` is itself differentiable. That is all the
second-order machinery needs (Hessian-vector products and full Hessians
for small models).
"""
from __future__ import annotations

import contextlib

import numpy as np

_RECORDING = [True]


@contextlib.contextmanager
def recording(enabled: bool):
    prev = _RECORDING[0]
    _RECORDING[0] = enabled
    try:
        yield
    finally:
        _RECORDING[0] = prev


def no_grad():
    return recording(False)


class Tensor:
    __slots__ = ("data", "parents", "backward", "requires_grad")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=float)
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward = backward

    # -- construction helpers
    @staticmethod
    def _make(data, parents, backward):
        if _RECORDING[0] and any(p.requires_grad for p in parents):
            return Tensor(data, True, parents, backward)
        return Tensor(data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor({self.data!r}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # -- arithmetic
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(a.data + b.data, (a, b),
                            lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(a.data * b.data, (a, b),
                            lambda g: (unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(a.data / b.data, (a, b),
                            lambda g: (unbroadcast(g / b, a.shape),
                                       unbroadcast(-g * a / (b * b), b.shape)))

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, c):
        if isinstance(c, Tensor):
            raise TypeError("only constant exponents are supported")
        a = self
        return Tensor._make(a.data ** c, (a,), lambda g: (g * c * a ** (c - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")
        return Tensor._make(a.data @ b.data, (a, b), lambda g: (g @ b.T, a.T @ g))

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    @property
    def T(self):
        return Tensor._make(self.data.T, (self,), lambda g: (g.T,))

    # -- shape ops
    def reshape(self, *shape):
        a = self
        return Tensor._make(a.data.reshape(*shape), (a,), lambda g: (g.reshape(a.shape),))

    def __getitem__(self, idx):
        a = self
        return Tensor._make(a.data[idx], (a,), lambda g: (scatter(g, idx, a.shape),))

    def broadcast_to(self, shape):
        a = self
        return Tensor._make(np.broadcast_to(a.data, shape).copy(), (a,),
                            lambda g: (unbroadcast(g, a.shape),))

    # -- reductions
    def sum(self, axis=None, keepdims=False):
        a = self
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def back(g):
            if axis is not None and not keepdims:
                g = g.reshape(np.expand_dims(out, axis).shape)
            elif axis is None:
                g = g.reshape((1,) * a.ndim)
            return (g.broadcast_to(a.shape),)
        return Tensor._make(out, (a,), back)

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis, keepdims) / n

    # -- elementwise functions
    def exp(self):
        a = self
        out = Tensor._make(np.exp(a.data), (a,), None)
        if out.requires_grad:
            out.backward = lambda g: (g * out,)
        return out

    def log(self):
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: (g / a,))

    def tanh(self):
        a = self
        out = Tensor._make(np.tanh(a.data), (a,), None)
        if out.requires_grad:
            out.backward = lambda g: (g * (1.0 - out * out),)
        return out

    def sigmoid(self):
        a = self
        out = Tensor._make(_sigmoid(a.data), (a,), None)
        if out.requires_grad:
            out.backward = lambda g: (g * out * (1.0 - out),)
        return out

    def softplus(self):
        a = self
        return Tensor._make(np.logaddexp(0.0, a.data), (a,), lambda g: (g * a.sigmoid(),))

    def sqrt(self):
        return self ** 0.5


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def unbroadcast(g: Tensor, shape) -> Tensor:
    """Sum ``g`` down to ``shape`` (the adjoint of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra))) if extra > 1 else g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def scatter(g: Tensor, idx, shape) -> Tensor:
    """Zeros of ``shape`` with ``g`` placed at ``idx`` (adjoint of indexing)."""
    out = np.zeros(shape)
    np.add.at(out, idx, g.data) if _fancy(idx) else out.__setitem__(idx, g.data)
    return Tensor._make(out, (g,), lambda h: (h[idx],))


def _fancy(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([0] + [t.shape[axis] for t in tensors])
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def back(g):
        out = []
        for lo, hi in zip(sizes[:-1], sizes[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return tuple(out)
    return Tensor._make(data, tuple(tensors), back)


def logsumexp(x: Tensor, axis=-1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    return (x - m).exp().sum(axis=axis, keepdims=True).log() + m


def log_softmax(x: Tensor, axis=-1) -> Tensor:
    return x - logsumexp(x, axis)


def _topo(root: Tensor):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, inputs, grad_output=None, create_graph: bool = False):
    """Gradients of ``output`` with respect to each tensor in ``inputs``.

    ``grad_output`` seeds the backward pass (a vector-Jacobian product);
    it defaults to ones, so ``output`` is usually a scalar loss.
    """
    single = isinstance(inputs, Tensor)
    inputs = [inputs] if single else list(inputs)
    seed = as_tensor(np.ones_like(output.data) if grad_output is None else grad_output)
    grads = {id(output): seed}
    if output.requires_grad:
        with recording(create_graph):
            for node in reversed(_topo(output)):
                g = grads.get(id(node))
                if g is None or node.backward is None:
                    continue
                for parent, pg in zip(node.parents, node.backward(g)):
                    if not parent.requires_grad:
                        continue
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg
    out = []
    for x in inputs:
        g = grads.get(id(x))
        out.append(Tensor(np.zeros_like(x.data)) if g is None else (g if create_graph else g.detach()))
    return out[0] if single else out


def value_and_grad(fn, theta: np.ndarray):
    """(f(theta), grad f(theta)) as numpy for a function of one flat vector."""
    t = Tensor(theta, requires_grad=True)
    loss = fn(t)
    return loss.item(), grad(loss, t).data


def hvp(fn, theta: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Hessian-vector product by differentiating the gradient a second time."""
    t = Tensor(theta, requires_grad=True)
    g = grad(fn(t), t, create_graph=True)
    return grad((g * Tensor(v)).sum(), t).data


def hessian(fn, theta: np.ndarray) -> np.ndarray:
    d = theta.size
    t = Tensor(theta, requires_grad=True)
    g = grad(fn(t), t, create_graph=True)
    rows = [grad(g, t, grad_output=np.eye(d)[i]).data for i in range(d)]
    return np.array(rows)
