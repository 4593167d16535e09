"""Minimal reverse-mode automatic differentiation over 2-D float64 arrays.

Everything is a (rows, cols) matrix; scalars live in (1, 1) tensors and 1-D
input is promoted to a single row.  Only the operations the Q-network forward
pass needs are implemented.  Gradients accumulate into ``.grad`` buffers via
an iterative topological sweep, so deep graphs do not hit the recursion limit.

Wrapping a forward in :func:`no_grad` skips all graph bookkeeping, which makes
inference calls (action selection, target evaluation) cheap while running the
exact same code path bit for bit.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording; forwards inside compute plain values only."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError("only 2-D tensors are supported")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.data[0, 0])

    def _ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        # Iterative post-order DFS; reversed post-order is a valid
        # topological order for the backward sweep.
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._ensure_grad()
        self.grad[...] = 1.0
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # -- operations ---------------------------------------------------------

    def __matmul__(self, other):
        out = _node(self.data @ other.data, self, other)
        if out._parents:

            def back():
                if _needs(self):
                    self._ensure_grad()
                    self.grad += out.grad @ other.data.T
                if _needs(other):
                    other._ensure_grad()
                    other.grad += self.data.T @ out.grad

            out._backward = back
        return out

    def __add__(self, other):
        # Supports equal shapes and the (n, m) + (1, m) bias-row broadcast.
        out = _node(self.data + other.data, self, other)
        if out._parents:

            def back():
                if _needs(self):
                    self._ensure_grad()
                    self.grad += _unbroadcast(out.grad, self.data.shape)
                if _needs(other):
                    other._ensure_grad()
                    other.grad += _unbroadcast(out.grad, other.data.shape)

            out._backward = back
        return out

    def __sub__(self, other):
        out = _node(self.data - other.data, self, other)
        if out._parents:

            def back():
                if _needs(self):
                    self._ensure_grad()
                    self.grad += _unbroadcast(out.grad, self.data.shape)
                if _needs(other):
                    other._ensure_grad()
                    other.grad -= _unbroadcast(out.grad, other.data.shape)

            out._backward = back
        return out

    def scale(self, factor):
        factor = float(factor)
        out = _node(self.data * factor, self)
        if out._parents:

            def back():
                self._ensure_grad()
                self.grad += out.grad * factor

            out._backward = back
        return out

    def square(self):
        out = _node(self.data * self.data, self)
        if out._parents:

            def back():
                self._ensure_grad()
                self.grad += out.grad * (2.0 * self.data)

            out._backward = back
        return out

    def sum(self):
        out = _node(self.data.sum(), self)
        if out._parents:

            def back():
                self._ensure_grad()
                self.grad += out.grad[0, 0]

            out._backward = back
        return out

    def mean(self):
        n = self.data.size
        out = _node(self.data.sum() / n, self)
        if out._parents:

            def back():
                self._ensure_grad()
                self.grad += out.grad[0, 0] / n

            out._backward = back
        return out

    def take_rows(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        out = _node(self.data[idx], self)
        if out._parents:

            def back():
                self._ensure_grad()
                np.add.at(self.grad, idx, out.grad)

            out._backward = back
        return out


def _needs(t):
    return t.requires_grad or t._parents


def _node(data, *parents):
    out = Tensor(data)
    if _grad_enabled:
        out._parents = tuple(p for p in parents if _needs(p))
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    if shape[0] == 1 and grad.shape[0] != 1:
        return grad.sum(axis=0, keepdims=True)
    raise ValueError(f"cannot reduce gradient {grad.shape} to {shape}")


def concat_cols(tensors):
    """Column-wise concatenation of same-height tensors."""
    out = _node(np.concatenate([t.data for t in tensors], axis=1), *tensors)
    if out._parents:
        widths = [t.data.shape[1] for t in tensors]

        def back():
            start = 0
            for t, w in zip(tensors, widths):
                if _needs(t):
                    t._ensure_grad()
                    t.grad += out.grad[:, start:start + w]
                start += w

        out._backward = back
    return out


def leaky_relu(t, slope=0.01):
    mask = np.where(t.data > 0.0, 1.0, slope)
    out = _node(t.data * mask, t)
    if out._parents:

        def back():
            t._ensure_grad()
            t.grad += out.grad * mask

        out._backward = back
    return out


class Adam:
    """Adam with bias correction over a name -> Tensor parameter dict."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (p.grad * p.grad)
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
