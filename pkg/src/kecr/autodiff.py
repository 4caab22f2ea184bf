"""Reverse-mode automatic differentiation on float64 numpy arrays.

Each operation returns a Var that remembers its inputs and a closure
mapping the output gradient to input gradients.  Var.backward() walks
the recorded graph once in reverse topological order and accumulates
into Var.grad.  Gradients accumulate across calls until cleared, which
lets parameter Vars share their .grad buffer with a ParameterStore slot
(see params.ParameterStore.var).

All values are float64; integer or float32 inputs are promoted on entry
and never silently downcast later.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ShapeError

__all__ = [
    "Var",
    "wrap",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "dot",
    "transpose",
    "concat",
    "stack_cols",
    "take",
    "take_row",
    "sum_",
    "mean_",
    "sigmoid",
    "tanh_",
    "relu",
    "log_",
    "clamp",
    "softmax",
    "linear",
    "gru_cell",
    "GRU_PARAM_KEYS",
]


class Var:
    """One node of the tape: a float64 array plus a gradient slot."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    def _ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    def backward(self, seed=None):
        """Propagate d(self)/d(upstream) into every reachable .grad.

        Without a seed the output must be scalar; the seed is then 1.
        """
        if seed is None:
            if self.value.shape != ():
                raise ShapeError(
                    "backward() without a seed needs a scalar output, got shape %r"
                    % (self.value.shape,)
                )
            seed = np.ones((), dtype=np.float64)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != self.value.shape:
            raise ShapeError(
                "seed shape %r does not match output shape %r" % (seed.shape, self.value.shape)
            )

        # Iterative post-order DFS; GRU chains make recursion risky.
        order = []
        seen = set()
        stack = [(self, False)]
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

        self._ensure_grad()
        self.grad += seed
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Small operator sugar so formulas read like the math they implement.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("divide by a plain scalar, not a Var")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


def wrap(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(x)


def _acc(p: Var, g: np.ndarray):
    # In-place accumulation: parameter Vars share .grad with their store
    # entry, and several Vars may alias one entry within a single tape.
    if p.requires_grad:
        p._ensure_grad()
        p.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Var:
    a, b = wrap(a), wrap(b)
    out_val = a.value + b.value

    def bw(g):
        _acc(a, _unbroadcast(g, a.value.shape))
        _acc(b, _unbroadcast(g, b.value.shape))

    return Var(out_val, parents=(a, b), backward=bw)


def sub(a, b) -> Var:
    a, b = wrap(a), wrap(b)
    out_val = a.value - b.value

    def bw(g):
        _acc(a, _unbroadcast(g, a.value.shape))
        _acc(b, _unbroadcast(-g, b.value.shape))

    return Var(out_val, parents=(a, b), backward=bw)


def mul(a, b) -> Var:
    a, b = wrap(a), wrap(b)
    out_val = a.value * b.value

    def bw(g):
        _acc(a, _unbroadcast(g * b.value, a.value.shape))
        _acc(b, _unbroadcast(g * a.value, b.value.shape))

    return Var(out_val, parents=(a, b), backward=bw)


def neg(a) -> Var:
    a = wrap(a)

    def bw(g):
        _acc(a, -g)

    return Var(-a.value, parents=(a,), backward=bw)


def matmul(a, b) -> Var:
    """Matrix product. Supports (m,n)@(n,) -> (m,) and (m,n)@(n,k) -> (m,k)."""
    a, b = wrap(a), wrap(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim not in (1, 2) or av.shape[1] != bv.shape[0]:
        raise ShapeError("matmul: %r does not accept %r" % (av.shape, bv.shape))
    out_val = av @ bv

    if bv.ndim == 1:

        def bw(g):
            _acc(a, np.outer(g, bv))
            _acc(b, av.T @ g)

    else:

        def bw(g):
            _acc(a, g @ bv.T)
            _acc(b, av.T @ g)

    return Var(out_val, parents=(a, b), backward=bw)


def dot(a, b) -> Var:
    a, b = wrap(a), wrap(b)
    if a.value.ndim != 1 or a.value.shape != b.value.shape:
        raise ShapeError("dot: %r vs %r" % (a.value.shape, b.value.shape))
    out_val = np.dot(a.value, b.value)

    def bw(g):
        _acc(a, g * b.value)
        _acc(b, g * a.value)

    return Var(out_val, parents=(a, b), backward=bw)


def transpose(a) -> Var:
    a = wrap(a)
    if a.value.ndim != 2:
        raise ShapeError("transpose expects a matrix, got shape %r" % (a.value.shape,))

    def bw(g):
        _acc(a, g.T)

    return Var(a.value.T, parents=(a,), backward=bw)


def concat(parts: Sequence) -> Var:
    parts = [wrap(p) for p in parts]
    for p in parts:
        if p.value.ndim != 1:
            raise ShapeError("concat expects vectors, got shape %r" % (p.value.shape,))
    sizes = [p.value.shape[0] for p in parts]
    out_val = np.concatenate([p.value for p in parts])

    def bw(g):
        off = 0
        for p, n in zip(parts, sizes):
            _acc(p, g[off : off + n])
            off += n

    return Var(out_val, parents=tuple(parts), backward=bw)


def stack_cols(cols: Sequence) -> Var:
    """Stack d-vectors into a (d, n) matrix, one vector per column."""
    cols = [wrap(c) for c in cols]
    if not cols:
        raise ShapeError("stack_cols needs at least one column")
    d = cols[0].value.shape
    for c in cols:
        if c.value.ndim != 1 or c.value.shape != d:
            raise ShapeError("stack_cols: inconsistent column shapes")
    out_val = np.stack([c.value for c in cols], axis=1)

    def bw(g):
        for i, c in enumerate(cols):
            _acc(c, g[:, i])

    return Var(out_val, parents=tuple(cols), backward=bw)


def take(a, i: int) -> Var:
    a = wrap(a)
    if a.value.ndim != 1:
        raise ShapeError("take expects a vector, got shape %r" % (a.value.shape,))
    i = int(i)

    def bw(g):
        z = np.zeros_like(a.value)
        z[i] = g
        _acc(a, z)

    return Var(a.value[i], parents=(a,), backward=bw)


def take_row(a, i: int) -> Var:
    a = wrap(a)
    if a.value.ndim != 2:
        raise ShapeError("take_row expects a matrix, got shape %r" % (a.value.shape,))
    i = int(i)

    def bw(g):
        z = np.zeros_like(a.value)
        z[i, :] = g
        _acc(a, z)

    return Var(a.value[i], parents=(a,), backward=bw)


def sum_(a) -> Var:
    a = wrap(a)

    def bw(g):
        _acc(a, np.full_like(a.value, float(g)))

    return Var(a.value.sum(), parents=(a,), backward=bw)


def mean_(a) -> Var:
    a = wrap(a)
    n = a.value.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")

    def bw(g):
        _acc(a, np.full_like(a.value, float(g) / n))

    return Var(a.value.mean(), parents=(a,), backward=bw)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # Piecewise form avoids exp overflow warnings for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Var:
    a = wrap(a)
    s = _sigmoid_np(np.atleast_1d(a.value)).reshape(a.value.shape)

    def bw(g):
        _acc(a, g * s * (1.0 - s))

    return Var(s, parents=(a,), backward=bw)


def tanh_(a) -> Var:
    a = wrap(a)
    t = np.tanh(a.value)

    def bw(g):
        _acc(a, g * (1.0 - t * t))

    return Var(t, parents=(a,), backward=bw)


def relu(a) -> Var:
    a = wrap(a)
    mask = a.value > 0

    def bw(g):
        _acc(a, g * mask)

    return Var(np.where(mask, a.value, 0.0), parents=(a,), backward=bw)


def log_(a) -> Var:
    a = wrap(a)

    def bw(g):
        _acc(a, g / a.value)

    return Var(np.log(a.value), parents=(a,), backward=bw)


def clamp(a, lo: float, hi: float) -> Var:
    a = wrap(a)
    inside = (a.value > lo) & (a.value < hi)

    def bw(g):
        _acc(a, g * inside)

    return Var(np.clip(a.value, lo, hi), parents=(a,), backward=bw)


def softmax(a) -> Var:
    """Softmax of a vector. The max shift is a constant, so gradients are exact."""
    a = wrap(a)
    if a.value.ndim != 1 or a.value.size == 0:
        raise ShapeError("softmax expects a nonempty vector, got shape %r" % (a.value.shape,))
    e = np.exp(a.value - a.value.max())
    s = e / e.sum()

    def bw(g):
        _acc(a, s * (g - np.dot(g, s)))

    return Var(s, parents=(a,), backward=bw)


def linear(w, x, b=None) -> Var:
    """w @ x (+ b). Raises ShapeError naming both shapes on a mismatch."""
    w, x = wrap(w), wrap(x)
    if w.value.ndim != 2 or w.value.shape[1] != x.value.shape[0]:
        raise ShapeError(
            "linear: weight %r does not accept input %r" % (w.value.shape, x.value.shape)
        )
    y = matmul(w, x)
    if b is not None:
        y = add(y, b)
    return y


GRU_PARAM_KEYS = ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")


def gru_cell(params: Mapping[str, Var], h_prev, x) -> Var:
    """One recurrence step: h' = z * h_prev + (1 - z) * cand.

    Cho-style gate layout with biases:
      z    = sigmoid(w_z x + u_z h + b_z)
      r    = sigmoid(w_r x + u_r h + b_r)
      cand = tanh(w_h x + u_h (r * h) + b_h)
    With all-zero weights this halves h_prev; with z forced to one it is
    the identity on h_prev.
    """
    missing = [k for k in GRU_PARAM_KEYS if k not in params]
    if missing:
        raise ShapeError("gru_cell missing params: %s" % ", ".join(missing))
    h_prev, x = wrap(h_prev), wrap(x)
    z = sigmoid(add(add(matmul(params["w_z"], x), matmul(params["u_z"], h_prev)), params["b_z"]))
    r = sigmoid(add(add(matmul(params["w_r"], x), matmul(params["u_r"], h_prev)), params["b_r"]))
    cand = tanh_(
        add(add(matmul(params["w_h"], x), matmul(params["u_h"], mul(r, h_prev))), params["b_h"])
    )
    one = Var(np.ones_like(z.value))
    return add(mul(z, h_prev), mul(sub(one, z), cand))
