"""Tape-based reverse-mode differentiation over small dense float64 arrays.

Every op returns a :class:`Tensor`. While a :class:`Tape` is active, ops whose
inputs require gradients are appended to it; creation order is a topological
order, so :func:`backward` simply walks the tape in reverse.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64

_active_tape: list | None = None


class Tensor:
    """Node of the computation graph (value, gradient accumulator, parents)."""

    __slots__ = ("value", "grad", "parents", "_backward", "requires_grad", "op", "name")
    __array_priority__ = 100

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad = None
        self.parents = ()
        self._backward = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor<{self.op}{tag}>({self.value!r})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        if isinstance(key, slice):
            start, stop, step = key.indices(len(self.value))
            if step != 1:
                raise ValueError("only unit-stride slices are supported")
            return slice_(self, start, stop)
        return pick(self, int(key))

    def item(self):
        return float(self.value)


class Tape:
    """Context manager that records differentiable ops.

    >>> with Tape() as tape:
    ...     loss = ...
    >>> backward(loss, tape)
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._prev = None

    def __enter__(self):
        global _active_tape
        self._prev = _active_tape
        _active_tape = self.nodes
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._prev
        return False

    def __len__(self):
        return len(self.nodes)

    def clear(self):
        self.nodes.clear()


class no_grad:
    """Suspend recording inside the block."""

    def __enter__(self):
        global _active_tape
        self._prev = _active_tape
        _active_tape = None

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._prev
        return False


def is_recording():
    return _active_tape is not None


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value, name=None):
    return Tensor(np.array(value, dtype=DTYPE), requires_grad=True, name=name)


def _node(value, parents, backward, op):
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.name = None
    out.op = op
    if _active_tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out._backward = backward
        _active_tape.append(out)
    else:
        out.requires_grad = False
        out.parents = ()
        out._backward = None
    return out


def backward(loss: Tensor, tape: Tape, seed=None):
    """Accumulate d(loss)/d(node) into ``.grad`` of every recorded node and leaf.

    All gradient accumulators reachable from the tape are reset first, so the
    same tape can be differentiated repeatedly for different scalar losses.
    """
    nodes = tape.nodes if isinstance(tape, Tape) else tape
    for node in nodes:
        node.grad = None
        for p in node.parents:
            if p._backward is None and p.requires_grad:
                p.grad = np.zeros_like(p.value)
    if not loss.requires_grad:
        return
    loss.grad = np.ones_like(loss.value) if seed is None else np.asarray(seed, dtype=DTYPE)
    for node in reversed(nodes):
        g = node.grad
        if g is None:
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node.parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            p.grad = pg if p.grad is None else p.grad + pg


# elementwise arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.value.shape, b.value.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)
    return _node(a.value + b.value, (a, b), bw, "add")


def neg(a):
    return _node(-a.value, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value

    def bw(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)
    return _node(av * bv, (a, b), bw, "mul")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def square(a):
    v = a.value
    return _node(v * v, (a,), lambda g: (2.0 * v * g,), "square")


def log(a):
    v = a.value
    return _node(np.log(v), (a,), lambda g: (g / v,), "log")


def exp(a):
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,), "exp")


# activations

class trace_kinks:
    """Collect the activation pattern of every relu evaluated inside the block."""

    def __enter__(self):
        global _kink_trace
        self._prev = _kink_trace
        self.masks = []
        _kink_trace = self.masks
        return self

    def __exit__(self, *exc):
        global _kink_trace
        _kink_trace = self._prev
        return False

    def pattern(self):
        return np.concatenate([m.ravel() for m in self.masks]) if self.masks else np.empty(0, bool)


_kink_trace = None


def relu(a):
    mask = a.value > 0
    if _kink_trace is not None:
        _kink_trace.append(mask)
    return _node(a.value * mask, (a,), lambda g: (g * mask,), "relu")


def tanh(a):
    out = np.tanh(a.value)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a):
    out = _sigmoid(a.value)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(a):
    out = _softmax(a.value)

    def bw(g):
        return (out * (g - np.dot(g, out)),)
    return _node(out, (a,), bw, "softmax")


def _softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


def log_softmax(a):
    x = a.value
    shifted = x - x.max()
    lse = np.log(np.exp(shifted).sum())
    out = shifted - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(),)
    return _node(out, (a,), bw, "log_softmax")


def neg_entropy(logp):
    """sum_a p_a log p_a for log-probabilities ``logp``."""
    lp = logp.value
    p = np.exp(lp)
    val = np.dot(p, lp)

    def bw(g):
        # d/dlp_k of sum p log p, treating lp as free coordinates
        return (g * p * (lp + 1.0),)
    return _node(np.asarray(val), (logp,), bw, "neg_entropy")


# structural ops

def concat(xs):
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("concat of an empty list")
    if len(xs) == 1:
        return xs[0]
    sizes = [len(x.value) for x in xs]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(g[bounds[k]:bounds[k + 1]] for k in range(len(sizes)))
    return _node(np.concatenate([x.value for x in xs]), tuple(xs), bw, "concat")


def slice_(a, start, stop):
    n = len(a.value)

    def bw(g):
        full = np.zeros(n, dtype=DTYPE)
        full[start:stop] = g
        return (full,)
    return _node(a.value[start:stop], (a,), bw, "slice")


def pick(a, index):
    n = len(a.value)

    def bw(g):
        full = np.zeros(n, dtype=DTYPE)
        full[index] = g
        return (full,)
    return _node(np.asarray(a.value[index]), (a,), bw, "pick")


def total(a):
    """Sum of all entries (scalar)."""
    shape = a.value.shape
    return _node(np.asarray(a.value.sum()), (a,), lambda g: (np.full(shape, g),), "sum")


def mean(xs):
    """Elementwise mean of a non-empty list of equal-shape tensors."""
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("mean over an empty set")
    k = len(xs)
    val = xs[0].value.copy()
    for x in xs[1:]:
        val = val + x.value

    def bw(g):
        gk = g / k
        return (gk,) * k
    return _node(val / k, tuple(xs), bw, "mean")


def lincomb(xs, coefs):
    """sum_k coefs[k] * xs[k] for equal-shape tensors and constant coefficients."""
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("lincomb of an empty list")
    coefs = [float(c) for c in coefs]
    val = coefs[0] * xs[0].value
    for c, x in zip(coefs[1:], xs[1:]):
        val = val + c * x.value

    def bw(g):
        return tuple(c * g for c in coefs)
    return _node(np.asarray(val), tuple(xs), bw, "lincomb")


def one_hot(a, k):
    if not 0 <= a < k:
        raise ValueError(f"action {a} outside [0, {k})")
    v = np.zeros(k, dtype=DTYPE)
    v[a] = 1.0
    return Tensor(v)


# layers

def fc(x, W, b=None):
    """Affine map ``W @ x + b``."""
    x = as_tensor(x)
    Wv, xv = W.value, x.value
    if Wv.ndim != 2 or xv.ndim != 1 or Wv.shape[1] != xv.shape[0]:
        raise ValueError(f"fc shape mismatch: W{Wv.shape} @ x{xv.shape}")
    out = Wv @ xv
    if b is not None:
        if b.value.shape != (Wv.shape[0],):
            raise ValueError(f"fc bias shape {b.value.shape} != ({Wv.shape[0]},)")
        out = out + b.value
        parents = (x, W, b)
    else:
        parents = (x, W)
    need_x = x.requires_grad

    def bw(g):
        gx = Wv.T @ g if need_x else None
        gW = np.outer(g, xv) if W.requires_grad else None
        if b is None:
            return gx, gW
        return gx, gW, g
    return _node(out, parents, bw, "fc")


def lstm(x, h, c, Wx, Wh, b):
    """Fused LSTM cell; returns a single node holding ``concat(h_new, c_new)``.

    Gate layout along the 4d axis is (input, forget, output, candidate).
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    xv, hv, cv = x.value, h.value, c.value
    d = hv.shape[0]
    if Wx.value.shape != (4 * d, xv.shape[0]) or Wh.value.shape != (4 * d, d):
        raise ValueError(f"lstm shape mismatch: Wx{Wx.value.shape} Wh{Wh.value.shape} "
                         f"x{xv.shape} h{hv.shape}")
    z = Wx.value @ xv + Wh.value @ hv + b.value
    if not np.isfinite(z).all():
        raise FloatingPointError("non-finite LSTM pre-activation")
    ifo = _sigmoid(z[:3 * d])
    ig, fg, og = ifo[:d], ifo[d:2 * d], ifo[2 * d:]
    gg = np.tanh(z[3 * d:])
    c_new = fg * cv + ig * gg
    tc = np.tanh(c_new)
    h_new = og * tc
    out = np.concatenate([h_new, c_new])
    Wxv, Whv = Wx.value, Wh.value

    def bw(g):
        gh, gc = g[:d], g[d:]
        gc = gc + gh * og * (1.0 - tc * tc)
        dz = np.concatenate([
            gc * gg * ig * (1.0 - ig),
            gc * cv * fg * (1.0 - fg),
            gh * tc * og * (1.0 - og),
            gc * ig * (1.0 - gg * gg),
        ])
        return (Wxv.T @ dz if x.requires_grad else None,
                Whv.T @ dz if h.requires_grad else None,
                gc * fg if c.requires_grad else None,
                np.outer(dz, xv), np.outer(dz, hv), dz)
    return _node(out, (x, h, c, Wx, Wh, b), bw, "lstm")
