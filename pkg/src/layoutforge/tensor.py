"""Dense float64 tensors with reverse-mode automatic differentiation.

The differentiation record is the graph of ``_parents`` links built during the
forward pass; every step builds a fresh graph and drops it when the loss goes
out of scope. ``backward`` walks that graph once in reverse topological order and
accumulates gradients additively into leaf tensors, so calling it twice
doubles every gradient.

All data is float64 and treated as immutable after construction; only the
optimizer replaces the array held by a :class:`Parameter`.
"""

from __future__ import annotations

import os
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    GradCheckError,
    ShapeError,
)

# Loss logs clip probabilities here before taking logarithms.
PROB_CLIP = 1e-12

_debug_finite_checks = bool(int(os.environ.get("LAYOUTFORGE_CHECK_FINITE", "0")))


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf assertions after every forward op (slow, for tests)."""
    global _debug_finite_checks
    _debug_finite_checks = enabled


def _as_array(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    return arr


class Tensor:
    """A float64 n-d array node in the differentiation graph.

    ``requires_grad`` marks leaves whose gradient should be retained in
    ``.grad``; interior nodes propagate gradients transiently.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _vjp: Callable | None = None):
        arr = _as_array(data)
        if _debug_finite_checks and not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite values in tensor data")
        try:
            arr.setflags(write=False)
        except ValueError:
            arr = arr.copy()
            arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._vjp = _vjp

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"

    # -- graph management ---------------------------------------------------

    def detach(self) -> "Tensor":
        """A view of the same values with no history and no gradient."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros(self.data.shape)
        self.grad += g

    # -- operator sugar -----------------------------------------------------

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and
                       isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return absolute(self)

    def clip(self, lo, hi):
        return clip(self, lo, hi)


class Parameter(Tensor):
    """A named, trainable leaf tensor with a persistent gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def assign(self, new_data: np.ndarray) -> None:
        """Replace the value array (optimizer use only)."""
        arr = _as_array(new_data)
        if arr.shape != self.data.shape:
            raise ShapeError(
                f"parameter '{self.name}': cannot assign shape {arr.shape} "
                f"over {self.data.shape}")
        arr.setflags(write=False)
        self.data = arr

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, vjp: Callable) -> Tensor:
    if _debug_finite_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values produced by an op")
    if any(p.requires_grad or p._vjp is not None for p in parents):
        return Tensor(data, _parents=parents, _vjp=vjp)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# -- elementwise arithmetic ----------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return _make(out, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data / b.data

    def vjp(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out, (a, b), vjp)


def power(a, p: float) -> Tensor:
    a = _wrap(a)
    p = float(p)
    out = a.data ** p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(out, (a,), vjp)


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def absolute(a) -> Tensor:
    a = _wrap(a)
    out = np.abs(a.data)

    def vjp(g):  # subgradient 0 at exactly 0
        return (g * np.sign(a.data),)

    return _make(out, (a,), vjp)


def minimum(a, b) -> Tensor:
    """Elementwise min; on ties the gradient goes to ``a``."""
    a, b = _wrap(a), _wrap(b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def vjp(g):
        return (_unbroadcast(np.where(take_a, g, 0.0), a.shape),
                _unbroadcast(np.where(take_a, 0.0, g), b.shape))

    return _make(out, (a, b), vjp)


def maximum(a, b) -> Tensor:
    """Elementwise max; on ties the gradient goes to ``a``."""
    a, b = _wrap(a), _wrap(b)
    take_a = a.data >= b.data
    out = np.where(take_a, a.data, b.data)

    def vjp(g):
        return (_unbroadcast(np.where(take_a, g, 0.0), a.shape),
                _unbroadcast(np.where(take_a, 0.0, g), b.shape))

    return _make(out, (a, b), vjp)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values into [lo, hi]; gradient passes only where unclamped."""
    a = _wrap(a)
    out = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def vjp(g):
        return (np.where(inside, g, 0.0),)

    return _make(out, (a,), vjp)


# -- activations ----------------------------------------------------------


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0
    out = np.where(mask, a.data, 0.0)

    def vjp(g):
        return (np.where(mask, g, 0.0),)

    return _make(out, (a,), vjp)


def leaky_relu(a, alpha: float = 0.2) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0
    out = np.where(mask, a.data, alpha * a.data)

    def vjp(g):
        return (np.where(mask, g, alpha * g),)

    return _make(out, (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    # numerically stable two-sided form
    out = np.where(a.data >= 0,
                   1.0 / (1.0 + np.exp(-np.abs(a.data))),
                   np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), vjp)


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), vjp)


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _make(out, (a,), vjp)


def log(a) -> Tensor:
    a = _wrap(a)
    out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _make(out, (a,), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), vjp)


# -- shape ops ------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _make(out, (a,), vjp)


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def vjp(g):
        return (np.transpose(g, inv),)

    return _make(out, (a,), vjp)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(ts), vjp)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = np.stack([t.data for t in ts], axis=axis)

    def vjp(g):
        parts = np.split(g, len(ts), axis=axis)
        return tuple(p.squeeze(axis=axis) for p in parts)

    return _make(out, tuple(ts), vjp)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries starting at ``start`` along ``axis``."""
    a = _wrap(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx]

    def vjp(g):
        full = np.zeros(a.shape)
        full[idx] = g
        return (full,)

    return _make(out, (a,), vjp)


def gather_rows(a, indices) -> Tensor:
    """Select rows by index (first axis); backward scatter-adds."""
    a = _wrap(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = a.data[idx]

    def vjp(g):
        full = np.zeros(a.shape)
        np.add.at(full, idx, g)
        return (full,)

    return _make(out, (a,), vjp)


def scatter_add_rows(src, indices, num_rows: int) -> Tensor:
    """Accumulate ``src`` rows into ``num_rows`` output rows.

    Accumulation runs sequentially in the order rows appear in ``src``, so the
    result is bit-reproducible.
    """
    src = _wrap(src)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.shape[0] != src.shape[0]:
        raise ShapeError(
            f"scatter_add_rows: {idx.shape[0]} indices for {src.shape[0]} rows")
    out = np.zeros((num_rows,) + src.shape[1:])
    np.add.at(out, idx, src.data)

    def vjp(g):
        return (g[idx],)

    return _make(out, (src,), vjp)


# -- reductions -----------------------------------------------------------


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).copy(),)

    return _make(out, (a,), vjp)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2 / count, a.shape).copy(),)

    return _make(out, (a,), vjp)


# -- linear algebra -------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        return (g @ b.data.T, a.data.T @ g)

    return _make(out, (a, b), vjp)


# -- convolution and resampling -------------------------------------------


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, k, k, ho, wo))
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride,
                                  j:j + stride * wo:stride]
    return cols.reshape(n, c * k * k, ho * wo), ho, wo


def _col2im(dcols: np.ndarray, xshape, k: int, stride: int, pad: int,
            ho: int, wo: int) -> np.ndarray:
    n, c, h, w = xshape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    d = dcols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] \
                += d[:, :, i, j]
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation with zero padding.

    ``x`` is (C,H,W) or (N,C,H,W); ``kernel`` is (C_out,C_in,k,k) with k odd.
    """
    x, kernel = _wrap(x), _wrap(kernel)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects (N,C,H,W) and (O,I,k,k); "
                         f"got {x.shape} and {kernel.shape}")
    n, c, h, w = xd.shape
    cout, cin, k, k2 = kernel.shape
    if k != k2 or k % 2 == 0:
        raise ConfigError(f"conv2d kernel must be square with odd size, got {k}x{k2}")
    if cin != c:
        raise ShapeError(f"conv2d channel mismatch: input {c} vs kernel {cin}")
    if (h + 2 * padding - k) % stride or (w + 2 * padding - k) % stride:
        raise ConfigError(
            f"conv2d output size is not integral for input {h}x{w}, "
            f"kernel {k}, stride {stride}, padding {padding}")
    cols, ho, wo = _im2col(xd, k, stride, padding)
    wmat = kernel.data.reshape(cout, cin * k * k)
    out = np.einsum("ok,nkl->nol", wmat, cols, optimize=True)
    out = out.reshape(n, cout, ho, wo)
    if squeeze:
        out = out[0]

    def vjp(g):
        gd = g[None] if squeeze else g
        gd = gd.reshape(n, cout, ho * wo)
        dW = np.einsum("nol,nkl->ok", gd, cols, optimize=True)
        dcols = np.einsum("ok,nol->nkl", wmat, gd, optimize=True)
        dx = _col2im(dcols, xd.shape, k, stride, padding, ho, wo)
        if squeeze:
            dx = dx[0]
        return dx, dW.reshape(kernel.shape)

    return _make(out, (x, kernel), vjp)


def upsample_nearest(x, factor: int = 2) -> Tensor:
    """Nearest-neighbor spatial upsampling of (C,H,W) or (N,C,H,W)."""
    x = _wrap(x)
    out = np.repeat(np.repeat(x.data, factor, axis=-2), factor, axis=-1)

    def vjp(g):
        lead = g.shape[:-2]
        h, w = x.shape[-2], x.shape[-1]
        g6 = g.reshape(lead + (h, factor, w, factor))
        return (g6.sum(axis=(-1, -3)),)

    return _make(out, (x,), vjp)


# -- normalization and losses ----------------------------------------------


def instance_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Per-channel (and per-sample, if batched) spatial normalization.

    ``x`` is (C,H,W) or (N,C,H,W); ``gamma``/``beta`` are (C,). The variance
    is the biased spatial variance; ``eps`` is added before the square root.
    """
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    c = x.shape[-3]
    if x.shape[-2] * x.shape[-1] < 2:
        raise DegenerateInputError(
            f"instance_norm needs at least 2 spatial elements, got {x.shape}")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"instance_norm affine shapes {gamma.shape}/{beta.shape} "
                         f"do not match {c} channels")
    mu = reduce_mean(x, axis=(-2, -1), keepdims=True)
    centered = sub(x, mu)
    var = reduce_mean(mul(centered, centered), axis=(-2, -1), keepdims=True)
    inv = power(add(var, eps), -0.5)
    normed = mul(centered, inv)
    gb = (c, 1, 1)
    return add(mul(normed, reshape(gamma, gb)), reshape(beta, gb))


def weighted_cross_entropy(logits, labels, weights) -> Tensor:
    """Mean per-class-weighted cross entropy over rows of ``logits``.

    ``logits`` is (N, C); ``labels`` holds N class indices; ``weights`` holds
    one positive factor per class. Probabilities are clipped below at
    ``PROB_CLIP`` before the log. The gradient uses the standard softmax
    cross-entropy form (the clip region is vanishingly rare in float64).
    """
    logits = _wrap(logits)
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    weights = np.asarray(weights, dtype=np.float64)
    n, c = logits.shape
    if n == 0:
        raise DegenerateInputError("cross entropy over an empty batch")
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for {n} logit rows")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise IndexError(f"label out of range [0,{c}) in cross entropy")
    if weights.shape != (c,):
        raise ShapeError(f"expected {c} class weights, got {weights.shape}")
    if np.any(weights <= 0):
        raise ContractError("class weights must be positive")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    w = weights[labels]
    losses = -w * np.log(np.maximum(p[rows, labels], PROB_CLIP))
    out = np.asarray(losses.mean())

    def vjp(g):
        d = p * w[:, None]
        d[rows, labels] -= w
        return (g * d / n,)

    return _make(out, (logits,), vjp)


# -- backward pass ----------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable ``requires_grad`` leaf."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.requires_grad:
                node._accumulate(g)
            continue
        if node.requires_grad:  # leaf semantics requested on an interior node
            node._accumulate(g)
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# -- optimizer ---------------------------------------------------------------


class Adam:
    """Adam with bias correction over a fixed list of Parameters."""

    def __init__(self, params: Sequence[Parameter], learning_rate: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ContractError("duplicate parameter names in optimizer")
        self.params = list(params)
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step_count = 0
        self.m = {p.name: np.zeros(p.shape) for p in self.params}
        self.v = {p.name: np.zeros(p.shape) for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        """One update; parameters with no gradient decay moments only."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros(p.shape)
            if g.shape != p.shape:
                raise ShapeError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"'{p.name}' shape {p.shape}")
            m = self.m[p.name] = self.beta1 * self.m[p.name] + (1 - self.beta1) * g
            v = self.v[p.name] = self.beta2 * self.v[p.name] + (1 - self.beta2) * g * g
            update = self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)
            p.assign(p.data - update)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat name->array view of the optimizer state for checkpointing."""
        out: dict[str, np.ndarray] = {"adam.step": np.array([float(self.step_count)])}
        for name in sorted(self.m):
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["adam.step"][0])
        for p in self.params:
            self.m[p.name] = arrays[f"adam.m.{p.name}"].copy()
            self.v[p.name] = arrays[f"adam.v.{p.name}"].copy()


# -- finite-difference oracle -------------------------------------------------


class GradCheckReport:
    """Comparison of analytic gradients against central differences."""

    def __init__(self):
        self.per_input: list[dict] = []

    @property
    def max_rel_error(self) -> float:
        return max((d["max_rel_error"] for d in self.per_input), default=0.0)

    @property
    def ok(self) -> bool:
        return all(d["ok"] for d in self.per_input)

    def __repr__(self) -> str:
        state = "pass" if self.ok else "FAIL"
        return f"GradCheckReport({state}, max_rel_error={self.max_rel_error:.3g})"


def grad_check_params(loss_fn: Callable[[], Tensor],
                      params: Sequence[Parameter],
                      rtol: float = 1e-4) -> GradCheckReport:
    """Check d(loss_fn()) / d(param) for weights buried inside a model.

    ``loss_fn`` is a closure that rebuilds the loss from current parameter
    values; each parameter element is perturbed in place (and restored) for
    the central-difference probes.
    """
    params = list(params)
    pristine = [p.data.copy() for p in params]
    try:
        for p in params:
            p.zero_grad()
        y = loss_fn()
        if y.size != 1:
            raise ContractError("grad_check_params needs a scalar loss")
        if not np.isfinite(y.item()):
            raise GradCheckError("loss is not finite at the probe point")
        backward(y)
        analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy()
                    for p in params]

        report = GradCheckReport()
        for i, p in enumerate(params):
            base = pristine[i]
            numeric = np.zeros(base.shape)
            flat = numeric.reshape(-1)
            for j in range(base.size):
                h = 1e-5 * max(1.0, abs(base.reshape(-1)[j]))
                probes = []
                for sign in (+1.0, -1.0):
                    shifted = base.copy()
                    shifted.reshape(-1)[j] += sign * h
                    p.assign(shifted)
                    val = loss_fn().item()
                    if not np.isfinite(val):
                        raise GradCheckError(
                            f"non-finite loss probing '{p.name}' element {j}")
                    probes.append(val)
                flat[j] = (probes[0] - probes[1]) / (2.0 * h)
            p.assign(base)
            denom = np.maximum(1.0, np.maximum(np.abs(analytic[i]),
                                               np.abs(numeric)))
            rel = np.abs(analytic[i] - numeric) / denom
            report.per_input.append({
                "name": p.name,
                "analytic": analytic[i],
                "numeric": numeric,
                "rel_error": rel,
                "max_rel_error": float(rel.max()) if rel.size else 0.0,
                "element_ok": rel <= rtol,
                "ok": bool((rel <= rtol).all()),
            })
        return report
    finally:
        for p, base in zip(params, pristine):
            p.assign(base)


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor],
               rtol: float = 1e-4) -> GradCheckReport:
    """Check analytic gradients of scalar-valued ``f`` at ``inputs``.

    Central differences use h = 1e-5 * max(1, |x|) per element. The relative
    error denominator is floored at 1 so near-zero gradients compare
    absolutely.
    """
    inputs = list(inputs)
    for t in inputs:
        if not t.requires_grad:
            raise ContractError("grad_check inputs must require gradients")
        t.zero_grad()

    y = f(*inputs)
    if y.size != 1:
        raise ContractError("grad_check needs a scalar-valued function")
    if not np.isfinite(y.item()):
        raise GradCheckError("function value is not finite at the probe point")
    backward(y)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy()
                for t in inputs]

    report = GradCheckReport()
    for i, t in enumerate(inputs):
        base = t.data
        numeric = np.zeros(base.shape)
        flat = numeric.reshape(-1)
        for j in range(base.size):
            h = 1e-5 * max(1.0, abs(base.reshape(-1)[j]))
            probes = []
            for sign in (+1.0, -1.0):
                shifted = base.copy()
                shifted.reshape(-1)[j] += sign * h
                args = list(inputs)
                args[i] = Tensor(shifted)
                val = f(*args).item()
                if not np.isfinite(val):
                    raise GradCheckError(
                        f"non-finite value at probe of input {i}, element {j}")
                probes.append(val)
            flat[j] = (probes[0] - probes[1]) / (2.0 * h)
        denom = np.maximum(1.0, np.maximum(np.abs(analytic[i]), np.abs(numeric)))
        rel = np.abs(analytic[i] - numeric) / denom
        report.per_input.append({
            "analytic": analytic[i],
            "numeric": numeric,
            "rel_error": rel,
            "max_rel_error": float(rel.max()) if rel.size else 0.0,
            "element_ok": rel <= rtol,
            "ok": bool((rel <= rtol).all()),
        })
    return report
