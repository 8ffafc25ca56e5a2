"""Minimal reverse-mode autodiff engine over dense numpy arrays.

Values live in numpy float32 (training) or float64 (gradient checking).
Every operation is a plain single-threaded numpy call with a fixed reduction
order, so two identical runs produce bitwise-identical values and gradients.
"""

from __future__ import annotations

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericsError(ArithmeticError):
    """A non-finite value appeared where finite math is required."""


_grad_enabled = True
_finite_checks = False


class no_grad:
    """Context manager that skips graph construction inside its block."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def set_finite_checks(enabled):
    """Toggle debug mode: every op output is asserted NaN/Inf-free."""
    global _finite_checks
    _finite_checks = bool(enabled)


def assert_finite(arr, what="tensor"):
    if not np.isfinite(arr).all():
        bad = np.argwhere(~np.isfinite(np.asarray(arr)))
        raise NumericsError(f"non-finite values in {what} at indices {bad[:8].tolist()}")


class Tensor:
    """Dense row-major array with optional gradient tracking.

    `data` is always a C-contiguous float32/float64 ndarray. `grad` is
    allocated lazily during backward and always matches `data`'s shape.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        if _finite_checks:
            assert_finite(self.data, "tensor constructor")

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.size == 1 else self._fail_item()

    def _fail_item(self):
        raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        """Alias for stop_gradient(self)."""
        return stop_gradient(self)

    # -- autodiff ------------------------------------------------------

    def _accumulate(self, g):
        # first contribution copies (g may alias another node's buffer)
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode sweep from a scalar output.

        Visits each node exactly once in reverse topological order, so each
        use of a tensor contributes exactly one gradient accumulation.
        """
        if self.size != 1:
            raise ShapeError(f"backward() needs a scalar output, got shape {self.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward_fn, what):
    """Build an op output node; drops the graph when grads are off."""
    if _finite_checks:
        assert_finite(data, what)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
    return out


def _unbroadcast(g, shape):
    """Sum gradient `g` down to `shape` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ---------------------------------------------


def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(a.data / b.data, (a, b), backward, "div")


def power(a, exponent):
    a = _as_tensor(a)
    e = float(exponent)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * e * a.data ** (e - 1.0))

    return _make(a.data**e, (a,), backward, "power")


def exp(a):
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return _make(out_data, (a,), backward, "exp")


def log(a):
    a = _as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward, "log")


# -- structural ops -------------------------------------------------------


def matmul(a, b):
    """Matrix product with numpy batching over leading dims.

    Gradients: dA = dC @ B^T, dB = A^T @ dC, summed over broadcast batch dims.
    """
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape))

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def reshape(a, shape):
    a = _as_tensor(a)
    orig = a.shape

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(orig))

    return _make(np.ascontiguousarray(a.data.reshape(shape)), (a,), backward, "reshape")


def swapaxes(a, ax1, ax2):
    a = _as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.swapaxes(ax1, ax2))

    return _make(np.ascontiguousarray(a.data.swapaxes(ax1, ax2)), (a,), backward, "swapaxes")


def broadcast_to(a, shape):
    a = _as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))

    return _make(np.ascontiguousarray(np.broadcast_to(a.data, shape)), (a,), backward, "broadcast_to")


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def take(a, key):
    """Basic/advanced indexing; backward scatter-adds into the source."""
    a = _as_tensor(a)
    out_data = a.data[key]
    if np.isscalar(out_data) or out_data.ndim == 0:
        out_data = np.asarray(out_data, dtype=a.dtype)

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.add.at(buf, key, g)
            a._accumulate(buf)

    return _make(np.ascontiguousarray(out_data), (a,), backward, "take")


def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    out_data = np.asarray(out_data, dtype=a.dtype)

    def backward(g):
        if a.requires_grad:
            gg = g
            if not keepdims and axis is not None:
                gg = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.shape).astype(a.dtype, copy=False))

    return _make(out_data, (a,), backward, "sum")


def tmean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = np.asarray(a.data.mean(axis=axis, keepdims=keepdims), dtype=a.dtype)
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])

    def backward(g):
        if a.requires_grad:
            gg = g
            if not keepdims and axis is not None:
                gg = np.expand_dims(g, axis)
            a._accumulate((np.broadcast_to(gg, a.shape) / count).astype(a.dtype, copy=False))

    return _make(out_data, (a,), backward, "mean")


def stop_gradient(a):
    """Forward identity; contributes zero gradient to its input."""
    a = _as_tensor(a)
    out = Tensor.__new__(Tensor)
    out.data = a.data
    out.grad = None
    out.requires_grad = False
    out._parents = ()
    out._backward_fn = None
    return out


def masked_fill(a, mask, value):
    """Replace entries where `mask` is False with `value`; grads only flow
    through kept entries."""
    a = _as_tensor(a)
    mask = np.asarray(mask, dtype=bool)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(mask, g, 0.0), a.shape))

    return _make(np.where(mask, a.data, a.dtype.type(value)), (a,), backward, "masked_fill")


# -- neural primitives ----------------------------------------------------


def softmax(a, axis):
    """Numerically-stable softmax along `axis`; output sums to 1 there."""
    a = _as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            a._accumulate(out_data * (g - dot))

    return _make(out_data, (a,), backward, "softmax")


def gelu(a):
    """GELU via the tanh approximation (matches common transformer stacks)."""
    a = _as_tensor(a)
    c = np.sqrt(2.0 / np.pi)
    x = a.data
    x2 = x * x
    t = np.tanh(c * (x + 0.044715 * (x2 * x)))
    out_data = (0.5 * x * (1.0 + t)).astype(a.dtype, copy=False)

    def backward(g):
        if a.requires_grad:
            dinner = c * (1.0 + 3 * 0.044715 * x2)
            grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            a._accumulate((g * grad).astype(a.dtype, copy=False))

    return _make(out_data, (a,), backward, "gelu")


def layer_norm(a, gain, bias, eps=1e-5):
    """Layer normalization over the last axis with learned gain/bias."""
    a = _as_tensor(a)
    gain = _as_tensor(gain, like=a)
    bias = _as_tensor(bias, like=a)
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + a.dtype.type(eps))
    normed = centered * inv
    out_data = (normed * gain.data + bias.data).astype(a.dtype, copy=False)

    def backward(g):
        if gain.requires_grad:
            gain._accumulate(_unbroadcast(g * normed, gain.shape))
        if bias.requires_grad:
            bias._accumulate(_unbroadcast(g, bias.shape))
        if a.requires_grad:
            gn = g * gain.data
            m1 = gn.mean(axis=-1, keepdims=True)
            m2 = (gn * normed).mean(axis=-1, keepdims=True)
            a._accumulate((inv * (gn - m1 - normed * m2)).astype(a.dtype, copy=False))

    return _make(out_data, (a, gain, bias), backward, "layer_norm")


def linear(x, weight, bias=None):
    """x @ weight (+ bias). weight is (in_dim, out_dim), row-vector convention."""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def _split_heads(t, num_heads):
    *lead, s, c = t.shape
    head_dim = c // num_heads
    return swapaxes(reshape(t, (*lead, s, num_heads, head_dim)), -3, -2)


def _merge_heads(t):
    tt = swapaxes(t, -3, -2)
    *lead, s, h, d = tt.shape
    return reshape(tt, (*lead, s, h * d))


def multi_head_attention(q, k, v, num_heads, mask=None):
    """Scaled dot-product attention with optional boolean mask.

    q is (..., S_q, C); k and v are (..., S_k, C); C must divide by num_heads.
    mask is (S_q, S_k) boolean, True = may attend; masked entries receive the
    most-negative finite value pre-softmax, so their post-softmax weight is
    exactly zero. A fully-masked query row is a contract violation.
    """
    q = _as_tensor(q)
    k = _as_tensor(k)
    v = _as_tensor(v)
    c = q.shape[-1]
    if c % num_heads != 0:
        raise ShapeError(f"embed dim {c} not divisible by {num_heads} heads")
    if k.shape[-1] != c or v.shape[-1] != c or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention shapes disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    head_dim = c // num_heads
    qh = _split_heads(q, num_heads)
    kh = _split_heads(k, num_heads)
    vh = _split_heads(v, num_heads)
    scores = mul(matmul(qh, swapaxes(kh, -1, -2)), 1.0 / np.sqrt(head_dim))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (q.shape[-2], k.shape[-2]):
            raise ShapeError(f"mask shape {mask.shape} does not match ({q.shape[-2]}, {k.shape[-2]})")
        if not mask.any(axis=-1).all():
            raise ShapeError("attention mask has a fully-masked query row")
        if not mask.all():
            scores = masked_fill(scores, mask, np.finfo(q.dtype).min)
    probs = softmax(scores, axis=-1)
    return _merge_heads(matmul(probs, vh))


def cross_entropy(logits, targets):
    """Mean softmax cross-entropy; logits (..., K), integer targets (...)."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    m = logits.data.max(axis=-1, keepdims=True)
    shifted = logits.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1)) + m[..., 0]
    picked = np.take_along_axis(logits.data, targets[..., None], axis=-1)[..., 0]
    count = max(targets.size, 1)
    out_data = np.asarray((lse - picked).sum() / count, dtype=logits.dtype)

    def backward(g):
        if logits.requires_grad:
            probs = np.exp(shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True)))
            onehot = np.zeros_like(logits.data)
            np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
            logits._accumulate((g * (probs - onehot) / count).astype(logits.dtype, copy=False))

    return _make(out_data, (logits,), backward, "cross_entropy")


def sigmoid_bce(logits, targets):
    """Mean binary cross-entropy on logits against {0,1} targets (stable form)."""
    logits = _as_tensor(logits)
    t = np.asarray(targets, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ShapeError(f"targets shape {t.shape} does not match logits {logits.shape}")
    x = logits.data
    per = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    count = max(x.size, 1)
    out_data = np.asarray(per.sum() / count, dtype=logits.dtype)

    def backward(g):
        if logits.requires_grad:
            sig = 1.0 / (1.0 + np.exp(-x))
            logits._accumulate((g * (sig - t) / count).astype(logits.dtype, copy=False))

    return _make(out_data, (logits,), backward, "sigmoid_bce")
