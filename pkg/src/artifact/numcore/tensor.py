"""Dense tensors with define-by-run reverse-mode differentiation.

A :class:`Tape` records every primitive applied to tensors that require a
gradient while the tape is active. ``backward`` walks the record in reverse
creation order (a valid reverse topological order) and returns gradients for
the traced leaves. Outside an active tape the ops are plain numpy calls.
"""
from __future__ import annotations

import contextlib

import numpy as np

_ACTIVE: list["Tape"] = []


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64 if dtype is None else dtype)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_axis(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Tape:
    """Ordered record of traced primitives for one differentiation pass.

    Use as a context manager; tapes nest, the innermost one records.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def record(self, out, parents, fn):
        self.nodes.append((out, parents, fn))

    def clear(self):
        self.nodes = []

    def backward(self, loss, seed=None):
        if not isinstance(loss, Tensor):
            raise TypeError("loss must be a Tensor")
        if loss.size != 1 and seed is None:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not np.all(np.isfinite(loss.data)):
            raise NonFiniteError(f"non-finite loss {loss.data!r}")
        grads = {id(loss): np.ones_like(loss.data) if seed is None else np.asarray(seed, loss.dtype)}
        leaves = {}
        for out, parents, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            pgrads = fn(g)
            for p, pg in zip(parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                leaves.setdefault(key, p)
        result = GradMap()
        for key, g in grads.items():
            t = leaves.get(key)
            if t is None:
                if key == id(loss) and loss.requires_grad:
                    result[loss] = g
                continue
            result[t] = g.astype(t.dtype, copy=False)
        self.clear()
        return result


class GradMap(dict):
    """Maps leaf tensors to gradient arrays; missing leaves read as zeros."""

    def __setitem__(self, key, value):
        super().__setitem__(_Key(key), value)

    def __getitem__(self, key):
        return super().__getitem__(_Key(key))

    def __contains__(self, key):
        return super().__contains__(_Key(key))

    def get(self, key, default=None):
        return super().get(_Key(key), default)

    def grad(self, t):
        g = self.get(t)
        return np.zeros_like(t.data) if g is None else g

    def tensors(self):
        return [k.t for k in self.keys()]


class _Key:
    __slots__ = ("t",)

    def __init__(self, t):
        self.t = t.t if isinstance(t, _Key) else t

    def __hash__(self):
        return id(self.t)

    def __eq__(self, other):
        return isinstance(other, _Key) and other.t is self.t


def backward(loss):
    """Gradients of a traced scalar ``loss`` w.r.t. every traced leaf."""
    if not _ACTIVE:
        raise RuntimeError("backward called with no active tape")
    return _ACTIVE[-1].backward(loss)


def tracing():
    return bool(_ACTIVE)


_NO_GRAD = []


@contextlib.contextmanager
def no_grad():
    """Suspend recording on every active tape inside the block."""
    saved = _ACTIVE[:]
    _ACTIVE.clear()
    _NO_GRAD.append(True)
    try:
        yield
    finally:
        _NO_GRAD.pop()
        _ACTIVE[:] = saved


# ---------------------------------------------------------------------------
# helpers


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is not None:
        arr = arr.astype(dtype)
    elif arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return Tensor(arr)


def _wrap_pair(a, b):
    # python scalars adopt the dtype of the tensor operand
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype if isinstance(b, Tensor) else None))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return a, b


def _result(data, parents, fn):
    req = not _NO_GRAD and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=req)
    if req and _ACTIVE:
        _ACTIVE[-1].record(out, parents, fn)
    return out


def unbroadcast(g, shape):
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = _wrap_pair(a, b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b):
    a, b = _wrap_pair(a, b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b):
    a, b = _wrap_pair(a, b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)))


def div(a, b):
    a, b = _wrap_pair(a, b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def fn(g):
        return unbroadcast(g / bd, ad.shape), unbroadcast(-g * out / bd, bd.shape)

    return _result(out, (a, b), fn)


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,))


def power(a, p):
    p = float(p)
    ad = a.data
    return _result(ad**p, (a,), lambda g: (g * p * ad ** (p - 1),))


def exp(a):
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a):
    ad = a.data
    return _result(np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a):
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a):
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1 - out * out),))


def sigmoid(a):
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _result(out, (a,), lambda g: (g * out * (1 - out),))


def silu(a):
    ad = a.data
    s = 1.0 / (1.0 + np.exp(-ad))
    return _result(ad * s, (a,), lambda g: (g * (s * (1 + ad * (1 - s))),))


def gelu(a):
    # tanh approximation
    x = a.data
    c = float(np.sqrt(2.0 / np.pi))
    inner = c * (x + 0.044715 * (x * x * x))
    th = np.tanh(inner)
    out = 0.5 * x * (1 + th)

    def fn(g):
        d_inner = c * (1 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1 + th) + 0.5 * x * (1 - th * th) * d_inner),)

    return _result(out.astype(x.dtype, copy=False), (a,), fn)


def relu(a):
    ad = a.data
    return _result(np.maximum(ad, 0), (a,), lambda g: (g * (ad > 0),))


def minimum(a, value):
    """Clamp from above by a constant; the gradient is zero where clamped."""
    ad = a.data
    return _result(np.minimum(ad, value), (a,), lambda g: (g * (ad < value),))


def maximum(a, value):
    ad = a.data
    return _result(np.maximum(ad, value), (a,), lambda g: (g * (ad > value),))


def clip(a, lo, hi):
    ad = a.data
    keep = (ad > lo) & (ad < hi)
    return _result(np.clip(ad, lo, hi), (a,), lambda g: (g * keep,))


def where(mask, a, b):
    a, b = _wrap_pair(a, b)
    mask = np.asarray(mask, dtype=bool)
    sa, sb = a.shape, b.shape
    out = np.where(mask, a.data, b.data)
    return _result(out, (a, b), lambda g: (unbroadcast(np.where(mask, g, 0), sa), unbroadcast(np.where(mask, 0, g), sb)))


# ---------------------------------------------------------------------------
# contraction and layout


def matmul(a, b):
    a, b = _wrap_pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    try:
        out = ad @ bd
    except ValueError:
        raise ShapeError(f"matmul: cannot broadcast {a.shape} @ {b.shape}") from None

    def fn(g):
        if bd.ndim == 2 and ad.ndim > 2:
            # weight-style product: one flattened GEMM per gradient
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ bd.T).reshape(ad.shape) if a.requires_grad else None
            gb = ad.reshape(-1, ad.shape[-1]).T @ g2 if b.requires_grad else None
            return ga, gb
        ga = unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), fn)


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inv = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a, i, j):
    return _result(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def reshape(a, shape):
    shape = tuple(shape)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {src} into {shape}") from None
    return _result(out, (a,), lambda g: (g.reshape(src),))


def getitem(a, idx):
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.int64)
    src_shape, dtype = a.shape, a.dtype
    out = a.data[idx]

    def fn(g):
        full = np.zeros(src_shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return _result(np.array(out, copy=True), (a,), fn)


def take(a, indices, axis=0):
    """Gather along one axis with an integer index array."""
    indices = np.asarray(indices, dtype=np.int64)
    src_shape, dtype = a.shape, a.dtype

    def fn(g):
        full = np.zeros(src_shape, dtype=dtype)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return _result(np.take(a.data, indices, axis=axis), (a,), fn)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    datas = [t.data for t in tensors]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[d.shape for d in datas]} on axis {axis}") from None
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]
    return _result(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)
    return _result(out, tuple(tensors), lambda g: tuple(np.squeeze(x, axis) for x in np.split(g, n, axis=axis)))


def broadcast_to(a, shape):
    src = a.shape
    return _result(np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (unbroadcast(g, src),))


# ---------------------------------------------------------------------------
# reductions


def sum_axis(a, axis=None, keepdims=False):
    src = a.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), fn)


def mean(a, axis=None, keepdims=False):
    src = a.shape
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([src[ax] for ax in axes]))

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, src).copy(),)

    return _result(np.asarray(a.data.mean(axis=axis, keepdims=keepdims)), (a,), fn)


def cumsum(a, axis=0):
    def fn(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _result(np.cumsum(a.data, axis=axis), (a,), fn)


def max_pool2d(a, k):
    """Non-overlapping ``k``×``k`` max pooling over the last two axes."""
    *lead, h, w = a.shape
    if h % k or w % k:
        raise ShapeError(f"max_pool2d: spatial shape {(h, w)} not divisible by {k}")
    blocks = a.data.reshape(*lead, h // k, k, w // k, k)
    blocks = np.moveaxis(blocks, -3, -2).reshape(*lead, h // k, w // k, k * k)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def fn(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(*lead, h // k, w // k, k, k)
        return (np.moveaxis(gb, -2, -3).reshape(*lead, h, w),)

    return _result(out, (a,), fn)


# ---------------------------------------------------------------------------
# normalisation


def softmax(a, axis=-1):
    x = a.data
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    out = z / z.sum(axis=axis, keepdims=True)

    def fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), fn)


def layer_norm(a, eps=1e-5):
    """Normalise over the last axis, no affine. Constant input maps to zeros."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = xc * inv

    def fn(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * out).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - out * gx),)

    return _result(out, (a,), fn)


def check_finite(t, what="tensor"):
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values in {what}")
    return t
