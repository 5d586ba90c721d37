"""Differentiable primitives.

Each function takes tensors (or array-likes, treated as constants), computes
the forward value with numpy and registers the adjoint on the tape.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_result


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    else:
        a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}") from None
    return a, b


def _like(x: Tensor, value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=x.dtype))


# -- arithmetic -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    return make_result(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return make_result(out, (a, b), lambda g: (g / bd, -g * out / bd), "div")


def neg(x: Tensor) -> Tensor:
    return make_result(-x.data, (x,), lambda g: (-g,), "neg")


def pow_const(x: Tensor, c: float) -> Tensor:
    """``x ** c`` for a constant exponent."""
    xd = x.data
    return make_result(xd ** c, (x,), lambda g: (g * c * xd ** (c - 1),), "pow_const")


def pow(x: Tensor, gamma) -> Tensor:
    """``x ** gamma`` for ``x >= 0`` and a (possibly learnable) exponent.

    The adjoint is clamped to 0 where ``x == 0``: both d/dx (infinite for
    gamma < 1) and d/dgamma (``0 * log 0``).
    """
    x = as_tensor(x)
    gamma = _like(x, gamma)
    xd, gd = x.data, gamma.data
    if np.any(xd < 0):
        raise ValueError("pow requires x >= 0")
    out = xd ** gd
    pos = xd > 0

    def adjoint(g):
        safe = np.where(pos, xd, 1)
        dx = np.where(pos, gd * safe ** (gd - 1), 0) * g
        dgamma = np.where(pos, out * np.log(safe), 0) * g
        return dx, dgamma

    return make_result(out, (x, gamma), adjoint, "pow")


def matmul(a, b) -> Tensor:
    a, b = _pair_matmul(a, b)
    ad, bd = a.data, b.data
    out = ad @ bd

    def adjoint(g):
        da = db = None
        if a.requires_grad:
            if bd.ndim == 1:
                da = np.multiply.outer(g, bd)
            else:
                da = g @ np.swapaxes(bd, -1, -2)
        if b.requires_grad:
            if ad.ndim == 1:
                db = np.multiply.outer(ad, g)
            elif bd.ndim == 1:
                db = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1)
            elif bd.ndim == 2:
                db = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                db = np.swapaxes(ad, -1, -2) @ g
        return da, db

    return make_result(out, (a, b), adjoint, "matmul")


def _pair_matmul(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    ka = a.shape[-1]
    kb = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if a.ndim == 0 or b.ndim == 0 or ka != kb:
        raise ShapeError(f"matmul shape mismatch: {a.shape} vs {b.shape}")
    return a, b


# -- elementwise functions ---------------------------------------------------

def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    xd = x.data
    return make_result(np.log(xd), (x,), lambda g: (g / xd,), "log")


def sin(x: Tensor) -> Tensor:
    xd = x.data
    return make_result(np.sin(xd), (x,), lambda g: (g * np.cos(xd),), "sin")


def cos(x: Tensor) -> Tensor:
    xd = x.data
    return make_result(np.cos(xd), (x,), lambda g: (-g * np.sin(xd),), "cos")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_result(out, (x,), lambda g: (g * (1 - out * out),), "tanh")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return make_result(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def softplus(x: Tensor) -> Tensor:
    xd = x.data
    out = np.logaddexp(0, xd).astype(xd.dtype, copy=False)
    return make_result(out, (x,), lambda g: (g * _sigmoid(xd),), "softplus")


def abs(x: Tensor) -> Tensor:
    xd = x.data
    return make_result(np.abs(xd), (x,), lambda g: (g * np.sign(xd),), "abs")


def sign(x: Tensor) -> Tensor:
    """Elementwise sign; its derivative is zero almost everywhere."""
    return make_result(np.sign(x.data), (x,), lambda g: (None,), "sign")


def where(cond, a, b) -> Tensor:
    """Select ``a`` where ``cond`` is true, else ``b``. ``cond`` is a constant."""
    a, b = _pair(a, b)
    c = np.asarray(cond, dtype=bool)
    out = np.where(c, a.data, b.data)
    return make_result(out, (a, b), lambda g: (np.where(c, g, 0), np.where(c, 0, g)), "where")


# -- reductions ----------------------------------------------------------------

def _expand(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    return make_result(np.asarray(out), (x,), lambda g: (_expand(g, shape, axis, keepdims),), "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape
    n = x.size if axis is None else int(np.prod([shape[a] for a in np.atleast_1d(axis)]))
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    return make_result(
        np.asarray(out), (x,), lambda g: (_expand(g, shape, axis, keepdims) / n,), "mean"
    )


def max_over_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Maximum along ``axis``; the gradient goes to the first arg-max."""
    xd = x.data
    idx = np.argmax(xd, axis=axis)
    out = np.take_along_axis(xd, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def adjoint(g):
        dx = np.zeros_like(xd)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(dx, np.expand_dims(idx, axis), gk, axis=axis)
        return (dx,)

    return make_result(out, (x,), adjoint, "max")


def cumsum(x: Tensor, axis: int) -> Tensor:
    out = np.cumsum(x.data, axis=axis)

    def adjoint(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return make_result(out, (x,), adjoint, "cumsum")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    z = np.exp(xd - np.max(xd, axis=axis, keepdims=True))
    out = z / np.sum(z, axis=axis, keepdims=True)

    def adjoint(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return make_result(out, (x,), adjoint, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    shifted = xd - np.max(xd, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))

    def adjoint(g):
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return make_result(out, (x,), adjoint, "log_softmax")


# -- shape manipulation ---------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return make_result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, tuple(axes))


def expand_dims(x: Tensor, axis: int) -> Tensor:
    shape = list(x.shape)
    axis = axis if axis >= 0 else x.ndim + 1 + axis
    shape.insert(axis, 1)
    return reshape(x, tuple(shape))


def getitem(x: Tensor, index) -> Tensor:
    """Basic or advanced indexing; the adjoint scatters back with ``np.add.at``."""
    if isinstance(index, Tensor):
        raise TypeError("index with numpy arrays, not tensors")
    xd = x.data
    out = xd[index]

    def adjoint(g):
        dx = np.zeros_like(xd)
        np.add.at(dx, index, g)
        return (dx,)

    return make_result(np.array(out, copy=True), (x,), adjoint, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat shape mismatch: {ref} vs {t.shape} along axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + sizes)

    def adjoint(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))
        )

    return make_result(out, tensors, adjoint, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return concat([expand_dims(as_tensor(t), axis) for t in tensors], axis=axis)


def pad(x: Tensor, axis: int, before: int, after: int) -> Tensor:
    """Zero-pad ``x`` along one axis."""
    widths = [(0, 0)] * x.ndim
    widths[axis] = (before, after)
    n = x.shape[axis]
    out = np.pad(x.data, widths)

    def adjoint(g):
        return (np.take(g, np.arange(before, before + n), axis=axis),)

    return make_result(out, (x,), adjoint, "pad")


def unfold(x: Tensor, axis: int, size: int, step: int) -> Tensor:
    """Overlapping windows of ``size`` taken every ``step`` along ``axis``.

    Result shape is ``x.shape[:axis] + (n_windows, size) + x.shape[axis+1:]``
    with ``n_windows = (n - size) // step + 1``.
    """
    xd = np.moveaxis(x.data, axis, 0)
    n = xd.shape[0]
    if n < size:
        raise ShapeError(f"unfold: length {n} shorter than window {size}")
    count = (n - size) // step + 1
    starts = np.arange(count) * step
    frames = np.stack([xd[starts + w] for w in range(size)], axis=1)  # (count, size, ...)
    out = np.ascontiguousarray(np.moveaxis(frames, (0, 1), (axis, axis + 1)))

    def adjoint(g):
        gm = np.moveaxis(g, (axis, axis + 1), (0, 1))  # (count, size, ...)
        dx = np.zeros_like(xd)
        last = starts[-1]
        for w in range(size):
            dx[w : w + last + 1 : step] += gm[:, w]
        return (np.moveaxis(dx, 0, axis),)

    return make_result(out, (x,), adjoint, "unfold")


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Rows of ``table`` gathered by integer ``indices`` (any shape)."""
    idx = np.asarray(indices, dtype=np.int64)
    n_rows = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise IndexError(f"embedding index out of range [0, {n_rows})")
    out = table.data[idx]

    def adjoint(g):
        flat = idx.reshape(-1)
        onehot = np.zeros((flat.size, n_rows), dtype=g.dtype)
        onehot[np.arange(flat.size), flat] = 1
        return ((onehot.T @ g.reshape(flat.size, -1)).reshape(table.shape),)

    return make_result(out, (table,), adjoint, "embedding")


# -- gradient control ---------------------------------------------------------------

def detach(x: Tensor) -> Tensor:
    """Same values, cut from the tape."""
    return Tensor(x.data)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout. Identity when not training or ``rate == 0``."""
    if not training or rate <= 0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, keep)
