"""Real FFT pair with hand-derived adjoints.

Spectra are carried as :class:`ComplexPair` (real and imaginary tensors) so the
rest of the engine stays real-valued.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor, make_result


@dataclass
class ComplexPair:
    re: Tensor
    im: Tensor

    @property
    def shape(self) -> tuple:
        return self.re.shape

    def __mul__(self, other: "ComplexPair") -> "ComplexPair":
        return ComplexPair(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    def scale(self, factor) -> "ComplexPair":
        return ComplexPair(self.re * factor, self.im * factor)

    def to_numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


def _bin_weights(n: int, m: int, dtype) -> np.ndarray:
    """1 for DC (and Nyquist when ``n`` is even), 2 for the paired bins."""
    c = np.full(m, 2.0, dtype=dtype)
    c[0] = 1.0
    if n % 2 == 0:
        c[-1] = 1.0
    return c


def _along(v: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = -1
    return v.reshape(shape)


def _rfft_raw(x: Tensor, axis: int, n: int) -> tuple[Tensor, Tensor]:
    xd = x.data
    length = xd.shape[axis]
    spec = np.fft.rfft(xd, n=n, axis=axis)
    dtype = xd.dtype
    re_data = spec.real.astype(dtype)
    im_data = spec.imag.astype(dtype)
    m = n // 2 + 1
    c = _along(_bin_weights(n, m, dtype), axis, xd.ndim)

    def grad_x(g_re, g_im):
        # d/dx_t = Re sum_k G_k e^{+i 2 pi k t / n}; irfft doubles the paired bins, so undo it
        g = (g_re + 1j * g_im) / c
        full = np.fft.irfft(g, n=n, axis=axis) * n
        return np.take(full, np.arange(length), axis=axis).astype(dtype)

    # Real and imaginary parts are separate tape nodes sharing one parent; each
    # contributes its own half of the adjoint.
    re = make_result(re_data, (x,), lambda g: (grad_x(g, np.zeros_like(g)),), "rfft.re")
    im = make_result(im_data, (x,), lambda g: (grad_x(np.zeros_like(g), g),), "rfft.im")
    return re, im


def rfft(x: Tensor, axis: int = -1, n: Optional[int] = None) -> ComplexPair:
    """Real FFT along ``axis``; ``n`` larger than the length zero-pads."""
    axis = axis % x.ndim
    length = x.shape[axis]
    if length < 1:
        raise ShapeError("rfft needs axis length >= 1")
    n = length if n is None else int(n)
    if n < length:
        raise ShapeError(f"rfft: n={n} shorter than input length {length}")
    re, im = _rfft_raw(x, axis, n)
    return ComplexPair(re, im)


def irfft(spec: ComplexPair, axis: int = -1, n: Optional[int] = None) -> Tensor:
    """Inverse of :func:`rfft`; ``n`` is the output length.

    The imaginary parts of the DC and Nyquist bins are ignored, as in
    ``numpy.fft.irfft``; their adjoints are therefore zero.
    """
    re, im = spec.re, spec.im
    if re.shape != im.shape:
        raise ShapeError(f"irfft: real/imag shapes differ {re.shape} vs {im.shape}")
    axis = axis % re.ndim
    m = re.shape[axis]
    n = 2 * (m - 1) if n is None else int(n)
    if n < 1 or n // 2 + 1 != m:
        raise ShapeError(f"irfft: {m} bins do not match output length {n}")
    dtype = re.dtype
    out = np.fft.irfft(re.data + 1j * im.data, n=n, axis=axis).astype(dtype)
    c = _along(_bin_weights(n, m, dtype), axis, re.ndim)

    def adjoint(g):
        gs = np.fft.rfft(g, axis=axis) * (c / n)
        return gs.real.astype(dtype), gs.imag.astype(dtype)

    return make_result(out, (re, im), adjoint, "irfft")


def phase_ramp(shift: Tensor, n: int, dtype=None) -> ComplexPair:
    """``exp(-i * k * shift)`` for bins ``k = 0..n//2`` (shift-theorem ramp).

    ``shift`` may have any shape ``S``; the result has shape ``S + (n//2+1,)``.
    A shift of ``2*pi/n`` moves a length-``n`` signal forward by one sample.
    """
    dtype = dtype or shift.dtype
    k = np.arange(n // 2 + 1, dtype=dtype)
    angle = ops.mul(ops.expand_dims(shift, -1), k)
    return ComplexPair(ops.cos(angle), ops.neg(ops.sin(angle)))
