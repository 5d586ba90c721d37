"""Depthwise 1-D convolution over the sequence axis of ``[B, L, d]`` tensors."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor, make_result


class ConvConfigError(ValueError):
    pass


def depthwise_correlate(x: Tensor, kernel: Tensor, pad_left: int, pad_right: int) -> Tensor:
    """``out[b, t, i] = sum_j kernel[j, i] * xpad[b, t + j, i]``.

    ``x`` is ``[B, L, d]``, ``kernel`` is ``[T, d]`` and ``xpad`` is ``x`` with
    ``pad_left``/``pad_right`` zeros on the sequence axis. Channel ``i`` of the
    output only sees channel ``i`` of the input.
    """
    if x.ndim != 3 or kernel.ndim != 2 or kernel.shape[1] != x.shape[2]:
        raise ShapeError(f"depthwise_correlate: x {x.shape} vs kernel {kernel.shape}")
    taps = kernel.shape[0]
    xd, kd = x.data, kernel.data
    length = xd.shape[1]
    xp = np.pad(xd, ((0, 0), (pad_left, pad_right), (0, 0)))
    out_len = xp.shape[1] - taps + 1
    if out_len < 1:
        raise ShapeError(f"depthwise_correlate: kernel of {taps} taps longer than padded input")
    out = np.zeros((xd.shape[0], out_len, xd.shape[2]), dtype=np.result_type(xd, kd))
    for j in range(taps):
        out += kd[j] * xp[:, j : j + out_len]

    def adjoint(g):
        dxp = np.zeros_like(xp)
        dk = np.empty_like(kd)
        for j in range(taps):
            dxp[:, j : j + out_len] += kd[j] * g
            dk[j] = np.einsum("btd,btd->d", xp[:, j : j + out_len], g)
        return dxp[:, pad_left : pad_left + length], dk

    return make_result(out, (x, kernel), adjoint, "depthwise_correlate")


def conv1d_depthwise_separable(
    x: Tensor,
    kernels: Tensor,
    pointwise: Tensor,
    depth_bias: Optional[Tensor] = None,
    point_bias: Optional[Tensor] = None,
) -> Tensor:
    """Same-length depthwise conv (odd kernel, symmetric zero padding) then a
    pointwise ``d x d`` mix."""
    taps = kernels.shape[0]
    if taps % 2 == 0:
        raise ConvConfigError(f"kernel size must be odd, got {taps}")
    half = taps // 2
    h = depthwise_correlate(x, kernels, half, half)
    if depth_bias is not None:
        h = h + depth_bias
    out = ops.matmul(h, pointwise)
    if point_bias is not None:
        out = out + point_bias
    return out
