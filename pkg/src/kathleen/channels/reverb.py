"""Content-dependent reverb with positional decay modulation.

    v_t     = W_in h_t
    gamma_t = gamma_min + (gamma_max - gamma_min) * sigmoid(W_gate h_t + alpha_t)
    s_t     = gamma_t * s_{t-1} + (1 - gamma_t) * v_t,   s_0 = 0
    o_t     = W_out s_t

``alpha`` is one learned scalar per position, broadcast over the feature axis.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..autodiff import ShapeError, Tensor, ops
from ..autodiff.tensor import make_result
from ..config import ConfigError
from ..nn import Module, parameter, uniform_fan_in


def _check_decay(a: np.ndarray) -> None:
    if a.size and not (np.all(a > 0) and np.all(a <= 1)):
        raise ValueError(
            f"decay must lie in (0, 1] for the log-space scan; got range [{a.min()}, {a.max()}]"
        )


def scan_chunked(
    a: np.ndarray, b: np.ndarray, chunk: int = 16, carry: Optional[np.ndarray] = None
) -> np.ndarray:
    """Solve ``s_t = a_t * s_{t-1} + b_t`` along axis 1 of ``[B, L, d]`` arrays.

    Inside each chunk of ``chunk`` steps the prefix products
    ``P_t = exp(cumsum(log a))`` turn the recurrence into
    ``s_t = P_t * (carry + cumsum(b / P))``; only the carry crosses chunk
    boundaries. ``a`` must lie in ``(0, 1]``. With ``a >= 0.5`` and
    ``chunk = 16``, ``P`` stays above ``0.5**16 ~ 1.5e-5``.
    """
    _check_decay(a)
    batch, length, width = a.shape
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    s = np.zeros((batch, width), dtype=out.dtype) if carry is None else carry.astype(out.dtype)
    for start in range(0, length, chunk):
        stop = min(start + chunk, length)
        log_p = np.cumsum(np.log(a[:, start:stop]), axis=1)
        p = np.exp(log_p)
        block = p * (s[:, None, :] + np.cumsum(b[:, start:stop] / p, axis=1))
        out[:, start:stop] = block
        s = block[:, -1]
    return out


def scan_sequential(a: np.ndarray, b: np.ndarray, carry: Optional[np.ndarray] = None) -> np.ndarray:
    """Step-by-step reference for :func:`scan_chunked`."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    s = np.zeros((a.shape[0], a.shape[2]), dtype=out.dtype) if carry is None else carry
    for t in range(a.shape[1]):
        s = a[:, t] * s + b[:, t]
        out[:, t] = s
    return out


def reverb_scan(gamma: Tensor, v: Tensor, chunk: int = 16) -> Tensor:
    """``s_t = gamma_t * s_{t-1} + (1 - gamma_t) * v_t`` from ``s_0 = 0``, ``[B, L, d]``.

    The adjoint is the reversed recurrence ``lam_t = g_t + gamma_{t+1} * lam_{t+1}``,
    evaluated with the same chunked scan:
    ``dv_t = (1 - gamma_t) * lam_t`` and ``dgamma_t = lam_t * (s_{t-1} - v_t)``.
    """
    gd, vd = gamma.data, v.data
    if gd.shape != vd.shape or gd.ndim != 3:
        raise ShapeError(f"reverb_scan: gamma {gd.shape} vs v {vd.shape}")
    s = scan_chunked(gd, (1 - gd) * vd, chunk)

    def adjoint(g):
        a_rev = np.ones_like(gd)
        a_rev[:, :-1] = gd[:, 1:]
        lam = scan_chunked(a_rev[:, ::-1], g[:, ::-1], chunk)[:, ::-1]
        s_prev = np.zeros_like(s)
        s_prev[:, 1:] = s[:, :-1]
        return lam * (s_prev - vd), lam * (1 - gd)

    return make_result(s, (gamma, v), adjoint, "reverb_scan")


class Reverb(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        d: int,
        l_max: int = 256,
        gamma_min: float = 0.50,
        gamma_max: float = 0.999,
        chunk: int = 16,
        extend_positions: bool = False,
    ):
        super().__init__()
        self.gamma_min, self.gamma_max, self.chunk = gamma_min, gamma_max, chunk
        self.extend_positions = extend_positions
        self.w_in = parameter(uniform_fan_in(rng, (d, d), d))
        self.w_gate = parameter(uniform_fan_in(rng, (d, d), d))
        self.w_out = parameter(np.zeros((d, d)))
        self.alpha_pos = parameter(np.zeros(l_max))

    def positional_bias(self, length: int) -> Tensor:
        l_max = self.alpha_pos.shape[0]
        if length <= l_max:
            return self.alpha_pos[:length]
        if not self.extend_positions:
            raise ConfigError(f"sequence of {length} positions exceeds l_max={l_max}")
        # positions past l_max get a constant zero bias
        return ops.pad(self.alpha_pos, 0, 0, length - l_max)

    def gates(self, h: Tensor, mask: Optional[np.ndarray] = None, use_position: bool = True) -> Tensor:
        """Decay ``gamma_t`` in ``(gamma_min, gamma_max)``; 1 at padded positions."""
        logit = ops.matmul(h, self.w_gate)
        if use_position:
            logit = logit + ops.reshape(self.positional_bias(h.shape[1]), (1, h.shape[1], 1))
        gamma = self.gamma_min + (self.gamma_max - self.gamma_min) * ops.sigmoid(logit)
        if mask is not None:
            gamma = ops.where(np.asarray(mask, bool)[..., None], gamma, 1.0)
        return gamma

    def state(self, h: Tensor, mask: Optional[np.ndarray] = None, use_position: bool = True) -> Tensor:
        v = ops.matmul(h, self.w_in)
        if mask is not None:
            v = ops.mul(v, np.asarray(mask, v.dtype)[..., None])
        return reverb_scan(self.gates(h, mask, use_position), v, self.chunk)

    def __call__(self, h: Tensor, mask: Optional[np.ndarray] = None, use_position: bool = True) -> Tensor:
        return ops.matmul(self.state(h, mask, use_position), self.w_out)
