"""Raw bytes to hidden states.

Pipeline: wavetable encoding -> power-law gate -> damped-sinusoid filter bank
-> learned phase shifts (energy-mixed) -> sliding frames -> DCT-II basis
expansion -> phase harmonics with projection.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .autodiff import ComplexPair, Tensor, irfft, ops, phase_ramp, rfft
from .channels.mixing import epm_stacked
from .config import ModelConfig
from .nn import Linear, Module, parameter, softplus_inverse

N_BYTES = 256


def byte_phase_ramp(d: int, dtype) -> ComplexPair:
    """``exp(-i * 2*pi * k * b / 256)`` for every byte ``b`` and bin ``k``: ``[256, d//2+1]``.

    This is a circular shift by ``b * d / 256`` samples. With ``d = 256`` the
    shift is the integer ``b`` and the encoding is an exact permutation of
    ``w``; the 256 shifts are distinct, so the code is injective.
    """
    shifts = 2 * np.pi * np.arange(N_BYTES, dtype=np.float64) / N_BYTES
    k = np.arange(d // 2 + 1, dtype=np.float64)
    angle = np.outer(shifts, k)
    return ComplexPair(Tensor(np.cos(angle).astype(dtype)), Tensor(-np.sin(angle).astype(dtype)))


class WavetableEncoder(Module):
    """All 256 byte codes derived from one learnable vector ``w`` of length ``d``."""

    def __init__(self, rng: np.random.Generator, d: int):
        super().__init__()
        self.d = d
        self.w = parameter(rng.standard_normal(d))

    def table(self) -> Tensor:
        """Codes for every byte value, ``[256, d]``.

        Byte 0 has a zero rotation, so its row is ``w`` itself rather than a
        round trip through the transform.
        """
        spec = rfft(self.w)
        ramp = byte_phase_ramp(self.d, self.w.dtype)
        ramp = ComplexPair(ramp.re[1:], ramp.im[1:])
        rotated = ComplexPair(ops.expand_dims(spec.re, 0), ops.expand_dims(spec.im, 0)) * ramp
        return ops.concat([ops.expand_dims(self.w, 0), irfft(rotated, axis=-1, n=self.d)], axis=0)

    def __call__(self, data: np.ndarray, mask: np.ndarray) -> Tensor:
        return encode_with_table(self.table(), data, mask)


def encode_with_table(table: Tensor, data: np.ndarray, mask: np.ndarray) -> Tensor:
    """Gather rows of ``table`` for a ``[B, L]`` byte matrix; padded rows become 0."""
    out = ops.embedding(table, data)
    return ops.mul(out, _mask3(mask, out.dtype))


def _mask3(mask: np.ndarray, dtype) -> np.ndarray:
    return np.asarray(mask, dtype=dtype)[..., None]


class PowerLawGate(Module):
    """``sign(x) * |x| ** gamma`` with ``gamma = softplus(raw) > 0``; starts at identity."""

    def __init__(self, gamma: float = 1.0):
        super().__init__()
        self.raw_gamma = parameter(softplus_inverse(gamma))

    @property
    def gamma(self) -> Tensor:
        return ops.softplus(self.raw_gamma)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.mul(ops.sign(x), ops.pow(ops.abs(x), self.gamma))


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


class LearnedFreqPattern(Module):
    """Causal filter bank of damped sinusoids, mixed back to width ``d``.

    Filter ``f`` is ``exp(-softplus(decay_f) * t) * sin(freq_f * t + phase_f)``
    for ``t = 0..T-1``. The bank is mixed per feature by ``mix[f, i]``, which
    collapses to a single causal kernel per feature; it is applied by FFT
    convolution so the cost is ``O(L log L)`` instead of ``O(L * T)``.
    """

    def __init__(self, rng: np.random.Generator, d: int, filters: int, taps: int):
        super().__init__()
        self.taps = taps
        decay = np.geomspace(0.02, 0.5, filters)
        self.decay = parameter([softplus_inverse(v) for v in decay])
        self.freq = parameter(np.pi * (np.arange(filters) + 0.5) / filters)
        self.phase = parameter(np.full(filters, np.pi / 2))
        bound = 1.0 / np.sqrt(filters)
        self.mix = parameter(rng.uniform(-bound, bound, size=(filters, d)))

    def filters(self) -> Tensor:
        """Filter bank ``[T, F]``."""
        t = np.arange(self.taps, dtype=self.freq.dtype)[:, None]
        envelope = ops.exp(ops.mul(ops.neg(ops.softplus(self.decay)), t))
        carrier = ops.sin(ops.add(ops.mul(self.freq, t), self.phase))
        return ops.mul(envelope, carrier)

    def kernel(self) -> Tensor:
        """Per-feature causal kernel ``[T, d]``."""
        return ops.matmul(self.filters(), self.mix)

    def __call__(self, x: Tensor) -> Tensor:
        length = x.shape[1]
        n = next_pow2(length + self.taps - 1)
        xs = rfft(x, axis=1, n=n)
        ks = rfft(self.kernel(), axis=0, n=n)
        y = irfft(xs * ks, axis=1, n=n)
        return y[:, :length]


class ContinuousPhaseShift(Module):
    """``S`` learned linear-phase shifts along the sequence axis, fused by energy mixing.

    Shift ``s`` multiplies bin ``k`` of the sequence spectrum by
    ``exp(-i * k * delta_s)``: a circular delay of ``delta_s * L / (2*pi)`` samples.
    """

    def __init__(self, shifts: int, eps: float):
        super().__init__()
        self.eps = eps
        self.delta = parameter(2 * np.pi * np.arange(shifts) / shifts)

    def variants(self, x: Tensor) -> Tensor:
        """All shifted copies stacked as ``[B, S, L, d]``."""
        length = x.shape[1]
        spec = rfft(x, axis=1)
        ramp = phase_ramp(self.delta, length)  # [S, m]
        ramp = ComplexPair(ops.expand_dims(ramp.re, -1), ops.expand_dims(ramp.im, -1))
        spec = ComplexPair(ops.expand_dims(spec.re, 1), ops.expand_dims(spec.im, 1))
        return irfft(spec * ramp, axis=2, n=length)

    def __call__(self, x: Tensor) -> Tensor:
        mixed, _ = epm_stacked(self.variants(x), axis=1, eps=self.eps, site="phase_shift")
        return mixed


def dct2_matrix(window: int, basis: int, dtype) -> np.ndarray:
    """Orthonormal DCT-II rows ``[basis, window]``."""
    n = np.arange(window)
    m = np.arange(basis)[:, None]
    c = np.sqrt(2.0 / window) * np.cos(np.pi * (n + 0.5) * m / window)
    c[0] /= np.sqrt(2.0)
    return c.astype(dtype)


def frame_count(length: int, window: int, hop: int) -> int:
    return (max(length, window) - window) // hop + 1


def frame_mask(mask: np.ndarray, window: int, hop: int) -> np.ndarray:
    """A frame is valid iff any of its positions is valid."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[1] < window:
        mask = np.pad(mask, ((0, 0), (0, window - mask.shape[1])))
    count = frame_count(mask.shape[1], window, hop)
    idx = np.arange(count)[:, None] * hop + np.arange(window)
    return mask[:, idx].any(axis=-1)


class FreqBasisExpansion(Module):
    """Sliding frames (``window``, ``hop``) projected on ``basis`` DCT-II vectors per
    feature, then a learned linear map to width ``d``."""

    def __init__(self, rng: np.random.Generator, d: int, window: int, hop: int, basis: int):
        super().__init__()
        self.window, self.hop, self.basis = window, hop, basis
        self.proj = Linear(rng, basis * d, d)

    def frames(self, x: Tensor) -> Tensor:
        if x.shape[1] < self.window:
            x = ops.pad(x, 1, 0, self.window - x.shape[1])
        return ops.unfold(x, axis=1, size=self.window, step=self.hop)  # [B, L', W, d]

    def coefficients(self, frames: Tensor) -> Tensor:
        """DCT-II over the window axis: ``[B, L', W, d] -> [B, L', M, d]``."""
        c = dct2_matrix(self.window, self.basis, frames.dtype)
        return ops.matmul(c, frames)

    def __call__(self, x: Tensor) -> Tensor:
        coeffs = self.coefficients(self.frames(x))
        b, n, m, d = coeffs.shape
        return self.proj(ops.reshape(coeffs, (b, n, m * d)))


class PhaseHarmonics(Module):
    """``[x, sin(x * 2**0 + phi_0), ..., sin(x * 2**(K-1) + phi_{K-1})]`` then a linear map to ``d``."""

    def __init__(self, rng: np.random.Generator, d: int, harmonics: int):
        super().__init__()
        self.harmonics = harmonics
        self.phi = parameter(np.zeros(harmonics))
        self.proj = Linear(rng, (harmonics + 1) * d, d)

    def expand(self, x: Tensor) -> Tensor:
        """Pre-projection features, width ``(K + 1) * d``."""
        scales = (2.0 ** np.arange(self.harmonics)).astype(x.dtype)[:, None]
        xk = ops.expand_dims(x, -2)  # [..., 1, d]
        waves = ops.sin(ops.add(ops.mul(xk, scales), ops.expand_dims(self.phi, -1)))
        lead = x.shape[:-1]
        waves = ops.reshape(waves, lead + (self.harmonics * x.shape[-1],))
        return ops.concat([x, waves], axis=-1)

    def __call__(self, x: Tensor) -> Tensor:
        return self.proj(self.expand(x))


class Frontend(Module):
    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d
        self.encoder = WavetableEncoder(rng, d)
        self.plg = PowerLawGate() if cfg.use_plg else None
        self.freq_pattern = LearnedFreqPattern(rng, d, cfg.freq_filters, cfg.freq_kernel)
        self.phase_shift = ContinuousPhaseShift(cfg.shifts, cfg.epm_eps) if cfg.use_phase_shift else None
        self.basis = FreqBasisExpansion(rng, d, cfg.window, cfg.hop, cfg.basis)
        if cfg.use_phase_harmonics:
            self.harmonics = PhaseHarmonics(rng, d, cfg.harmonics)
        else:
            self.harmonics = Linear(rng, d, d)
        self.dropout_rng: Optional[np.random.Generator] = None

    def byte_table(self) -> Tensor:
        table = self.encoder.table()
        return self.plg(table) if self.plg is not None else table

    def __call__(self, data: np.ndarray, mask: np.ndarray) -> tuple[Tensor, np.ndarray]:
        """``[B, L]`` bytes and validity mask to hidden states ``[B, L', d]`` and frame mask."""
        m3 = _mask3(mask, self.encoder.w.dtype)
        # The gate is elementwise, so gating the 256-row table equals gating every position.
        x = encode_with_table(self.byte_table(), data, mask)
        x = ops.mul(self.freq_pattern(x), m3)
        if self.phase_shift is not None:
            x = ops.mul(self.phase_shift(x), m3)
        h = self.harmonics(self.basis(x))
        h = ops.dropout(h, self.cfg.dropout, self.dropout_rng, self.training)
        fmask = frame_mask(mask, self.cfg.window, self.cfg.hop)
        h = ops.mul(h, _mask3(fmask, h.dtype))
        return h, fmask
