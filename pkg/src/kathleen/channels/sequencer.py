"""Four-channel token sequencer over hidden states ``[B, L, d]``.

    Z = H + eps_diag * EPM(reverb(H), conv(H), consonance(H), dissonance(H))

``eps_diag`` (per feature, zero at init) is the self-diagnostic gate on the
merged signal, so a freshly initialized sequencer is the identity.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..autodiff import Tensor, conv1d_depthwise_separable, ops
from ..config import ModelConfig
from ..nn import Module, parameter
from .mixing import epm
from .psi import Consonance, Dissonance
from .reverb import Reverb


class ConvLite(Module):
    """Depthwise separable convolution, identity at init (centre tap 1, pointwise I)."""

    def __init__(self, d: int, kernel: int = 5):
        super().__init__()
        depth = np.zeros((kernel, d))
        depth[kernel // 2] = 1.0
        self.depthwise = parameter(depth)
        self.depth_bias = parameter(np.zeros(d))
        self.pointwise = parameter(np.eye(d))
        self.point_bias = parameter(np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d_depthwise_separable(
            x, self.depthwise, self.pointwise, self.depth_bias, self.point_bias
        )


class Sequencer(Module):
    CHANNELS = ("reverb", "conv", "consonance", "dissonance")

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        super().__init__()
        d = cfg.d
        self.cfg = cfg
        self.reverb = (
            Reverb(rng, d, cfg.l_max, cfg.gamma_min, cfg.gamma_max, cfg.chunk, cfg.extend_positions)
            if cfg.use_reverb
            else None
        )
        self.conv = ConvLite(d, cfg.conv_kernel) if cfg.use_conv else None
        self.consonance = (
            Consonance(rng, d, cfg.psi_iters, cfg.psi_coupling, cfg.psi_scale) if cfg.use_consonance else None
        )
        self.dissonance = Dissonance(rng, d, cfg.psi_scale) if cfg.use_dissonance else None
        self.eps_diag = parameter(np.zeros(d))
        self.dropout_rng: Optional[np.random.Generator] = None

    def channel_outputs(self, h: Tensor, mask: Optional[np.ndarray]) -> dict[str, Tensor]:
        out = {}
        if self.reverb is not None:
            out["reverb"] = self.reverb(h, mask)
        if self.conv is not None:
            out["conv"] = self.conv(h)
        if self.consonance is not None:
            out["consonance"] = self.consonance(h)
        if self.dissonance is not None:
            out["dissonance"] = self.dissonance(h)
        return out

    def merged(self, h: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        signals = list(self.channel_outputs(h, mask).values())
        mixed, _ = epm(signals, self.cfg.epm_eps, site="sequencer")
        return mixed

    def __call__(self, h: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        mixed = self.merged(h, mask)
        mixed = ops.dropout(mixed, self.cfg.dropout, self.dropout_rng, self.training)
        return h + self.eps_diag * mixed
