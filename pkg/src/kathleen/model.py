"""The full classifier: frontend, sequencer, head, plus parameter accounting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor, default_dtype, get_default_dtype
from .channels import Sequencer
from .config import ModelConfig
from .frontend import Frontend
from .head import Head
from .nn import Module, make_rng

# Display grouping for the accounting table: (row label, parameter-name prefix).
_GROUPS = (
    ("encoder.wavetable", "frontend.encoder."),
    ("frontend.power_law_gate", "frontend.plg."),
    ("frontend.freq_pattern", "frontend.freq_pattern."),
    ("frontend.phase_shift", "frontend.phase_shift."),
    ("frontend.basis_expansion", "frontend.basis."),
    ("phase_harmonics.phases", "frontend.harmonics.phi"),
    ("phase_harmonics.projection", "frontend.harmonics."),
    ("reverb.alpha_pos", "sequencer.reverb.alpha_pos"),
    ("reverb.matrices", "sequencer.reverb."),
    ("conv", "sequencer.conv."),
    ("psi.consonance", "sequencer.consonance."),
    ("psi.dissonance", "sequencer.dissonance."),
    ("diagnostic", "sequencer.eps_diag"),
    ("head", "head."),
)


@dataclass
class Forward:
    hidden: Tensor  # H', [B, L', d]
    sequenced: Tensor  # Z, [B, L', d]
    logits: Tensor
    frame_mask: np.ndarray


class KathleenModel(Module):
    def __init__(self, cfg: Optional[ModelConfig] = None, seed: int = 42, dtype=None):
        super().__init__()
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        rng = make_rng(seed)
        with default_dtype(dtype or get_default_dtype()):
            self.frontend = Frontend(rng, cfg)
            self.sequencer = Sequencer(rng, cfg)
            self.head = Head(rng, cfg.d, cfg.num_classes, cfg.pooling)
        self.seed_dropout(seed)

    def seed_dropout(self, seed: int) -> None:
        """Dropout masks come from their own stream so they never disturb init."""
        rng = make_rng(seed + 0x5EED)
        self.frontend.dropout_rng = rng
        self.sequencer.dropout_rng = rng

    def forward(self, data: np.ndarray, mask: np.ndarray) -> Forward:
        hidden, fmask = self.frontend(data, mask)
        z = self.sequencer(hidden, fmask)
        return Forward(hidden, z, self.head(z, fmask), fmask)

    def __call__(self, data: np.ndarray, mask: np.ndarray) -> Tensor:
        return self.forward(data, mask).logits

    @property
    def dtype(self):
        return self.frontend.encoder.w.dtype


def parameter_groups(names_and_sizes) -> dict[str, int]:
    """Itemized parameter counts per display group (first matching prefix wins)."""
    counts = {label: 0 for label, _ in _GROUPS}
    counts["other"] = 0
    for name, size in names_and_sizes:
        for label, prefix in _GROUPS:
            if name.startswith(prefix):
                counts[label] += size
                break
        else:
            counts["other"] += size
    if not counts["other"]:
        del counts["other"]
    return counts


def parameter_report(model: KathleenModel) -> dict[str, int]:
    counts = parameter_groups((n, p.size) for n, p in model.named_parameters())
    counts["total"] = model.num_parameters()
    return counts


STRUCTURAL_EXPECTATIONS = {
    "encoder.wavetable": 256,
    "phase_harmonics.phases": 6,
    "reverb.alpha_pos": 256,
}
