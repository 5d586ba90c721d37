"""End-to-end gradient check of the whole classifier on a tiny 64-bit config.

Every parameter tensor's tape gradient is compared with central finite
differences of the loss. Energy-proportional mixing weights are excluded
from gradient flow by design, so finite differences are taken with those
weights frozen at their first-call values (the function the tape actually
differentiates), and the mixing sites themselves are verified separately
against their hand-written adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor, default_dtype
from .autodiff.gradcheck import numerical_grad, relative_error
from .channels.mixing import epm, epm_stacked, frozen_mixing
from .config import ModelConfig
from .head import cross_entropy
from .model import KathleenModel
from .nn import make_rng

TOLERANCE = 1e-3
STOP_GRADIENT_STATUS = "SKIPPED-FD / PASS-adjoint"

TINY = ModelConfig(
    d=8,
    num_classes=2,
    freq_filters=4,
    freq_kernel=6,
    window=4,
    hop=2,
    basis=4,
    harmonics=6,
    shifts=4,
    l_max=7,  # (16 - 4) // 2 + 1 frames
    chunk=4,
    dropout=0.0,
)

# Parameters that start at zero and would hide whole sub-paths from the check.
_ACTIVATE = (
    "sequencer.eps_diag",
    "sequencer.reverb.w_out",
    "sequencer.reverb.alpha_pos",
    "sequencer.consonance.eps",
    "sequencer.dissonance.eps",
    "head.query",
    "frontend.harmonics.phi",
)


@dataclass
class GradRow:
    name: str
    size: int
    rel_err: float
    status: str

    @property
    def ok(self) -> bool:
        return self.status != "FAIL"


def tiny_problem(seed: int = 0, cfg: ModelConfig = TINY, batch: int = 2, length: int = 16):
    """A float64 model with every gate opened, plus a fixed masked batch."""
    rng = make_rng(seed)
    with default_dtype(np.float64):
        model = KathleenModel(cfg, seed=seed, dtype=np.float64)
    model.eval()
    for name, p in model.named_parameters():
        if name in _ACTIVATE:
            p.data = np.asarray(0.5 * rng.standard_normal(p.shape))
    data = rng.integers(0, 256, size=(batch, length), dtype=np.uint8)
    mask = np.ones((batch, length), dtype=bool)
    mask[1:, length - length // 4 :] = False  # second row is shorter
    data[~mask] = 0
    labels = np.arange(batch) % cfg.num_classes
    return model, data, mask, labels


def check_model(
    model: KathleenModel, data: np.ndarray, mask: np.ndarray, labels: np.ndarray, h: float = 1e-6
) -> list[GradRow]:
    """Tape vs finite-difference gradients for every parameter tensor."""
    params = dict(model.named_parameters())
    rows = []
    with frozen_mixing():
        model.zero_grad()
        cross_entropy(model(data, mask), labels).backward()
        analytic = {n: (p.grad if p.grad is not None else np.zeros_like(p.data)) for n, p in params.items()}

        def loss() -> float:
            return float(cross_entropy(model(data, mask), labels).data)

        for name, p in params.items():
            numeric = numerical_grad(loss, p.data, h)
            err = relative_error(analytic[name], numeric)
            rows.append(GradRow(name, p.size, err, "PASS" if err < TOLERANCE else "FAIL"))
    return rows


def check_mixing_adjoints(seed: int = 0, shape: tuple = (2, 7, 8), k: int = 4) -> list[GradRow]:
    """Mixing weights carry no gradient: each input's adjoint is its weight times the upstream gradient."""
    rng = make_rng(seed)
    rows = []
    signals = [Tensor(rng.standard_normal(shape), requires_grad=True) for _ in range(k)]
    g = rng.standard_normal(shape)
    mixed, weights = epm(signals)
    (mixed * g).sum().backward()
    err = max(relative_error(s.grad, weights[i] * g) for i, s in enumerate(signals))
    rows.append(GradRow("mixing.sequencer", 0, err, STOP_GRADIENT_STATUS if err < 1e-12 else "FAIL"))

    stacked = Tensor(rng.standard_normal((shape[0], k) + shape[1:]), requires_grad=True)
    mixed, weights = epm_stacked(stacked, axis=1)
    (mixed * g).sum().backward()
    err = relative_error(stacked.grad, weights * g[:, None])
    rows.append(GradRow("mixing.phase_shift", 0, err, STOP_GRADIENT_STATUS if err < 1e-12 else "FAIL"))
    return rows


def run(seed: int = 0, cfg: Optional[ModelConfig] = None) -> list[GradRow]:
    model, data, mask, labels = tiny_problem(seed, cfg or TINY)
    return check_model(model, data, mask, labels) + check_mixing_adjoints(seed)


def format_table(rows: list[GradRow]) -> str:
    width = max(len(r.name) for r in rows)
    lines = [f"{'tensor':<{width}}  {'size':>6}  {'max_rel_err':>11}  status"]
    for r in rows:
        lines.append(f"{r.name:<{width}}  {r.size:>6}  {r.rel_err:>11.3e}  {r.status}")
    return "\n".join(lines)
