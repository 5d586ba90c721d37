"""Energy-proportional mixing: parameter-free fusion of same-shaped signals."""

from __future__ import annotations

import contextlib
from typing import Iterator, Optional, Sequence

import numpy as np

from ..autodiff import Tensor, ops

_frozen: Optional[dict] = None


@contextlib.contextmanager
def frozen_mixing() -> Iterator[dict]:
    """Within this block each named mixing site keeps the weights from its
    first call. Finite differences then see the same function the tape
    differentiates (weights held constant)."""
    global _frozen
    prev = _frozen
    _frozen = {}
    try:
        yield _frozen
    finally:
        _frozen = prev


def _site(site: Optional[str], weights: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if weights is None and site is not None and _frozen is not None:
        return _frozen.get(site)
    return weights


def _remember(site: Optional[str], weights: np.ndarray) -> None:
    if site is not None and _frozen is not None:
        _frozen.setdefault(site, weights)


def epm_weights(signals: np.ndarray, eps: float) -> np.ndarray:
    """Mixing weights for signals stacked on axis 0 as ``[K, ..., d]``.

    Energy is the mean absolute value over the last axis, so weights are
    per (batch, position); they are plain arrays and carry no gradient.
    """
    energy = np.mean(np.abs(signals), axis=-1, keepdims=True)
    return energy / (energy.sum(axis=0, keepdims=True) + eps)


def epm(
    signals: Sequence[Tensor],
    eps: float = 1e-6,
    weights: Optional[np.ndarray] = None,
    site: Optional[str] = None,
) -> tuple[Tensor, np.ndarray]:
    """Weighted sum of ``signals`` with weights from their detached energies.

    ``weights`` overrides the computed weights (used to freeze mixing while
    finite-differencing). Returns the mix and the weights used.
    """
    if not signals:
        raise ValueError("epm needs at least one signal")
    weights = _site(site, weights)
    if weights is None:
        weights = epm_weights(np.stack([s.data for s in signals]), eps)
    _remember(site, weights)
    out = None
    for k, z in enumerate(signals):
        term = ops.mul(z, weights[k].astype(z.dtype, copy=False))
        out = term if out is None else out + term
    return out, weights


def epm_stacked(
    stacked: Tensor,
    axis: int,
    eps: float = 1e-6,
    weights: Optional[np.ndarray] = None,
    site: Optional[str] = None,
) -> tuple[Tensor, np.ndarray]:
    """Same as :func:`epm` for signals already stacked along ``axis``."""
    weights = _site(site, weights)
    if weights is None:
        weights = np.moveaxis(epm_weights(np.moveaxis(stacked.data, axis, 0), eps), 0, axis)
    _remember(site, weights)
    mixed = ops.sum(ops.mul(stacked, weights.astype(stacked.dtype, copy=False)), axis=axis)
    return mixed, weights
