"""Sequence-to-vector pooling and the classifier."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, ops
from .nn import Linear, Module, parameter


# finite stand-in for -inf so the non-finite guard stays quiet
_NEG = -1e30


def _check_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=1).all():
        raise ValueError("every sequence needs at least one valid position")
    return mask


def attention_pool(z: Tensor, mask: np.ndarray, query: Tensor) -> Tensor:
    """``sum_t softmax_t(q . z_t) z_t`` over valid positions: ``[B, L, d] -> [B, d]``."""
    mask = _check_mask(mask)
    scores = ops.matmul(z, query)  # [B, L]
    scores = ops.where(mask, scores, _NEG)
    weights = ops.softmax(scores, axis=1)
    return ops.sum(z * ops.expand_dims(weights, -1), axis=1)


def max_pool(z: Tensor, mask: np.ndarray) -> Tensor:
    mask = _check_mask(mask)
    masked = ops.where(mask[..., None], z, _NEG)
    return ops.max_over_axis(masked, axis=1)


def mean_pool(z: Tensor, mask: np.ndarray) -> Tensor:
    mask = _check_mask(mask).astype(z.dtype)[..., None]
    return ops.sum(z * mask, axis=1) / mask.sum(axis=1)


def dual_pool(z: Tensor, mask: np.ndarray, query: Tensor) -> Tensor:
    """Attention pooling and max pooling concatenated: ``[B, 2d]``."""
    return ops.concat([attention_pool(z, mask, query), max_pool(z, mask)], axis=-1)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels``."""
    labels = np.asarray(labels, dtype=np.int64)
    n, classes = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"label out of range [0, {classes})")
    logp = ops.log_softmax(logits, axis=-1)
    picked = logp[np.arange(n), labels]
    return -ops.mean(picked)


class Head(Module):
    def __init__(self, rng: np.random.Generator, d: int, num_classes: int, pooling: str = "dual"):
        super().__init__()
        self.pooling = pooling
        self.query = parameter(np.zeros(d))
        width = 2 * d if pooling == "dual" else d
        self.classifier = Linear(rng, width, num_classes)

    def pool(self, z: Tensor, mask: np.ndarray) -> Tensor:
        if self.pooling == "mean":
            return mean_pool(z, mask)
        return dual_pool(z, mask, self.query)

    def __call__(self, z: Tensor, mask: np.ndarray) -> Tensor:
        return self.classifier(self.pool(z, mask))
