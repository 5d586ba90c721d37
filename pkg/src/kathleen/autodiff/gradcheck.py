"""Central finite differences against tape gradients (64-bit)."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """``max|a - n| / max(max|a|, max|n|)``, i.e. error relative to the tensor's scale."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numerical_grad(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d arr by central differences; ``arr`` is perturbed in place and restored."""
    if not isinstance(arr, np.ndarray) or not arr.flags.c_contiguous:
        raise TypeError("numerical_grad perturbs in place and needs a C-contiguous ndarray")
    grad = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    rng: np.random.Generator,
    h: float = 1e-5,
) -> list[float]:
    """Relative error of tape vs central-difference gradients for each input.

    ``fn`` maps tensors to a tensor of any shape; it is reduced to a scalar
    with a fixed random projection so every adjoint entry is exercised.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*tensors)
    proj = rng.standard_normal(out.shape)
    (out * proj).sum().backward()

    def scalar() -> float:
        return float(np.sum(fn(*[Tensor(a) for a in arrays]).data * proj))

    errors = []
    for t, a in zip(tensors, arrays):
        numeric = numerical_grad(scalar, a, h)
        analytic = t.grad if t.grad is not None else np.zeros_like(a)
        errors.append(relative_error(analytic, numeric))
    return errors
