"""Consonance and dissonance interference channels (elementwise)."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from ..nn import Module, parameter, softplus_inverse, uniform_fan_in


class Consonance(Module):
    """``psi <- tanh((a + c*psi) * (b + c*psi) / s)`` from ``psi = 0``, ``K`` times,
    with ``a = x`` and ``b = adapter(x)``; output ``eps * psi``."""

    def __init__(self, rng: np.random.Generator, d: int, iters: int = 4, coupling: float = 0.3, scale: float = 1.0):
        super().__init__()
        self.iters = iters
        self.adapter = parameter(uniform_fan_in(rng, (d, d), d))
        self.coupling = parameter(coupling)
        self.raw_scale = parameter(softplus_inverse(scale))
        self.eps = parameter(0.0)

    def field(self, x: Tensor) -> Tensor:
        """``psi`` after ``K`` iterations (before the ``eps`` gate); bounded by 1."""
        a = x
        b = ops.matmul(x, self.adapter)
        inv_scale = 1.0 / ops.softplus(self.raw_scale)
        psi = None
        for _ in range(self.iters):
            if psi is None:
                pre = a * b
            else:
                cp = self.coupling * psi
                pre = (a + cp) * (b + cp)
            psi = ops.tanh(pre * inv_scale)
        return psi

    def __call__(self, x: Tensor) -> Tensor:
        return self.eps * self.field(x)


class Dissonance(Module):
    """``adapter(x) + eps * tanh(|x - adapter(x)| / s)``."""

    def __init__(self, rng: np.random.Generator, d: int, scale: float = 1.0):
        super().__init__()
        self.adapter = parameter(uniform_fan_in(rng, (d, d), d))
        self.raw_scale = parameter(softplus_inverse(scale))
        self.eps = parameter(0.0)

    def __call__(self, x: Tensor) -> Tensor:
        adapted = ops.matmul(x, self.adapter)
        gap = ops.abs(x - adapted) / ops.softplus(self.raw_scale)
        return adapted + self.eps * ops.tanh(gap)
