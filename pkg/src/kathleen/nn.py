"""Parameter containers and initializers."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from .autodiff import Tensor, get_default_dtype, ops


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox-4x64-10), reproducible across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def parameter(data, name: str = "") -> Tensor:
    return Tensor(np.array(data, dtype=get_default_dtype()), requires_grad=True, name=name)


def uniform_fan_in(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def softplus_inverse(y: float) -> float:
    return float(np.log(np.expm1(y)))


class Module:
    """Tree of named parameters and sub-modules, in registration order."""

    def __init__(self) -> None:
        self.training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + key + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        wrong = sorted(
            f"{k}: expected {own[k].shape}, got {tuple(np.shape(state[k]))}"
            for k in set(own) & set(state)
            if tuple(np.shape(state[k])) != own[k].shape
        )
        if missing or unexpected or wrong:
            raise ValueError(
                "state does not match model: "
                + "; ".join(
                    part
                    for part in (
                        f"missing {missing}" if missing else "",
                        f"unexpected {unexpected}" if unexpected else "",
                        f"shape mismatch {wrong}" if wrong else "",
                    )
                    if part
                )
            )
        for k, p in own.items():
            p.data = np.array(state[k], dtype=p.dtype)

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self


class Linear(Module):
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, bias: bool = True):
        super().__init__()
        self.weight = parameter(uniform_fan_in(rng, (n_in, n_out), n_in))
        self.bias: Optional[Tensor] = (
            parameter(uniform_fan_in(rng, (n_out,), n_in)) if bias else None
        )

    def __call__(self, x: Tensor) -> Tensor:
        out = ops.matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out
