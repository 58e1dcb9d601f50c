"""Parameter containers and initializers built on :mod:`simba.autodiff`."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autodiff import BatchNormState, Tensor, batch_norm


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


class Module:
    """Base class: parameters are discovered from attributes, in assignment order."""

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            yield from _walk_params(f"{prefix}{name}", value)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, BatchNormState]]:
        for name, value in vars(self).items():
            yield from _walk_buffers(f"{prefix}{name}", value)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            items = value if isinstance(value, (list, tuple)) else [value]
            for item in items:
                if isinstance(item, Module):
                    yield from item.modules()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _walk_params(name, value):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=f"{name}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk_params(f"{name}.{i}", item)


def _walk_buffers(name, value):
    if isinstance(value, BatchNormState):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_buffers(prefix=f"{name}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk_buffers(f"{name}.{i}", item)


class Dense(Module):
    """Affine map on the last axis: ``x @ W + b``."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, relu_follows: bool = False, bias: bool = True):
        if relu_follows:
            self.weight = kaiming_uniform(rng, (n_in, n_out), n_in)
        else:
            self.weight = xavier_uniform(rng, (n_in, n_out), n_in, n_out)
        self.bias = zeros((n_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class BatchNorm(Module):
    def __init__(self, num_features: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = ones((num_features,))
        self.beta = zeros((num_features,))
        self.state = BatchNormState(num_features, momentum=momentum, eps=eps)

    def __call__(self, x: Tensor) -> Tensor:
        return batch_norm(x, self.gamma, self.beta, self.state, self.training)
