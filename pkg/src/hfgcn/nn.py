"""Minimal module system over :mod:`hfgcn.core`."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import core
from .core import Parameter, RunningStats, Tensor


class Module:
    training = True

    def named_children(self) -> Iterator[tuple[str, "Module"]]:
        for key, val in vars(self).items():
            if isinstance(val, Module):
                yield key, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            if isinstance(val, Parameter):
                yield prefix + key, val
        for key, child in self.named_children():
            yield from child.named_parameters(f"{prefix}{key}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_stats(self, prefix: str = "") -> Iterator[tuple[str, RunningStats]]:
        for key, val in vars(self).items():
            if isinstance(val, RunningStats):
                yield prefix + key, val
        for key, child in self.named_children():
            yield from child.named_stats(f"{prefix}{key}.")

    def train(self, mode: bool = True):
        self.training = mode
        for _, child in self.named_children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def reset_running_stats(self):
        for _, s in self.named_stats():
            s.reset()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1x1(Module):
    def __init__(self, cin: int, cout: int, rng: np.random.Generator, bias: bool = True):
        self.weight = Parameter(uniform_init(rng, (cout, cin), cin))
        self.bias = Parameter(np.zeros(cout), decay=False) if bias else None
        self.cin, self.cout = cin, cout

    def forward(self, x: Tensor) -> Tensor:
        return core.conv1x1(x, self.weight, self.bias)

    def macs(self, positions: int) -> int:
        return self.cin * self.cout * positions


class TemporalConv(Module):
    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator,
                 stride: int = 1, dilation: int = 1):
        self.weight = Parameter(uniform_init(rng, (cout, cin, k), cin * k))
        self.bias = Parameter(np.zeros(cout), decay=False)
        self.stride, self.dilation = stride, dilation

    def forward(self, x: Tensor) -> Tensor:
        return core.temporal_conv(x, self.weight, self.bias, self.stride, self.dilation)


class BatchNorm(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(channels), decay=False)
        self.beta = Parameter(np.zeros(channels), decay=False)
        self.stats = RunningStats(channels)
        self.momentum, self.eps = momentum, eps

    def forward(self, x: Tensor) -> Tensor:
        return core.batchnorm(x, self.gamma, self.beta, self.stats, self.training,
                              self.momentum, self.eps)
