"""Parameterized layers on top of :mod:`smgaa.ops`."""

from __future__ import annotations

import contextvars
from contextlib import contextmanager
from typing import Iterator

import numpy as np

from . import ops
from .errors import ConfigError
from .tensor import Tensor

_flop_log: contextvars.ContextVar[list | None] = contextvars.ContextVar("flop_log", default=None)


@contextmanager
def count_flops_ctx():
    """Collect per-sample multiply-accumulate FLOPs of conv/linear layers run inside."""
    log: list[tuple[str, int]] = []
    token = _flop_log.set(log)
    try:
        yield log
    finally:
        _flop_log.reset(token)


def _record(kind: str, flops: int) -> None:
    log = _flop_log.get()
    if log is not None:
        log.append((kind, int(flops)))


class Module:
    """Container that discovers parameters and sub-modules from its attributes."""

    training = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            yield from child.modules()

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[prefix + name] = value
        for name, child in self._children():
            out.update(child.named_parameters(f"{prefix}{name}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + name: getattr(self, name) for name in getattr(self, "_buffer_names", ())}
        for name, child in self._children():
            out.update(child.named_buffers(f"{prefix}{name}."))
        return out

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters().items()}
        state.update({name: b.copy() for name, b in self.named_buffers().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params, buffers = self.named_parameters(), self.named_buffers()
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing, extra = sorted(expected - set(state)), sorted(set(state) - expected)
            raise ConfigError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, value in state.items():
            target = params[name].data if name in params else buffers[name]
            if target.shape != value.shape:
                raise ConfigError(f"{name}: shape {value.shape} != {target.shape}")
            target[...] = value


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel=(1, 1), padding=None, groups=1, bias=True, rng=None):
        if isinstance(kernel, int):
            kernel = (kernel, kernel)
        if in_ch % groups or out_ch % groups:
            raise ConfigError(f"groups={groups} must divide in ({in_ch}) and out ({out_ch}) channels")
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_ch // groups * kernel[0] * kernel[1]
        self.weight = _uniform(rng, (out_ch, in_ch // groups, *kernel), fan_in)
        self.bias = _uniform(rng, (out_ch,), fan_in) if bias else None
        self.padding = tuple(padding) if padding is not None else ops.same_padding(*kernel)
        self.groups = groups

    def forward(self, x: Tensor) -> Tensor:
        out = ops.conv2d(x, self.weight, self.bias, self.padding, self.groups)
        cout, cin_g, kf, kt = self.weight.shape
        _record("conv", 2 * cout * cin_g * kf * kt * out.shape[2] * out.shape[3])
        return out


class BatchNorm2d(Module):
    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var, self.training, self.momentum, self.eps
        )


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = _uniform(rng, (out_features, in_features), in_features)
        self.bias = _uniform(rng, (out_features,), in_features)

    def forward(self, x: Tensor) -> Tensor:
        _record("linear", 2 * self.weight.shape[0] * self.weight.shape[1])
        return ops.linear(x, self.weight, self.bias)
