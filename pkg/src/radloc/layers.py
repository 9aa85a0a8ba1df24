"""Parameterized layers on top of the autograd ops.

Weights use uniform fan-in initialization (bound = sqrt(1/fan_in)), biases
start at zero, batch-norm at scale 1 / shift 0. Everything is seeded through
the numpy Generator passed to the constructor.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Base: parameter/buffer registry used for optimization and checkpoints."""

    def params(self) -> list[tuple[str, Parameter]]:
        out = []
        for name in sorted(vars(self)):
            value = getattr(self, name)
            if isinstance(value, Parameter):
                out.append((name, value))
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, *, rng: np.random.Generator):
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(_fan_in_uniform(
            rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_channels))

    def __call__(self, x):
        return ag.conv2d(x, self.weight, self.bias,
                         stride=self.stride, padding=self.padding)


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int, *,
                 rng: np.random.Generator):
        self.weight = Parameter(_fan_in_uniform(
            rng, (in_features, out_features), in_features))
        self.bias = Parameter(np.zeros(out_features))

    def __call__(self, x):
        return ag.linear(x, self.weight, self.bias)


class LeakyReLU(Layer):
    def __init__(self, alpha: float = 0.1):
        self.alpha = alpha

    def __call__(self, x):
        return ag.leaky_relu(x, self.alpha)


class MaxPool2(Layer):
    def __call__(self, x):
        return ag.maxpool2(x)


class BatchNorm(Layer):
    """Per-feature (2-d input) or per-channel (4-d input) normalization."""

    def __init__(self, num_features: int, momentum: float = 0.1):
        self.scale = Parameter(np.ones(num_features))
        self.shift = Parameter(np.zeros(num_features))
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.momentum = momentum
        self.training = True

    def buffers(self):
        return [("running_mean", self.running_mean),
                ("running_var", self.running_var)]

    def __call__(self, x):
        return ag.batch_norm(x, self.scale, self.shift,
                             self.running_mean, self.running_var,
                             training=self.training, momentum=self.momentum)


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def params(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.params():
                out.append((f"{i}.{name}", p))
        return out

    def buffers(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, b in layer.buffers():
                out.append((f"{i}.{name}", b))
        return out

    def set_training(self, training: bool):
        for layer in self.layers:
            if isinstance(layer, BatchNorm):
                layer.training = training
            elif isinstance(layer, Sequential):
                layer.set_training(training)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def mlp(widths: list[int], alpha: float, *, rng: np.random.Generator) -> Sequential:
    """Linear stack with LeakyReLU between layers, none after the last."""
    layers: list[Layer] = []
    for i in range(len(widths) - 1):
        layers.append(Linear(widths[i], widths[i + 1], rng=rng))
        if i < len(widths) - 2:
            layers.append(LeakyReLU(alpha))
    return Sequential(layers)
