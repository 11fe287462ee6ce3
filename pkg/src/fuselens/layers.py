"""Layer building blocks shared by the fusion architectures.

Layers are callables taking (x, training). In training mode parameters
join the tape so loss gradients reach them; in eval mode every parameter
is detached, so a retained graph only tracks input gradients. That keeps
per-pixel saliency backward passes free of weight-gradient work.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import RunningStats, Tensor

LEAKY_SLOPE = 0.2


class Conv2d:
    """3x3 (or 1x1) convolution with bias, uniform +-1/sqrt(fan_in) init."""

    def __init__(self, rng: np.random.Generator, cin: int, cout: int, k: int = 3):
        fan_in = cin * k * k
        self.weight = Tensor(ad.uniform_init(rng, (cout, cin, k, k), fan_in),
                             requires_grad=True)
        self.bias = Tensor(ad.uniform_init(rng, (cout,), fan_in), requires_grad=True)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        w = self.weight if training else self.weight.detach()
        b = self.bias if training else self.bias.detach()
        return ad.conv2d(x, w, b)

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def state(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        return [(prefix + ".weight", self.weight.data), (prefix + ".bias", self.bias.data)]

    @property
    def radius(self) -> int:
        return (self.weight.data.shape[2] - 1) // 2


class BatchNorm2d:
    """Per-channel batch norm; running stats feed eval mode."""

    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.stats = RunningStats(channels)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        g = self.gamma if training else self.gamma.detach()
        b = self.beta if training else self.beta.detach()
        return ad.batch_norm(x, g, b, self.stats, training=training)

    def params(self) -> list[Tensor]:
        return [self.gamma, self.beta]

    def state(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        return [(prefix + ".gamma", self.gamma.data),
                (prefix + ".beta", self.beta.data),
                (prefix + ".running_mean", self.stats.mean),
                (prefix + ".running_var", self.stats.var)]


class ConvBlock:
    """conv -> batch norm -> leaky ReLU(0.2)."""

    def __init__(self, rng: np.random.Generator, cin: int, cout: int, k: int = 3):
        self.conv = Conv2d(rng, cin, cout, k)
        self.bn = BatchNorm2d(cout)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ad.leaky_relu(self.bn(self.conv(x, training), training), LEAKY_SLOPE)

    def params(self) -> list[Tensor]:
        return self.conv.params() + self.bn.params()

    def state(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        return self.conv.state(prefix + ".conv") + self.bn.state(prefix + ".bn")

    @property
    def radius(self) -> int:
        return self.conv.radius


class ResidualBlock:
    """conv-BN-LReLU-conv-BN plus the identity skip."""

    def __init__(self, rng: np.random.Generator, channels: int):
        self.conv1 = Conv2d(rng, channels, channels)
        self.bn1 = BatchNorm2d(channels)
        self.conv2 = Conv2d(rng, channels, channels)
        self.bn2 = BatchNorm2d(channels)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = ad.leaky_relu(self.bn1(self.conv1(x, training), training), LEAKY_SLOPE)
        h = self.bn2(self.conv2(h, training), training)
        return ad.add(h, x)

    def params(self) -> list[Tensor]:
        return (self.conv1.params() + self.bn1.params()
                + self.conv2.params() + self.bn2.params())

    def state(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        return (self.conv1.state(prefix + ".conv1") + self.bn1.state(prefix + ".bn1")
                + self.conv2.state(prefix + ".conv2") + self.bn2.state(prefix + ".bn2"))

    @property
    def radius(self) -> int:
        return self.conv1.radius + self.conv2.radius


def tanh01(x: Tensor) -> Tensor:
    """Squash to (0,1): (tanh(x) + 1) / 2."""
    return ad.scale_shift(ad.tanh(x), 0.5, 0.5)
