"""Building blocks of the base U-Net: transition, dense, up and down blocks.

Every block keeps a list of :class:`ConvSpec` describing its convolutions so
that output shapes and parameter counts can be derived analytically and
compared with what the torch modules actually produce.

Bias policy: a convolution that feeds straight into a BatchNorm has no bias;
every other convolution has one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import torch
import torch.nn as nn

from .errors import ConfigurationError, ShapeError

Pair = Tuple[int, int]


def _pair(v) -> Pair:
    if isinstance(v, int):
        return (v, v)
    return (int(v[0]), int(v[1]))


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: Pair = (3, 3)
    stride: Pair = (1, 1)
    padding: Pair = (0, 0)
    dilation: Pair = (1, 1)
    has_bias: bool = True

    def __post_init__(self):
        for name in ("kernel", "stride", "padding", "dilation"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError(f"channel counts must be positive: {self}")
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.dilation) < 1:
            raise ConfigurationError(f"kernel/stride/dilation must be positive: {self}")
        if min(self.padding) < 0:
            raise ConfigurationError(f"padding must be nonnegative: {self}")

    def output_size(self, h: int, w: int) -> Pair:
        out = []
        for n, k, s, p, d in zip((h, w), self.kernel, self.stride, self.padding, self.dilation):
            out.append((n + 2 * p - d * (k - 1) - 1) // s + 1)
        return out[0], out[1]

    def num_parameters(self) -> int:
        kh, kw = self.kernel
        n = kh * kw * self.in_channels * self.out_channels
        return n + (self.out_channels if self.has_bias else 0)

    def build(self) -> nn.Conv2d:
        return nn.Conv2d(
            self.in_channels,
            self.out_channels,
            self.kernel,
            stride=self.stride,
            padding=self.padding,
            dilation=self.dilation,
            bias=self.has_bias,
        )


def count_parameters(module: nn.Module) -> int:
    """Number of trainable scalars (BatchNorm contributes scale and shift only)."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def init_weights(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_uniform_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


class _Block(nn.Module):
    in_channels: int
    out_channels: int

    def _check_input(self, x: torch.Tensor) -> None:
        if x.dim() != 4:
            raise ShapeError(f"{type(self).__name__} expects [N, C, H, W], got {tuple(x.shape)}")
        if x.shape[1] != self.in_channels:
            raise ConfigurationError(
                f"{type(self).__name__} expects {self.in_channels} input channels, got {x.shape[1]}"
            )

    def output_shape(self, h: int, w: int) -> Tuple[int, int, int]:
        raise NotImplementedError


class TransitionBlock(_Block):
    """Four-path inception module followed by a fusing 3x3 convolution.

    Paths: 1x1 conv; 3x3 max-pool then 1x1 conv; 1x1 -> 3x3; 1x1 -> 5x5.
    Each path emits ``b`` channels, the 4b concatenation is fused back to
    ``b`` by ``convf`` + BN + ReLU. Spatial size is preserved.
    """

    def __init__(self, a: int, b: int):
        super().__init__()
        self.in_channels, self.out_channels = a, b
        self.specs = {
            "conv1": ConvSpec(a, b, 1),
            "conv2": ConvSpec(a, b, 1),
            "conv31": ConvSpec(a, b, 1),
            "conv32": ConvSpec(b, b, 3, padding=1),
            "conv41": ConvSpec(a, b, 1),
            "conv42": ConvSpec(b, b, 5, padding=2),
            "convf": ConvSpec(4 * b, b, 3, padding=1, has_bias=False),
        }
        for name, spec in self.specs.items():
            setattr(self, name, spec.build())
        self.pool = nn.MaxPool2d(3, stride=1, padding=1)
        self.bn = nn.BatchNorm2d(b)
        self.relu = nn.ReLU()

    def concat_channels(self) -> int:
        return 4 * self.out_channels

    def forward(self, x):
        self._check_input(x)
        if x.shape[-2] < 3 or x.shape[-1] < 3:
            raise ShapeError(f"transition block needs H, W >= 3, got {tuple(x.shape[-2:])}")
        r = self.relu
        p1 = r(self.conv1(x))
        p2 = r(self.conv2(self.pool(x)))
        p3 = r(self.conv32(r(self.conv31(x))))
        p4 = r(self.conv42(r(self.conv41(x))))
        y = torch.cat([p1, p2, p3, p4], dim=1)
        return r(self.bn(self.convf(y)))

    def output_shape(self, h, w):
        for name in ("conv1", "conv32", "conv42", "convf"):
            assert self.specs[name].output_size(h, w) == (h, w)
        return self.out_channels, h, w


class DenseBlock(_Block):
    """Simplified dense module: conv1 sees x, conv2 sees [x, y1], conv3 sees [x, y1, y2]."""

    def __init__(self, a: int, k: int):
        super().__init__()
        if k < 1:
            raise ConfigurationError(f"growth rate must be >= 1, got {k}")
        self.in_channels = self.out_channels = a
        self.growth = k
        self.specs = {
            "conv1": ConvSpec(a, k, 3, padding=1, has_bias=False),
            "conv2": ConvSpec(a + k, k, 3, padding=1, has_bias=False),
            "conv3": ConvSpec(a + 2 * k, a, 3, padding=1, has_bias=False),
        }
        for name, spec in self.specs.items():
            setattr(self, name, spec.build())
        self.bn1 = nn.BatchNorm2d(k)
        self.bn2 = nn.BatchNorm2d(k)
        self.bn3 = nn.BatchNorm2d(a)
        self.relu = nn.ReLU()

    def forward(self, x):
        self._check_input(x)
        r = self.relu
        y1 = r(self.bn1(self.conv1(x)))
        y2 = r(self.bn2(self.conv2(torch.cat([x, y1], dim=1))))
        return r(self.bn3(self.conv3(torch.cat([x, y1, y2], dim=1))))

    def output_shape(self, h, w):
        return self.out_channels, h, w


class UpBlock(_Block):
    """3x3 conv, stride-2 transposed conv (kernel k, padding k//2), 3x3 conv + BN.

    The transposed convolution gets ``output_padding`` so that the output is
    exactly twice the input. That is only possible for odd ``k``; even kernels
    with padding k//2 would need an output padding of 2, which exceeds the
    stride, so they are rejected when the block is built.
    """

    def __init__(self, a: int, p: int, b: int, k: int):
        super().__init__()
        self.in_channels, self.inner_channels, self.out_channels = a, p, b
        self.kernel_size = k
        self.transposed_padding = k // 2
        # (H-1)*2 - 2*(k//2) + k + op == 2H  =>  op = 2*(k//2) + 2 - k
        self.output_padding = 2 * (k // 2) + 2 - k
        if k < 1 or not 0 <= self.output_padding < 2:
            raise ConfigurationError(
                f"up block kernel {k} with padding {k // 2} cannot double the spatial size"
            )
        self.specs = {
            "conv1": ConvSpec(a, p, 3, padding=1),
            "convt1": ConvSpec(p, b, k, stride=2, padding=k // 2),
            "conv2": ConvSpec(b, b, 3, padding=1, has_bias=False),
        }
        self.conv1 = self.specs["conv1"].build()
        self.convt1 = nn.ConvTranspose2d(
            p, b, k, stride=2, padding=k // 2, output_padding=self.output_padding
        )
        self.conv2 = self.specs["conv2"].build()
        self.bn = nn.BatchNorm2d(b)
        self.relu = nn.ReLU()

    def forward(self, x):
        self._check_input(x)
        r = self.relu
        y = r(self.convt1(r(self.conv1(x))))
        return r(self.bn(self.conv2(y)))

    def output_shape(self, h, w):
        k, p, op = self.kernel_size, self.transposed_padding, self.output_padding
        return self.out_channels, (h - 1) * 2 - 2 * p + k + op, (w - 1) * 2 - 2 * p + k + op


class DownBlock(_Block):
    """Three parallel dilated 3x3 convs (d=1, 3, 5), stride-2 3x3 conv, 1x1 conv + BN."""

    DILATIONS = (1, 3, 5)

    def __init__(self, a: int, p: int, b: int):
        super().__init__()
        self.in_channels, self.inner_channels, self.out_channels = a, p, b
        self.specs = {
            f"conv{i + 1}": ConvSpec(a, p, 3, padding=d, dilation=d)
            for i, d in enumerate(self.DILATIONS)
        }
        self.specs["conv4"] = ConvSpec(3 * p, b, 3, stride=2, padding=1)
        self.specs["conv5"] = ConvSpec(b, b, 1, has_bias=False)
        for name, spec in self.specs.items():
            setattr(self, name, spec.build())
        self.bn = nn.BatchNorm2d(b)
        self.relu = nn.ReLU()

    def forward(self, x):
        self._check_input(x)
        if x.shape[-2] % 2 or x.shape[-1] % 2:
            raise ShapeError(f"down block needs even H, W, got {tuple(x.shape[-2:])}")
        r = self.relu
        y = torch.cat([r(self.conv1(x)), r(self.conv2(x)), r(self.conv3(x))], dim=1)
        y = r(self.conv4(y))
        return r(self.bn(self.conv5(y)))

    def output_shape(self, h, w):
        for i in (1, 2, 3):
            assert self.specs[f"conv{i}"].output_size(h, w) == (h, w)
        h2, w2 = self.specs["conv4"].output_size(h, w)
        return (self.out_channels, *self.specs["conv5"].output_size(h2, w2))
