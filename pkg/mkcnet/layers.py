# -*- coding: utf-8 -*-
# Network layers
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Parameter initialisation and stateless layers.

Layers read their weights from a `ParamSet` by name, so the same code runs
with the trained parameters or with a pseudo-updated copy of them.
"""
from typing import Sequence

import numpy as np

from .params import ParamSet
from .tensor import Tensor, conv2d, matmul, mean, relu, reshape


def init_conv(rng: np.random.Generator, params: ParamSet, prefix: str,
              in_channels: int, out_channels: int, kernel: int) -> None:
    """He-normal weights (out, in, k, k), zero bias."""
    std = np.sqrt(2.0 / (in_channels * kernel * kernel))
    params.add_item(prefix + ".weight",
                    Tensor(rng.normal(0.0, std, (out_channels, in_channels, kernel, kernel)),
                           requires_grad=True, name=prefix + ".weight"),
                    replace=False)
    params.add_item(prefix + ".bias", Tensor(np.zeros(out_channels), requires_grad=True, name=prefix + ".bias"),
                    replace=False)


def init_linear(rng: np.random.Generator, params: ParamSet, prefix: str,
                in_width: int, out_width: int) -> None:
    """He-normal weights (in, out), zero bias."""
    std = np.sqrt(2.0 / in_width)
    params.add_item(prefix + ".weight",
                    Tensor(rng.normal(0.0, std, (in_width, out_width)), requires_grad=True, name=prefix + ".weight"),
                    replace=False)
    params.add_item(prefix + ".bias", Tensor(np.zeros(out_width), requires_grad=True, name=prefix + ".bias"),
                    replace=False)


def conv(x: Tensor, params: ParamSet, prefix: str) -> Tensor:
    """Same-size convolution with bias."""
    weight = params[prefix + ".weight"]
    bias = params[prefix + ".bias"]
    out = conv2d(x, weight, stride=1, padding=weight.shape[2] // 2)
    return out + reshape(bias, (1, bias.shape[0], 1, 1))


def linear(x: Tensor, params: ParamSet, prefix: str) -> Tensor:
    return matmul(x, params[prefix + ".weight"]) + params[prefix + ".bias"]


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling, stride 2."""
    n, c, h, w = x.shape
    return mean(reshape(x, (n, c, h // 2, 2, w // 2, 2)), axis=(3, 5))


def init_vgg(rng: np.random.Generator, params: ParamSet, prefix: str,
             in_channels: int, channels: Sequence[int], convs_per_block: int) -> None:
    for block, width in enumerate(channels):
        for layer in range(convs_per_block):
            init_conv(rng, params, "%s.block%d.conv%d" % (prefix, block, layer), in_channels, width, 3)
            in_channels = width


def vgg(x: Tensor, params: ParamSet, prefix: str, blocks: int, convs_per_block: int) -> Tensor:
    """
    TinyVGG: blocks of (conv 3x3, relu) x `convs_per_block` then 2x2 pooling.
    """
    for block in range(blocks):
        for layer in range(convs_per_block):
            x = relu(conv(x, params, "%s.block%d.conv%d" % (prefix, block, layer)))
        x = avg_pool2(x)
    return x
