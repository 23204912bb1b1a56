# -*- coding: utf-8 -*-
# Attention blocks
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
The two attention blocks of the task network.

- GAB, the general attention block: channel attention, then spatial
  attention, over a feature map. It turns the shared backbone output into a
  task-specific branch.
- MAB, the meta-knowledge assistant block: a channel gate computed from the
  auxiliary feature filters it before it is concatenated with the diagnosis
  feature and fed to the diagnosis head.
"""
from typing import NamedTuple, Optional

import numpy as np

from .exception import ShapeError
from .layers import conv, init_conv, init_linear, linear
from .params import ParamSet
from .tensor import Tensor, amax, concat, conv2d, global_avg_pool, global_max_pool, mean, relu, reshape, sigmoid


class GabParams(NamedTuple):
    """Weights of one GAB."""
    fc1_weight: Tensor
    fc1_bias: Tensor
    fc2_weight: Tensor
    fc2_bias: Tensor
    spatial_weight: Tensor
    spatial_bias: Tensor

    @classmethod
    def of(cls, params: ParamSet, prefix: str) -> 'GabParams':
        return cls(params[prefix + ".fc1.weight"], params[prefix + ".fc1.bias"],
                   params[prefix + ".fc2.weight"], params[prefix + ".fc2.bias"],
                   params[prefix + ".spatial.weight"], params[prefix + ".spatial.bias"])


class MabParams(NamedTuple):
    """Weights of one MAB; no gate in concatenation mode."""
    gate1_weight: Optional[Tensor]
    gate1_bias: Optional[Tensor]
    gate2_weight: Optional[Tensor]
    gate2_bias: Optional[Tensor]
    head_weight: Tensor
    head_bias: Tensor

    @classmethod
    def of(cls, params: ParamSet, prefix: str) -> 'MabParams':
        gated = prefix + ".gate1.weight" in params
        return cls(params[prefix + ".gate1.weight"] if gated else None,
                   params[prefix + ".gate1.bias"] if gated else None,
                   params[prefix + ".gate2.weight"] if gated else None,
                   params[prefix + ".gate2.bias"] if gated else None,
                   params[prefix + ".head.weight"], params[prefix + ".head.bias"])


class MabOutput(NamedTuple):
    logits: Tensor
    f_d_star: Tensor
    gate: Optional[Tensor]


def spatial_kernel_for(feature_size: int, kernel: int) -> int:
    """The configured kernel, or 3 when the map is smaller than it."""
    return kernel if feature_size >= kernel else min(3, kernel)


def init_gab(rng: np.random.Generator, params: ParamSet, prefix: str,
             channels: int, reduction: int, kernel: int) -> None:
    if channels % reduction:
        raise ShapeError("gab", (channels,), (reduction,))
    init_linear(rng, params, prefix + ".fc1", channels, channels // reduction)
    init_linear(rng, params, prefix + ".fc2", channels // reduction, channels)
    init_conv(rng, params, prefix + ".spatial", 2, 1, kernel)


def _shared_mlp(vector: Tensor, gab: GabParams) -> Tensor:
    hidden = relu(vector @ gab.fc1_weight + gab.fc1_bias)
    return hidden @ gab.fc2_weight + gab.fc2_bias


def gab_forward(feature_map: Tensor, params: ParamSet, prefix: str) -> Tensor:
    """
    Channel attention from the average- and max-pooled descriptors through a
    shared MLP, then spatial attention from the channel-wise mean and max.

    Args:
        feature_map: (N, C, H, W)
        params: Holds the weights under `prefix`
        prefix: Name of the block
    Returns:
        Refined map, same shape
    """
    gab = GabParams.of(params, prefix)
    n, channels = feature_map.shape[:2]
    if gab.fc1_weight.shape[0] != channels:
        raise ShapeError("gab", feature_map.shape, gab.fc1_weight.shape)
    attention = sigmoid(_shared_mlp(global_avg_pool(feature_map), gab)
                        + _shared_mlp(global_max_pool(feature_map), gab))
    refined = feature_map * reshape(attention, (n, channels, 1, 1))
    descriptor = concat([mean(refined, axis=1, keepdims=True), amax(refined, axis=1, keepdims=True)], axis=1)
    kernel = gab.spatial_weight.shape[2]
    spatial = sigmoid(conv2d(descriptor, gab.spatial_weight, padding=kernel // 2)
                      + reshape(gab.spatial_bias, (1, 1, 1, 1)))
    return refined * spatial


def init_fc_block(rng: np.random.Generator, params: ParamSet, prefix: str, channels: int) -> None:
    """Fully connected replacement of a GAB: one dense layer over channels at every position."""
    init_conv(rng, params, prefix + ".fc", channels, channels, 1)


def fc_block_forward(feature_map: Tensor, params: ParamSet, prefix: str) -> Tensor:
    return relu(conv(feature_map, params, prefix + ".fc"))


def init_mab(rng: np.random.Generator, params: ParamSet, prefix: str,
             width: int, reduction: int, classes: int, gated: bool = True) -> None:
    if gated:
        if width % reduction:
            raise ShapeError("mab", (width,), (reduction,))
        init_linear(rng, params, prefix + ".gate1", width, width // reduction)
        init_linear(rng, params, prefix + ".gate2", width // reduction, width)
    init_linear(rng, params, prefix + ".head", 2 * width, classes)


def mab_forward(f_d: Tensor, f_omega: Tensor, params: ParamSet, prefix: str) -> MabOutput:
    """
    Gate the auxiliary feature by channel, concatenate it after the diagnosis
    feature, classify.

    Without gate weights under `prefix` the auxiliary feature goes through
    unchanged.

    Args:
        f_d: (N, W) diagnosis feature
        f_omega: (N, W) auxiliary feature
    Returns:
        Diagnosis logits (N, D), the concatenated feature (N, 2W) and the gate
    """
    mab = MabParams.of(params, prefix)
    if f_d.shape != f_omega.shape:
        raise ShapeError("mab", f_d.shape, f_omega.shape)
    gate = None
    filtered = f_omega
    if mab.gate1_weight is not None:
        hidden = relu(f_omega @ mab.gate1_weight + mab.gate1_bias)
        gate = sigmoid(hidden @ mab.gate2_weight + mab.gate2_bias)
        filtered = f_omega * gate
    f_d_star = concat([f_d, filtered], axis=1)
    return MabOutput(linear(f_d_star, params, prefix + ".head"), f_d_star, gate)
