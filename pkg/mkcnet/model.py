# -*- coding: utf-8 -*-
# Networks
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
The task network, its vanilla baselines and the Meta Learner.

The task network shares a TinyVGG backbone between three branches: quality,
diagnosis and auxiliary. Each branch is a GAB (or, in the `fc` design, a
dense layer) over the backbone map followed by global average pooling. The
quality head and the auxiliary head are linear; the diagnosis head is the MAB,
which reads the diagnosis feature and the gated auxiliary feature.

All networks are stateless: `forward` takes the parameters, so a
pseudo-updated parameter set runs through the same code.
"""
import logging
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from .attention import (fc_block_forward, gab_forward, init_fc_block, init_gab, init_mab, mab_forward,
                        spatial_kernel_for)
from .config import ModelConfig, RunConfig, TrainConfig
from .exception import MkcException, ShapeError
from .layers import init_linear, init_vgg, linear, vgg
from .masking import AuxEmbedding, build_masks, code_count, codes_for, select_y_omega
from .params import ParamSet
from .tensor import Tensor, global_avg_pool, softmax

log = logging.getLogger(__name__)

BRANCHES = ("q", "d", "omega")


class TaskNetFeatures(NamedTuple):
    """
    Intermediate values of a forward pass.

    Attributes:
        backbone: (N, C, h, w) shared map
        maps: branch name -> (N, W, h, w) map before pooling
        vectors: branch name -> (N, W) pooled feature
        f_d_star: (N, 2W) input of the diagnosis head, `None` without MAB
        gate: (N, W) MAB gate, `None` without gate
    """
    backbone: Tensor
    maps: Dict[str, Tensor]
    vectors: Dict[str, Tensor]
    f_d_star: Optional[Tensor]
    gate: Optional[Tensor]


class TaskNetOutput(NamedTuple):
    logits_d: Tensor
    logits_q: Optional[Tensor]
    logits_omega: Optional[Tensor]
    features: TaskNetFeatures


def _check_input(x: Tensor, config: ModelConfig) -> None:
    expected = (config.in_channels, config.image_size, config.image_size)
    if x.ndim != 4 or tuple(x.shape[1:]) != expected:
        raise ShapeError("network input", x.shape, (-1,) + expected)


class TaskNet:
    """
    Backbone, three attention branches, quality and auxiliary heads, MAB.

    Args:
        config: Architecture
        embed_width: Width E of the auxiliary head
        no_mab: Diagnosis head on the diagnosis feature only
        no_meta: No auxiliary branch; the MAB reads the quality feature
    """

    def __init__(self, config: ModelConfig, embed_width: int, no_mab: bool = False, no_meta: bool = False):
        self.config = config
        self.embed_width = embed_width
        self.no_mab = no_mab
        self.no_meta = no_meta
        self.branches = ("q", "d") if no_meta else BRANCHES
        self.kernel = spatial_kernel_for(config.feature_size, config.spatial_kernel)

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        config = self.config
        width = config.branch_width
        theta = ParamSet()
        init_vgg(rng, theta, "backbone", config.in_channels, config.backbone_channels, config.convs_per_block)
        for branch in self.branches:
            if config.gab_mode == "gab":
                init_gab(rng, theta, "gab_" + branch, width, config.reduction, self.kernel)
            else:
                init_fc_block(rng, theta, "dense_" + branch, width)
        init_linear(rng, theta, "head_q", width, config.num_quality)
        if not self.no_meta:
            init_linear(rng, theta, "head_omega", width, self.embed_width)
        if self.no_mab:
            init_linear(rng, theta, "head_d", width, config.num_diagnosis)
        else:
            init_mab(rng, theta, "mab", width, config.reduction, config.num_diagnosis,
                     gated=config.mab_mode == "gated")
        return theta

    def _branch(self, backbone: Tensor, theta: ParamSet, branch: str) -> Tensor:
        if self.config.gab_mode == "gab":
            return gab_forward(backbone, theta, "gab_" + branch)
        return fc_block_forward(backbone, theta, "dense_" + branch)

    def forward(self, x: Tensor, theta: ParamSet, zero_omega: bool = False) -> TaskNetOutput:
        """
        Args:
            x: (N, C, H, W) images
            theta: Task network parameters
            zero_omega: Replace the auxiliary feature by zeros before the MAB
        Returns:
            Diagnosis, quality and auxiliary logits with the features
        """
        _check_input(x, self.config)
        backbone = vgg(x, theta, "backbone", len(self.config.backbone_channels), self.config.convs_per_block)
        maps = {branch: self._branch(backbone, theta, branch) for branch in self.branches}
        vectors = {branch: global_avg_pool(maps[branch]) for branch in self.branches}
        logits_q = linear(vectors["q"], theta, "head_q")
        logits_omega = None if self.no_meta else linear(vectors["omega"], theta, "head_omega")
        f_d_star = gate = None
        if self.no_mab:
            logits_d = linear(vectors["d"], theta, "head_d")
        else:
            assistant = vectors["q"] if self.no_meta else vectors["omega"]
            if zero_omega:
                assistant = Tensor(np.zeros(assistant.shape))
            logits_d, f_d_star, gate = mab_forward(vectors["d"], assistant, theta, "mab")
        return TaskNetOutput(logits_d, logits_q, logits_omega,
                             TaskNetFeatures(backbone, maps, vectors, f_d_star, gate))


class VanillaNet:
    """
    Backbone, global average pooling, linear diagnosis head; with
    `with_quality` a second linear head predicts the quality (multi-task
    baseline).
    """

    def __init__(self, config: ModelConfig, with_quality: bool = False):
        self.config = config
        self.with_quality = with_quality

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        config = self.config
        theta = ParamSet()
        init_vgg(rng, theta, "backbone", config.in_channels, config.backbone_channels, config.convs_per_block)
        init_linear(rng, theta, "head_d", config.branch_width, config.num_diagnosis)
        if self.with_quality:
            init_linear(rng, theta, "head_q", config.branch_width, config.num_quality)
        return theta

    def forward(self, x: Tensor, theta: ParamSet, zero_omega: bool = False) -> TaskNetOutput:
        # pylint: disable=unused-argument
        _check_input(x, self.config)
        backbone = vgg(x, theta, "backbone", len(self.config.backbone_channels), self.config.convs_per_block)
        pooled = global_avg_pool(backbone)
        logits_q = linear(pooled, theta, "head_q") if self.with_quality else None
        return TaskNetOutput(linear(pooled, theta, "head_d"), logits_q, None,
                             TaskNetFeatures(backbone, {"d": backbone}, {"d": pooled}, None, None))


class MetaLearner:
    """
    A small CNN (one conv per block) with a softmax over the `embed_width`
    entries of the meta embedding.
    """

    def __init__(self, config: ModelConfig, embed_width: int):
        self.config = config
        self.embed_width = embed_width

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        phi = ParamSet()
        init_vgg(rng, phi, "meta", self.config.in_channels, self.config.meta_channels, 1)
        init_linear(rng, phi, "meta.head", self.config.meta_channels[-1], self.embed_width)
        return phi

    def forward(self, x: Tensor, phi: ParamSet) -> AuxEmbedding:
        _check_input(x, self.config)
        features = global_avg_pool(vgg(x, phi, "meta", len(self.config.meta_channels), 1))
        logits = linear(features, phi, "meta.head")
        return AuxEmbedding(logits, softmax(logits, axis=-1))


class MKCModel:
    """
    A task network with, for MKCNet, its Meta Learner and its label encoding.

    Args:
        config: Architecture
        train: Ablation switches, psi and mask mode
    """

    def __init__(self, config: ModelConfig, train: TrainConfig):
        self.config = config
        self.train = train
        self.uses_meta = config.kind == "mkcnet" and not train.no_meta
        self.codes = code_count(train.mask_mode, config.num_diagnosis, config.num_quality)
        self.embed_width = self.codes * train.psi
        if config.kind == "mkcnet":
            self.task = TaskNet(config, self.embed_width, no_mab=train.no_mab, no_meta=train.no_meta)  # type: ignore
        else:
            self.task = VanillaNet(config, with_quality=config.kind == "vanilla_iqa")  # type: ignore
        self.meta = MetaLearner(config, self.embed_width) if self.uses_meta else None

    @classmethod
    def from_run(cls, run: RunConfig) -> 'MKCModel':
        return cls(run.model, run.train)

    def init_params(self, seed: int) -> Tuple[ParamSet, ParamSet]:
        """
        Independent streams for the task network and the Meta Learner.
        Returns:
            (theta, phi), phi empty without Meta Learner
        """
        theta_seq, phi_seq = np.random.SeedSequence(seed).spawn(2)
        theta = self.task.init_params(np.random.default_rng(theta_seq))
        phi = self.meta.init_params(np.random.default_rng(phi_seq)) if self.meta else ParamSet()
        log.debug("initialised %d task and %d meta parameters", theta.num_parameters(), phi.num_parameters())
        return theta, phi

    def masks(self, y_d: np.ndarray, y_q: np.ndarray) -> np.ndarray:
        codes = codes_for(y_d, y_q, self.config.num_diagnosis, self.config.num_quality, self.train.mask_mode)
        return build_masks(codes, self.codes, self.train.psi)

    def auxiliary(self, x: Tensor, phi: ParamSet, masks: np.ndarray) -> Optional[AuxEmbedding]:
        """Meta Learner output with `y_omega` selected; `None` without Meta Learner."""
        if self.meta is None:
            return None
        aux = self.meta.forward(x, phi)
        select_y_omega(aux, masks, renormalize=self.train.y_omega_mode == "renormalized")
        return aux

    def forward(self, x: Tensor, theta: ParamSet, zero_omega: bool = False) -> TaskNetOutput:
        return self.task.forward(x, theta, zero_omega=zero_omega)


def task_net_forward(model: MKCModel, x: Tensor, theta: ParamSet) -> TaskNetOutput:
    return model.forward(x, theta)


def meta_learner_forward(model: MKCModel, x: Tensor, phi: ParamSet) -> AuxEmbedding:
    if model.meta is None:
        raise MkcException("the model has no Meta Learner")
    return model.meta.forward(x, phi)
