# -*- coding: utf-8 -*-
# Joint-encoding masks
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
The auxiliary label of a sample lives in a block of the meta embedding.

The (diagnosis, quality) pair gets a code `y_d * Q + y_q`; the code selects a
block of `psi` contiguous entries among `codes * psi`; the Meta Learner
output, renormalized inside the block, is the auxiliary target of the task
network.

Two reduced encodings use the quality label only or the diagnosis label
only.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exception import MkcException
from .losses import masked_softmax
from .tensor import Tensor

MASK_MODES = ("joint", "quality_only", "diagnosis_only")


class MaskError(MkcException):
    """Label or code out of range."""


def code_count(mode: str, num_diagnosis: int, num_quality: int) -> int:
    """Number of distinct codes of an encoding."""
    if mode == "joint":
        return num_diagnosis * num_quality
    if mode == "quality_only":
        return num_quality
    if mode == "diagnosis_only":
        return num_diagnosis
    raise MaskError("unknown mask mode %r" % mode)


def joint_code(y_d: int, y_q: int, num_quality: int, num_diagnosis: Optional[int] = None) -> int:
    """y_d * Q + y_q"""
    if y_d < 0 or (num_diagnosis is not None and y_d >= num_diagnosis):
        raise MaskError("diagnosis label %r out of range" % y_d)
    if y_q < 0 or y_q >= num_quality:
        raise MaskError("quality label %r out of range" % y_q)
    return int(y_d) * num_quality + int(y_q)


def codes_for(y_d: np.ndarray, y_q: np.ndarray, num_diagnosis: int, num_quality: int,
              mode: str = "joint") -> np.ndarray:
    """Vectorized codes of a batch."""
    y_d = np.asarray(y_d, dtype=np.int64)
    y_q = np.asarray(y_q, dtype=np.int64)
    if np.any(y_d < 0) or np.any(y_d >= num_diagnosis):
        raise MaskError("diagnosis label out of range")
    if np.any(y_q < 0) or np.any(y_q >= num_quality):
        raise MaskError("quality label out of range")
    if mode == "joint":
        return y_d * num_quality + y_q
    if mode == "quality_only":
        return y_q
    if mode == "diagnosis_only":
        return y_d
    raise MaskError("unknown mask mode %r" % mode)


@dataclass(frozen=True)
class JointMask:
    code: int
    block_size: int
    mask: np.ndarray

    @property
    def block(self) -> slice:
        return slice(self.code * self.block_size, (self.code + 1) * self.block_size)


def build_mask(code: int, num_diagnosis: int, num_quality: int, psi: int, mode: str = "joint") -> JointMask:
    """
    The 0/1 vector of length `codes * psi` with ones on the block of `code`.
    """
    if psi < 1:
        raise MaskError("psi must be >= 1")
    count = code_count(mode, num_diagnosis, num_quality)
    if code < 0 or code >= count:
        raise MaskError("code %r out of range [0, %d)" % (code, count))
    mask = np.zeros(count * psi)
    mask[code * psi:(code + 1) * psi] = 1.0
    return JointMask(code, psi, mask)


def build_masks(codes: np.ndarray, count: int, psi: int) -> np.ndarray:
    """(N, count * psi) masks of a batch of codes."""
    codes = np.asarray(codes, dtype=np.int64)
    if np.any(codes < 0) or np.any(codes >= count):
        raise MaskError("code out of range [0, %d)" % count)
    masks = np.zeros((codes.shape[0], count * psi))
    for offset in range(psi):
        masks[np.arange(codes.shape[0]), codes * psi + offset] = 1.0
    return masks


@dataclass
class AuxEmbedding:
    """
    Meta Learner output for a batch.

    Attributes:
        logits: (N, E) before the softmax
        full: (N, E) softmax over all entries
        y_omega: (N, E) auxiliary target, zero outside each sample's block
    """
    logits: Tensor
    full: Tensor
    y_omega: Optional[Tensor] = None


def select_y_omega(aux: AuxEmbedding, masks: np.ndarray, renormalize: bool = True) -> Tensor:
    """
    Auxiliary target: the Meta Learner output inside each sample's block,
    renormalized to sum to 1 (or left as-is when `renormalize` is off).

    The renormalized value is computed from the logits, so logits outside
    the block get exactly zero gradient.
    """
    masks = np.asarray(masks, dtype=np.float64)
    if renormalize:
        y_omega = masked_softmax(aux.logits, masks)
    else:
        y_omega = aux.full * masks
    aux.y_omega = y_omega
    return y_omega
