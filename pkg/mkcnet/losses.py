# -*- coding: utf-8 -*-
# Losses
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Loss functions over probability vectors.
"""
from typing import Optional, Union

import numpy as np

from .exception import MkcException, ShapeError
from .tensor import Tensor, log, power, softmax, sum as tsum, mean

_MASK_FILL = 1e30


class LossInputError(MkcException):
    """Probabilities or targets out of their domain."""


def _as_rows(tensor: Tensor) -> Tensor:
    return tensor.reshape((1, tensor.shape[0])) if tensor.ndim == 1 else tensor


def _check_probabilities(probs: Tensor) -> None:
    sums = probs.data.sum(axis=-1)
    if not np.all(np.abs(sums - 1.0) <= 1e-6):
        raise LossInputError("probabilities must sum to 1 (got %s)" % np.round(sums, 8))


def focal_loss(probs: Tensor, target: Union[int, np.ndarray], gamma: float = 2.0) -> Tensor:
    """
    -(1 - p_t)^gamma * log(p_t), averaged over the batch.

    Args:
        probs: (K,) or (N, K), each row a distribution
        target: Class index, or (N,) indices
        gamma: Focusing exponent, 0 gives cross-entropy
    Returns:
        Scalar
    """
    rows = _as_rows(probs)
    _check_probabilities(rows)
    classes = rows.shape[1]
    targets = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if targets.shape != (rows.shape[0],):
        raise ShapeError("focal_loss", rows.shape, targets.shape)
    if np.any(targets < 0) or np.any(targets >= classes):
        raise LossInputError("target out of range [0, %d): %s" % (classes, targets))
    one_hot = np.eye(classes)[targets]
    p_t = tsum(rows * one_hot, axis=1)
    weight = power(1.0 - p_t, gamma) if gamma else 1.0
    return mean(-(weight * log(p_t)))


def masked_softmax(logits: Tensor, mask: np.ndarray) -> Tensor:
    """
    Softmax restricted to the entries where `mask` is 1; the others are
    exactly 0 and receive exactly zero gradient.

    Args:
        logits: (E,) or (N, E)
        mask: 0/1 array of the same shape, at least one 1 per row
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != logits.shape:
        raise ShapeError("masked_softmax", logits.shape, mask.shape)
    if np.any(mask.reshape(-1, mask.shape[-1]).sum(axis=-1) == 0):
        raise LossInputError("mask selects no entry")
    return softmax(logits * mask + (mask - 1.0) * _MASK_FILL, axis=-1)


def neg_entropy(p: Tensor) -> Tensor:
    """
    sum p log p, with 0 log 0 = 0. For a (N, K) input the mean over rows.
    """
    if np.any(p.data < 0):
        raise LossInputError("negative probability")
    if np.any(p.data.sum(axis=-1) > 1.0 + 1e-6):
        raise LossInputError("probabilities sum above 1")
    return mean(tsum(p * log(p), axis=-1))


def soft_cross_entropy(probs: Tensor, target: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    -sum target * log(probs), averaged over the batch. The target is a
    distribution and may depend on parameters.

    With `mask`, the sum runs over the masked-in entries only, the target
    must be 0 elsewhere.
    """
    if probs.shape != target.shape:
        raise ShapeError("soft_cross_entropy", probs.shape, target.shape)
    if mask is None:
        return mean(-tsum(_as_rows(target) * log(_as_rows(probs)), axis=1))
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != probs.shape:
        raise ShapeError("soft_cross_entropy", probs.shape, mask.shape)
    if np.any(target.data * (1.0 - mask) != 0.0):
        raise LossInputError("target outside the mask")
    # log(1) = 0 outside the mask
    rows_p = _as_rows(probs + (1.0 - mask))
    return mean(-tsum(_as_rows(target) * log(rows_p), axis=1))
