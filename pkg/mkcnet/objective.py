# -*- coding: utf-8 -*-
# Task objective
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Loss of the task network: diagnosis and quality focal losses plus the soft
cross-entropy of the auxiliary head against the auxiliary target. The
auxiliary head is read through the joint masks of the batch: entries outside
the block of a sample get neither probability nor gradient.
"""
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .losses import LossInputError, focal_loss, masked_softmax, soft_cross_entropy
from .model import TaskNetOutput
from .tensor import Tensor, softmax


@dataclass
class LossBreakdown:
    """The terms and their sum, `total = l_d + l_q + l_omega`."""
    l_d: Tensor
    l_q: Tensor
    l_omega: Tensor
    total: Tensor

    def values(self) -> Dict[str, float]:
        return {"l_d": self.l_d.item(), "l_q": self.l_q.item(),
                "l_omega": self.l_omega.item(), "total": self.total.item()}

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.total.data).all())


def task_loss(output: TaskNetOutput,
              y_d: np.ndarray,
              y_q: np.ndarray,
              y_omega: Optional[Tensor],
              masks: Optional[np.ndarray] = None,
              gamma: float = 2.0) -> LossBreakdown:
    """
    Args:
        output: Task network output of the batch
        y_d: (N,) diagnosis labels
        y_q: (N,) quality labels
        y_omega: (N, E) auxiliary target; pass a detached tensor to keep the
            Meta Learner constant
        masks: (N, E) joint masks of the batch, required with `y_omega`
        gamma: Focal exponent
    Returns:
        The terms; absent heads contribute a constant 0
    Raises:
        LossInputError when an auxiliary target comes without masks
    """
    l_d = focal_loss(softmax(output.logits_d, axis=-1), y_d, gamma)
    zero = Tensor(0.0)
    l_q = focal_loss(softmax(output.logits_q, axis=-1), y_q, gamma) if output.logits_q is not None else zero
    if output.logits_omega is not None and y_omega is not None:
        if masks is None:
            raise LossInputError("auxiliary target without joint masks")
        l_omega = soft_cross_entropy(masked_softmax(output.logits_omega, masks), y_omega, masks)
    else:
        l_omega = zero
    return LossBreakdown(l_d, l_q, l_omega, l_d + l_q + l_omega)
