# -*- coding: utf-8 -*-
# Reverse-mode differentiation
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Gradients of a scalar w.r.t. the roots of a `ComputationRecord`.
"""
import logging
from typing import Dict, Optional

import numpy as np

from .exception import AutodiffError
from .params import GradientMap, ParamSet
from .record import ComputationRecord, no_record
from .tensor import Tensor

log = logging.getLogger(__name__)


def backward(record: ComputationRecord,
             output: Tensor,
             wrt: ParamSet,
             create_graph: Optional[bool] = None) -> GradientMap:
    """
    Gradient of a scalar output w.r.t. parameters watched by the record.

    The nodes are walked in reverse and each vector-Jacobian product is
    accumulated by node id. When the record tracks second order (or when
    `create_graph` is set), the walk is itself recorded: the returned
    gradients are differentiable tensors depending on the roots.

    Args:
        record: The record holding the forward computation
        output: A scalar produced inside the record
        wrt: The parameters; each must be a root of the record
        create_graph: Override `record.second_order`
    Returns:
        One gradient per parameter; zeros for parameters that do not
        contribute to the output
    """
    if output.size != 1:
        raise AutodiffError("backward needs a scalar output, got shape %s" % (output.shape,))
    for name, param in wrt.items():
        if not record.is_root(param):
            raise AutodiffError("parameter %r is not a root of the record" % name)
    out_id = record.node_id_of(output)
    if out_id is None:
        raise AutodiffError("the output is not reachable from the record")
    second_order = record.second_order if create_graph is None else create_graph

    grads = {out_id: Tensor(np.ones(output.shape))}  # type: Dict[int, Tensor]
    nodes = record.nodes[:record.position(out_id)]
    context = record.resume() if second_order else no_record()
    with context:
        for node in reversed(nodes):
            grad = grads.get(node.node_id)
            if grad is None:
                continue
            if node.node_id not in record.roots:
                del grads[node.node_id]
            input_grads = node.op.backward(node, grad)
            for input_id, input_grad in zip(node.input_ids, input_grads):
                if input_id is None or input_grad is None:
                    continue
                previous = grads.get(input_id)
                grads[input_id] = input_grad if previous is None else previous + input_grad

    result = GradientMap()
    for name, param in wrt.items():
        grad = grads.get(record.node_id_of(param))
        result[name] = grad if grad is not None else Tensor(np.zeros(param.shape))
    return result


def backward_through_backward(record: ComputationRecord, meta_scalar: Tensor, wrt: ParamSet) -> GradientMap:
    """
    Gradient of a scalar that depends on gradients computed earlier in the
    same record (an inner update), differentiated through that inner
    backward pass.

    Args:
        record: A record created with `second_order=True`
        meta_scalar: Scalar produced inside the record
        wrt: Roots of the record
    Returns:
        The exact gradient, not a first-order approximation
    """
    if not record.second_order:
        raise AutodiffError("the record was built without second-order tracking; "
                            "re-run the forward and inner backward inside ComputationRecord(second_order=True)")
    return backward(record, meta_scalar, wrt, create_graph=False)
