# -*- coding: utf-8 -*-
# Finite-difference gradients
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Central finite differences, the oracle of every gradient test.
"""
from typing import Any, Callable

import numpy as np

from .exception import AutodiffError
from .params import GradientMap, ParamSet
from .tensor import Tensor


def _scalar(value: Any) -> float:
    array = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
    if array.size != 1:
        raise AutodiffError("the function must return a scalar, got shape %s" % (array.shape,))
    return float(array.reshape(-1)[0])


def finite_diff_grad(func: Callable[[ParamSet], Any], params: ParamSet, h: float = 1e-5) -> GradientMap:
    """
    (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.

    The parameter values are perturbed in place and restored.

    Args:
        func: Deterministic scalar function of the parameters
        params: Evaluation point
        h: Step, > 0
    Returns:
        The gradient estimate
    """
    if h <= 0:
        raise ValueError("h must be > 0, got %r" % h)
    baseline = _scalar(func(params))
    if _scalar(func(params)) != baseline:
        raise AutodiffError("the function is not deterministic")
    result = GradientMap()
    for name, param in params.items():
        flat = param.data.reshape(-1)
        grad = np.zeros(flat.size)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = _scalar(func(params))
            flat[i] = original - h
            minus = _scalar(func(params))
            flat[i] = original
            grad[i] = (plus - minus) / (2.0 * h)
        result[name] = Tensor(grad.reshape(param.shape))
    return result
