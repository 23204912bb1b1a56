# -*- coding: utf-8 -*-
# Parameter sets
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Named, ordered collections of tensors: the parameters of a network and the
gradients computed for them.
"""
from typing import Any, Iterable, Tuple, Union, Dict, Optional

import numpy as np

from .exception import AutodiffError
from .sortabledict import SortableDict
from .tensor import Tensor


def _check_tensor(value: Any) -> None:
    if not isinstance(value, Tensor):
        raise TypeError("%r is not a Tensor" % (value,))


class ParamSet(SortableDict):
    """
    Parameters by name, in a stable order.
    """

    def __init__(self, initial: Union[None, Iterable[Tuple[str, Tensor]], Dict[str, Tensor]] = None):
        super().__init__(initial, validate_fn=_check_tensor)

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.values()))

    def flatten(self) -> np.ndarray:
        """All the values, concatenated in key order."""
        if not self:
            return np.zeros(0)
        return np.concatenate([t.data.reshape(-1) for t in self.values()])

    def leaves(self) -> 'ParamSet':
        """Fresh trainable copies, outside of any record."""
        return ParamSet((name, Tensor(t.data, requires_grad=True, name=name)) for name, t in self.items())

    def with_prefix(self, prefix: str) -> 'ParamSet':
        """The parameters whose name starts with `prefix`."""
        return ParamSet((name, t) for name, t in self.items() if name.startswith(prefix))

    def check_aligned(self, other: 'SortableDict') -> None:
        """
        Raise when `other` does not have exactly the same names and shapes.
        """
        if list(self.keys()) != list(other.keys()):
            missing = set(self.keys()).symmetric_difference(other.keys())
            raise AutodiffError("parameter names differ: %s" % sorted(missing))
        for name, tensor in self.items():
            if tensor.shape != other[name].shape:
                raise AutodiffError("parameter %r: shape %s against %s" % (name, tensor.shape, other[name].shape))


class GradientMap(SortableDict):
    """
    Gradients by parameter name, aligned with a `ParamSet`.
    """

    def __init__(self, initial: Union[None, Iterable[Tuple[str, Tensor]], Dict[str, Tensor]] = None):
        super().__init__(initial, validate_fn=_check_tensor)

    def flatten(self, names: Optional[Iterable[str]] = None) -> np.ndarray:
        keys = list(self.keys()) if names is None else list(names)
        if not keys:
            return np.zeros(0)
        return np.concatenate([self[name].data.reshape(-1) for name in keys])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flatten()))
