# -*- coding: utf-8 -*-
# Tensor and primitives
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Dense float64 tensors and the differentiable primitives.

Each primitive is an `Op`: `forward` evaluates with numpy, `backward`
returns the vector-Jacobian product of every input, written with the
primitives of this module. When a backward pass runs inside an active
record, the gradients are themselves recorded and can be differentiated
again.
"""
import builtins
import logging
import os
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np
from overrides import overrides
from scipy.special import expit

from .exception import AutodiffError, NumericalError, ShapeError
from .record import Node, current_record

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12

_DEBUG = os.environ.get("MKC_DEBUG", "0") not in ("", "0")

Shape = Tuple[int, ...]
Index = Union[int, builtins.slice, Tuple[Union[int, builtins.slice], ...]]


def set_debug(flag: bool) -> None:
    """Check every primitive output for NaN and Inf."""
    global _DEBUG  # pylint: disable=global-statement
    _DEBUG = flag


def is_debug() -> bool:
    return _DEBUG


class Tensor:
    """
    A dense array of 64-bit floats.

    Args:
        data: Anything `numpy.array` accepts. The values are copied.
        requires_grad: Gradients may flow to this tensor
        name: Optional label, used in error messages
    """
    __slots__ = "data", "requires_grad", "name", "__weakref__"
    __array_ufunc__ = None  # numpy operands defer to the Tensor operators

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray) -> 'Tensor':
        tensor = cls.__new__(cls)
        tensor.data = np.array(array, dtype=np.float64, order="C")
        tensor.requires_grad = False
        tensor.name = None
        return tensor

    def __repr__(self) -> str:
        label = " name=%r" % self.name if self.name else ""
        return "Tensor(shape=%s%s%s)" % (self.shape, " grad" if self.requires_grad else "", label)

    @property
    def shape(self) -> Shape:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise AutodiffError("item() needs a single value, got shape %s" % (self.shape,))
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> 'Tensor':
        """A constant with the same values."""
        return Tensor._wrap(self.data)

    def __add__(self, other: Any) -> 'Tensor':
        return add(self, other)

    def __radd__(self, other: Any) -> 'Tensor':
        return add(other, self)

    def __sub__(self, other: Any) -> 'Tensor':
        return sub(self, other)

    def __rsub__(self, other: Any) -> 'Tensor':
        return sub(other, self)

    def __mul__(self, other: Any) -> 'Tensor':
        return mul(self, other)

    def __rmul__(self, other: Any) -> 'Tensor':
        return mul(other, self)

    def __truediv__(self, other: Any) -> 'Tensor':
        return div(self, other)

    def __rtruediv__(self, other: Any) -> 'Tensor':
        return div(other, self)

    def __neg__(self) -> 'Tensor':
        return neg(self)

    def __pow__(self, exponent: float) -> 'Tensor':
        return power(self, exponent)

    def __matmul__(self, other: Any) -> 'Tensor':
        return matmul(self, other)

    def __getitem__(self, index: Index) -> 'Tensor':
        return slice(self, index)

    def sum(self, axis: Any = None, keepdims: bool = False) -> 'Tensor':
        return sum(self, axis, keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> 'Tensor':
        return mean(self, axis, keepdims)

    def max(self, axis: Any = None, keepdims: bool = False) -> 'Tensor':
        return amax(self, axis, keepdims)

    def reshape(self, *shape: Any) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> 'Tensor':
        return transpose(self, axes or None)


def as_tensor(value: Any) -> Tensor:
    """A tensor as-is, anything else as a constant."""
    return value if isinstance(value, Tensor) else Tensor(value)


class Op:
    """A differentiable primitive."""
    name = "op"

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        """
        Args:
            node: The recorded application, with its inputs and output
            grad: Gradient of the scalar w.r.t. the output
        Returns:
            The gradient of every input, `None` when the input is constant
        """
        raise NotImplementedError()


def apply(op: Op, *operands: Any) -> Tensor:
    """Evaluate `op` and record it if needed."""
    inputs = tuple(as_tensor(t) for t in operands)
    try:
        out = op.forward(*[t.data for t in inputs])
    except ValueError as ex:
        raise ShapeError(op.name, *[t.shape for t in inputs]) from ex
    result = Tensor._wrap(out)  # pylint: disable=protected-access
    if _DEBUG and not np.all(np.isfinite(result.data)):
        raise NumericalError("%s produced non-finite values" % op.name)
    record = current_record()
    if record is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        record.append(op, inputs, result)
    return result


def _sum_to(array: np.ndarray, shape: Shape) -> np.ndarray:
    shape = tuple(shape)
    if array.shape == shape:
        return array
    lead = array.ndim - len(shape)
    if lead < 0:
        raise ShapeError("sum_to", array.shape, shape)
    out = array.sum(axis=tuple(range(lead))) if lead else array
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and out.shape[i] != 1)
    if axes:
        out = out.sum(axis=axes, keepdims=True)
    if out.shape != shape:
        raise ShapeError("sum_to", array.shape, shape)
    return out


def _normalize_axis(axis: Any, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _keep_shape(shape: Shape, axes: Tuple[int, ...]) -> Shape:
    return tuple(1 if i in axes else n for i, n in enumerate(shape))


# --- elementwise arithmetic

class Add(Op):
    name = "add"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return arrays[0] + arrays[1]

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        a, b = node.inputs
        return (sum_to(grad, a.shape) if a.requires_grad else None,
                sum_to(grad, b.shape) if b.requires_grad else None)


class Sub(Op):
    name = "sub"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return arrays[0] - arrays[1]

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        a, b = node.inputs
        return (sum_to(grad, a.shape) if a.requires_grad else None,
                sum_to(neg(grad), b.shape) if b.requires_grad else None)


class Mul(Op):
    name = "mul"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return arrays[0] * arrays[1]

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        a, b = node.inputs
        return (sum_to(grad * b, a.shape) if a.requires_grad else None,
                sum_to(grad * a, b.shape) if b.requires_grad else None)


class Div(Op):
    name = "div"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return arrays[0] / arrays[1]

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        a, b = node.inputs
        return (sum_to(grad / b, a.shape) if a.requires_grad else None,
                sum_to(neg(grad * a) / (b * b), b.shape) if b.requires_grad else None)


class Neg(Op):
    name = "neg"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return -arrays[0]

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (neg(grad),)


class Power(Op):
    name = "pow"

    def __init__(self, exponent: float):
        self.exponent = float(exponent)

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return np.power(arrays[0], self.exponent)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        if self.exponent == 0.0:
            return (None,)
        if self.exponent == 1.0:
            return (grad,)
        return (grad * (self.exponent * power(node.inputs[0], self.exponent - 1.0)),)


# --- unary functions

class Exp(Op):
    name = "exp"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return np.exp(arrays[0])

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (grad * node.output,)


class ClampMin(Op):
    name = "clamp_min"

    def __init__(self, floor: float):
        self.floor = floor
        self.mask = None  # type: Optional[np.ndarray]

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        self.mask = (arrays[0] >= self.floor).astype(np.float64)
        return np.maximum(arrays[0], self.floor)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (grad * self.mask,)


class Log(Op):
    """Natural log with the argument floored at `LOG_FLOOR`; zero slope below the floor."""
    name = "log"

    def __init__(self) -> None:
        self.mask = None  # type: Optional[np.ndarray]

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        self.mask = (arrays[0] >= LOG_FLOOR).astype(np.float64)
        return np.log(np.maximum(arrays[0], LOG_FLOOR))

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return ((grad * self.mask) / clamp_min(node.inputs[0], LOG_FLOOR),)


class Relu(Op):
    name = "relu"

    def __init__(self) -> None:
        self.mask = None  # type: Optional[np.ndarray]

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        self.mask = (arrays[0] > 0.0).astype(np.float64)
        return np.maximum(arrays[0], 0.0)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (grad * self.mask,)


class Sigmoid(Op):
    name = "sigmoid"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return expit(arrays[0])

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        out = node.output
        return (grad * out * (1.0 - out),)


class Tanh(Op):
    name = "tanh"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return np.tanh(arrays[0])

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        out = node.output
        return (grad * (1.0 - out * out),)


class Softmax(Op):
    name = "softmax"

    def __init__(self, axis: int):
        self.axis = axis

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        shifted = arrays[0] - np.max(arrays[0], axis=self.axis, keepdims=True)
        exps = np.exp(shifted)
        return exps / np.sum(exps, axis=self.axis, keepdims=True)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        out = node.output
        return (out * (grad - sum(grad * out, self.axis, keepdims=True)),)


# --- shape and reductions

class MatMul(Op):
    name = "matmul"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        a, b = arrays
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(self.name, a.shape, b.shape)
        return a @ b

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        a, b = node.inputs
        return (matmul(grad, transpose(b)) if a.requires_grad else None,
                matmul(transpose(a), grad) if b.requires_grad else None)


class Transpose(Op):
    name = "transpose"

    def __init__(self, axes: Optional[Sequence[int]]):
        self.axes = tuple(axes) if axes is not None else None

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return np.transpose(arrays[0], self.axes)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        if self.axes is None:
            return (transpose(grad),)
        return (transpose(grad, tuple(np.argsort(self.axes))),)


class Reshape(Op):
    name = "reshape"

    def __init__(self, shape: Sequence[int]):
        self.shape = tuple(shape)

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return arrays[0].reshape(self.shape)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (reshape(grad, node.inputs[0].shape),)


class SumTo(Op):
    name = "sum_to"

    def __init__(self, shape: Shape):
        self.shape = tuple(shape)

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return _sum_to(arrays[0], self.shape)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (broadcast_to(grad, node.inputs[0].shape),)


class BroadcastTo(Op):
    name = "broadcast_to"

    def __init__(self, shape: Shape):
        self.shape = tuple(shape)

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return np.broadcast_to(arrays[0], self.shape)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (sum_to(grad, node.inputs[0].shape),)


class Sum(Op):
    name = "sum"

    def __init__(self, axis: Any, keepdims: bool):
        self.axis = axis
        self.keepdims = keepdims

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        axes = _normalize_axis(self.axis, arrays[0].ndim)
        return np.sum(arrays[0], axis=axes, keepdims=self.keepdims)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        shape = node.inputs[0].shape
        axes = _normalize_axis(self.axis, len(shape))
        return (broadcast_to(reshape(grad, _keep_shape(shape, axes)), shape),)


class Mean(Op):
    name = "mean"

    def __init__(self, axis: Any, keepdims: bool):
        self.axis = axis
        self.keepdims = keepdims

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        axes = _normalize_axis(self.axis, arrays[0].ndim)
        return np.mean(arrays[0], axis=axes, keepdims=self.keepdims)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        shape = node.inputs[0].shape
        axes = _normalize_axis(self.axis, len(shape))
        count = int(np.prod([shape[a] for a in axes])) if axes else 1
        return (broadcast_to(reshape(grad, _keep_shape(shape, axes)), shape) * (1.0 / count),)


class Max(Op):
    """Maximum over axes; the gradient goes to the first maximum."""
    name = "max"

    def __init__(self, axis: Any, keepdims: bool):
        self.axis = axis
        self.keepdims = keepdims
        self.mask = None  # type: Optional[np.ndarray]

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        array = arrays[0]
        axes = _normalize_axis(self.axis, array.ndim)
        rest = tuple(i for i in range(array.ndim) if i not in axes)
        moved = np.transpose(array, rest + axes)
        flat = moved.reshape(moved.shape[:len(rest)] + (-1,))
        first = np.argmax(flat, axis=-1)
        one_hot = np.zeros_like(flat)
        np.put_along_axis(one_hot, first[..., None], 1.0, axis=-1)
        self.mask = np.transpose(one_hot.reshape(moved.shape), np.argsort(rest + axes))
        return np.max(array, axis=axes, keepdims=self.keepdims)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        shape = node.inputs[0].shape
        axes = _normalize_axis(self.axis, len(shape))
        return (broadcast_to(reshape(grad, _keep_shape(shape, axes)), shape) * self.mask,)


class Concat(Op):
    name = "concat"

    def __init__(self, axis: int):
        self.axis = axis

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return np.concatenate(arrays, axis=self.axis)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        axis = self.axis % grad.ndim
        grads = []
        start = 0
        for tensor in node.inputs:
            stop = start + tensor.shape[axis]
            if tensor.requires_grad:
                index = tuple(builtins.slice(start, stop) if i == axis else builtins.slice(None)
                              for i in range(grad.ndim))
                grads.append(slice(grad, index))
            else:
                grads.append(None)
            start = stop
        return tuple(grads)


def _check_index(index: Any) -> Tuple[Any, ...]:
    if not isinstance(index, tuple):
        index = (index,)
    for item in index:
        if not isinstance(item, (int, np.integer, builtins.slice)):
            raise AutodiffError("only integers and slices can index a tensor, got %r" % (item,))
    return index


class Slice(Op):
    name = "slice"

    def __init__(self, index: Any):
        self.index = _check_index(index)

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return arrays[0][self.index]

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (pad_slice(grad, self.index, node.inputs[0].shape),)


class PadSlice(Op):
    """Place a slice back into a zero tensor; adjoint of `Slice`."""
    name = "pad_slice"

    def __init__(self, index: Any, shape: Shape):
        self.index = _check_index(index)
        self.shape = tuple(shape)

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.index] = arrays[0]
        return out

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (slice(grad, self.index),)


# --- convolution

def _out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _unfold(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    n, c, h, w = x.shape
    out_h, out_w = _out_size(h, kernel, stride, padding), _out_size(w, kernel, stride, padding)
    if out_h <= 0 or out_w <= 0:
        raise ShapeError("unfold", x.shape, (kernel, kernel))
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    # rows ordered (channel, ky, kx), columns (sample, y, x)
    return windows.transpose(1, 4, 5, 0, 2, 3).reshape(c * kernel * kernel, n * out_h * out_w)


def _fold(cols: np.ndarray, shape: Shape, kernel: int, stride: int, padding: int) -> np.ndarray:
    n, c, h, w = shape
    out_h, out_w = _out_size(h, kernel, stride, padding), _out_size(w, kernel, stride, padding)
    if cols.shape != (c * kernel * kernel, n * out_h * out_w):
        raise ShapeError("fold", cols.shape, shape)
    blocks = cols.reshape(c, kernel, kernel, n, out_h, out_w).transpose(3, 0, 1, 2, 4, 5)
    out = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for i in range(kernel):
        for j in range(kernel):
            out[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += blocks[:, :, i, j]
    return out[:, :, padding:padding + h, padding:padding + w]


class Unfold(Op):
    name = "unfold"

    def __init__(self, kernel: int, stride: int, padding: int):
        self.kernel, self.stride, self.padding = kernel, stride, padding

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        if arrays[0].ndim != 4:
            raise ShapeError(self.name, arrays[0].shape)
        return _unfold(arrays[0], self.kernel, self.stride, self.padding)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (fold(grad, node.inputs[0].shape, self.kernel, self.stride, self.padding),)


class Fold(Op):
    name = "fold"

    def __init__(self, shape: Shape, kernel: int, stride: int, padding: int):
        self.shape = tuple(shape)
        self.kernel, self.stride, self.padding = kernel, stride, padding

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return _fold(arrays[0], self.shape, self.kernel, self.stride, self.padding)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        return (unfold(grad, self.kernel, self.stride, self.padding),)


class Conv2d(Op):
    """Cross-correlation of (N,C,H,W) with square kernels (O,C,k,k)."""
    name = "conv2d"

    def __init__(self, stride: int, padding: int):
        self.stride, self.padding = stride, padding

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        x, weight = arrays
        if x.ndim != 4 or weight.ndim != 4 or weight.shape[1] != x.shape[1] \
                or weight.shape[2] != weight.shape[3]:
            raise ShapeError(self.name, x.shape, weight.shape)
        n, kernel = x.shape[0], weight.shape[2]
        out_h = _out_size(x.shape[2], kernel, self.stride, self.padding)
        out_w = _out_size(x.shape[3], kernel, self.stride, self.padding)
        cols = _unfold(x, kernel, self.stride, self.padding)
        out = weight.reshape(weight.shape[0], -1) @ cols
        return out.reshape(weight.shape[0], n, out_h, out_w).transpose(1, 0, 2, 3)

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        x, weight = node.inputs
        out_channels, kernel = weight.shape[0], weight.shape[2]
        grad_2d = reshape(transpose(grad, (1, 0, 2, 3)), (out_channels, -1))
        grad_x = grad_w = None
        if x.requires_grad:
            cols = matmul(transpose(reshape(weight, (out_channels, -1))), grad_2d)
            grad_x = fold(cols, x.shape, kernel, self.stride, self.padding)
        if weight.requires_grad:
            cols = unfold(x, kernel, self.stride, self.padding)
            grad_w = reshape(matmul(grad_2d, transpose(cols)), weight.shape)
        return grad_x, grad_w


class GlobalAvgPool(Op):
    name = "global_avg_pool"

    @overrides
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        if arrays[0].ndim != 4:
            raise ShapeError(self.name, arrays[0].shape)
        return arrays[0].mean(axis=(2, 3))

    @overrides
    def backward(self, node: Node, grad: Tensor) -> Tuple[Optional[Tensor], ...]:
        n, c, h, w = node.inputs[0].shape
        return (broadcast_to(reshape(grad, (n, c, 1, 1)), (n, c, h, w)) * (1.0 / (h * w)),)


# --- functional entry points

def add(a: Any, b: Any) -> Tensor:
    return apply(Add(), a, b)


def sub(a: Any, b: Any) -> Tensor:
    return apply(Sub(), a, b)


def mul(a: Any, b: Any) -> Tensor:
    return apply(Mul(), a, b)


def div(a: Any, b: Any) -> Tensor:
    return apply(Div(), a, b)


def neg(a: Any) -> Tensor:
    return apply(Neg(), a)


def power(a: Any, exponent: float) -> Tensor:
    return apply(Power(exponent), a)


def exp(a: Any) -> Tensor:
    return apply(Exp(), a)


def log(a: Any) -> Tensor:
    return apply(Log(), a)


def clamp_min(a: Any, floor: float) -> Tensor:
    return apply(ClampMin(floor), a)


def relu(a: Any) -> Tensor:
    return apply(Relu(), a)


def sigmoid(a: Any) -> Tensor:
    return apply(Sigmoid(), a)


def tanh(a: Any) -> Tensor:
    return apply(Tanh(), a)


def softmax(a: Any, axis: int = -1) -> Tensor:
    return apply(Softmax(axis), a)


def matmul(a: Any, b: Any) -> Tensor:
    return apply(MatMul(), a, b)


def transpose(a: Any, axes: Optional[Sequence[int]] = None) -> Tensor:
    return apply(Transpose(axes), a)


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    return apply(Reshape(shape), a)


def sum_to(a: Tensor, shape: Shape) -> Tensor:
    """Sum the broadcast axes of `a` away, back to `shape`."""
    if tuple(a.shape) == tuple(shape):
        return a
    return apply(SumTo(shape), a)


def broadcast_to(a: Tensor, shape: Shape) -> Tensor:
    if tuple(a.shape) == tuple(shape):
        return a
    return apply(BroadcastTo(shape), a)


def sum(a: Any, axis: Any = None, keepdims: bool = False) -> Tensor:  # pylint: disable=redefined-builtin
    return apply(Sum(axis, keepdims), a)


def mean(a: Any, axis: Any = None, keepdims: bool = False) -> Tensor:
    return apply(Mean(axis, keepdims), a)


def amax(a: Any, axis: Any = None, keepdims: bool = False) -> Tensor:
    return apply(Max(axis, keepdims), a)


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    return apply(Concat(axis), *tensors)


def slice(a: Any, index: Any) -> Tensor:  # pylint: disable=redefined-builtin
    return apply(Slice(index), a)


def pad_slice(a: Any, index: Any, shape: Shape) -> Tensor:
    return apply(PadSlice(index, shape), a)


def unfold(a: Any, kernel: int, stride: int = 1, padding: int = 0) -> Tensor:
    return apply(Unfold(kernel, stride, padding), a)


def fold(a: Any, shape: Shape, kernel: int, stride: int = 1, padding: int = 0) -> Tensor:
    return apply(Fold(shape, kernel, stride, padding), a)


def conv2d(x: Any, weight: Any, stride: int = 1, padding: int = 0) -> Tensor:
    return apply(Conv2d(stride, padding), x, weight)


def global_avg_pool(x: Any) -> Tensor:
    """(N,C,H,W) -> (N,C)"""
    return apply(GlobalAvgPool(), x)


def global_max_pool(x: Any) -> Tensor:
    """(N,C,H,W) -> (N,C), ties resolved to the first maximum"""
    return amax(x, axis=(2, 3))
