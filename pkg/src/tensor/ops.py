# src/tensor/ops.py
"""Functional front end over the registered primitives plus a few composites."""
from typing import Optional, Sequence, Tuple

import numpy as np

from src.tensor.tensor import DTYPES, Tensor, apply_primitive


def constant(value, dtype: str = "f64") -> Tensor:
    return Tensor(np.asarray(value, dtype=DTYPES[dtype]))


def zeros(shape: Sequence[int], dtype: str = "f64") -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=DTYPES[dtype]))


def ones(shape: Sequence[int], dtype: str = "f64") -> Tensor:
    return Tensor(np.ones(tuple(shape), dtype=DTYPES[dtype]))


def matmul(a, b) -> Tensor:
    return apply_primitive("matmul", [a, b])


def add(a, b) -> Tensor:
    return apply_primitive("add", [a, b])


def sub(a, b) -> Tensor:
    return apply_primitive("sub", [a, b])


def mul(a, b) -> Tensor:
    return apply_primitive("mul", [a, b])


def div(a, b) -> Tensor:
    return apply_primitive("div", [a, b])


def neg(x) -> Tensor:
    return apply_primitive("mul", [x, -1.0])


def exp(x) -> Tensor:
    return apply_primitive("exp", [x])


def log(x) -> Tensor:
    return apply_primitive("log", [x])


def softplus(x) -> Tensor:
    return apply_primitive("softplus", [x])


def silu(x) -> Tensor:
    return apply_primitive("silu", [x])


def tanh(x) -> Tensor:
    return apply_primitive("tanh", [x])


def power(x, exponent: float) -> Tensor:
    return apply_primitive("power", [x], exponent=float(exponent))


def reduce_sum(x, axis: Optional[int] = None) -> Tensor:
    return apply_primitive("sum", [x], axis=_normalize_axis(x, axis))


def reduce_mean(x, axis: Optional[int] = None) -> Tensor:
    return apply_primitive("mean", [x], axis=_normalize_axis(x, axis))


def reduce_max(x, axis: int = -1) -> Tensor:
    return apply_primitive("max", [x], axis=_normalize_axis(x, axis))


def reshape(x, shape: Sequence[int]) -> Tensor:
    return apply_primitive("reshape", [x], shape=tuple(int(s) for s in shape))


def transpose(x, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    return apply_primitive("transpose", [x], axes=tuple(int(a) for a in axes))


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    first = next(t for t in tensors if isinstance(t, Tensor))
    return apply_primitive("concat", list(tensors), axis=_normalize_axis(first, axis))


def slice_axis(x, axis: int, start: int, stop: int, reverse: bool = False) -> Tensor:
    return apply_primitive("slice", [x], axis=_normalize_axis(x, axis), start=int(start),
                           stop=int(stop), reverse=bool(reverse))


def reverse_axis(x: Tensor, axis: int) -> Tensor:
    axis = _normalize_axis(x, axis)
    return slice_axis(x, axis, 0, x.shape[axis], reverse=True)


def softmax(x) -> Tensor:
    return apply_primitive("softmax", [x])


def layernorm(x, eps: float = 1e-5) -> Tensor:
    return apply_primitive("layernorm", [x], eps=float(eps))


def embedding(table, ids) -> Tensor:
    return apply_primitive("embedding", [table], ids=np.asarray(ids, dtype=np.int64))


def depthwise_conv1d(x, weight, anticausal: bool = False) -> Tensor:
    return apply_primitive("depthwise_conv1d", [x, weight], anticausal=bool(anticausal))


def l2_normalize(x, eps: float = 1e-12) -> Tensor:
    return apply_primitive("l2_normalize", [x], eps=float(eps))


def cross_entropy(logits, targets) -> Tensor:
    return apply_primitive("cross_entropy", [logits], targets=np.asarray(targets, dtype=np.int64))


def sigmoid(x: Tensor) -> Tensor:
    # x - softplus(x) = -softplus(-x) <= 0, so the exponential never overflows
    return exp(sub(x, softplus(x)))


def expand_axis(x: Tensor, axis: int, n: int, ndim: int) -> Tensor:
    """Re-insert a reduced axis of length n (inverse of a reduction over `axis`)."""
    reduced = x.shape
    flat = reshape(x, (int(np.prod(reduced, dtype=np.int64)), 1))
    tiled = matmul(flat, ones((1, n), x.dtype))
    tiled = reshape(tiled, tuple(reduced) + (n,))
    if axis == ndim - 1:
        return tiled
    axes = list(range(ndim - 1))
    axes.insert(axis, ndim - 1)
    return transpose(tiled, axes)


def expand_scalar(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    if tuple(shape) == ():
        return reshape(x, ())
    size = int(np.prod(shape, dtype=np.int64))
    tiled = matmul(reshape(x, (1, 1)), ones((1, size), x.dtype))
    return reshape(tiled, shape)


def sum_to(g: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """Undo the trailing/scalar broadcast of an elementwise primitive."""
    if g.shape == tuple(shape):
        return g
    if tuple(shape) == ():
        return reduce_sum(g)
    return reduce_sum(reshape(g, (-1, shape[-1])), axis=0)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def _normalize_axis(x, axis: Optional[int]) -> Optional[int]:
    if axis is None:
        return None
    ndim = x.ndim if isinstance(x, Tensor) else np.ndim(x)
    return axis + ndim if axis < 0 else axis
