# src/tensor/primitives.py
"""Forward kernels and vector-Jacobian rules.

Every rule is expressed with the primitives themselves, so a gradient computed with
create_graph=True is recorded on the tape and can be differentiated once more.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np

from src.domain.errors import ShapeError
from src.tensor import ops
from src.tensor.tensor import Tensor, register_primitive

logger = logging.getLogger(__name__)


def _broadcast_shape(name: str, a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    if a == b:
        return a
    if a == ():
        return b
    if b == ():
        return a
    if len(a) == 1 and len(b) >= 1 and a[0] == b[-1]:
        return b
    if len(b) == 1 and len(a) >= 1 and b[0] == a[-1]:
        return a
    raise ShapeError(f"{name}: cannot broadcast {a} with {b}")


def _elementwise(name, kernel):
    def forward(a, b):
        _broadcast_shape(name, a.shape, b.shape)
        return kernel(a, b)
    return forward


# -- binary arithmetic -------------------------------------------------------

def _add_vjp(inputs, output, g):
    a, b = inputs
    return [ops.sum_to(g, a.shape), ops.sum_to(g, b.shape)]


def _sub_vjp(inputs, output, g):
    a, b = inputs
    return [ops.sum_to(g, a.shape), ops.sum_to(ops.neg(g), b.shape)]


def _mul_vjp(inputs, output, g):
    a, b = inputs
    return [ops.sum_to(ops.mul(g, b), a.shape), ops.sum_to(ops.mul(g, a), b.shape)]


def _div_vjp(inputs, output, g):
    a, b = inputs
    ga = ops.div(g, b)
    gb = ops.neg(ops.div(ops.mul(g, a), ops.mul(b, b)))
    return [ops.sum_to(ga, a.shape), ops.sum_to(gb, b.shape)]


register_primitive("add", _elementwise("add", np.add), _add_vjp)
register_primitive("sub", _elementwise("sub", np.subtract), _sub_vjp)
register_primitive("mul", _elementwise("mul", np.multiply), _mul_vjp)
register_primitive("div", _elementwise("div", np.divide), _div_vjp)


# -- matmul -------------------------------------------------------------------

def _matmul_forward(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}")
    return np.matmul(a, b)


def _matmul_vjp(inputs, output, g):
    a, b = inputs
    ga = ops.matmul(g, ops.swap_last(b))
    if b.ndim == 2 and a.ndim > 2:
        k, n = b.shape
        a2 = ops.reshape(a, (-1, k))
        g2 = ops.reshape(g, (-1, n))
        gb = ops.matmul(ops.transpose(a2), g2)
    else:
        gb = ops.matmul(ops.swap_last(a), g)
    return [ga, gb]


register_primitive("matmul", _matmul_forward, _matmul_vjp)


# -- unary --------------------------------------------------------------------

def _softplus_forward(x):
    return np.logaddexp(np.zeros((), dtype=x.dtype), x)


def _silu_forward(x):
    return x * np.exp(-_softplus_forward(-x))


def _power_forward(x, exponent):
    return np.power(x, np.asarray(exponent, dtype=x.dtype))


register_primitive("exp", np.exp, lambda inputs, output, g: [ops.mul(g, output)])
register_primitive("log", np.log, lambda inputs, output, g: [ops.div(g, inputs[0])])
register_primitive("softplus", _softplus_forward,
                   lambda inputs, output, g: [ops.mul(g, ops.sigmoid(inputs[0]))])
register_primitive("tanh", np.tanh,
                   lambda inputs, output, g: [ops.mul(g, ops.sub(1.0, ops.mul(output, output)))])


def _silu_vjp(inputs, output, g):
    (x,) = inputs
    s = ops.sigmoid(x)
    # d/dx x*s(x) = s + x*s*(1-s)
    slope = ops.add(s, ops.mul(ops.mul(x, s), ops.sub(1.0, s)))
    return [ops.mul(g, slope)]


def _power_vjp(inputs, output, g, exponent):
    (x,) = inputs
    return [ops.mul(g, ops.mul(exponent, ops.power(x, exponent - 1.0)))]


register_primitive("silu", _silu_forward, _silu_vjp)
register_primitive("power", _power_forward, _power_vjp)


# -- reductions ---------------------------------------------------------------

def _sum_forward(x, axis):
    return np.sum(x, axis=axis)


def _mean_forward(x, axis):
    return np.mean(x, axis=axis)


def _sum_vjp(inputs, output, g, axis):
    (x,) = inputs
    if axis is None:
        return [ops.expand_scalar(g, x.shape)]
    return [ops.expand_axis(g, axis, x.shape[axis], x.ndim)]


def _mean_vjp(inputs, output, g, axis):
    (x,) = inputs
    count = x.size if axis is None else x.shape[axis]
    return [ops.mul(_sum_vjp(inputs, output, g, axis)[0], 1.0 / count)]


def _max_forward(x, axis):
    return np.max(x, axis=axis)


def _max_vjp(inputs, output, g, axis):
    (x,) = inputs
    # np.argmax returns the first maximizer: ties route to the lowest index
    winner = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    mask = np.zeros_like(x.data)
    np.put_along_axis(mask, winner, 1.0, axis=axis)
    return [ops.mul(ops.expand_axis(g, axis, x.shape[axis], x.ndim), Tensor(mask))]


register_primitive("sum", _sum_forward, _sum_vjp)
register_primitive("mean", _mean_forward, _mean_vjp)
register_primitive("max", _max_forward, _max_vjp)


# -- structural ---------------------------------------------------------------

def _reshape_forward(x, shape):
    try:
        return np.reshape(x, shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {shape}")


def _transpose_forward(x, axes):
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"axes {axes} are not a permutation for shape {x.shape}")
    return np.transpose(x, axes)


def _concat_forward(*arrays, axis):
    ref = arrays[0].shape
    for arr in arrays[1:]:
        if arr.ndim != len(ref) or any(d != r for i, (d, r) in enumerate(zip(arr.shape, ref)) if i != axis):
            raise ShapeError(f"concat along axis {axis}: {ref} vs {arr.shape}")
    return np.concatenate(arrays, axis=axis)


def _concat_vjp(inputs, output, g, axis):
    grads, offset = [], 0
    for t in inputs:
        n = t.shape[axis]
        grads.append(ops.slice_axis(g, axis, offset, offset + n))
        offset += n
    return grads


def _slice_forward(x, axis, start, stop, reverse):
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis {axis} of {x.shape}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    out = x[tuple(index)]
    return np.flip(out, axis=axis).copy() if reverse else out.copy()


def _slice_vjp(inputs, output, g, axis, start, stop, reverse):
    (x,) = inputs
    if reverse:
        g = ops.reverse_axis(g, axis)
    pieces = []
    if start > 0:
        pieces.append(ops.zeros(_with_axis(x.shape, axis, start), g.dtype))
    pieces.append(g)
    if stop < x.shape[axis]:
        pieces.append(ops.zeros(_with_axis(x.shape, axis, x.shape[axis] - stop), g.dtype))
    return [ops.concat(pieces, axis) if len(pieces) > 1 else g]


def _with_axis(shape, axis, n):
    shape = list(shape)
    shape[axis] = n
    return tuple(shape)


register_primitive("reshape", _reshape_forward,
                   lambda inputs, output, g, shape: [ops.reshape(g, inputs[0].shape)])
register_primitive("transpose", _transpose_forward,
                   lambda inputs, output, g, axes: [ops.transpose(g, tuple(np.argsort(axes)))])
register_primitive("concat", _concat_forward, _concat_vjp)
register_primitive("slice", _slice_forward, _slice_vjp)


# -- normalization and losses ------------------------------------------------

def _softmax_forward(x):
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def _softmax_vjp(inputs, output, g):
    x = inputs[0]
    inner = ops.reduce_sum(ops.mul(g, output), axis=-1)
    centered = ops.sub(g, ops.expand_axis(inner, x.ndim - 1, x.shape[-1], x.ndim))
    return [ops.mul(output, centered)]


def _layernorm_forward(x, eps):
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + np.asarray(eps, dtype=x.dtype))


def _layernorm_vjp(inputs, output, g, eps):
    (x,) = inputs
    n, last = x.shape[-1], x.ndim - 1

    def expand(t):
        return ops.expand_axis(t, last, n, x.ndim)

    centered = ops.sub(x, expand(ops.reduce_mean(x, axis=-1)))
    var = ops.reduce_mean(ops.mul(centered, centered), axis=-1)
    inv_std = expand(ops.power(ops.add(var, eps), -0.5))
    g_mean = expand(ops.reduce_mean(g, axis=-1))
    proj = expand(ops.reduce_mean(ops.mul(g, output), axis=-1))
    return [ops.mul(inv_std, ops.sub(ops.sub(g, g_mean), ops.mul(output, proj)))]


def _l2_forward(x, eps):
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True) + np.asarray(eps, dtype=x.dtype))
    return x / norm


def _l2_vjp(inputs, output, g, eps):
    (x,) = inputs
    n, last = x.shape[-1], x.ndim - 1
    norm = ops.power(ops.add(ops.reduce_sum(ops.mul(x, x), axis=-1), eps), 0.5)
    proj = ops.reduce_sum(ops.mul(g, output), axis=-1)
    radial = ops.mul(output, ops.expand_axis(proj, last, n, x.ndim))
    return [ops.div(ops.sub(g, radial), ops.expand_axis(norm, last, n, x.ndim))]


def _cross_entropy_forward(logits, targets):
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross-entropy expects (B, K) logits and (B,) targets, got {logits.shape} / {targets.shape}")
    if targets.min() < 0 or targets.max() >= logits.shape[1]:
        raise ShapeError(f"target index outside [0, {logits.shape[1]})")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=-1))
    picked = shifted[np.arange(logits.shape[0]), targets]
    return np.mean(log_z - picked)


def _cross_entropy_vjp(inputs, output, g, targets):
    (logits,) = inputs
    batch, classes = logits.shape
    onehot = np.zeros(logits.shape, dtype=logits.data.dtype)
    onehot[np.arange(batch), targets] = 1.0
    residual = ops.sub(ops.softmax(logits), Tensor(onehot))
    return [ops.mul(residual, ops.mul(g, 1.0 / batch))]


register_primitive("softmax", _softmax_forward, _softmax_vjp)
register_primitive("layernorm", _layernorm_forward, _layernorm_vjp)
register_primitive("l2_normalize", _l2_forward, _l2_vjp)
register_primitive("cross_entropy", _cross_entropy_forward, _cross_entropy_vjp)


# -- lookups and convolutions ------------------------------------------------

def _embedding_forward(table, ids):
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be (V, D), got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"token id outside vocabulary of {table.shape[0]}")
    if ids.ndim + 1 > 5:
        raise ShapeError(f"embedding output rank {ids.ndim + 1} exceeds 5")
    return table[ids]


def _embedding_vjp(inputs, output, g, ids):
    (table,) = inputs
    vocab, width = table.shape
    flat = ids.reshape(-1)
    onehot = np.zeros((flat.size, vocab), dtype=table.data.dtype)
    onehot[np.arange(flat.size), flat] = 1.0
    g2 = ops.reshape(g, (flat.size, width))
    return [ops.matmul(ops.transpose(Tensor(onehot)), g2)]


def _conv_forward(x, w, anticausal):
    if x.ndim not in (2, 3) or w.ndim != 2 or x.shape[-1] != w.shape[-1]:
        raise ShapeError(f"depthwise conv expects (..., L, C) input and (K, C) taps, got {x.shape} / {w.shape}")
    length, taps = x.shape[-2], w.shape[0]
    pad = [(0, 0)] * x.ndim
    pad[-2] = (0, taps - 1) if anticausal else (taps - 1, 0)
    padded = np.pad(x, pad)
    out = np.zeros_like(x)
    for k in range(taps):
        out += w[k] * padded[..., k:k + length, :]
    return out


def _shifted(x: Tensor, shift: int) -> Optional[Tensor]:
    """x moved `shift` steps later in time (negative: earlier), zero filled."""
    length = x.shape[-2]
    axis = x.ndim - 2
    if shift == 0:
        return x
    if abs(shift) >= length:
        return None
    fill = ops.zeros(_with_axis(x.shape, axis, abs(shift)), x.dtype)
    if shift > 0:
        return ops.concat([fill, ops.slice_axis(x, axis, 0, length - shift)], axis)
    return ops.concat([ops.slice_axis(x, axis, -shift, length), fill], axis)


def _conv_vjp(inputs, output, g, anticausal):
    x, w = inputs
    taps, channels = w.shape
    flipped = ops.reverse_axis(w, 0)
    gx = ops.depthwise_conv1d(g, flipped, anticausal=not anticausal)
    rows = []
    for k in range(taps):
        shift = -k if anticausal else taps - 1 - k
        xs = _shifted(x, shift)
        if xs is None:
            rows.append(ops.zeros((1, channels), g.dtype))
            continue
        row = ops.reduce_sum(ops.reshape(ops.mul(g, xs), (-1, channels)), axis=0)
        rows.append(ops.reshape(row, (1, channels)))
    gw = ops.concat(rows, 0) if len(rows) > 1 else rows[0]
    return [gx, gw]


register_primitive("embedding", _embedding_forward, _embedding_vjp)
register_primitive("depthwise_conv1d", _conv_forward, _conv_vjp)
