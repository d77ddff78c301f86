# src/model/ssm.py
"""Selective state-space scan: discretization, sequential and parallel scans, 2D cross-scan."""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.domain.errors import ScanError, ShapeError
from src.domain.models import ScanMode
from src.tensor import ops
from src.tensor.tensor import Tensor
from src.util import error_translator as codes

logger = logging.getLogger(__name__)

DT_MIN = 1e-3
DT_MAX = 1e-1

Number = Union[float, np.ndarray]


@dataclass
class SsmParams:
    """Per-channel continuous parameters plus the input-dependent projections.

    A = -exp(a_log) keeps every state decaying.
    """
    a_log: Tensor                      # (D, N)
    d_skip: Tensor                     # (D,)
    dt_proj: Optional[Tensor] = None   # (D, D)
    dt_bias: Optional[Tensor] = None   # (D,)
    b_proj: Optional[Tensor] = None    # (D, N)
    c_proj: Optional[Tensor] = None    # (D, N)

    @property
    def channels(self) -> int:
        return self.a_log.shape[0]

    @property
    def state_dim(self) -> int:
        return self.a_log.shape[1]

    def a(self) -> Tensor:
        return ops.neg(ops.exp(self.a_log))

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str) -> "SsmParams":
        return cls(
            a_log=params[f"{prefix}.a_log"],
            d_skip=params[f"{prefix}.d_skip"],
            dt_proj=params.get(f"{prefix}.dt_proj"),
            dt_bias=params.get(f"{prefix}.dt_bias"),
            b_proj=params.get(f"{prefix}.b_proj"),
            c_proj=params.get(f"{prefix}.c_proj"),
        )


@dataclass
class ScanSequence:
    x: Tensor       # (B, L, D)
    delta: Tensor   # (B, L, D), strictly positive
    b: Tensor       # (B, L, N)
    c: Tensor       # (B, L, N)

    @property
    def length(self) -> int:
        return self.x.shape[1]


def discretize(delta: Number, a: Number, b: Number) -> Tuple[Number, Number]:
    """Zero-order hold: a_bar = exp(delta*a), b_bar = delta*b."""
    if np.any(np.asarray(delta) <= 0):
        raise ScanError("delta must be positive", code=codes.NON_POSITIVE_STEP)
    return np.exp(np.multiply(delta, a)), np.multiply(delta, b)


def init_ssm_params(channels: int, state_dim: int, rng: np.random.Generator,
                    prefix: str, dtype=np.float64) -> Dict[str, np.ndarray]:
    a_log = np.log(np.tile(np.arange(1, state_dim + 1, dtype=np.float64), (channels, 1)))
    dt = np.exp(rng.uniform(math.log(DT_MIN), math.log(DT_MAX), size=channels))
    # inverse softplus so that softplus(dt_bias) == dt
    dt_bias = dt + np.log(-np.expm1(-dt))
    scale = channels ** -0.5
    return {
        f"{prefix}.a_log": a_log.astype(dtype),
        f"{prefix}.d_skip": np.ones(channels, dtype=dtype),
        f"{prefix}.dt_proj": (rng.normal(0.0, 0.1 * scale, size=(channels, channels))).astype(dtype),
        f"{prefix}.dt_bias": dt_bias.astype(dtype),
        f"{prefix}.b_proj": rng.normal(0.0, scale, size=(channels, state_dim)).astype(dtype),
        f"{prefix}.c_proj": rng.normal(0.0, scale, size=(channels, state_dim)).astype(dtype),
    }


def ssm_inputs(x: Tensor, params: SsmParams) -> ScanSequence:
    """Input-dependent step, input and readout matrices for a (B, L, D) token sequence."""
    delta = ops.softplus(ops.linear(x, params.dt_proj, params.dt_bias))
    return ScanSequence(x=x, delta=delta, b=ops.matmul(x, params.b_proj), c=ops.matmul(x, params.c_proj))


def _validate(seq: ScanSequence, params: SsmParams) -> None:
    if seq.x.ndim != 3:
        raise ShapeError(f"scan input must be (B, L, D), got {seq.x.shape}")
    batch, length, channels = seq.x.shape
    if params.a_log.shape[0] != channels or params.d_skip.shape != (channels,):
        raise ShapeError(f"parameters cover {params.a_log.shape[0]} channels, input has {channels}")
    state = params.state_dim
    expected = {"delta": (batch, length, channels), "b": (batch, length, state), "c": (batch, length, state)}
    for name, shape in expected.items():
        actual = getattr(seq, name).shape
        if actual != shape:
            raise ScanError(f"{name} has shape {actual}, expected {shape}")
    if np.any(seq.delta.data <= 0):
        raise ScanError("delta must be positive", code=codes.NON_POSITIVE_STEP)


def _discretized(seq: ScanSequence, params: SsmParams) -> Tuple[Tensor, Tensor]:
    """Per-step transition a_bar and input b_bar*x, both (B, L, D, N)."""
    batch, length, channels = seq.x.shape
    state = params.state_dim
    dtype = seq.x.dtype
    delta_full = ops.matmul(ops.reshape(seq.delta, (batch, length, channels, 1)), ops.ones((1, state), dtype))
    delta_flat = ops.reshape(delta_full, (batch, length, channels * state))
    a_flat = ops.reshape(params.a(), (channels * state,))
    a_bar = ops.reshape(ops.exp(ops.mul(delta_flat, a_flat)), (batch, length, channels, state))
    du = ops.reshape(ops.mul(seq.delta, seq.x), (batch, length, channels, 1))
    bu = ops.matmul(du, ops.reshape(seq.b, (batch, length, 1, state)))
    return a_bar, bu


def _readout(states: Tensor, seq: ScanSequence, params: SsmParams) -> Tensor:
    batch, length, channels = seq.x.shape
    y = ops.matmul(states, ops.reshape(seq.c, (batch, length, params.state_dim, 1)))
    y = ops.reshape(y, (batch, length, channels))
    return ops.add(y, ops.mul(seq.x, params.d_skip))


def linear_recurrence_seq(a_bar: Tensor, bu: Tensor) -> Tensor:
    """h_t = a_t * h_{t-1} + u_t along axis 1, h_0 = 0, one step at a time."""
    length = a_bar.shape[1]
    states = []
    h = None
    for t in range(length):
        u_t = ops.slice_axis(bu, 1, t, t + 1)
        h = u_t if h is None else ops.add(ops.mul(ops.slice_axis(a_bar, 1, t, t + 1), h), u_t)
        states.append(h)
    return states[0] if length == 1 else ops.concat(states, axis=1)


def linear_recurrence_parallel(a_bar: Tensor, bu: Tensor) -> Tensor:
    """Same recurrence as an inclusive scan over (a2, b2) o (a1, b1) = (a1*a2, a2*b1 + b2)."""
    length = a_bar.shape[1]
    dtype = a_bar.dtype
    a_acc, b_acc = a_bar, bu
    offset = 1
    while offset < length:
        pad_shape = (a_bar.shape[0], offset) + tuple(a_bar.shape[2:])
        a_prev = ops.concat([ops.ones(pad_shape, dtype), ops.slice_axis(a_acc, 1, 0, length - offset)], axis=1)
        b_prev = ops.concat([ops.zeros(pad_shape, dtype), ops.slice_axis(b_acc, 1, 0, length - offset)], axis=1)
        b_acc = ops.add(ops.mul(a_acc, b_prev), b_acc)
        a_acc = ops.mul(a_acc, a_prev)
        offset *= 2
    return b_acc


def selective_scan_seq(seq: ScanSequence, params: SsmParams) -> Tensor:
    _validate(seq, params)
    a_bar, bu = _discretized(seq, params)
    return _readout(linear_recurrence_seq(a_bar, bu), seq, params)


def selective_scan_parallel(seq: ScanSequence, params: SsmParams) -> Tensor:
    _validate(seq, params)
    a_bar, bu = _discretized(seq, params)
    return _readout(linear_recurrence_parallel(a_bar, bu), seq, params)


def selective_scan(seq: ScanSequence, params: SsmParams, mode: ScanMode = ScanMode.PARALLEL) -> Tensor:
    if mode == ScanMode.SEQUENTIAL:
        return selective_scan_seq(seq, params)
    return selective_scan_parallel(seq, params)


# Directions of the 2D cross-scan: (column_major, reversed)
CROSS_SCAN_DIRECTIONS = ((False, False), (False, True), (True, False), (True, True))


def cross_scan_2d(feature_map: Tensor, params: Sequence[SsmParams],
                  mode: ScanMode = ScanMode.PARALLEL) -> Tensor:
    """Scan an (H, W, C) or (B, H, W, C) map in four orders and sum the re-gridded outputs."""
    if len(params) != len(CROSS_SCAN_DIRECTIONS):
        raise ShapeError(f"cross-scan needs {len(CROSS_SCAN_DIRECTIONS)} parameter sets, got {len(params)}")
    unbatched = feature_map.ndim == 3
    if unbatched:
        feature_map = ops.reshape(feature_map, (1,) + feature_map.shape)
    if feature_map.ndim != 4:
        raise ShapeError(f"feature map must be (H, W, C) or (B, H, W, C), got {feature_map.shape}")
    batch, height, width, channels = feature_map.shape

    total = None
    for (column_major, reverse), direction_params in zip(CROSS_SCAN_DIRECTIONS, params):
        grid = ops.transpose(feature_map, (0, 2, 1, 3)) if column_major else feature_map
        tokens = ops.reshape(grid, (batch, height * width, channels))
        if reverse:
            tokens = ops.reverse_axis(tokens, 1)
        out = selective_scan(ssm_inputs(tokens, direction_params), direction_params, mode)
        if reverse:
            out = ops.reverse_axis(out, 1)
        if column_major:
            out = ops.transpose(ops.reshape(out, (batch, width, height, channels)), (0, 2, 1, 3))
        else:
            out = ops.reshape(out, (batch, height, width, channels))
        total = out if total is None else ops.add(total, out)

    if unbatched:
        total = ops.reshape(total, (height, width, channels))
    return total
