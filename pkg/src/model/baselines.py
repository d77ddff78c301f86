# src/model/baselines.py
"""Attention-free comparison towers: per-token MLP blocks with a causal running-mean mixer for text."""
from typing import Dict, Mapping

import numpy as np

from src.tensor import ops
from src.tensor.tensor import Tensor


def init_mlp_block(width: int, rng: np.random.Generator, prefix: str, dtype=np.float64,
                   hidden_ratio: int = 2) -> Dict[str, np.ndarray]:
    hidden = hidden_ratio * width
    return {
        f"{prefix}.norm.weight": np.ones(width, dtype=dtype),
        f"{prefix}.norm.bias": np.zeros(width, dtype=dtype),
        f"{prefix}.fc1.weight": rng.normal(0.0, width ** -0.5, size=(width, hidden)).astype(dtype),
        f"{prefix}.fc1.bias": np.zeros(hidden, dtype=dtype),
        f"{prefix}.fc2.weight": rng.normal(0.0, 0.5 * hidden ** -0.5, size=(hidden, width)).astype(dtype),
        f"{prefix}.fc2.bias": np.zeros(width, dtype=dtype),
    }


def mlp_block_forward(x: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    h = ops.add(ops.mul(ops.layernorm(x), params[f"{prefix}.norm.weight"]), params[f"{prefix}.norm.bias"])
    h = ops.silu(ops.linear(h, params[f"{prefix}.fc1.weight"], params[f"{prefix}.fc1.bias"]))
    return ops.add(x, ops.linear(h, params[f"{prefix}.fc2.weight"], params[f"{prefix}.fc2.bias"]))


def causal_mean(x: Tensor) -> Tensor:
    """Running mean over axis 1 of a (B, L, D) sequence."""
    length = x.shape[1]
    weights = np.tril(np.ones((length, length))) / np.arange(1, length + 1)[:, None]
    mixer = ops.constant(weights.T, x.dtype)
    return ops.swap_last(ops.matmul(ops.swap_last(x), mixer))


def token_mixer_forward(x: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    """Causal mean mixing followed by a channel MLP, both residual."""
    mixed = ops.add(x, ops.linear(causal_mean(x), params[f"{prefix}.mix.weight"]))
    return mlp_block_forward(mixed, params, prefix)


def init_token_mixer(width: int, rng: np.random.Generator, prefix: str, dtype=np.float64) -> Dict[str, np.ndarray]:
    params = init_mlp_block(width, rng, prefix, dtype)
    params[f"{prefix}.mix.weight"] = rng.normal(0.0, width ** -0.5, size=(width, width)).astype(dtype)
    return params
