# src/model/mamba_block.py
import logging
from dataclasses import dataclass
from typing import Dict, Mapping

import numpy as np

from src.domain.errors import ShapeError
from src.domain.models import ScanMode
from src.model.ssm import CROSS_SCAN_DIRECTIONS, SsmParams, cross_scan_2d, init_ssm_params, selective_scan, ssm_inputs
from src.tensor import ops
from src.tensor.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class MambaBlockConfig:
    model_dim: int
    state_dim: int = 8
    expansion: int = 2
    conv_width: int = 4
    uses_2d_cross_scan: bool = False
    scan_mode: ScanMode = ScanMode.PARALLEL

    @property
    def inner_dim(self) -> int:
        return self.expansion * self.model_dim

    @property
    def scan_count(self) -> int:
        return len(CROSS_SCAN_DIRECTIONS) if self.uses_2d_cross_scan else 1


def init_mamba_block(config: MambaBlockConfig, rng: np.random.Generator, prefix: str,
                     dtype=np.float64) -> Dict[str, np.ndarray]:
    d, inner, k = config.model_dim, config.inner_dim, config.conv_width
    params = {
        f"{prefix}.norm.weight": np.ones(d, dtype=dtype),
        f"{prefix}.norm.bias": np.zeros(d, dtype=dtype),
        f"{prefix}.in_proj.weight": rng.normal(0.0, d ** -0.5, size=(d, 2 * inner)).astype(dtype),
        f"{prefix}.in_proj.bias": np.zeros(2 * inner, dtype=dtype),
        f"{prefix}.conv.weight": rng.normal(0.0, k ** -0.5, size=(k, inner)).astype(dtype),
        f"{prefix}.conv.bias": np.zeros(inner, dtype=dtype),
    }
    for s in range(config.scan_count):
        params.update(init_ssm_params(inner, config.state_dim, rng, f"{prefix}.ssm{s}", dtype))
    # small output projection keeps a freshly built stack close to identity
    params[f"{prefix}.out_proj.weight"] = rng.normal(0.0, 0.5 * inner ** -0.5, size=(inner, d)).astype(dtype)
    params[f"{prefix}.out_proj.bias"] = np.zeros(d, dtype=dtype)
    return params


def mamba_block_forward(x: Tensor, params: Mapping[str, Tensor], prefix: str,
                        config: MambaBlockConfig) -> Tensor:
    """Residual block: norm, split projection, conv + silu + scan gated by silu, output projection.

    x is (B, L, D) for token sequences or (B, H, W, D) with a 2D cross-scan.
    """
    expected_rank = 4 if config.uses_2d_cross_scan else 3
    if x.ndim != expected_rank or x.shape[-1] != config.model_dim:
        raise ShapeError(f"block {prefix} expects rank {expected_rank} with {config.model_dim} channels, got {x.shape}")
    inner = config.inner_dim

    h = ops.add(ops.mul(ops.layernorm(x), params[f"{prefix}.norm.weight"]), params[f"{prefix}.norm.bias"])
    projected = ops.linear(h, params[f"{prefix}.in_proj.weight"], params[f"{prefix}.in_proj.bias"])
    main = ops.slice_axis(projected, -1, 0, inner)
    gate = ops.slice_axis(projected, -1, inner, 2 * inner)

    if config.uses_2d_cross_scan:
        batch, height, width, _ = x.shape
        tokens = ops.reshape(main, (batch, height * width, inner))
        tokens = ops.add(ops.depthwise_conv1d(tokens, params[f"{prefix}.conv.weight"]), params[f"{prefix}.conv.bias"])
        grid = ops.reshape(ops.silu(tokens), (batch, height, width, inner))
        ssm = [SsmParams.from_params(params, f"{prefix}.ssm{s}") for s in range(config.scan_count)]
        scanned = cross_scan_2d(grid, ssm, config.scan_mode)
    else:
        tokens = ops.add(ops.depthwise_conv1d(main, params[f"{prefix}.conv.weight"]), params[f"{prefix}.conv.bias"])
        tokens = ops.silu(tokens)
        ssm = SsmParams.from_params(params, f"{prefix}.ssm0")
        scanned = selective_scan(ssm_inputs(tokens, ssm), ssm, config.scan_mode)

    mixed = ops.mul(scanned, ops.silu(gate))
    out = ops.linear(mixed, params[f"{prefix}.out_proj.weight"], params[f"{prefix}.out_proj.bias"])
    return ops.add(x, out)
