"""Mamba block wiring and the token-mixer baseline."""
from dataclasses import replace

import numpy as np
import pytest

from src.domain.errors import ShapeError
from src.domain.models import ScanMode
from src.model.baselines import causal_mean, init_token_mixer, token_mixer_forward
from src.model.mamba_block import MambaBlockConfig, init_mamba_block, mamba_block_forward
from src.tensor import ops
from src.tensor.autodiff import ParamSet, value_and_grad
from src.tensor.tensor import Tensor


def _block(rng, two_d=False, mode=ScanMode.PARALLEL):
    config = MambaBlockConfig(model_dim=4, state_dim=3, expansion=2, conv_width=3, uses_2d_cross_scan=two_d,
                              scan_mode=mode)
    return config, ParamSet(init_mamba_block(config, rng, "blk"))


def test_zero_output_projection_is_identity(rng):
    config = MambaBlockConfig(model_dim=4, state_dim=3)
    raw = init_mamba_block(config, rng, "blk")
    raw["blk.out_proj.weight"] = np.zeros_like(raw["blk.out_proj.weight"])
    x = rng.normal(size=(2, 5, 4))
    out = mamba_block_forward(Tensor(x), ParamSet(raw), "blk", config)
    np.testing.assert_array_equal(out.data, x)


def test_one_dimensional_block_is_causal(rng):
    config, params = _block(rng)
    x = rng.normal(size=(1, 8, 4))
    changed = x.copy()
    changed[0, 6] += 5.0
    a = mamba_block_forward(Tensor(x), params, "blk", config).data
    b = mamba_block_forward(Tensor(changed), params, "blk", config).data
    np.testing.assert_allclose(a[0, :6], b[0, :6], rtol=0, atol=1e-12)


def test_scan_modes_agree(rng):
    config_par, params = _block(rng, mode=ScanMode.PARALLEL)
    config_seq = replace(config_par, scan_mode=ScanMode.SEQUENTIAL)
    x = Tensor(rng.normal(size=(2, 6, 4)))
    np.testing.assert_allclose(mamba_block_forward(x, params, "blk", config_par).data,
                               mamba_block_forward(x, params, "blk", config_seq).data, rtol=1e-10, atol=1e-12)


def test_two_dimensional_block(rng):
    config, params = _block(rng, two_d=True)
    assert config.scan_count == 4
    assert "blk.ssm3.a_log" in params
    x = rng.normal(size=(2, 3, 3, 4))
    out = mamba_block_forward(Tensor(x), params, "blk", config)
    assert out.shape == x.shape
    _, grads = value_and_grad(lambda p: ops.reduce_mean(mamba_block_forward(Tensor(x), p, "blk", config)), params)
    assert all(np.all(np.isfinite(g.data)) for g in grads.values())


def test_wrong_rank_rejected(rng):
    config, params = _block(rng, two_d=True)
    with pytest.raises(ShapeError):
        mamba_block_forward(Tensor(rng.normal(size=(2, 5, 4))), params, "blk", config)


def test_causal_mean_running_average():
    x = Tensor(np.arange(8.0).reshape(1, 4, 2))
    out = causal_mean(x).data[0]
    np.testing.assert_allclose(out[:, 0], [0.0, 1.0, 2.0, 3.0])
    np.testing.assert_allclose(out[:, 1], [1.0, 2.0, 3.0, 4.0])


def test_token_mixer_preserves_shape(rng):
    params = ParamSet(init_token_mixer(4, rng, "mix"))
    x = Tensor(rng.normal(size=(2, 5, 4)))
    assert token_mixer_forward(x, params, "mix").shape == (2, 5, 4)
