"""Shared fixtures: seeded generators, a tiny model shape and a synthetic dataset on disk."""
import numpy as np
import pytest

from src.core.profile_manager import ProfileManager
from src.data.synthetic import generate_synthetic_pairs
from src.domain.models import ModelConfig, ScanMode, TrainConfig
from src.tensor.autodiff import grad
from src.tensor.tensor import Tape, Tensor

TINY_IMAGE = 16


@pytest.fixture(autouse=True)
def fresh_profile_manager():
    ProfileManager.reset()
    yield
    ProfileManager.reset()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(image_size=TINY_IMAGE, patch_size=4, stage_depths=(1, 1), stage_dims=(8, 16), state_dim=4,
                       expansion=2, conv_width=3, text_width=16, text_depth=1, embed_dim=16, context_len=32,
                       scan_mode=ScanMode.PARALLEL)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(batch_size=4, learning_rate=1e-3, total_steps=4, seed=0, log_every=1)


@pytest.fixture
def synthetic_dir(tmp_path):
    manifests = generate_synthetic_pairs(tmp_path / "synthetic", per_class=2, seed=0, image_size=TINY_IMAGE)
    return manifests


def numeric_gradient(fn, arrays, index, eps=1e-6):
    """Central differences of scalar fn(*arrays) with respect to arrays[index]."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    out = np.zeros_like(base[index])
    for position in np.ndindex(base[index].shape):
        plus = [a.copy() for a in base]
        minus = [a.copy() for a in base]
        plus[index][position] += eps
        minus[index][position] -= eps
        f_plus = fn(*[Tensor(a) for a in plus]).item()
        f_minus = fn(*[Tensor(a) for a in minus]).item()
        out[position] = (f_plus - f_minus) / (2 * eps)
    return out


def check_gradients(fn, *arrays, rtol=1e-5, atol=1e-8):
    """Tape gradients of scalar fn against central differences for every argument."""
    tape = Tape()
    leaves = [tape.watch(Tensor(np.array(a, dtype=np.float64))) for a in arrays]
    analytic = grad(fn(*leaves), leaves)
    for index, g in enumerate(analytic):
        np.testing.assert_allclose(g.data, numeric_gradient(fn, arrays, index), rtol=rtol, atol=atol)


@pytest.fixture
def gradcheck():
    return check_gradients
