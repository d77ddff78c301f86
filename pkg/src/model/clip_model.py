# src/model/clip_model.py
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from src.domain.errors import ModelInputError, ShapeError
from src.domain.models import EOS_ID, VOCAB_SIZE, ModelConfig, TextTower, VisionTower
from src.model.baselines import init_mlp_block, init_token_mixer, mlp_block_forward, token_mixer_forward
from src.model.mamba_block import MambaBlockConfig, init_mamba_block, mamba_block_forward
from src.tensor import ops
from src.tensor.autodiff import ParamSet
from src.tensor.tensor import DTYPES, Tensor
from src.util import error_translator as codes

logger = logging.getLogger(__name__)

LOGIT_SCALE_INIT = math.log(1 / 0.07)
LOGIT_SCALE_MAX = 100.0


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """(B, H, W, 3) -> (B, H/p, W/p, p*p*3) non-overlapping patches."""
    batch, height, width, channels = images.shape
    grid_h, grid_w = height // patch, width // patch
    blocks = images.reshape(batch, grid_h, patch, grid_w, patch, channels)
    return blocks.transpose(0, 1, 3, 2, 4, 5).reshape(batch, grid_h, grid_w, patch * patch * channels)


def eos_positions(tokens: np.ndarray) -> np.ndarray:
    hits = tokens == EOS_ID
    missing = np.where(~hits.any(axis=1))[0]
    if missing.size:
        raise ModelInputError(f"rows {missing.tolist()} have no end token", code=codes.MISSING_EOS)
    return hits.argmax(axis=1)


def _norm(x: Tensor, params, prefix: str) -> Tensor:
    return ops.add(ops.mul(ops.layernorm(x), params[f"{prefix}.weight"]), params[f"{prefix}.bias"])


def _stage_config(config: ModelConfig, dim: int, two_d: bool) -> MambaBlockConfig:
    return MambaBlockConfig(model_dim=dim, state_dim=config.state_dim, expansion=config.expansion,
                            conv_width=config.conv_width, uses_2d_cross_scan=two_d,
                            scan_mode=config.scan_mode)


def init_params(config: ModelConfig, seed: int = 0, dtype: str = "f64") -> ParamSet:
    """Named parameters of both towers, drawn from one seeded generator."""
    np_dtype = DTYPES[dtype]
    rng = np.random.default_rng(seed)
    raw: Dict[str, np.ndarray] = {}
    patch_in = config.patch_size * config.patch_size * 3
    dims = list(config.stage_dims)

    raw["vision.patch.weight"] = rng.normal(0.0, patch_in ** -0.5, size=(patch_in, dims[0])).astype(np_dtype)
    raw["vision.patch.bias"] = np.zeros(dims[0], dtype=np_dtype)
    for s, (depth, dim) in enumerate(zip(config.stage_depths, dims)):
        if s > 0:
            merged = 4 * dims[s - 1]
            raw[f"vision.merge{s}.norm.weight"] = np.ones(merged, dtype=np_dtype)
            raw[f"vision.merge{s}.norm.bias"] = np.zeros(merged, dtype=np_dtype)
            raw[f"vision.merge{s}.weight"] = rng.normal(0.0, merged ** -0.5, size=(merged, dim)).astype(np_dtype)
        for b in range(depth):
            prefix = f"vision.stage{s}.block{b}"
            if config.vision_tower == VisionTower.MAMBA:
                raw.update(init_mamba_block(_stage_config(config, dim, True), rng, prefix, np_dtype))
            else:
                raw.update(init_mlp_block(dim, rng, prefix, np_dtype))
    raw["vision.final_norm.weight"] = np.ones(dims[-1], dtype=np_dtype)
    raw["vision.final_norm.bias"] = np.zeros(dims[-1], dtype=np_dtype)
    raw["vision.proj"] = rng.normal(0.0, dims[-1] ** -0.5, size=(dims[-1], config.embed_dim)).astype(np_dtype)

    width = config.text_width
    raw["text.embedding"] = rng.normal(0.0, 0.02, size=(VOCAB_SIZE, width)).astype(np_dtype)
    if config.text_tower == TextTower.ATTENTION_FREE_MLP:
        raw["text.position"] = rng.normal(0.0, 0.01, size=(config.context_len, width)).astype(np_dtype)
    for b in range(config.text_depth):
        prefix = f"text.block{b}"
        if config.text_tower == TextTower.MAMBA:
            raw.update(init_mamba_block(_stage_config(config, width, False), rng, prefix, np_dtype))
        else:
            raw.update(init_token_mixer(width, rng, prefix, np_dtype))
    raw["text.final_norm.weight"] = np.ones(width, dtype=np_dtype)
    raw["text.final_norm.bias"] = np.zeros(width, dtype=np_dtype)
    raw["text.proj"] = rng.normal(0.0, width ** -0.5, size=(width, config.embed_dim)).astype(np_dtype)

    raw["logit_scale"] = np.asarray(LOGIT_SCALE_INIT, dtype=np_dtype)
    return ParamSet(raw)


def _patch_merge(x: Tensor, params, stage: int) -> Tensor:
    """2x spatial downsampling: each 2x2 neighbourhood is concatenated and projected."""
    batch, height, width, channels = x.shape
    if height % 2 or width % 2:
        raise ShapeError(f"cannot halve a {height}x{width} grid")
    rows = ops.reshape(x, (batch * height // 2, 2, width // 2, 2 * channels))
    rows = ops.transpose(rows, (0, 2, 1, 3))
    merged = ops.reshape(rows, (batch, height // 2, width // 2, 4 * channels))
    merged = _norm(merged, params, f"vision.merge{stage}.norm")
    return ops.matmul(merged, params[f"vision.merge{stage}.weight"])


def encode_image(params, config: ModelConfig, images: np.ndarray) -> Tensor:
    """(B, S, S, 3) images in [0, 1] to unit-norm (B, E) embeddings."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    expected = (config.image_size, config.image_size, 3)
    if images.ndim != 4 or images.shape[1:] != expected:
        raise ModelInputError(f"expected (B, {expected[0]}, {expected[1]}, 3), got {images.shape}")
    dtype = params["vision.patch.weight"].dtype
    patches = ops.constant(patchify(images, config.patch_size), dtype)
    x = ops.linear(patches, params["vision.patch.weight"], params["vision.patch.bias"])

    for s, (depth, dim) in enumerate(zip(config.stage_depths, config.stage_dims)):
        if s > 0:
            x = _patch_merge(x, params, s)
        for b in range(depth):
            prefix = f"vision.stage{s}.block{b}"
            if config.vision_tower == VisionTower.MAMBA:
                x = mamba_block_forward(x, params, prefix, _stage_config(config, dim, True))
            else:
                x = mlp_block_forward(x, params, prefix)

    x = _norm(x, params, "vision.final_norm")
    batch, height, width, channels = x.shape
    pooled = ops.reduce_mean(ops.reshape(x, (batch, height * width, channels)), axis=1)
    return ops.l2_normalize(ops.matmul(pooled, params["vision.proj"]))


def encode_text(params, config: ModelConfig, tokens: np.ndarray) -> Tensor:
    """(B, context_len) token ids to unit-norm (B, E) embeddings, read at each row's end token."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None]
    if tokens.shape[1] != config.context_len:
        raise ModelInputError(f"token rows must have length {config.context_len}, got {tokens.shape[1]}",
                              code=codes.DIMENSION_MISMATCH)
    positions = eos_positions(tokens)
    batch, length = tokens.shape

    x = ops.embedding(params["text.embedding"], tokens)
    if config.text_tower == TextTower.ATTENTION_FREE_MLP:
        x = ops.add(x, ops.embedding(params["text.position"], np.tile(np.arange(length), (batch, 1))))
    for b in range(config.text_depth):
        prefix = f"text.block{b}"
        if config.text_tower == TextTower.MAMBA:
            x = mamba_block_forward(x, params, prefix, _stage_config(config, config.text_width, False))
        else:
            x = token_mixer_forward(x, params, prefix)
    x = _norm(x, params, "text.final_norm")

    selector = np.zeros((batch, 1, length), dtype=x.data.dtype)
    selector[np.arange(batch), 0, positions] = 1.0
    picked = ops.reshape(ops.matmul(ops.constant(selector, x.dtype), x), (batch, config.text_width))
    return ops.l2_normalize(ops.matmul(picked, params["text.proj"]))


def effective_logit_scale(logit_scale: Tensor) -> Tensor:
    """exp(logit_scale) clamped at LOGIT_SCALE_MAX; the clamped branch carries no gradient."""
    if float(np.exp(logit_scale.item())) > LOGIT_SCALE_MAX:
        return ops.constant(LOGIT_SCALE_MAX, logit_scale.dtype)
    return ops.exp(logit_scale)


def clip_loss(image_embeddings: Tensor, text_embeddings: Tensor, logit_scale: Tensor) -> Tensor:
    """Symmetric InfoNCE over a batch of matched pairs."""
    if image_embeddings.shape != text_embeddings.shape or image_embeddings.ndim != 2:
        raise ShapeError(f"embedding shapes differ: {image_embeddings.shape} vs {text_embeddings.shape}")
    batch = image_embeddings.shape[0]
    scale = effective_logit_scale(logit_scale)
    # both products so that swapping the towers transposes the logits exactly
    forward = ops.matmul(image_embeddings, ops.swap_last(text_embeddings))
    reverse = ops.swap_last(ops.matmul(text_embeddings, ops.swap_last(image_embeddings)))
    logits = ops.mul(ops.mul(ops.add(forward, reverse), 0.5), scale)
    targets = np.arange(batch)
    image_to_text = ops.cross_entropy(logits, targets)
    text_to_image = ops.cross_entropy(ops.swap_last(logits), targets)
    return ops.mul(ops.add(image_to_text, text_to_image), 0.5)


@dataclass
class ClipModel:
    config: ModelConfig
    params: ParamSet
    model_id: str = "mamba-clip"

    @property
    def dtype(self) -> str:
        return self.params["logit_scale"].dtype

    def encode_image(self, images: np.ndarray, params: Optional[ParamSet] = None) -> Tensor:
        return encode_image(params if params is not None else self.params, self.config, images)

    def encode_text(self, tokens: np.ndarray, params: Optional[ParamSet] = None) -> Tensor:
        return encode_text(params if params is not None else self.params, self.config, tokens)

    def loss(self, images: np.ndarray, tokens: np.ndarray, params: Optional[ParamSet] = None) -> Tensor:
        params = params if params is not None else self.params
        return clip_loss(self.encode_image(images, params), self.encode_text(tokens, params), params["logit_scale"])

    def parameter_count(self) -> int:
        return self.params.flat_dim


def init_model(config: ModelConfig, seed: int = 0, dtype: str = "f64", model_id: Optional[str] = None) -> ClipModel:
    params = init_params(config, seed, dtype)
    model_id = model_id or f"{config.vision_tower.value}-{config.text_tower.value}"
    logger.info(f"Initialized {model_id} with {params.flat_dim} parameters")
    return ClipModel(config=config, params=params, model_id=model_id)
