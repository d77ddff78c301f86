# src/service/training_service.py
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.data.checkpoint_repository import check_shapes
from src.data.image_codec import decode_image, prepare_image
from src.data.tokenizer import tokenize_batch
from src.domain.errors import ConfigError, TrainingAbort
from src.domain.models import Checkpoint, DatasetManifest, LossRecord, ManifestKind, ModelConfig, TrainConfig
from src.model.clip_model import ClipModel, effective_logit_scale, init_model
from src.model.optimizer import AdamW, lr_schedule
from src.tensor.autodiff import ParamSet, value_and_grad
from src.util import error_translator as codes
from src.util.seeding import rng_for

logger = logging.getLogger(__name__)


@dataclass
class TrainingData:
    images: np.ndarray      # (N, S, S, 3)
    tokens: np.ndarray      # (N, context_len)
    captions: List[str]

    def __len__(self) -> int:
        return len(self.captions)


@dataclass
class TrainResult:
    model: ClipModel
    optimizer: AdamW
    losses: List[LossRecord] = field(default_factory=list)

    def checkpoint(self, train_config: TrainConfig) -> Checkpoint:
        return model_checkpoint(self.model, self.optimizer, train_config)


def validate_config(model_config: ModelConfig, train_config: TrainConfig) -> None:
    if train_config.batch_size < 2:
        raise ConfigError(f"batch_size {train_config.batch_size} < 2", code=codes.INVALID_TRAIN_CONFIG,
                          key="train.batch_size")
    if train_config.total_steps < 1:
        raise ConfigError("must be positive", code=codes.INVALID_TRAIN_CONFIG, key="train.total_steps")
    if train_config.learning_rate < 0:
        raise ConfigError("must be non-negative", code=codes.INVALID_TRAIN_CONFIG, key="train.learning_rate")
    stride = model_config.patch_size * 2 ** (len(model_config.stage_depths) - 1)
    if model_config.image_size % stride:
        raise ConfigError(f"{model_config.image_size} not divisible by {stride}", code=codes.INVALID_TRAIN_CONFIG,
                          key="model.image_size")
    if len(model_config.stage_depths) != len(model_config.stage_dims):
        raise ConfigError("stage_depths and stage_dims differ in length", code=codes.INVALID_TRAIN_CONFIG,
                          key="model.stage_dims")


def load_images(manifest: DatasetManifest, image_size: int, dtype=np.float64) -> np.ndarray:
    return np.stack([prepare_image(decode_image(r.image_path), image_size) for r in manifest.records]).astype(dtype)


def load_training_data(manifest: DatasetManifest, model_config: ModelConfig, dtype=np.float64) -> TrainingData:
    if manifest.kind != ManifestKind.CAPTION_PAIRS:
        raise ConfigError(f"training needs a caption-pairs manifest, got {manifest.kind.value}",
                          code=codes.INVALID_TRAIN_CONFIG)
    captions = [r.caption for r in manifest.records]
    return TrainingData(images=load_images(manifest, model_config.image_size, dtype),
                        tokens=tokenize_batch(captions, model_config.context_len),
                        captions=captions)


def caption_unique_batches(captions: Sequence[str], batch_size: int, rng: np.random.Generator) -> List[List[int]]:
    """Shuffle once, then fill batches greedily so that no batch holds a caption twice.

    Every batch holds at least two records. A record left alone joins an earlier batch with room, or pairs
    with a record taken from a batch of three or more; failing both it sits out this epoch.
    """
    pending = list(rng.permutation(len(captions)))
    batches = []
    while pending:
        batch, seen, rest = [], set(), []
        for index in pending:
            if len(batch) < batch_size and captions[index] not in seen:
                batch.append(int(index))
                seen.add(captions[index])
            else:
                rest.append(index)
        batches.append(batch)
        pending = rest

    kept = [batch for batch in batches if len(batch) > 1]
    for index in (batch[0] for batch in batches if len(batch) == 1):
        caption = captions[index]
        home = next((b for b in kept if len(b) < batch_size and caption not in {captions[i] for i in b}), None)
        donor = next((b for b in kept if len(b) > 2), None)
        if home is not None:
            home.append(index)
        elif donor is not None:
            partner = next(i for i in reversed(donor) if captions[i] != caption)
            donor.remove(partner)
            kept.append([partner, index])
        else:
            logger.warning(f"Record {index} ('{caption}') has no batch partner; skipped this epoch")
    return kept


class BatchSchedule:
    """Batch for any global step; epoch e is shuffled by a generator keyed on (seed, e)."""

    def __init__(self, captions: Sequence[str], batch_size: int, seed: int):
        self.captions = list(captions)
        self.batch_size = batch_size
        self.seed = seed
        self._epochs: Dict[int, List[List[int]]] = {}
        self._starts = [0]

    def _epoch(self, epoch: int) -> List[List[int]]:
        if epoch not in self._epochs:
            batches = caption_unique_batches(self.captions, self.batch_size, rng_for(self.seed, epoch))
            if not batches:
                raise ConfigError("training needs at least two distinct captions", code=codes.INVALID_TRAIN_CONFIG)
            self._epochs[epoch] = batches
        return self._epochs[epoch]

    def batch(self, step: int) -> List[int]:
        epoch = 0
        while True:
            if len(self._starts) <= epoch + 1:
                self._starts.append(self._starts[epoch] + len(self._epoch(epoch)))
            if step < self._starts[epoch + 1]:
                return self._epoch(epoch)[step - self._starts[epoch]]
            epoch += 1


def model_checkpoint(model: ClipModel, optimizer: AdamW, train_config: TrainConfig) -> Checkpoint:
    return Checkpoint(
        params={name: t.data.copy() for name, t in model.params.items()},
        model_config=model.config,
        train_config=train_config,
        step=optimizer.step_count,
        adam_m={k: v.copy() for k, v in optimizer.m.items()},
        adam_v={k: v.copy() for k, v in optimizer.v.items()},
    )


def model_from_checkpoint(checkpoint: Checkpoint, model_id: Optional[str] = None) -> ClipModel:
    model = init_model(checkpoint.model_config, seed=checkpoint.train_config.seed,
                       dtype=checkpoint.train_config.dtype, model_id=model_id)
    check_shapes(checkpoint, model.params.shapes())
    model.params = ParamSet({name: checkpoint.params[name] for name in model.params})
    return model


class TrainingService:
    """Contrastive training loop with AdamW, warmup plus cosine schedule and deterministic batching."""

    def __init__(self, model_config: ModelConfig, train_config: TrainConfig,
                 on_step: Optional[Callable[[LossRecord], None]] = None):
        validate_config(model_config, train_config)
        self.model_config = model_config
        self.train_config = train_config
        self.on_step = on_step

    def train(self, data: TrainingData, resume: Optional[Checkpoint] = None,
              steps: Optional[int] = None) -> TrainResult:
        """Run until total_steps (or `steps` more steps); resumes from a checkpoint when given."""
        cfg = self.train_config
        if resume is not None:
            model = model_from_checkpoint(resume)
            optimizer = AdamW(cfg, resume.adam_m, resume.adam_v, resume.step)
        else:
            model = init_model(self.model_config, seed=cfg.seed, dtype=cfg.dtype)
            optimizer = AdamW(cfg)
        schedule = BatchSchedule(data.captions, cfg.batch_size, cfg.seed)
        end = cfg.total_steps if steps is None else min(cfg.total_steps, optimizer.step_count + steps)

        losses: List[LossRecord] = []
        while optimizer.step_count < end:
            step = optimizer.step_count
            indices = schedule.batch(step)
            images, tokens = data.images[indices], data.tokens[indices]

            loss, grads = value_and_grad(lambda p: model.loss(images, tokens, p), model.params)
            if not math.isfinite(loss):
                raise TrainingAbort(step, loss)

            lr = lr_schedule(step, cfg)
            updated = optimizer.step({n: t.data for n, t in model.params.items()},
                                     {n: g.data for n, g in grads.items()}, lr)
            model.params = ParamSet(updated)

            record = LossRecord(step=step, loss=loss, learning_rate=lr,
                                logit_scale=effective_logit_scale(model.params["logit_scale"]).item())
            losses.append(record)
            if cfg.log_every and step % cfg.log_every == 0:
                logger.info(f"step={step} loss={loss:.6f} lr={lr:.3e} logit_scale={record.logit_scale:.3f}")
            if self.on_step is not None:
                self.on_step(record)

        return TrainResult(model=model, optimizer=optimizer, losses=losses)


def retrieval_top1(model: ClipModel, data: TrainingData, batch_size: int = 64) -> float:
    """Image-to-text top-1 over the distinct captions of the set."""
    distinct = sorted(set(data.captions))
    caption_index = {c: i for i, c in enumerate(distinct)}
    text = model.encode_text(tokenize_batch(distinct, model.config.context_len)).data
    correct = 0
    for start in range(0, len(data), batch_size):
        image = model.encode_image(data.images[start:start + batch_size]).data
        predicted = np.argmax(image @ text.T, axis=1)
        targets = [caption_index[c] for c in data.captions[start:start + batch_size]]
        correct += int(np.sum(predicted == np.asarray(targets)))
    return correct / len(data)
