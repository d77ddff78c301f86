# src/data/checkpoint_repository.py
"""CKPT container: magic, u32 version, named TEN1 entries, optimizer entries, u64 step, config echo."""
import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from src.core.config_service import parse_ini_text, render_ini
from src.data.repositories import CheckpointRepository, PathLike
from src.data.tensor_codec import decode_tensor, encode_tensor
from src.domain.errors import CheckpointError, TensorFormatError
from src.domain.models import Checkpoint, RunConfig
from src.util import error_translator as codes

logger = logging.getLogger(__name__)

MAGIC = b"CKPT"
VERSION = 1
ECHO_SECTIONS = ("model", "train")


def _encode_entries(entries: Mapping[str, np.ndarray]) -> bytes:
    chunks = [struct.pack("<I", len(entries))]
    for name, array in entries.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw + encode_tensor(array))
    return b"".join(chunks)


class _Reader:
    def __init__(self, buffer: bytes):
        self.buffer = buffer
        self.offset = 0

    def unpack(self, fmt: str) -> Tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.buffer):
            raise CheckpointError(f"need {size} bytes at offset {self.offset}", code=codes.CHECKPOINT_TRUNCATED)
        values = struct.unpack_from(fmt, self.buffer, self.offset)
        self.offset += size
        return values

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.buffer):
            raise CheckpointError(f"need {size} bytes at offset {self.offset}", code=codes.CHECKPOINT_TRUNCATED)
        chunk = self.buffer[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def entries(self) -> Dict[str, np.ndarray]:
        (count,) = self.unpack("<I")
        out: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = self.unpack("<H")
            name = self.take(name_len).decode("utf-8")
            try:
                array, self.offset = decode_tensor(self.buffer, self.offset)
            except TensorFormatError as e:
                raise CheckpointError(f"entry '{name}': {e.detail}", code=codes.CHECKPOINT_TRUNCATED)
            out[name] = array
        return out


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    optimizer = {}
    for name in checkpoint.adam_m:
        optimizer[f"adam.m.{name}"] = checkpoint.adam_m[name]
    for name in checkpoint.adam_v:
        optimizer[f"adam.v.{name}"] = checkpoint.adam_v[name]
    echo = render_ini(RunConfig(model=checkpoint.model_config, train=checkpoint.train_config),
                      ECHO_SECTIONS).encode("utf-8")
    return b"".join([
        MAGIC,
        struct.pack("<I", VERSION),
        _encode_entries(checkpoint.params),
        _encode_entries(optimizer),
        struct.pack("<Q", checkpoint.step),
        struct.pack("<I", len(echo)),
        echo,
    ])


def decode_checkpoint(buffer: bytes) -> Checkpoint:
    if buffer[:4] != MAGIC:
        raise CheckpointError(f"found {buffer[:4]!r}", code=codes.CHECKPOINT_MAGIC)
    reader = _Reader(buffer)
    reader.offset = 4
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}", code=codes.CHECKPOINT_MAGIC)
    params = reader.entries()
    optimizer = reader.entries()
    (step,) = reader.unpack("<Q")
    (echo_len,) = reader.unpack("<I")
    echo = reader.take(echo_len).decode("utf-8")
    if reader.offset != len(buffer):
        raise CheckpointError(f"{len(buffer) - reader.offset} trailing bytes", code=codes.CHECKPOINT_TRUNCATED)

    config = parse_ini_text(echo)
    adam_m = {k[len("adam.m."):]: v for k, v in optimizer.items() if k.startswith("adam.m.")}
    adam_v = {k[len("adam.v."):]: v for k, v in optimizer.items() if k.startswith("adam.v.")}
    return Checkpoint(params=params, model_config=config.model, train_config=config.train,
                      step=step, adam_m=adam_m, adam_v=adam_v)


class FileCheckpointRepository(CheckpointRepository):

    def save(self, checkpoint: Checkpoint, path: PathLike) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(checkpoint))
        logger.info(f"Saved checkpoint at step {checkpoint.step} to {path}")

    def load(self, path: PathLike, expected_shapes: Optional[Mapping[str, Tuple[int, ...]]] = None) -> Checkpoint:
        path = Path(path)
        if not path.exists():
            raise CheckpointError(str(path), code=codes.CHECKPOINT_TRUNCATED)
        checkpoint = decode_checkpoint(path.read_bytes())
        if expected_shapes is not None:
            check_shapes(checkpoint, expected_shapes)
        logger.info(f"Loaded checkpoint {path} at step {checkpoint.step}")
        return checkpoint


def check_shapes(checkpoint: Checkpoint, expected_shapes: Mapping[str, Tuple[int, ...]]) -> None:
    """Every expected tensor must be present with the same shape, and nothing extra."""
    for name, shape in expected_shapes.items():
        stored = checkpoint.params.get(name)
        if stored is None:
            raise CheckpointError(f"missing tensor '{name}'", code=codes.CHECKPOINT_MISMATCH)
        if tuple(stored.shape) != tuple(shape):
            raise CheckpointError(f"tensor '{name}' has shape {stored.shape}, expected {tuple(shape)}",
                                  code=codes.CHECKPOINT_MISMATCH)
    extra = sorted(set(checkpoint.params) - set(expected_shapes))
    if extra:
        raise CheckpointError(f"unexpected tensor '{extra[0]}'", code=codes.CHECKPOINT_MISMATCH)
