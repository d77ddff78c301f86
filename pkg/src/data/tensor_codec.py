# src/data/tensor_codec.py
"""TEN1 raw tensor format: magic, dtype code, rank, u64 dims, little-endian data."""
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from src.domain.errors import TensorFormatError

MAGIC = b"TEN1"
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1")}
CODE_FOR_KIND = {np.dtype(np.float32): 1, np.dtype(np.float64): 2, np.dtype(np.uint8): 3}


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    code = CODE_FOR_KIND.get(array.dtype)
    if code is None:
        raise TensorFormatError(f"dtype {array.dtype} has no TEN1 code")
    if array.ndim > 255:
        raise TensorFormatError(f"rank {array.ndim} does not fit in one byte")
    header = MAGIC + struct.pack("<BB", code, array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    body = np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes()
    return header + body


def decode_tensor(buffer: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Decode one tensor starting at `offset`; returns the array and the next offset."""
    if buffer[offset:offset + 4] != MAGIC:
        raise TensorFormatError(f"bad magic at byte {offset}")
    if len(buffer) < offset + 6:
        raise TensorFormatError("header truncated")
    code, rank = struct.unpack_from("<BB", buffer, offset + 4)
    if code not in DTYPE_CODES:
        raise TensorFormatError(f"unknown dtype code {code}")
    offset += 6
    if len(buffer) < offset + 8 * rank:
        raise TensorFormatError("dimension list truncated")
    shape = struct.unpack_from(f"<{rank}Q", buffer, offset)
    offset += 8 * rank
    dtype = DTYPE_CODES[code]
    nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(buffer) < offset + nbytes:
        raise TensorFormatError(f"data truncated: need {nbytes} bytes")
    array = np.frombuffer(buffer, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset)
    array = array.reshape(shape).astype(dtype.newbyteorder("="), copy=True)
    return array, offset + nbytes


def save_tensor(path: Union[str, Path], array: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(array))


def load_tensor(path: Union[str, Path]) -> np.ndarray:
    data = Path(path).read_bytes()
    array, end = decode_tensor(data)
    if end != len(data):
        raise TensorFormatError(f"{len(data) - end} trailing bytes after tensor")
    return array
