# src/data/image_codec.py
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.data.tensor_codec import MAGIC as TEN1_MAGIC
from src.data.tensor_codec import decode_tensor, encode_tensor
from src.domain.errors import ImageFormatError, TensorFormatError
from src.util import error_translator as codes

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PathLike = Union[str, Path]


def decode_image(path: PathLike) -> np.ndarray:
    """8-bit RGB PNG or rank-3 TEN1 u8 file to an (H, W, 3) f32 array in [0, 1]."""
    data = Path(path).read_bytes()
    if data.startswith(PNG_SIGNATURE):
        pixels = _decode_png(path)
    elif data.startswith(TEN1_MAGIC):
        try:
            pixels, _ = decode_tensor(data)
        except TensorFormatError as e:
            raise ImageFormatError(f"{path}: {e.detail}")
        if pixels.dtype != np.uint8:
            raise ImageFormatError(f"{path}: TEN1 image must be u8, got {pixels.dtype}")
    else:
        raise ImageFormatError(f"{path}: neither PNG nor TEN1")

    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ImageFormatError(f"{path}: shape {pixels.shape}", code=codes.IMAGE_CHANNELS)
    return pixels.astype(np.float32) / np.float32(255.0)


def _decode_png(path: PathLike) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ("L", "LA", "RGBA", "CMYK"):
                raise ImageFormatError(f"{path}: mode {mode}", code=codes.IMAGE_CHANNELS)
            if mode != "RGB":
                raise ImageFormatError(f"{path}: mode {mode} is not 8-bit RGB")
            return np.asarray(img, dtype=np.uint8)
    except UnidentifiedImageError as e:
        raise ImageFormatError(f"{path}: {e}")


def to_u8(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


def encode_image(image: np.ndarray, path: PathLike) -> None:
    """Write a u8 or [0, 1] float image as PNG (by suffix) or TEN1."""
    path = Path(path)
    pixels = to_u8(image)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ImageFormatError(f"shape {pixels.shape}", code=codes.IMAGE_CHANNELS)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".png":
        Image.fromarray(pixels).save(path, format="PNG")
    else:
        path.write_bytes(encode_tensor(pixels))


def prepare_image(image: np.ndarray, size: int) -> np.ndarray:
    """Center-crop to a square, then nearest-neighbour resize to size x size."""
    height, width = image.shape[:2]
    side = min(height, width)
    top, left = (height - side) // 2, (width - side) // 2
    square = image[top:top + side, left:left + side]
    if side == size:
        return square.copy()
    index = np.minimum(((np.arange(size) + 0.5) * side / size).astype(np.int64), side - 1)
    return square[index][:, index]
