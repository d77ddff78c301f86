# src/domain/errors.py
from typing import Optional

from src.util import error_translator as codes
from src.util.error_translator import get_error_message


class ClipMambaError(Exception):
    """Base error carrying a stable error code."""

    default_code = codes.UNKNOWN

    def __init__(self, message: str = "", code: Optional[str] = None):
        self.code = code or self.default_code
        self.detail = message
        text = get_error_message(self.code)
        if message:
            text = f"{text}: {message}"
        super().__init__(f"[{self.code}] {text}")


class ShapeError(ClipMambaError):
    default_code = codes.SHAPE_MISMATCH


class DTypeError(ClipMambaError):
    default_code = codes.DTYPE_MIXING


class TapeError(ClipMambaError):
    default_code = codes.TAPE_CONFLICT


class ScanError(ClipMambaError):
    default_code = codes.SEQUENCE_LENGTH_MISMATCH


class ManifestError(ClipMambaError):
    default_code = codes.MANIFEST_LINE_INVALID

    def __init__(self, message: str = "", code: Optional[str] = None, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, code)


class ImageFormatError(ClipMambaError):
    default_code = codes.IMAGE_FORMAT


class TensorFormatError(ClipMambaError):
    default_code = codes.TENSOR_FORMAT


class ConfigError(ClipMambaError):
    default_code = codes.INVALID_CONFIG_VALUE

    def __init__(self, message: str = "", code: Optional[str] = None, key: Optional[str] = None):
        self.key = key
        if key is not None:
            message = f"'{key}' {message}".strip()
        super().__init__(message, code)


class CheckpointError(ClipMambaError):
    default_code = codes.CHECKPOINT_MAGIC


class ModelInputError(ClipMambaError):
    default_code = codes.WRONG_IMAGE_SIZE


class TrainingAbort(ClipMambaError):
    default_code = codes.NON_FINITE_LOSS

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"step {step} produced loss {loss}")


class EvaluationError(ClipMambaError):
    default_code = codes.LABEL_OUT_OF_RANGE


class PerturbationError(ClipMambaError):
    default_code = codes.UNKNOWN_PERTURBATION


class SpectrumError(ClipMambaError):
    default_code = codes.INVALID_LANCZOS_CONFIG


class TokenizerError(ClipMambaError):
    default_code = codes.MISSING_EOS
