# src/data/repositories.py
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Mapping, Optional, Tuple, Union

from src.domain.models import DatasetManifest, ManifestKind

PathLike = Union[str, Path]


class ManifestRepository(ABC):
    """Interface for dataset manifest access."""

    @abstractmethod
    def load(self, path: PathLike, kind: ManifestKind) -> DatasetManifest:
        """Parse a manifest and validate the fields its kind requires."""
        pass

    @abstractmethod
    def save(self, manifest: DatasetManifest, path: PathLike) -> None:
        """Write a manifest so that load() returns the same records."""
        pass


class CheckpointRepository(ABC):
    """Interface for model checkpoint storage."""

    @abstractmethod
    def save(self, checkpoint, path: PathLike) -> None:
        """Write parameters, optimizer state, step counter and config echo."""
        pass

    @abstractmethod
    def load(self, path: PathLike, expected_shapes: Optional[Mapping[str, Tuple[int, ...]]] = None):
        """Read a checkpoint; supplied shapes must match the stored tensors name by name."""
        pass
