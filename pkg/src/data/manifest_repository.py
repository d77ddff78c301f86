# src/data/manifest_repository.py
import json
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from src.data.repositories import ManifestRepository, PathLike
from src.domain.errors import ManifestError
from src.domain.models import DatasetManifest, ImageRecord, ManifestKind
from src.util import error_translator as codes

logger = logging.getLogger(__name__)

# manifest field name -> ImageRecord attribute
FIELD_MAP = {
    "image": "image_path",
    "caption": "caption",
    "label_index": "label_index",
    "label_name": "label_name",
    "shape_category": "shape_category",
    "texture_category": "texture_category",
    "category16": "category16",
}

REQUIRED_FIELDS: Dict[ManifestKind, Tuple[str, ...]] = {
    ManifestKind.CAPTION_PAIRS: ("image", "caption"),
    ManifestKind.LABELED: ("image", "label_index", "label_name"),
    ManifestKind.CUE_CONFLICT: ("image", "shape_category", "texture_category"),
}


class JsonLinesManifestRepository(ManifestRepository):
    """One JSON object per line; relative image paths resolve against the manifest's directory."""

    def __init__(self, check_files: bool = True):
        self.check_files = check_files

    def load(self, path: PathLike, kind: ManifestKind) -> DatasetManifest:
        path = Path(path)
        if not path.exists():
            raise ManifestError(str(path), code=codes.MANIFEST_FILE_MISSING)
        base = path.parent
        records: List[ImageRecord] = []
        with open(path, "r", encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                records.append(self._parse_line(line, line_number, kind, base))
        if not records:
            raise ManifestError(str(path), code=codes.MANIFEST_EMPTY)
        logger.info(f"Loaded {len(records)} {kind.value} records from {path}")
        return DatasetManifest(records=records, kind=kind, source=str(path))

    def _parse_line(self, line: str, line_number: int, kind: ManifestKind, base: Path) -> ImageRecord:
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f"not valid JSON ({e.msg})", line=line_number)
        if not isinstance(entry, dict):
            raise ManifestError("record is not an object", line=line_number)

        for name in REQUIRED_FIELDS[kind]:
            if entry.get(name) is None:
                raise ManifestError(f"missing '{name}'", code=codes.MANIFEST_FIELD_MISSING, line=line_number)

        values = {attr: entry.get(name) for name, attr in FIELD_MAP.items()}
        image_path = str(values.pop("image_path"))
        if not os.path.isabs(image_path):
            image_path = str(base / image_path)
        if self.check_files and not os.path.exists(image_path):
            raise ManifestError(image_path, code=codes.MANIFEST_FILE_MISSING, line=line_number)

        if values["label_index"] is not None:
            try:
                values["label_index"] = int(values["label_index"])
            except (TypeError, ValueError):
                raise ManifestError("label_index is not an integer", line=line_number)
            if values["label_index"] < 0:
                raise ManifestError("label_index is negative", line=line_number)
        if kind == ManifestKind.CUE_CONFLICT and values["shape_category"] == values["texture_category"]:
            raise ManifestError("shape and texture categories coincide", line=line_number)
        return ImageRecord(image_path=image_path, line_number=line_number, **values)

    def save(self, manifest: DatasetManifest, path: PathLike) -> None:
        write_manifest(manifest.records, path)


def write_manifest(records: Iterable[ImageRecord], path: PathLike) -> None:
    """Write records as JSON lines; image paths under the manifest's directory are stored relative."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            image = Path(record.image_path)
            try:
                image = image.resolve().relative_to(base)
            except ValueError:
                pass
            entry = {"image": image.as_posix()}
            for name, attr in FIELD_MAP.items():
                value = getattr(record, attr)
                if name != "image" and value is not None:
                    entry[name] = value
            handle.write(json.dumps(entry, ensure_ascii=False) + "\n")


def load_manifest(path: PathLike, kind: ManifestKind) -> DatasetManifest:
    return JsonLinesManifestRepository().load(path, kind)
