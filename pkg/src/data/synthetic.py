# src/data/synthetic.py
"""Coloured-shape toy dataset: 4 colours x 2 shapes, jittered placement."""
import itertools
import logging
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from src.data.image_codec import encode_image
from src.data.manifest_repository import write_manifest
from src.data.repositories import PathLike
from src.domain.models import ImageRecord

logger = logging.getLogger(__name__)

COLORS: Dict[str, Tuple[float, float, float]] = {
    "red": (0.9, 0.1, 0.1),
    "green": (0.1, 0.8, 0.2),
    "blue": (0.1, 0.2, 0.9),
    "yellow": (0.95, 0.85, 0.1),
}
SHAPES = ("square", "cross")
BACKGROUND = 0.5


def class_names() -> List[str]:
    return [f"{color} {shape}" for shape, color in itertools.product(SHAPES, COLORS)]


def cue_conflict_categories() -> List[str]:
    """Class list for the cue-conflict set: one entry per shape, then one per colour."""
    return list(SHAPES) + list(COLORS)


def caption_for(class_name: str) -> str:
    return f"a photo of a {class_name}."


def _shape_mask(shape: str, size: int, center: Tuple[int, int], extent: int) -> np.ndarray:
    rows, cols = np.mgrid[0:size, 0:size]
    dr, dc = np.abs(rows - center[0]), np.abs(cols - center[1])
    half = extent // 2
    if shape == "square":
        return (dr <= half) & (dc <= half)
    arm = max(1, extent // 6)
    return ((dr <= half) & (dc <= arm)) | ((dc <= half) & (dr <= arm))


def render(shape: str, color: str, rng: np.random.Generator, size: int = 32) -> np.ndarray:
    """One (size, size, 3) float image with the shape at a jittered position."""
    extent = max(3, int(round(size * 0.4)))
    margin = extent // 2 + 1
    center = (int(rng.integers(margin, size - margin)), int(rng.integers(margin, size - margin)))
    image = np.full((size, size, 3), BACKGROUND, dtype=np.float64)
    image += rng.normal(0.0, 0.02, size=image.shape)
    image[_shape_mask(shape, size, center, extent)] = COLORS[color]
    return np.clip(image, 0.0, 1.0)


def generate_synthetic_pairs(out_dir: PathLike, per_class: int = 4, seed: int = 0,
                             image_size: int = 32) -> Dict[str, Path]:
    """Write PNGs plus caption-pairs, labeled and cue-conflict manifests; returns manifest paths."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    rng = np.random.default_rng(seed)
    names = class_names()
    pairs: List[ImageRecord] = []
    labeled: List[ImageRecord] = []

    for index in range(per_class):
        for label, (shape, color) in enumerate(itertools.product(SHAPES, COLORS)):
            name = names[label]
            path = image_dir / f"{name.replace(' ', '_')}_{index:03d}.png"
            encode_image(render(shape, color, rng, image_size), path)
            pairs.append(ImageRecord(image_path=str(path), caption=caption_for(name)))
            labeled.append(ImageRecord(image_path=str(path), label_index=label, label_name=name, category16=name))

    # the outline names the shape cue, the fill colour names the texture cue
    conflicts: List[ImageRecord] = []
    for index in range(per_class):
        for shape, color in itertools.product(SHAPES, COLORS):
            path = image_dir / f"conflict_{shape}_{color}_{index:03d}.png"
            encode_image(render(shape, color, rng, image_size), path)
            conflicts.append(ImageRecord(image_path=str(path), shape_category=shape, texture_category=color))

    manifests = {
        "caption-pairs": out_dir / "pairs.jsonl",
        "labeled": out_dir / "labeled.jsonl",
        "cue-conflict": out_dir / "cue_conflict.jsonl",
    }
    write_manifest(pairs, manifests["caption-pairs"])
    write_manifest(labeled, manifests["labeled"])
    write_manifest(conflicts, manifests["cue-conflict"])
    logger.info(f"Wrote {len(pairs)} synthetic pairs and {len(conflicts)} cue-conflict images to {out_dir}")
    return manifests
