# src/service/ood_service.py
import logging
from typing import List, Mapping, Optional, Sequence

import numpy as np

from src.data.image_codec import decode_image, prepare_image
from src.domain.errors import EvaluationError, PerturbationError
from src.domain.models import (COARSE_CATEGORIES, DatasetManifest, ManifestKind, OodCurve, PerturbationKind,
                               PerturbationSpec, PromptTemplateSet, ShapeBiasResult)
from src.model.clip_model import ClipModel
from src.service.perturbation_service import (Ladders, apply_perturbation, ladder_index, mean_amplitude,
                                              perturbation_ladder, record_seed)
from src.service.zeroshot_service import ClassEmbeddingMatrix, build_class_embeddings, classify_batch, embed_images
from src.util import error_translator as codes

logger = logging.getLogger(__name__)


def category_labels(manifest: DatasetManifest, field_name: str = "category16") -> List[str]:
    values = []
    for record in manifest.records:
        value = getattr(record, field_name)
        if not value:
            raise PerturbationError(f"line {record.line_number}: no {field_name}", code=codes.MISSING_CATEGORY16)
        values.append(value)
    return values


class OodService:
    """Coarse-category zero-shot classifier applied to perturbed images, stimuli and cue-conflict sets."""

    def __init__(self, model: ClipModel, templates: PromptTemplateSet,
                 categories: Sequence[str] = COARSE_CATEGORIES, seed: int = 0, batch_size: int = 32,
                 category_field: str = "category16", ladders: Optional[Ladders] = None):
        if not categories:
            raise EvaluationError("no categories configured", code=codes.EMPTY_CLASS_LIST)
        self.model = model
        self.templates = templates
        self.categories = list(categories)
        self.ladders = dict(ladders or {})
        self.seed = seed
        self.batch_size = batch_size
        self.category_field = category_field
        self._classes: Optional[ClassEmbeddingMatrix] = None

    def classes_for(self, names: Sequence[str]) -> ClassEmbeddingMatrix:
        """Classifier over the full configured category list, whichever categories the records use."""
        unknown = sorted(set(names) - set(self.categories))
        if unknown:
            raise EvaluationError(f"categories {unknown} are not in the class list", code=codes.LABEL_OUT_OF_RANGE)
        if self._classes is None or self._classes.class_names != self.categories:
            self._classes = build_class_embeddings(self.model, self.categories, self.templates)
        return self._classes

    def _predict(self, images: Sequence[np.ndarray], classes: ClassEmbeddingMatrix) -> np.ndarray:
        size = self.model.config.image_size
        batch = np.stack([prepare_image(img, size) for img in images]).astype(np.float64)
        return classify_batch(embed_images(self.model, batch, self.batch_size), classes)

    def _accuracy(self, predictions: np.ndarray, names: Sequence[str], classes: ClassEmbeddingMatrix) -> float:
        index = {name: i for i, name in enumerate(classes.class_names)}
        targets = np.asarray([index[n] for n in names])
        return float(np.mean(predictions == targets))

    def evaluate_ood(self, manifest: DatasetManifest, kind: PerturbationKind,
                     levels: Optional[Sequence[float]] = None) -> OodCurve:
        """Accuracy at each ladder level; record i at level j is perturbed with seed (root, i, j)."""
        names = category_labels(manifest, self.category_field)
        classes = self.classes_for(names)
        images = [decode_image(r.image_path) for r in manifest.records]
        ladder = perturbation_ladder(kind, self.ladders)
        levels = list(levels) if levels is not None else ladder
        reference = mean_amplitude(images) if kind == PerturbationKind.POWER_EQUALIZE else None

        points, counts = [], []
        for level in levels:
            level_index = ladder_index(PerturbationSpec(kind, float(level)), ladder)
            perturbed = [
                apply_perturbation(img, PerturbationSpec(kind, level, record_seed(self.seed, i, level_index)),
                                   reference, ladder)
                for i, img in enumerate(images)
            ]
            accuracy = self._accuracy(self._predict(perturbed, classes), names, classes)
            points.append((float(level), accuracy))
            counts.append(len(images))
            logger.info(f"OOD {kind.value}@{level}: accuracy {accuracy:.4f}")
        return OodCurve(kind=kind.value, model_id=self.model.model_id, points=points, counts=counts)

    def evaluate_stimulus(self, manifest: DatasetManifest) -> float:
        names = category_labels(manifest, self.category_field)
        classes = self.classes_for(names)
        images = [decode_image(r.image_path) for r in manifest.records]
        accuracy = self._accuracy(self._predict(images, classes), names, classes)
        logger.info(f"Stimulus set {manifest.source}: accuracy {accuracy:.4f} over {len(images)}")
        return accuracy

    def shape_bias(self, manifest: DatasetManifest) -> ShapeBiasResult:
        if manifest.kind != ManifestKind.CUE_CONFLICT:
            raise EvaluationError(f"expected a cue-conflict manifest, got {manifest.kind.value}",
                                  code=codes.MISSING_LABEL_NAME)
        shapes = [r.shape_category for r in manifest.records]
        textures = [r.texture_category for r in manifest.records]
        classes = self.classes_for(shapes + textures)
        predictions = self._predict([decode_image(r.image_path) for r in manifest.records], classes)
        predicted_names = [classes.class_names[p] for p in predictions]
        result = count_shape_decisions(predicted_names, shapes, textures)
        logger.info(f"Shape bias: {result.shape_bias} ({result.shape_count} shape / {result.texture_count} texture)")
        return result


def count_shape_decisions(predictions: Sequence[str], shapes: Sequence[str],
                          textures: Sequence[str]) -> ShapeBiasResult:
    shape_count = texture_count = neither = 0
    for predicted, shape, texture in zip(predictions, shapes, textures):
        if predicted == shape:
            shape_count += 1
        elif predicted == texture:
            texture_count += 1
        else:
            neither += 1
    return ShapeBiasResult(shape_count=shape_count, texture_count=texture_count, neither_count=neither)


def summarize_ood(curves: Sequence[OodCurve], stimulus_results: Optional[Mapping[str, float]] = None) -> float:
    """Mean over conditions of each condition's mean accuracy."""
    condition_means = [float(np.mean(c.accuracies)) for c in curves if c.points]
    condition_means.extend(float(v) for v in (stimulus_results or {}).values())
    if not condition_means:
        raise EvaluationError("no OOD conditions", code=codes.EMPTY_REPORT)
    return float(np.mean(condition_means))
