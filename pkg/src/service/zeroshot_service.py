# src/service/zeroshot_service.py
import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.data.tokenizer import tokenize_batch
from src.domain.errors import EvaluationError
from src.domain.models import DatasetManifest, EvalReport, ManifestKind, PromptTemplateSet, TableSummary
from src.model.clip_model import ClipModel
from src.service.training_service import load_images
from src.util import error_translator as codes

logger = logging.getLogger(__name__)


@dataclass
class ClassEmbeddingMatrix:
    """One unit-norm row per class, aligned with class_names."""
    matrix: np.ndarray
    class_names: List[str]

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]


def validate_templates(templates: PromptTemplateSet) -> None:
    if not templates.templates:
        raise EvaluationError("no templates", code=codes.TEMPLATE_PLACEHOLDER)
    for template in templates.templates:
        if template.count("{}") != 1:
            raise EvaluationError(f"'{template}' must contain '{{}}' exactly once", code=codes.TEMPLATE_PLACEHOLDER)


def load_templates(path: str) -> PromptTemplateSet:
    """One template per non-empty line."""
    with open(path, "r", encoding="utf-8") as f:
        templates = PromptTemplateSet([line.rstrip("\n") for line in f if line.strip()])
    validate_templates(templates)
    return templates


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=-1, keepdims=True)


def build_class_embeddings(model: ClipModel, class_names: Sequence[str],
                           templates: PromptTemplateSet) -> ClassEmbeddingMatrix:
    """Average the unit text embeddings of every filled template, then re-normalize."""
    if not class_names:
        raise EvaluationError(code=codes.EMPTY_CLASS_LIST)
    validate_templates(templates)
    rows = []
    for name in class_names:
        prompts = templates.fill(name)
        embedded = model.encode_text(tokenize_batch(prompts, model.config.context_len)).data
        rows.append(np.mean(embedded, axis=0))
    return ClassEmbeddingMatrix(matrix=_normalize_rows(np.stack(rows)), class_names=list(class_names))


def classify(image_embedding: np.ndarray, classes: ClassEmbeddingMatrix) -> int:
    """Argmax cosine similarity; the lowest index wins ties."""
    image_embedding = np.asarray(image_embedding)
    if image_embedding.shape != (classes.matrix.shape[1],):
        raise EvaluationError(f"embedding {image_embedding.shape} vs classes {classes.matrix.shape}",
                              code=codes.DIMENSION_MISMATCH)
    return int(np.argmax(classes.matrix @ image_embedding))


def classify_batch(image_embeddings: np.ndarray, classes: ClassEmbeddingMatrix) -> np.ndarray:
    if image_embeddings.ndim != 2 or image_embeddings.shape[1] != classes.matrix.shape[1]:
        raise EvaluationError(f"embeddings {image_embeddings.shape} vs classes {classes.matrix.shape}",
                              code=codes.DIMENSION_MISMATCH)
    return np.argmax(image_embeddings @ classes.matrix.T, axis=1)


def embed_images(model: ClipModel, images: np.ndarray, batch_size: int = 32) -> np.ndarray:
    chunks = [model.encode_image(images[start:start + batch_size]).data
              for start in range(0, len(images), batch_size)]
    return np.concatenate(chunks, axis=0)


def build_report(dataset: str, model_id: str, class_names: List[str], labels: Sequence[int],
                 predictions: Sequence[int]) -> EvalReport:
    k = len(class_names)
    confusion = np.zeros((k, k), dtype=np.int64)
    for label, predicted in zip(labels, predictions):
        confusion[label, predicted] += 1
    counts = confusion.sum(axis=1)
    per_class = [float(confusion[i, i] / counts[i]) if counts[i] else float("nan") for i in range(k)]
    total = int(counts.sum())
    overall = float(np.trace(confusion) / total) if total else 0.0
    return EvalReport(dataset=dataset, model_id=model_id, class_names=class_names, per_class_accuracy=per_class,
                      overall_accuracy=overall, confusion=confusion.tolist(), sample_count=total,
                      predictions=[int(p) for p in predictions])


class ZeroShotService:

    def __init__(self, model: ClipModel, templates: PromptTemplateSet, batch_size: int = 32):
        validate_templates(templates)
        self.model = model
        self.templates = templates
        self.batch_size = batch_size

    def evaluate(self, manifest: DatasetManifest, dataset: str = "",
                 class_names: Optional[Sequence[str]] = None) -> EvalReport:
        """Score every record; class_names defaults to the manifest's label names by index."""
        if manifest.kind != ManifestKind.LABELED:
            raise EvaluationError(f"expected a labeled manifest, got {manifest.kind.value}",
                                  code=codes.MISSING_LABEL_NAME)
        class_names = list(class_names) if class_names is not None else manifest.class_names()
        missing = [i for i, name in enumerate(class_names) if not name]
        if missing:
            raise EvaluationError(f"label indices {missing} have no label_name", code=codes.MISSING_LABEL_NAME)

        classes = build_class_embeddings(self.model, class_names, self.templates)
        labels = [r.label_index for r in manifest.records]
        for record in manifest.records:
            if record.label_index >= len(class_names):
                raise EvaluationError(f"line {record.line_number}: {record.label_index}",
                                      code=codes.LABEL_OUT_OF_RANGE)

        images = load_images(manifest, self.model.config.image_size, np.float64)
        predictions = classify_batch(embed_images(self.model, images, self.batch_size), classes)
        report = build_report(dataset or manifest.source, self.model.model_id, class_names, labels, predictions)
        logger.info(f"Zero-shot {report.dataset}: top-1 {report.overall_accuracy:.4f} over {report.sample_count}")
        return report


def evaluate_zeroshot(model: ClipModel, manifest: DatasetManifest, templates: PromptTemplateSet,
                      dataset: str = "", class_names: Optional[Sequence[str]] = None) -> EvalReport:
    return ZeroShotService(model, templates).evaluate(manifest, dataset, class_names)


def summarize_table(grid: Mapping[str, Mapping[str, float]],
                    datasets: Optional[Sequence[str]] = None) -> Tuple[List[TableSummary], Dict[str, int]]:
    """Best model(s) per dataset with the margin to the runner-up, plus per-model win counts."""
    models = list(grid)
    if not models:
        raise EvaluationError("empty grid", code=codes.TABLE_CELL_MISSING)
    if datasets is None:
        datasets = []
        for model in models:
            for dataset in grid[model]:
                if dataset not in datasets:
                    datasets.append(dataset)

    summaries = []
    wins = {model: 0 for model in models}
    for dataset in datasets:
        cells = {}
        for model in models:
            if dataset not in grid[model] or grid[model][dataset] is None:
                raise EvaluationError(f"{model} / {dataset}", code=codes.TABLE_CELL_MISSING)
            cells[model] = float(grid[model][dataset])
        best = max(cells.values())
        leaders = [m for m in models if cells[m] == best]
        others = [v for v in cells.values() if v < best]
        margin = round(best - max(others), 6) if others else 0.0
        for model in leaders:
            wins[model] += 1
        summaries.append(TableSummary(dataset=dataset, best_models=leaders, best_accuracy=best, margin=margin))
    return summaries, wins
