"""Zero-shot classification, the prompt ensemble and best-per-dataset summaries."""
import math

import numpy as np
import pytest

from src.data.manifest_repository import load_manifest
from src.domain.errors import EvaluationError
from src.domain.models import DEFAULT_TEMPLATES, ManifestKind, PromptTemplateSet
from src.model.clip_model import init_model
from src.service.table_reference import DATASETS, reference_grid
from src.service.zeroshot_service import (ClassEmbeddingMatrix, ZeroShotService, build_class_embeddings,
                                          build_report, classify, classify_batch, load_templates, summarize_table,
                                          validate_templates)
from src.util import error_translator as codes


class TestReferenceTable:

    @pytest.fixture
    def summaries(self):
        summaries, wins = summarize_table(reference_grid())
        return {s.dataset: s for s in summaries}, wins

    @pytest.mark.parametrize("dataset,model,accuracy,margin", [
        ("ImageNet", "Simba_L", 41.6, 1.2),
        ("PCAM", "VMamba_B", 59.9, 1.8),
        ("EuroSAT", "ViT_B", 30.2, 7.5),
    ])
    def test_best_model(self, summaries, dataset, model, accuracy, margin):
        by_dataset, _ = summaries
        summary = by_dataset[dataset]
        assert summary.best_models == [model]
        assert summary.best_accuracy == accuracy
        assert summary.margin == pytest.approx(margin)

    def test_every_dataset_summarized(self, summaries):
        by_dataset, wins = summaries
        assert list(by_dataset) == DATASETS
        assert sum(wins.values()) >= len(DATASETS)

    def test_ties_share_the_win(self):
        summaries, wins = summarize_table({"a": {"x": 1.0}, "b": {"x": 1.0}, "c": {"x": 0.5}})
        assert summaries[0].best_models == ["a", "b"]
        assert summaries[0].margin == pytest.approx(0.5)
        assert wins == {"a": 1, "b": 1, "c": 0}

    def test_all_equal_has_zero_margin(self):
        summaries, _ = summarize_table({"a": {"x": 2.0}, "b": {"x": 2.0}})
        assert summaries[0].margin == 0.0

    def test_missing_cell(self):
        with pytest.raises(EvaluationError) as info:
            summarize_table({"a": {"x": 1.0, "y": 2.0}, "b": {"x": 1.0}})
        assert info.value.code == codes.TABLE_CELL_MISSING

    def test_empty_grid(self):
        with pytest.raises(EvaluationError):
            summarize_table({})


class TestTemplates:

    @pytest.mark.parametrize("template", ["a photo", "{} and {}"])
    def test_placeholder_exactly_once(self, template):
        with pytest.raises(EvaluationError) as info:
            validate_templates(PromptTemplateSet([template]))
        assert info.value.code == codes.TEMPLATE_PLACEHOLDER

    def test_empty_set(self):
        with pytest.raises(EvaluationError):
            validate_templates(PromptTemplateSet([]))

    def test_fill(self):
        assert PromptTemplateSet(["a {}."]).fill("dog") == ["a dog."]

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "templates.txt"
        path.write_text("a photo of a {}.\n\nart of the {}.\n", encoding="utf-8")
        assert load_templates(str(path)).templates == ["a photo of a {}.", "art of the {}."]


class TestClassify:

    def test_lowest_index_wins_ties(self):
        classes = ClassEmbeddingMatrix(np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]), ["a", "b", "c"])
        assert classify(np.array([1.0, 0.0]), classes) == 1
        np.testing.assert_array_equal(classify_batch(np.array([[1.0, 0.0], [0.0, 1.0]]), classes), [1, 0])

    def test_dimension_mismatch(self):
        classes = ClassEmbeddingMatrix(np.eye(2), ["a", "b"])
        with pytest.raises(EvaluationError):
            classify(np.ones(3), classes)

    def test_report(self):
        report = build_report("toy", "m", ["a", "b", "c"], [0, 0, 1, 1], [0, 1, 1, 1])
        assert report.overall_accuracy == pytest.approx(0.75)
        assert report.per_class_accuracy[:2] == [0.5, 1.0]
        assert math.isnan(report.per_class_accuracy[2])
        assert report.confusion == [[1, 1, 0], [0, 2, 0], [0, 0, 0]]


class TestZeroShotService:

    @pytest.fixture
    def model(self, tiny_config):
        return init_model(tiny_config, seed=0, model_id="tiny")

    def test_class_embeddings_unit_norm(self, model):
        classes = build_class_embeddings(model, ["red square", "blue cross"], PromptTemplateSet(DEFAULT_TEMPLATES))
        assert classes.num_classes == 2
        np.testing.assert_allclose(np.linalg.norm(classes.matrix, axis=1), 1.0, rtol=1e-12)

    def test_empty_class_list(self, model):
        with pytest.raises(EvaluationError) as info:
            build_class_embeddings(model, [], PromptTemplateSet(DEFAULT_TEMPLATES))
        assert info.value.code == codes.EMPTY_CLASS_LIST

    def test_evaluate_synthetic(self, model, synthetic_dir):
        manifest = load_manifest(synthetic_dir["labeled"], ManifestKind.LABELED)
        report = ZeroShotService(model, PromptTemplateSet(DEFAULT_TEMPLATES), batch_size=5).evaluate(manifest, "toy")
        assert report.dataset == "toy" and report.model_id == "tiny"
        assert report.sample_count == len(manifest)
        assert 0.0 <= report.overall_accuracy <= 1.0
        assert sum(map(sum, report.confusion)) == len(manifest)
        assert len(report.predictions) == len(manifest)

    def test_label_out_of_range(self, model, synthetic_dir):
        manifest = load_manifest(synthetic_dir["labeled"], ManifestKind.LABELED)
        with pytest.raises(EvaluationError) as info:
            ZeroShotService(model, PromptTemplateSet(DEFAULT_TEMPLATES)).evaluate(manifest, class_names=["a", "b"])
        assert info.value.code == codes.LABEL_OUT_OF_RANGE

    def test_requires_labeled_manifest(self, model, synthetic_dir):
        manifest = load_manifest(synthetic_dir["caption-pairs"], ManifestKind.CAPTION_PAIRS)
        with pytest.raises(EvaluationError) as info:
            ZeroShotService(model, PromptTemplateSet(DEFAULT_TEMPLATES)).evaluate(manifest)
        assert info.value.code == codes.MISSING_LABEL_NAME
