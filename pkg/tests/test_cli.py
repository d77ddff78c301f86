"""End-to-end runs of the command-line entry point on the synthetic dataset."""
import numpy as np
import pandas as pd
import pytest

from main import build_parser, main
from src.data.image_codec import decode_image
from src.data.synthetic import class_names, cue_conflict_categories
from src.service.table_reference import DATASETS

TINY = ["--set", "model.image_size=16", "--set", "model.stage_depths=1,1", "--set", "model.stage_dims=8,16",
        "--set", "model.state_dim=4", "--set", "model.text_width=16", "--set", "model.text_depth=1",
        "--set", "model.embed_dim=16", "--set", "model.context_len=32", "--set", "train.batch_size=4"]


@pytest.fixture
def synthetic(tmp_path):
    out = tmp_path / "data"
    assert main(["make-synthetic", "--out", str(out), "--per-class", "1"] + TINY) == 0
    return out


@pytest.fixture
def trained(tmp_path, synthetic):
    out = tmp_path / "train"
    code = main(["train", "--manifest", str(synthetic / "pairs.jsonl"), "--out", str(out),
                 "--set", "train.total_steps=2"] + TINY)
    assert code == 0
    return out / "checkpoints" / "step_000002.ckpt"


def test_make_synthetic_writes_manifests(synthetic):
    for name in ("pairs.jsonl", "labeled.jsonl", "cue_conflict.jsonl"):
        assert (synthetic / name).exists()
    assert (synthetic / "config_echo.ini").exists()


def test_train_writes_checkpoint_and_loss_log(trained):
    assert trained.exists()
    losses = pd.read_csv(trained.parent.parent / "loss.csv")
    assert losses["step"].tolist() == [0, 1]


def test_eval_zeroshot_then_summarize_grid(tmp_path, synthetic, trained):
    out = tmp_path / "eval"
    code = main(["eval-zeroshot", "--checkpoint", str(trained), "--manifest", str(synthetic / "labeled.jsonl"),
                 "--out", str(out)] + TINY)
    assert code == 0
    grid = pd.read_csv(out / "zeroshot.csv")
    assert grid["count"].tolist() == [8]
    assert grid["model"].tolist() == ["step_000002"]

    assert main(["summarize", "--grid", str(out / "zeroshot.csv"), "--out", str(out)]) == 0
    assert pd.read_csv(out / "summary.csv")["best_models"].tolist() == ["step_000002"]


def test_shape_bias_and_ood(tmp_path, synthetic, trained):
    out = tmp_path / "ood"
    assert main(["shape-bias", "--checkpoint", str(trained), "--manifest", str(synthetic / "cue_conflict.jsonl"),
                 "--out", str(out), "--set", "ood.categories=" + ",".join(cue_conflict_categories())] + TINY) == 0
    assert (out / "shape_bias.txt").exists()
    assert main(["eval-ood", "--checkpoint", str(trained), "--manifest", str(synthetic / "labeled.jsonl"),
                 "--out", str(out), "--set", "ood.kinds=rotation,contrast",
                 "--set", "ood.categories=" + ",".join(class_names()),
                 "--set", "ood.levels=contrast=1.0 0.5"] + TINY) == 0
    curves = pd.read_csv(out / "ood.csv")
    assert sorted(set(curves["kind"])) == ["contrast", "rotation"]
    assert curves[curves["kind"] == "contrast"]["level"].tolist() == [1.0, 0.5]
    assert (out / "ood_summary.txt").exists()
    assert "levels = contrast=1.0 0.5" in (out / "config_echo.ini").read_text(encoding="utf-8")


def test_eval_ood_rejects_labels_outside_the_category_list(tmp_path, synthetic, trained):
    code = main(["eval-ood", "--checkpoint", str(trained), "--manifest", str(synthetic / "labeled.jsonl"),
                 "--out", str(tmp_path / "ood"), "--set", "ood.kinds=rotation"] + TINY)
    assert code == 1


def test_hessian_at_initialization(tmp_path, synthetic):
    out = tmp_path / "hessian"
    code = main(["hessian", "--manifest", str(synthetic / "pairs.jsonl"), "--out", str(out),
                 "--set", "hessian.num_samples=4", "--set", "hessian.batch_size=2", "--set", "hessian.k=1",
                 "--set", "hessian.iterations=2", "--set", "hessian.workers=1",
                 "--set", "hessian.param_subset=logit_scale"] + TINY)
    assert code == 0
    spectrum = pd.read_csv(out / "hessian.csv")
    assert spectrum["batch_index"].tolist() == [0, 1]
    assert (out / "sharpness.txt").exists()


def test_summarize_reference_table(tmp_path):
    out = tmp_path / "summary"
    assert main(["summarize", "--out", str(out)]) == 0
    table = pd.read_csv(out / "summary.csv")
    assert table["dataset"].tolist() == DATASETS
    assert table.set_index("dataset").loc["ImageNet", "best_models"] == "Simba_L"
    assert (out / "summary.xlsx").exists()


def test_perturb_rotation_composes_to_identity(tmp_path, synthetic):
    images = synthetic / "images"
    quarter, back = tmp_path / "quarter", tmp_path / "back"
    assert main(["perturb", "--input", str(images), "--kind", "rotation", "--level", "90", "--out", str(quarter)]) == 0
    assert main(["perturb", "--input", str(quarter), "--kind", "rotation", "--level", "270",
                 "--out", str(back)]) == 0
    for original in sorted(images.glob("*.png"))[:3]:
        np.testing.assert_array_equal(decode_image(back / original.name), decode_image(original))
    echo = (quarter / "config_echo.ini").read_text(encoding="utf-8")
    assert "[perturb]" in echo and "kind = rotation" in echo and "level = 90.0" in echo


@pytest.mark.parametrize("target", [".", "nested"])
def test_perturb_refuses_to_write_inside_its_input(synthetic, target):
    images = synthetic / "images"
    before = sorted(p.name for p in images.rglob("*.png"))
    code = main(["perturb", "--input", str(images), "--kind", "rotation", "--level", "90",
                 "--out", str(images / target)])
    assert code == 1
    assert sorted(p.name for p in images.rglob("*.png")) == before


@pytest.mark.parametrize("argv", [
    ["train", "--manifest", "absent.jsonl"],
    ["perturb", "--input", ".", "--kind", "motion-blur", "--level", "1"],
    ["perturb", "--input", ".", "--kind", "rotation", "--level", "45"],
    ["perturb", "--input", ".", "--kind", "rotation"],
    ["train", "--set", "train.momentum=0.9"],
    ["eval-zeroshot"],
])
def test_failures_exit_with_one(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path / "failed")]) == 1


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
