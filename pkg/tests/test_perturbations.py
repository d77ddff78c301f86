"""Image distortions, their ladders and the tree writer."""
import numpy as np
import pytest

from src.data.image_codec import decode_image, encode_image
from src.domain.errors import PerturbationError
from src.domain.models import PerturbationKind, PerturbationSpec
from src.service.perturbation_service import (LADDERS, amplitude_spectrum, apply_perturbation, contrast, false_color,
                                              grayscale, luminance, mean_amplitude, parse_kind, parse_ladders,
                                              perturb_tree, perturbation_ladder, phase_scramble_unclamped,
                                              power_equalize, record_seed)
from src.util import error_translator as codes


@pytest.fixture
def image(rng):
    return rng.uniform(0.2, 0.8, size=(8, 6, 3))


def _apply(image, kind, level, seed=None):
    return apply_perturbation(image, PerturbationSpec(kind, level, seed))


class TestLadders:

    @pytest.mark.parametrize("kind", list(PerturbationKind))
    def test_identity_level_is_exact_copy(self, image, kind):
        level = perturbation_ladder(kind)[0]
        out = _apply(image, kind, level, seed=0)
        np.testing.assert_array_equal(out, image)
        assert out is not image

    def test_ladder_lookup_by_name(self):
        assert perturbation_ladder("rotation") == [0.0, 90.0, 180.0, 270.0]
        assert perturbation_ladder(PerturbationKind.CONTRAST)[-1] == 0.01
        assert len(LADDERS) == len(PerturbationKind)

    def test_unknown_kind(self):
        with pytest.raises(PerturbationError) as info:
            parse_kind("motion-blur")
        assert info.value.code == codes.UNKNOWN_PERTURBATION

    def test_level_off_the_ladder(self, image):
        with pytest.raises(PerturbationError) as info:
            _apply(image, PerturbationKind.CONTRAST, 0.33)
        assert info.value.code == codes.LEVEL_OUT_OF_LADDER

    @pytest.mark.parametrize("kind,level", [(PerturbationKind.UNIFORM_NOISE, 0.1),
                                            (PerturbationKind.PHASE_SCRAMBLE, 3 / 7)])
    def test_stochastic_kinds_need_a_seed(self, image, kind, level):
        with pytest.raises(PerturbationError) as info:
            _apply(image, kind, level)
        assert info.value.code == codes.MISSING_SEED

    def test_spectral_kinds_need_two_pixels(self):
        with pytest.raises(PerturbationError) as info:
            _apply(np.full((1, 1, 3), 0.5), PerturbationKind.LOW_PASS, 1.0)
        assert info.value.code == codes.IMAGE_TOO_SMALL


class TestCustomLadders:

    def test_parse(self):
        ladders = parse_ladders(["contrast=1.0 0.5 0.1", "rotation=0 180"])
        assert ladders[PerturbationKind.CONTRAST] == [1.0, 0.5, 0.1]
        assert perturbation_ladder("rotation", ladders) == [0.0, 180.0]
        assert perturbation_ladder("color-grayscale", ladders) == list(LADDERS[PerturbationKind.COLOR_GRAYSCALE])

    def test_custom_level_becomes_valid(self, image):
        ladder = perturbation_ladder(PerturbationKind.CONTRAST, parse_ladders(["contrast=1.0 0.33"]))
        out = apply_perturbation(image, PerturbationSpec(PerturbationKind.CONTRAST, 0.33), ladder=ladder)
        np.testing.assert_allclose(out, contrast(image, 0.33))

    @pytest.mark.parametrize("entry", ["contrast=0.5 1.0", "rotation=0 45", "contrast=1.0 0.0",
                                       "uniform-noise=0.1 x", "contrast", "contrast="])
    def test_rejected_entries(self, entry):
        with pytest.raises(PerturbationError) as info:
            parse_ladders([entry])
        assert info.value.code == codes.LEVEL_OUT_OF_LADDER

    def test_duplicate_kind(self):
        with pytest.raises(PerturbationError):
            parse_ladders(["rotation=0 90", "rotation=0 180"])

    def test_unknown_kind(self):
        with pytest.raises(PerturbationError) as info:
            parse_ladders(["motion-blur=1 2"])
        assert info.value.code == codes.UNKNOWN_PERTURBATION


class TestDistortions:

    def test_four_quarter_turns(self, image):
        out = image
        for _ in range(4):
            out = _apply(out, PerturbationKind.ROTATION, 90.0)
        np.testing.assert_array_equal(out, image)
        back = _apply(_apply(image, PerturbationKind.ROTATION, 90.0), PerturbationKind.ROTATION, 270.0)
        np.testing.assert_array_equal(back, image)
        assert _apply(image, PerturbationKind.ROTATION, 90.0).shape == (6, 8, 3)

    def test_contrast_composes(self, image):
        np.testing.assert_allclose(contrast(contrast(image, 0.5), 0.3), contrast(image, 0.15), rtol=1e-12)
        out = _apply(image, PerturbationKind.CONTRAST, 0.1)
        np.testing.assert_allclose(out.mean(), 0.1 * (image.mean() - 0.5) + 0.5, rtol=1e-12)

    def test_grayscale(self, image):
        gray = grayscale(image)
        np.testing.assert_array_equal(gray[..., 0], gray[..., 2])
        np.testing.assert_allclose(gray[..., 1], luminance(image), rtol=1e-12)
        np.testing.assert_array_equal(grayscale(gray), gray)

    def test_noise_is_seeded(self, image):
        a = _apply(image, PerturbationKind.UNIFORM_NOISE, 0.1, seed=7)
        b = _apply(image, PerturbationKind.UNIFORM_NOISE, 0.1, seed=7)
        c = _apply(image, PerturbationKind.UNIFORM_NOISE, 0.1, seed=8)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert np.max(np.abs(a - image)) <= 0.1 + 1e-12

    def test_phase_scramble_keeps_amplitude(self, image, rng):
        out = phase_scramble_unclamped(image, 1.0, rng)
        assert out.dtype == np.float64
        np.testing.assert_allclose(amplitude_spectrum(out), amplitude_spectrum(image), rtol=1e-9, atol=1e-9)
        assert not np.allclose(out, image)

    def test_power_equalize_with_own_amplitude(self, image):
        np.testing.assert_allclose(power_equalize(image, amplitude_spectrum(image)), image, rtol=1e-10, atol=1e-12)

    def test_power_equalize_shared_reference(self, image, rng):
        other = rng.uniform(0.2, 0.8, size=image.shape)
        reference = mean_amplitude([image, other])
        out = power_equalize(image, reference)
        np.testing.assert_allclose(amplitude_spectrum(out), reference, rtol=1e-9, atol=1e-9)
        with pytest.raises(PerturbationError):
            mean_amplitude([image, other[:4]])

    def test_low_pass_keeps_flat_image(self):
        flat = np.full((6, 6, 3), 0.25)
        np.testing.assert_allclose(_apply(flat, PerturbationKind.LOW_PASS, 3.0), flat, rtol=1e-12)

    def test_high_pass_of_flat_image_is_mid_grey(self):
        flat = np.full((6, 6, 3), 0.9)
        np.testing.assert_allclose(_apply(flat, PerturbationKind.HIGH_PASS, 1.0), 0.5, rtol=1e-12)

    def test_false_color_keeps_mean_luminance(self, image):
        out = false_color(image)
        assert luminance(out).mean() == pytest.approx(luminance(image).mean(), rel=1e-12)
        assert not np.allclose(out, image)

    def test_output_clamped(self, image):
        out = _apply(image, PerturbationKind.UNIFORM_NOISE, 0.9, seed=1)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_float32_preserved(self, image):
        out = _apply(image.astype(np.float32), PerturbationKind.CONTRAST, 0.5)
        assert out.dtype == np.float32


class TestPerturbTree:

    def test_mirrors_directory(self, tmp_path, image):
        source = tmp_path / "in"
        encode_image(image, source / "a.png")
        encode_image(image, source / "nested" / "b.png")
        count = perturb_tree(str(source), str(tmp_path / "out"), PerturbationSpec(PerturbationKind.ROTATION, 180.0))
        assert count == 2
        rotated = decode_image(tmp_path / "out" / "nested" / "b.png")
        np.testing.assert_array_equal(rotated, decode_image(source / "nested" / "b.png")[::-1, ::-1])

    def test_per_file_seeds(self, tmp_path, image):
        source = tmp_path / "in"
        encode_image(image, source / "a.png")
        encode_image(image, source / "b.png")
        spec = PerturbationSpec(PerturbationKind.UNIFORM_NOISE, 0.2, seed=3)
        perturb_tree(str(source), str(tmp_path / "out"), spec)
        a = decode_image(tmp_path / "out" / "a.png")
        b = decode_image(tmp_path / "out" / "b.png")
        assert not np.array_equal(a, b)
        assert record_seed(3, 0, 4) == record_seed(3, 0, 4) != record_seed(3, 1, 4)

    @pytest.mark.parametrize("relative", [".", "nested/out"])
    def test_output_inside_input_is_rejected(self, tmp_path, image, relative):
        source = tmp_path / "in"
        encode_image(image, source / "a.png")
        with pytest.raises(PerturbationError) as info:
            perturb_tree(str(source), str(source / relative), PerturbationSpec(PerturbationKind.ROTATION, 90.0))
        assert info.value.code == codes.OUTPUT_INSIDE_INPUT
        assert sorted(p.name for p in source.rglob("*.png")) == ["a.png"]

    def test_sibling_output_directory_is_fine(self, tmp_path, image):
        source = tmp_path / "in"
        encode_image(image, source / "a.png")
        assert perturb_tree(str(source), str(tmp_path / "in-rotated"),
                            PerturbationSpec(PerturbationKind.ROTATION, 90.0)) == 1
