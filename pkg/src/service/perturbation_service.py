# src/service/perturbation_service.py
"""Parametric image distortions with fixed severity ladders."""
import logging
import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from src.data.image_codec import decode_image, encode_image
from src.domain.errors import PerturbationError
from src.domain.models import PerturbationKind, PerturbationSpec
from src.util import error_translator as codes
from src.util.seeding import derive_seed

logger = logging.getLogger(__name__)

LUMA = np.array([0.2126, 0.7152, 0.0722])

LADDERS: Dict[PerturbationKind, List[float]] = {
    PerturbationKind.COLOR_GRAYSCALE: [0.0, 1.0],
    PerturbationKind.CONTRAST: [1.0, 0.5, 0.3, 0.15, 0.1, 0.05, 0.03, 0.01],
    PerturbationKind.UNIFORM_NOISE: [0.0, 0.03, 0.05, 0.1, 0.2, 0.35, 0.6, 0.9],
    PerturbationKind.LOW_PASS: [0.0, 1.0, 3.0, 5.0, 7.0, 10.0, 15.0, 40.0],
    PerturbationKind.HIGH_PASS: [math.inf, 3.0, 1.5, 1.0, 0.7, 0.55, 0.45, 0.4],
    PerturbationKind.PHASE_SCRAMBLE: [i / 7 for i in range(8)],
    PerturbationKind.POWER_EQUALIZE: [0.0, 1.0],
    PerturbationKind.ROTATION: [0.0, 90.0, 180.0, 270.0],
    PerturbationKind.FALSE_COLOR: [0.0, 1.0],
}

# level at which each kind leaves the image untouched
IDENTITY_LEVELS: Dict[PerturbationKind, float] = {kind: ladder[0] for kind, ladder in LADDERS.items()}

Ladders = Mapping[PerturbationKind, Sequence[float]]

_BINARY_KINDS = (PerturbationKind.COLOR_GRAYSCALE, PerturbationKind.POWER_EQUALIZE, PerturbationKind.FALSE_COLOR)


def parse_kind(name: str) -> PerturbationKind:
    try:
        return PerturbationKind(name)
    except ValueError:
        raise PerturbationError(f"'{name}'", code=codes.UNKNOWN_PERTURBATION)


def level_is_valid(kind: PerturbationKind, level: float) -> bool:
    """Whether a severity value means something for the kind, on or off its default ladder."""
    if math.isnan(level):
        return False
    if kind in _BINARY_KINDS:
        return level in (0.0, 1.0)
    if kind == PerturbationKind.ROTATION:
        return level in (0.0, 90.0, 180.0, 270.0)
    if kind == PerturbationKind.CONTRAST:
        return 0.0 < level <= 1.0
    if kind == PerturbationKind.PHASE_SCRAMBLE:
        return 0.0 <= level <= 1.0
    if kind == PerturbationKind.HIGH_PASS:
        return level > 0.0
    return 0.0 <= level < math.inf


def _severity_increases(kind: PerturbationKind, levels: Sequence[float]) -> bool:
    # contrast and high-pass grow more severe as the level falls
    sign = -1.0 if kind in (PerturbationKind.CONTRAST, PerturbationKind.HIGH_PASS) else 1.0
    return all(sign * (b - a) > 0 for a, b in zip(levels, levels[1:]))


def parse_ladders(entries: Sequence[str]) -> Dict[PerturbationKind, List[float]]:
    """'kind=l1 l2 ...' entries to custom ladders, each strictly ordered from mild to severe."""
    ladders: Dict[PerturbationKind, List[float]] = {}
    for entry in entries:
        name, sep, raw = entry.partition("=")
        kind = parse_kind(name.strip())
        try:
            levels = [float(token) for token in raw.split()]
        except ValueError:
            raise PerturbationError(f"ladder '{entry}' has a non-numeric level", code=codes.LEVEL_OUT_OF_LADDER)
        if not sep or not levels or kind in ladders:
            raise PerturbationError(f"ladder entry '{entry}'", code=codes.LEVEL_OUT_OF_LADDER)
        invalid = [level for level in levels if not level_is_valid(kind, level)]
        if invalid:
            raise PerturbationError(f"{kind.value} levels {invalid} are not valid severities",
                                    code=codes.LEVEL_OUT_OF_LADDER)
        if not _severity_increases(kind, levels):
            raise PerturbationError(f"{kind.value} ladder {levels} is not ordered from mild to severe",
                                    code=codes.LEVEL_OUT_OF_LADDER)
        ladders[kind] = levels
    return ladders


def perturbation_ladder(kind, ladders: Optional[Ladders] = None) -> List[float]:
    """Severity levels of a kind, mild to severe; a configured ladder replaces the default one."""
    if not isinstance(kind, PerturbationKind):
        kind = parse_kind(kind)
    if ladders and kind in ladders:
        return list(ladders[kind])
    return list(LADDERS[kind])


def ladder_index(spec: PerturbationSpec, ladder: Optional[Sequence[float]] = None) -> int:
    """Position of the requested level on the ladder; off-ladder levels are rejected."""
    ladder = list(ladder) if ladder is not None else LADDERS[spec.kind]
    for i, level in enumerate(ladder):
        if level == spec.level or (math.isfinite(level)
                                   and math.isclose(level, spec.level, rel_tol=1e-9, abs_tol=1e-12)):
            return i
    raise PerturbationError(f"{spec.kind.value} level {spec.level} not in {ladder}", code=codes.LEVEL_OUT_OF_LADDER)


def validate_spec(spec: PerturbationSpec, ladder: Optional[Sequence[float]] = None) -> None:
    if not isinstance(spec.kind, PerturbationKind):
        raise PerturbationError(f"'{spec.kind}'", code=codes.UNKNOWN_PERTURBATION)
    ladder_index(spec, ladder)
    if spec.kind.is_stochastic and spec.seed is None:
        raise PerturbationError(spec.kind.value, code=codes.MISSING_SEED)


def luminance(image: np.ndarray) -> np.ndarray:
    return image @ LUMA.astype(image.dtype)


def grayscale(image: np.ndarray) -> np.ndarray:
    if np.array_equal(image[..., 0], image[..., 1]) and np.array_equal(image[..., 1], image[..., 2]):
        return image.copy()
    y = luminance(image)
    return np.repeat(y[..., None], 3, axis=-1)


def contrast(image: np.ndarray, c: float) -> np.ndarray:
    return c * (image - 0.5) + 0.5


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Per-channel blur, kernel radius ceil(3 sigma), edge-replicate padding."""
    radius = int(math.ceil(3 * sigma))
    return ndimage.gaussian_filter(image, sigma=(sigma, sigma, 0), mode="nearest", radius=(radius, radius, 0))


def _antisymmetric_phase(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """U(-1, 1) field made odd under k -> -k so that the scrambled spectrum stays Hermitian."""
    u = rng.uniform(-1.0, 1.0, size=(height, width))
    mirrored = np.roll(np.flip(u, axis=(0, 1)), shift=(1, 1), axis=(0, 1))
    return 0.5 * (u - mirrored)


def phase_scramble_unclamped(image: np.ndarray, w: float, rng: np.random.Generator) -> np.ndarray:
    height, width = image.shape[:2]
    noise = np.exp(1j * math.pi * w * _antisymmetric_phase(height, width, rng))
    spectrum = np.fft.fft2(image, axes=(0, 1)) * noise[..., None]
    return np.real(np.fft.ifft2(spectrum, axes=(0, 1)))


def amplitude_spectrum(image: np.ndarray) -> np.ndarray:
    return np.abs(np.fft.fft2(image, axes=(0, 1)))


def mean_amplitude(images: Sequence[np.ndarray]) -> np.ndarray:
    """Mean per-channel amplitude spectrum over an image set of one shape."""
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise PerturbationError(f"power equalization needs one image shape, got {sorted(shapes)}",
                                code=codes.DIMENSION_MISMATCH)
    return np.mean([amplitude_spectrum(img.astype(np.float64)) for img in images], axis=0)


def power_equalize(image: np.ndarray, reference: np.ndarray) -> np.ndarray:
    if reference.shape != image.shape:
        raise PerturbationError(f"reference amplitude {reference.shape} vs image {image.shape}",
                                code=codes.DIMENSION_MISMATCH)
    phase = np.angle(np.fft.fft2(image, axes=(0, 1)))
    return np.real(np.fft.ifft2(reference * np.exp(1j * phase), axes=(0, 1)))


def false_color(image: np.ndarray) -> np.ndarray:
    """Red/blue opponent inversion, mean luminance shifted back to the original."""
    swapped = image.copy()
    swapped[..., 0] = 1.0 - image[..., 0]
    swapped[..., 2] = 1.0 - image[..., 2]
    return swapped + (luminance(image).mean() - luminance(swapped).mean())


def apply_perturbation(image: np.ndarray, spec: PerturbationSpec, reference_amplitude: Optional[np.ndarray] = None,
                       ladder: Optional[Sequence[float]] = None) -> np.ndarray:
    """(H, W, 3) image in [0, 1] to a perturbed image in [0, 1]; identity levels return a copy."""
    validate_spec(spec, ladder)
    kind, level = spec.kind, spec.level
    if level == IDENTITY_LEVELS[kind]:
        return image.copy()
    if kind.is_spectral and min(image.shape[:2]) < 2:
        raise PerturbationError(f"shape {image.shape}", code=codes.IMAGE_TOO_SMALL)
    dtype = image.dtype
    x = image.astype(np.float64)

    if kind == PerturbationKind.COLOR_GRAYSCALE:
        out = grayscale(x)
    elif kind == PerturbationKind.CONTRAST:
        out = contrast(x, level)
    elif kind == PerturbationKind.UNIFORM_NOISE:
        rng = np.random.default_rng(spec.seed)
        out = x + rng.uniform(-level, level, size=x.shape)
    elif kind == PerturbationKind.LOW_PASS:
        out = gaussian_blur(x, level)
    elif kind == PerturbationKind.HIGH_PASS:
        out = x - gaussian_blur(x, level) + 0.5
    elif kind == PerturbationKind.PHASE_SCRAMBLE:
        out = phase_scramble_unclamped(x, level, np.random.default_rng(spec.seed))
    elif kind == PerturbationKind.POWER_EQUALIZE:
        reference = reference_amplitude if reference_amplitude is not None else amplitude_spectrum(x)
        out = power_equalize(x, reference)
    elif kind == PerturbationKind.ROTATION:
        return np.rot90(image, k=int(level) // 90, axes=(0, 1)).copy()
    elif kind == PerturbationKind.FALSE_COLOR:
        out = false_color(x)
    else:
        raise PerturbationError(kind.value, code=codes.UNKNOWN_PERTURBATION)
    return np.clip(out, 0.0, 1.0).astype(dtype)


def record_seed(root_seed: int, record_index: int, level_index: int) -> int:
    return derive_seed(root_seed, record_index, level_index)


def perturb_tree(input_dir: str, output_dir: str, spec: PerturbationSpec,
                 ladder: Optional[Sequence[float]] = None) -> int:
    """Perturb every PNG under input_dir into the mirrored path under output_dir; returns the file count."""
    validate_spec(spec, ladder)
    source = Path(input_dir).resolve()
    target = Path(output_dir).resolve()
    if target == source or source in target.parents:
        raise PerturbationError(f"{target} lies inside {source}", code=codes.OUTPUT_INSIDE_INPUT)
    files = sorted(p for p in source.rglob("*") if p.suffix.lower() == ".png")
    images = [decode_image(p) for p in files]
    reference = mean_amplitude(images) if spec.kind == PerturbationKind.POWER_EQUALIZE and images else None
    level_index = ladder_index(spec, ladder)

    for index, (path, image) in enumerate(zip(files, images)):
        seed = record_seed(spec.seed, index, level_index) if spec.seed is not None else None
        file_spec = PerturbationSpec(spec.kind, spec.level, seed)
        encode_image(apply_perturbation(image, file_spec, reference, ladder), target / path.relative_to(source))
    logger.info(f"Perturbed {len(files)} images with {spec.kind.value}@{spec.level} into {target}")
    return len(files)
