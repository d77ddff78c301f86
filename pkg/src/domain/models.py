# src/domain/models.py
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np


# coarse object categories shared by the OOD, stimulus and cue-conflict sets
COARSE_CATEGORIES: Tuple[str, ...] = (
    "airplane", "bear", "bicycle", "bird", "boat", "bottle", "car", "cat",
    "chair", "clock", "dog", "elephant", "keyboard", "knife", "oven", "truck",
)


class ManifestKind(str, Enum):
    CAPTION_PAIRS = "caption-pairs"
    LABELED = "labeled"
    CUE_CONFLICT = "cue-conflict"


class PerturbationKind(str, Enum):
    COLOR_GRAYSCALE = "color-grayscale"
    CONTRAST = "contrast"
    UNIFORM_NOISE = "uniform-noise"
    LOW_PASS = "low-pass"
    HIGH_PASS = "high-pass"
    PHASE_SCRAMBLE = "phase-scramble"
    POWER_EQUALIZE = "power-equalize"
    ROTATION = "rotation"
    FALSE_COLOR = "false-color"

    @property
    def is_stochastic(self) -> bool:
        return self in (PerturbationKind.UNIFORM_NOISE, PerturbationKind.PHASE_SCRAMBLE)

    @property
    def is_spectral(self) -> bool:
        return self in (PerturbationKind.PHASE_SCRAMBLE, PerturbationKind.POWER_EQUALIZE,
                        PerturbationKind.LOW_PASS, PerturbationKind.HIGH_PASS)


class TextTower(str, Enum):
    MAMBA = "mamba"
    ATTENTION_FREE_MLP = "attention-free-mlp"


class VisionTower(str, Enum):
    MAMBA = "mamba"
    PATCH_MLP = "patch-mlp"


class ScanMode(str, Enum):
    SEQUENTIAL = "sequential"
    PARALLEL = "parallel"


# Token ids of the byte-level vocabulary
BOS_ID = 256
EOS_ID = 257
PAD_ID = 258
VOCAB_SIZE = 259
CONTEXT_LEN = 64


@dataclass
class ImageRecord:
    """One manifest line."""
    image_path: str
    line_number: int = 0
    caption: Optional[str] = None
    label_index: Optional[int] = None
    label_name: Optional[str] = None
    shape_category: Optional[str] = None
    texture_category: Optional[str] = None
    category16: Optional[str] = None


@dataclass
class DatasetManifest:
    records: List[ImageRecord]
    kind: ManifestKind
    source: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def class_names(self) -> List[str]:
        """Label names ordered by label_index."""
        names: Dict[int, str] = {}
        for record in self.records:
            if record.label_index is not None and record.label_name is not None:
                names.setdefault(record.label_index, record.label_name)
        if not names:
            return []
        return [names.get(i, "") for i in range(max(names) + 1)]


@dataclass
class TokenSequence:
    ids: List[int]
    eos_position: int

    def as_array(self) -> np.ndarray:
        return np.asarray(self.ids, dtype=np.int64)


@dataclass
class ModelConfig:
    """Shapes of both towers; every field is echoed into checkpoints."""
    image_size: int = 32
    patch_size: int = 4
    stage_depths: Tuple[int, ...] = (2, 2)
    stage_dims: Tuple[int, ...] = (32, 64)
    state_dim: int = 8
    expansion: int = 2
    conv_width: int = 4
    text_width: int = 64
    text_depth: int = 2
    embed_dim: int = 64
    context_len: int = CONTEXT_LEN
    text_tower: TextTower = TextTower.MAMBA
    vision_tower: VisionTower = VisionTower.MAMBA
    scan_mode: ScanMode = ScanMode.PARALLEL


@dataclass
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 1e-3
    weight_decay: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-6
    warmup_steps: int = -1
    total_steps: int = 300
    seed: int = 0
    dtype: str = "f64"
    log_every: int = 1

    @property
    def resolved_warmup(self) -> int:
        """Warmup length; negative means 10% of the run."""
        if self.warmup_steps >= 0:
            return self.warmup_steps
        return max(1, int(round(0.1 * self.total_steps)))


@dataclass
class LossRecord:
    step: int
    loss: float
    learning_rate: float
    logit_scale: float


@dataclass
class PromptTemplateSet:
    templates: List[str]

    def fill(self, class_name: str) -> List[str]:
        return [t.replace("{}", class_name, 1) for t in self.templates]


DEFAULT_TEMPLATES = ["a photo of a {}.", "a blurry photo of a {}.", "a drawing of a {}."]


@dataclass
class EvalReport:
    dataset: str
    model_id: str
    class_names: List[str]
    per_class_accuracy: List[float]
    overall_accuracy: float
    confusion: List[List[int]]
    sample_count: int
    predictions: List[int] = field(default_factory=list)


@dataclass
class TableSummary:
    """Best model(s) per dataset of a model x dataset accuracy grid."""
    dataset: str
    best_models: List[str]
    best_accuracy: float
    margin: float


@dataclass(frozen=True)
class PerturbationSpec:
    kind: PerturbationKind
    level: float
    seed: Optional[int] = None


@dataclass
class OodCurve:
    kind: str
    model_id: str
    points: List[Tuple[float, float]]
    counts: List[int] = field(default_factory=list)

    @property
    def levels(self) -> List[float]:
        return [level for level, _ in self.points]

    @property
    def accuracies(self) -> List[float]:
        return [acc for _, acc in self.points]


@dataclass
class ShapeBiasResult:
    shape_count: int
    texture_count: int
    neither_count: int

    @property
    def defined(self) -> bool:
        return self.shape_count + self.texture_count > 0

    @property
    def shape_bias(self) -> Optional[float]:
        if not self.defined:
            return None
        return self.shape_count / (self.shape_count + self.texture_count)


@dataclass
class LanczosConfig:
    k: int = 5
    iterations: int = 40
    seed: int = 0
    tolerance: float = 1e-8


@dataclass
class LanczosResult:
    eigenvalues: List[float]
    converged: List[bool]
    iterations: int
    breakdown: bool = False


@dataclass
class SpectrumReport:
    model_id: str
    batch_size: int
    sample_count: int
    eigenvalues: List[List[float]]
    converged: List[List[bool]]

    @property
    def batch_count(self) -> int:
        return len(self.eigenvalues)

    def all_values(self) -> List[float]:
        return [v for row in self.eigenvalues for v in row if not math.isnan(v)]


@dataclass
class SharpnessSummary:
    negative_count: int
    negative_fraction: float
    max_abs_eigenvalue: float
    histogram: List[Tuple[float, float, int]]
    total: int


@dataclass
class PathsConfig:
    checkpoint: str = ""
    manifest: str = ""
    out: str = "output"
    templates: str = ""
    grid: str = ""


@dataclass
class EvalConfig:
    dataset: str = "synthetic"
    batch_size: int = 32
    model_id: str = ""


@dataclass
class OodConfig:
    """Distortion kinds, optional ladder overrides (`kind=l1 l2 ...` entries) and the coarse class list."""
    kinds: Tuple[str, ...] = tuple(kind.value for kind in PerturbationKind)
    seed: int = 0
    category_field: str = "category16"
    categories: Tuple[str, ...] = COARSE_CATEGORIES
    levels: Tuple[str, ...] = ()


@dataclass
class PerturbConfig:
    """Single perturb run; the level stays text until the kind is known."""
    input: str = ""
    kind: str = ""
    level: str = ""


@dataclass
class SyntheticConfig:
    per_class: int = 4


@dataclass
class HessianConfig:
    """Top-k spectra over the first num_samples records, cut into consecutive batches."""
    num_samples: int = 3000
    batch_size: int = 15
    k: int = 5
    iterations: int = 40
    seed: int = 0
    workers: int = 0
    param_subset: str = ""
    tolerance: float = 1e-8

    def lanczos(self) -> LanczosConfig:
        return LanczosConfig(k=self.k, iterations=self.iterations, seed=self.seed, tolerance=self.tolerance)


@dataclass
class RunConfig:
    """Resolved configuration of one command; section names match the INI layout."""
    paths: PathsConfig = field(default_factory=PathsConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ood: OodConfig = field(default_factory=OodConfig)
    hessian: HessianConfig = field(default_factory=HessianConfig)
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    profile: str = "desk"


@dataclass
class Checkpoint:
    """Named parameter arrays, AdamW moments, step counter and the config they were built with."""
    params: Dict[str, np.ndarray]
    model_config: ModelConfig
    train_config: TrainConfig
    step: int = 0
    adam_m: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: Dict[str, np.ndarray] = field(default_factory=dict)
