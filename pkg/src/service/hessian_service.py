# src/service/hessian_service.py
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from src.domain.errors import SpectrumError
from src.domain.models import HessianConfig, LanczosConfig, LanczosResult, SharpnessSummary, SpectrumReport
from src.model.clip_model import ClipModel
from src.service.training_service import TrainingData
from src.tensor.autodiff import ParamSet, hvp
from src.tensor.tensor import Tensor
from src.util import error_translator as codes
from src.util.resources import default_worker_count
from src.util.seeding import derive_seed

logger = logging.getLogger(__name__)

BREAKDOWN_RATIO = 1e-12

LossBuilder = Callable[[ParamSet, np.ndarray], Tensor]


class HvpOracle:
    """Hessian of a fixed (parameters, batch, loss) triple as a symmetric linear operator."""

    def __init__(self, loss_fn: Callable[[ParamSet], Tensor], params: ParamSet):
        self.loss_fn = loss_fn
        self.params = params
        self.dim = params.flat_dim

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return hvp(self.loss_fn, self.params, v)


class DenseOracle:
    """Explicit symmetric matrix behind the same matvec interface."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise SpectrumError(f"matrix must be square, got {matrix.shape}")
        self.matrix = matrix
        self.dim = matrix.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


def _validate(cfg: LanczosConfig, dim: int) -> int:
    if cfg.k < 1 or cfg.iterations < cfg.k:
        raise SpectrumError(f"need 1 <= k <= iterations, got k={cfg.k} iterations={cfg.iterations}")
    if cfg.k > dim:
        raise SpectrumError(f"k={cfg.k} exceeds operator dimension {dim}")
    return min(cfg.iterations, dim)


def lanczos_extreme_eigs(oracle, cfg: LanczosConfig) -> LanczosResult:
    """k largest-magnitude Ritz values from m steps of fully reorthogonalized Lanczos."""
    m = _validate(cfg, oracle.dim)
    rng = np.random.default_rng(cfg.seed)
    q = rng.standard_normal(oracle.dim)
    basis = [q / np.linalg.norm(q)]
    alphas: List[float] = []
    betas: List[float] = []
    last_beta = 0.0
    breakdown = False
    t_norm = 0.0

    for j in range(m):
        w = oracle.matvec(basis[j])
        alpha = float(basis[j] @ w)
        w = w - alpha * basis[j]
        if j > 0:
            w = w - betas[j - 1] * basis[j - 1]
        Q = np.asarray(basis)
        for _ in range(2):
            w = w - Q.T @ (Q @ w)
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))
        t_norm = max(t_norm, abs(alpha) + beta + (betas[j - 1] if j > 0 else 0.0))
        last_beta = beta
        if j == m - 1:
            break
        if beta <= BREAKDOWN_RATIO * t_norm:
            breakdown = True
            logger.debug(f"Lanczos breakdown after {j + 1} steps (beta={beta:.3e})")
            break
        betas.append(beta)
        basis.append(w / beta)

    if len(alphas) == 1:
        theta, s_last = np.array(alphas), np.array([1.0])
    else:
        theta, vectors = eigh_tridiagonal(np.array(alphas), np.array(betas))
        s_last = vectors[-1, :]
    residuals = np.abs(last_beta * s_last)

    order = sorted(range(len(theta)), key=lambda i: (-abs(theta[i]), i))[:cfg.k]
    values = [float(theta[i]) for i in order]
    converged = [bool(residuals[i] <= cfg.tolerance * max(1.0, abs(theta[i]))) for i in order]
    return LanczosResult(eigenvalues=values, converged=converged, iterations=len(alphas), breakdown=breakdown)


def _select(params: ParamSet, param_subset: str) -> List[str]:
    prefixes = [p.strip() for p in param_subset.split(",") if p.strip()]
    if not prefixes:
        return list(params.keys())
    names = [n for n in params if any(n.startswith(p) for p in prefixes)]
    if not names:
        raise SpectrumError(f"no parameter matches '{param_subset}'")
    return names


def _pad(result: LanczosResult, k: int) -> Tuple[List[float], List[bool]]:
    missing = k - len(result.eigenvalues)
    return result.eigenvalues + [math.nan] * missing, result.converged + [False] * missing


class HessianService:
    """Per-batch top-k Hessian spectra, batches fanned out over a thread pool and collected in order."""

    def __init__(self, config: HessianConfig):
        self.config = config
        self.workers = default_worker_count(config.workers)

    def spectrum_run(self, params: ParamSet, sample_count: int, loss_builder: LossBuilder,
                     model_id: str = "") -> SpectrumReport:
        cfg = self.config
        if cfg.batch_size < 1:
            raise SpectrumError(f"batch_size {cfg.batch_size}")
        if cfg.batch_size > sample_count:
            raise SpectrumError(f"batch_size {cfg.batch_size} > {sample_count} records",
                                code=codes.BATCH_LARGER_THAN_MANIFEST)
        num_samples = min(cfg.num_samples, sample_count)
        if num_samples < cfg.num_samples:
            logger.warning(f"Only {sample_count} records available, using {num_samples} of {cfg.num_samples}")
        batch_count = num_samples // cfg.batch_size
        names = _select(params, cfg.param_subset)
        differentiated = params.select(names)
        lanczos = cfg.lanczos()

        def run_batch(batch_index: int) -> LanczosResult:
            indices = np.arange(batch_index * cfg.batch_size, (batch_index + 1) * cfg.batch_size)

            def loss_fn(subset: ParamSet) -> Tensor:
                return loss_builder(params.merged(subset), indices)

            oracle = HvpOracle(loss_fn, differentiated)
            seeded = LanczosConfig(k=lanczos.k, iterations=lanczos.iterations,
                                   seed=derive_seed(lanczos.seed, batch_index), tolerance=lanczos.tolerance)
            result = lanczos_extreme_eigs(oracle, seeded)
            logger.info(f"Hessian batch {batch_index + 1}/{batch_count}: top eigenvalues "
                        f"{[round(v, 6) for v in result.eigenvalues]}")
            return result

        if self.workers > 1 and batch_count > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(run_batch, range(batch_count)))
        else:
            results = [run_batch(b) for b in range(batch_count)]

        eigenvalues, converged = [], []
        for result in results:
            values, flags = _pad(result, lanczos.k)
            eigenvalues.append(values)
            converged.append(flags)
        return SpectrumReport(model_id=model_id, batch_size=cfg.batch_size, sample_count=num_samples,
                              eigenvalues=eigenvalues, converged=converged)


def clip_loss_builder(model: ClipModel, data: TrainingData) -> LossBuilder:
    def build(params: ParamSet, indices: np.ndarray) -> Tensor:
        return model.loss(data.images[indices], data.tokens[indices], params)
    return build


def hessian_spectrum_run(model: ClipModel, data: TrainingData, config: HessianConfig,
                         loss_builder: Optional[LossBuilder] = None) -> SpectrumReport:
    builder = loss_builder or clip_loss_builder(model, data)
    return HessianService(config).spectrum_run(model.params, len(data), builder, model.model_id)


def hessian_spectrum_sweep(models: Sequence[ClipModel], data: TrainingData,
                           config: HessianConfig) -> List[SpectrumReport]:
    """One report per checkpointed model, same batches and seeds."""
    return [hessian_spectrum_run(model, data, config) for model in models]


def summarize_sharpness(report: SpectrumReport, bins: int = 20) -> SharpnessSummary:
    values = np.asarray(report.all_values())
    if values.size == 0:
        raise SpectrumError(code=codes.EMPTY_REPORT)
    counts, edges = np.histogram(values, bins=bins)
    negative = int(np.sum(values < 0))
    histogram = [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]
    return SharpnessSummary(negative_count=negative, negative_fraction=negative / values.size,
                            max_abs_eigenvalue=float(np.max(np.abs(values))), histogram=histogram,
                            total=int(values.size))


def large_magnitude_count(report: SpectrumReport, threshold: float) -> int:
    return int(np.sum(np.abs(np.asarray(report.all_values())) > threshold))
